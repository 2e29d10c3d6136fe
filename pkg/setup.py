"""Build script: compiles the optional Cython ray/scoring kernels.

The extension is a pure speedup; if Cython or a C compiler is missing the
package installs anyway and falls back to the NumPy kernels at import time.
"""

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Let the install proceed when the native kernels fail to compile."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing entirely
            print(f"warning: skipping native kernels ({exc})")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: failed to build {ext.name} ({exc}); "
                  "the NumPy fallback will be used")


def make_extensions():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "aeroloc._native",
        ["src/aeroloc/_native.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(
    ext_modules=make_extensions(),
    cmdclass={"build_ext": OptionalBuildExt},
)
