"""Kernel backend selection.

The compiled extension (aeroloc._native) is preferred when present; the
NumPy implementation is a drop-in replacement. Both run the same traversal
tables and comparison rules, so results are identical either way.

Set AEROLOC_KERNELS=python or AEROLOC_KERNELS=native to force a backend
(forcing native raises if the extension failed to build).
"""

from __future__ import annotations

import os

from aeroloc import _kernels_py

_VALID = ("native", "python")


def _load(name):
    if name == "python":
        return _kernels_py
    from aeroloc import _native
    return _native


_forced = os.environ.get("AEROLOC_KERNELS", "").strip().lower()
if _forced and _forced not in _VALID:
    raise ImportError(f"AEROLOC_KERNELS must be one of {_VALID}, got {_forced!r}")

if _forced:
    _impl = _load(_forced)
    BACKEND = _forced
else:
    try:
        _impl = _load("native")
        BACKEND = "native"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

cast_rays = _impl.cast_rays
score_rotations = _impl.score_rotations


def active_backend() -> str:
    """Name of the backend serving cast_rays/score_rotations."""
    return BACKEND


def get_backend(name: str):
    """Fetch a specific backend module (for benchmarks and equality tests)."""
    if name not in _VALID:
        raise ValueError(f"unknown backend {name!r}")
    return _load(name)
