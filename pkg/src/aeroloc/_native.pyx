# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled ray casting and rotation scoring kernels.

Mirrors _kernels_py exactly: same path tables, same hit rule, same float
widths in comparisons and score accumulation.
"""

import numpy as np


def cast_rays(const unsigned char[:, ::1] obstacle,
              const unsigned char[:, ::1] semantic,
              const long long[:, ::1] origins,
              const int[::1] dx,
              const int[::1] dy,
              const float[::1] dist,
              const long long[::1] starts,
              float max_range):
    cdef Py_ssize_t height = obstacle.shape[0]
    cdef Py_ssize_t width = obstacle.shape[1]
    cdef Py_ssize_t n_origins = origins.shape[0]
    cdef Py_ssize_t n_angles = starts.shape[0] - 1

    ranges_arr = np.full((n_origins, n_angles), -1.0, dtype=np.float32)
    labels_arr = np.full((n_origins, n_angles), 255, dtype=np.uint8)
    cdef float[:, ::1] ranges = ranges_arr
    cdef unsigned char[:, ::1] labels = labels_arr

    cdef Py_ssize_t m, a, k
    cdef long long x0, y0, x, y

    with nogil:
        for m in range(n_origins):
            x0 = origins[m, 0]
            y0 = origins[m, 1]
            for a in range(n_angles):
                for k in range(starts[a], starts[a + 1]):
                    x = x0 + dx[k]
                    y = y0 + dy[k]
                    if x < 0 or x >= width or y < 0 or y >= height:
                        break
                    if obstacle[y, x]:
                        if dist[k] <= max_range:
                            ranges[m, a] = dist[k]
                            labels[m, a] = semantic[y, x]
                        break
    return ranges_arr, labels_arr


def score_rotations(const float[::1] r_ugv,
                    const unsigned char[::1] s_ugv,
                    const float[:, ::1] depth_mn,
                    const unsigned char[:, ::1] sem_mn,
                    float d_th,
                    double gamma):
    cdef Py_ssize_t n = r_ugv.shape[0]
    cdef Py_ssize_t m = depth_mn.shape[0]

    rot_r_arr = np.empty((n, n), dtype=np.float32)
    rot_s_arr = np.empty((n, n), dtype=np.uint8)
    cdef float[:, ::1] rot_r = rot_r_arr
    cdef unsigned char[:, ::1] rot_s = rot_s_arr

    scores_arr = np.full(m, -1.0, dtype=np.float64)
    best_arr = np.zeros(m, dtype=np.int32)
    cdef double[::1] scores = scores_arr
    cdef int[::1] best = best_arr

    cdef Py_ssize_t w, i, j
    cdef long nr, ns
    cdef float a, b, diff
    cdef unsigned char sa, sb
    cdef double s

    with nogil:
        for w in range(n):
            for i in range(n):
                rot_r[w, i] = r_ugv[(i + w) % n]
                rot_s[w, i] = s_ugv[(i + w) % n]
        for j in range(m):
            for w in range(n):
                nr = 0
                ns = 0
                for i in range(n):
                    a = rot_r[w, i]
                    b = depth_mn[j, i]
                    if a >= 0 and b >= 0:
                        diff = b - a
                        if diff < 0:
                            diff = -diff
                        if diff < d_th:
                            nr += 1
                    sa = rot_s[w, i]
                    sb = sem_mn[j, i]
                    if sa != 255 and sb != 255 and sa == sb:
                        ns += 1
                s = <double>nr + gamma * <double>ns
                if s > scores[j]:
                    scores[j] = s
                    best[j] = <int>w
    return scores_arr, best_arr
