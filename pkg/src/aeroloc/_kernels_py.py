"""Vectorized NumPy kernels, used when the compiled extension is unavailable.

Both backends consume the same RayPathTable arrays and apply the same hit and
scoring rules with the same float widths, so their outputs match the compiled
versions exactly.
"""

from __future__ import annotations

import numpy as np

# Origins are processed in chunks to bound the (path_len, chunk) scratch arrays.
_CHUNK = 8192


def cast_rays(obstacle, semantic, origins, dx, dy, dist, starts, max_range):
    """Trace every table angle from every origin cell.

    obstacle : uint8 (H, W), nonzero blocks rays
    semantic : uint8 (H, W), label recorded at the hit cell
    origins  : int64 (M, 2) as (x, y)
    returns (ranges float32 (M, A), labels uint8 (M, A)); misses are -1 / 255.

    A ray ends at the first obstacle cell on its path; the return is valid
    only if that cell's center lies within max_range. Leaving the grid ends
    the ray (the grid is convex, rays never re-enter).
    """
    height, width = obstacle.shape
    n_origins = origins.shape[0]
    n_angles = starts.shape[0] - 1
    max_range = np.float32(max_range)

    ranges = np.full((n_origins, n_angles), -1.0, dtype=np.float32)
    labels = np.full((n_origins, n_angles), 255, dtype=np.uint8)

    for lo in range(0, n_origins, _CHUNK):
        hi = min(lo + _CHUNK, n_origins)
        ox = origins[lo:hi, 0]
        oy = origins[lo:hi, 1]
        for a in range(n_angles):
            s, e = starts[a], starts[a + 1]
            if s == e:
                continue
            xs = dx[s:e, None] + ox[None, :]
            ys = dy[s:e, None] + oy[None, :]
            inb = (xs >= 0) & (xs < width) & (ys >= 0) & (ys < height)
            # In-bounds entries form a prefix of each path, so masking with
            # inb is equivalent to stopping at grid exit.
            xs_c = np.where(inb, xs, 0)
            ys_c = np.where(inb, ys, 0)
            occ = (obstacle[ys_c, xs_c] != 0) & inb
            hit_any = occ.any(axis=0)
            first = occ.argmax(axis=0)
            d_hit = dist[s:e][first]
            ok = hit_any & (d_hit <= max_range)
            rows = np.nonzero(ok)[0]
            if rows.size == 0:
                continue
            fr = first[rows]
            ranges[lo + rows, a] = d_hit[rows]
            labels[lo + rows, a] = semantic[ys_c[fr, rows], xs_c[fr, rows]]
    return ranges, labels


def score_rotations(r_ugv, s_ugv, depth_mn, sem_mn, d_th, gamma):
    """Best-over-rotations similarity of one ground descriptor against M aerial ones.

    depth_mn/sem_mn are laid out (M, N), one aerial descriptor per row.
    Score is n_range_matches + gamma * n_semantic_matches in float64; ties
    prefer the smallest rotation index. Returns (scores float64 (M,),
    best_rot int32 (M,)).
    """
    n = r_ugv.shape[0]
    m = depth_mn.shape[0]
    d_th = np.float32(d_th)
    gamma = float(gamma)

    idx = (np.arange(n)[None, :] + np.arange(n)[:, None]) % n
    r_rot = r_ugv[idx]                    # (N, N): row w = descriptor rotated by w steps
    s_rot = s_ugv[idx]
    r_rot_valid = r_rot >= 0
    s_rot_valid = s_rot != 255

    depth_valid = depth_mn >= 0
    sem_valid = sem_mn != 255

    scores = np.full(m, -1.0, dtype=np.float64)
    best = np.zeros(m, dtype=np.int32)
    for w in range(n):
        close = np.abs(depth_mn - r_rot[w]) < d_th
        nr = (close & depth_valid & r_rot_valid[w]).sum(axis=1)
        ns = ((sem_mn == s_rot[w]) & sem_valid & s_rot_valid[w]).sum(axis=1)
        s = nr.astype(np.float64) + gamma * ns.astype(np.float64)
        better = s > scores
        scores[better] = s[better]
        best[better] = w
    return scores, best
