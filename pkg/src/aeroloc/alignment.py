"""Similarity alignment between the odometry frame and the map frame.

Odometry positions live in an arbitrary local frame (unknown rotation, scale,
and offset, meters); per-step matching estimates live in map cells. A
similarity transform between the two is fit in closed form and made robust
with RANSAC over the estimate history.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class NotLocalizableError(RuntimeError):
    """Raised when no transform explains enough of the estimate history."""


@dataclass(frozen=True)
class SimilarityTransform:
    """p -> scale * R(theta) p + (tx, ty), no reflection."""

    theta_deg: float
    scale: float
    tx: float
    ty: float

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    def rotation(self) -> np.ndarray:
        th = math.radians(self.theta_deg)
        c, s = math.cos(th), math.sin(th)
        return np.array([[c, -s], [s, c]])

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        out = self.scale * (pts @ self.rotation().T) + np.array([self.tx, self.ty])
        return out[0] if single else out

    def inverse(self) -> "SimilarityTransform":
        inv_scale = 1.0 / self.scale
        th = math.radians(-self.theta_deg)
        c, s = math.cos(th), math.sin(th)
        tx = -inv_scale * (c * self.tx - s * self.ty)
        ty = -inv_scale * (s * self.tx + c * self.ty)
        return SimilarityTransform(-self.theta_deg, inv_scale, tx, ty)


def procrustes(src, dst) -> SimilarityTransform:
    """Least-squares similarity transform taking src points onto dst points.

    Closed-form SVD solution constrained to a proper rotation; two distinct
    point pairs are fit exactly. Degenerate sources (all points coincident)
    are rejected.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.ndim != 2 or src.shape[1] != 2 or src.shape != dst.shape:
        raise ValueError("src and dst must both be (K, 2)")
    if src.shape[0] < 2:
        raise ValueError("need at least two point pairs")

    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    cs = src - mu_s
    cd = dst - mu_d
    var_s = (cs ** 2).sum()
    if var_s <= 1e-24:
        raise ValueError("source points are degenerate (zero spread)")

    u, sigma, vt = np.linalg.svd(cs.T @ cd / src.shape[0])
    d = 1.0 if np.linalg.det(vt.T @ u.T) >= 0 else -1.0
    rot = vt.T @ np.diag([1.0, d]) @ u.T
    scale = (sigma[0] + d * sigma[1]) * src.shape[0] / var_s
    if not scale > 0:
        raise ValueError("degenerate configuration produced a non-positive scale")
    t = mu_d - scale * rot @ mu_s
    theta = math.degrees(math.atan2(rot[1, 0], rot[0, 0]))
    return SimilarityTransform(theta_deg=theta, scale=float(scale),
                               tx=float(t[0]), ty=float(t[1]))


@dataclass(frozen=True)
class RansacParams:
    iterations: int = 200
    sample_size: int = 3
    inlier_threshold: float = 15.0  # cells
    min_inliers: int = 3

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.sample_size < 2:
            raise ValueError("sample_size must be at least 2")
        if self.inlier_threshold <= 0:
            raise ValueError("inlier_threshold must be positive")
        if self.min_inliers < self.sample_size:
            raise ValueError("min_inliers must be at least sample_size")


def ransac_align(estimates, trajectory, params: RansacParams, rng) -> tuple:
    """Robust similarity fit from odometry positions to matching estimates.

    Samples minimal subsets, counts estimates within inlier_threshold of the
    transformed trajectory, and refits on the best consensus set. Raises
    NotLocalizableError when no hypothesis gathers min_inliers.

    Returns (SimilarityTransform, inlier mask).
    """
    est = np.asarray(estimates, dtype=np.float64)
    traj = np.asarray(trajectory, dtype=np.float64)
    if est.shape != traj.shape or est.ndim != 2 or est.shape[1] != 2:
        raise ValueError("estimates and trajectory must both be (T, 2)")
    t_total = est.shape[0]
    if t_total < params.sample_size:
        raise NotLocalizableError(
            f"history of {t_total} poses is shorter than sample_size={params.sample_size}")

    best_count = 0
    best_mask = None
    for _ in range(params.iterations):
        idx = rng.choice(t_total, size=params.sample_size, replace=False)
        try:
            tf = procrustes(traj[idx], est[idx])
        except ValueError:
            continue
        residual = np.linalg.norm(tf.apply(traj) - est, axis=1)
        mask = residual <= params.inlier_threshold
        count = int(mask.sum())
        if count > best_count:
            best_count = count
            best_mask = mask

    if best_count < params.min_inliers:
        raise NotLocalizableError(
            f"best consensus has {best_count} inliers, need {params.min_inliers}")
    final = procrustes(traj[best_mask], est[best_mask])
    return final, best_mask


def predict_prior(tf: SimilarityTransform, position, bounds) -> np.ndarray:
    """Map-frame prior for an odometry position, clamped into the map.

    bounds is (width, height) in cells; the result stays inside
    [0, width-1] x [0, height-1].
    """
    w, h = bounds
    p = tf.apply(np.asarray(position, dtype=np.float64))
    return np.array([min(max(p[0], 0.0), w - 1.0),
                     min(max(p[1], 0.0), h - 1.0)])
