"""Particle filter over continuous map positions.

Particles carry continuous (x, y) in cell units. Motion comes from the shift
of the alignment prior between consecutive steps plus bounded isotropic
jitter; weights combine the matching score of the particle's cell with a
Gaussian attraction toward the current prior. The filter output is the
weighted mean position.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from aeroloc.descriptor import ScoreField
from aeroloc.geomap import AerialMap


@dataclass(frozen=True, eq=False)
class FilterParams:
    n_particles: int = 500
    jitter_radius: float = 15.0   # max propagation jitter, cells
    prior_sigma: float = 15.0     # Gaussian pull toward the prior, cells
    prior_cov: np.ndarray = field(default_factory=lambda: np.eye(2))

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("n_particles must be at least 1")
        if self.jitter_radius < 0:
            raise ValueError("jitter_radius must be non-negative")
        if self.prior_sigma <= 0:
            raise ValueError("prior_sigma must be positive")
        cov = np.asarray(self.prior_cov, dtype=np.float64)
        if cov.shape != (2, 2) or not np.allclose(cov, cov.T):
            raise ValueError("prior_cov must be a symmetric 2x2 matrix")
        if np.any(np.linalg.eigvalsh(cov) <= 0):
            raise ValueError("prior_cov must be positive definite")
        object.__setattr__(self, "prior_cov", cov)


@dataclass
class ParticleSet:
    positions: np.ndarray  # float64 (n, 2)
    weights: np.ndarray    # float64 (n,)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.positions.ndim != 2 or self.positions.shape[1] != 2:
            raise ValueError("positions must be (n, 2)")
        if self.weights.shape != (self.positions.shape[0],):
            raise ValueError("weights must align with positions")
        if np.any(self.weights < 0):
            raise ValueError("weights must be non-negative")

    @property
    def n(self) -> int:
        return self.positions.shape[0]


def init_particles(params: FilterParams, amap: AerialMap, rng,
                   center=None, radius: float | None = None) -> ParticleSet:
    """Uniform particles over traversable cells.

    With a center, sampling is restricted to traversable cells within a
    Chebyshev radius (default 2 * prior_sigma); if that region is empty the
    whole traversable set is used instead.
    """
    cells = amap.traversable_cells()
    if cells.shape[0] == 0:
        raise ValueError("map has no traversable cells to initialize on")
    cand = cells
    if center is not None:
        if radius is None:
            radius = 2.0 * params.prior_sigma
        c = np.asarray(center, dtype=np.float64)
        near = np.max(np.abs(cells - c), axis=1) <= radius
        if near.any():
            cand = cells[near]
    idx = rng.integers(0, cand.shape[0], size=params.n_particles)
    positions = cand[idx].astype(np.float64)
    weights = np.full(params.n_particles, 1.0 / params.n_particles)
    return ParticleSet(positions, weights)


def propagate(ps: ParticleSet, prior_t, prior_prev, params: FilterParams,
              bounds, rng) -> ParticleSet:
    """Shift particles by the prior displacement and add bounded jitter.

    The shift is prior_t - prior_prev when both exist, else zero. Jitter is a
    uniform direction with uniform magnitude up to jitter_radius. Positions
    are clamped into the map.
    """
    n = ps.n
    if prior_t is not None and prior_prev is not None:
        shift = np.asarray(prior_t, dtype=np.float64) - np.asarray(prior_prev, dtype=np.float64)
    else:
        shift = np.zeros(2)
    ang = rng.uniform(0.0, 2.0 * np.pi, size=n)
    mag = rng.uniform(0.0, params.jitter_radius, size=n)
    jitter = np.column_stack((mag * np.cos(ang), mag * np.sin(ang)))
    pos = ps.positions + shift + jitter
    w, h = bounds
    pos[:, 0] = np.clip(pos[:, 0], 0.0, w - 1.0)
    pos[:, 1] = np.clip(pos[:, 1], 0.0, h - 1.0)
    return ParticleSet(pos, ps.weights.copy())


def weight(ps: ParticleSet, fld: ScoreField, prior_t, params: FilterParams,
           amap: AerialMap, rng) -> ParticleSet:
    """Reweight particles by matching score times the prior density.

    The score factor is S(cell)/sum(S); the prior factor is an unnormalized
    Gaussian centered on prior_t with covariance prior_sigma^2 * prior_cov
    (omitted when there is no prior). If every particle lands at zero weight
    the filter has diverged and is reinitialized around the prior.
    """
    total_field = float(fld.scores.sum())
    if total_field <= 0:
        n = ps.n
        return ParticleSet(ps.positions.copy(), np.full(n, 1.0 / n))
    lik = fld.score_at(ps.positions) / total_field
    if prior_t is not None:
        cov = (params.prior_sigma ** 2) * params.prior_cov
        inv = np.linalg.inv(cov)
        d = ps.positions - np.asarray(prior_t, dtype=np.float64)
        maha = np.einsum("ij,jk,ik->i", d, inv, d)
        lik = lik * np.exp(-0.5 * maha)
    total = float(lik.sum())
    if total <= 0:
        fresh = init_particles(params, amap, rng, center=prior_t)
        return fresh
    return ParticleSet(ps.positions.copy(), lik / total)


def estimate(ps: ParticleSet) -> np.ndarray:
    """Weighted mean position; weights must already be normalized."""
    total = float(ps.weights.sum())
    if total <= 0:
        raise ValueError("particle weights sum to zero")
    return (ps.weights / total) @ ps.positions


def resample(ps: ParticleSet, rng) -> ParticleSet:
    """Systematic resampling back to uniform weights.

    One random offset u in [0, 1/n) spaces n probes 1/n apart through the
    cumulative weights; probe u_k selects the first particle whose cumulative
    weight exceeds u_k.
    """
    n = ps.n
    w = ps.weights / ps.weights.sum()
    probes = (rng.random() + np.arange(n)) / n
    cum = np.cumsum(w)
    idx = np.searchsorted(cum, probes, side="right")
    idx = np.minimum(idx, n - 1)
    return ParticleSet(ps.positions[idx].copy(), np.full(n, 1.0 / n))
