"""Covariance models, process sampling on a grid and fragmentation."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy import special as sc

from ffband.errors import DomainError, InputError, ModelError

SeedLike = Union[int, np.random.SeedSequence, np.random.Generator, None]

JITTERS = (0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8)


@dataclass(frozen=True)
class Grid:
    """Sorted evaluation points on [0, 1], endpoints included."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 3:
            raise InputError("a grid needs at least 3 points")
        if np.any(np.diff(pts) <= 0):
            raise InputError("grid points must be strictly increasing")
        if abs(pts[0]) > 1e-12 or abs(pts[-1] - 1.0) > 1e-12:
            raise InputError("grid must start at 0 and end at 1")
        pts = pts.copy()
        pts[0], pts[-1] = 0.0, 1.0
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def uniform(cls, m: int = 101) -> "Grid":
        return cls(np.arange(m) / (m - 1))

    @property
    def size(self) -> int:
        return self.points.size

    def __len__(self) -> int:
        return self.points.size

    def same_as(self, other: "Grid", tol: float = 1e-9) -> bool:
        return self.size == other.size and bool(np.all(np.abs(self.points - other.points) <= tol))


def default_grid() -> Grid:
    return Grid.uniform(101)


def _matern_from_distance(d, scale, smoothness):
    d = np.abs(np.asarray(d, dtype=float))
    smoothness = np.broadcast_to(np.asarray(smoothness, dtype=float), d.shape)
    if np.any(smoothness <= 0):
        raise DomainError("Matern smoothness must be positive")
    out = np.full(d.shape, float(scale) ** 2)
    pos = d > 0
    if np.any(pos):
        v = smoothness[pos]
        x = np.sqrt(2.0 * v) * d[pos]
        logc = (1.0 - v) * math.log(2.0) - sc.gammaln(v)
        out[pos] = scale**2 * np.exp(logc + v * np.log(x)) * sc.kv(v, x)
    return out


def matern_cov(t, s, scale: float = 0.25, smoothness: float = 1.5):
    """Matern covariance ``scale**2 * 2**(1-v)/Gamma(v) * (sqrt(2v) d)**v * K_v(sqrt(2v) d)``."""
    out = _matern_from_distance(np.subtract(t, s), scale, smoothness)
    return out if out.ndim else float(out)


def nonstationary_smoothness(t, s):
    """Pointwise smoothness ``2 + sqrt(max(t, s)) * (1/4 - 2)``: 2 at the origin, 1/4 at one."""
    return 2.0 + np.sqrt(np.maximum(t, s)) * (0.25 - 2.0)


def nonstationary_matern_cov(t, s, scale: float = 0.25):
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    out = _matern_from_distance(t - s, scale, nonstationary_smoothness(t, s))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class CovarianceModel:
    """A covariance kernel on [0, 1]^2.

    ``kind`` is one of ``"matern"``, ``"nonstationary_matern"``, ``"custom"``
    or ``"zero"``. Custom kernels receive broadcast meshgrid arrays.
    """

    kind: str
    scale: float = 0.25
    smoothness: float = 1.5
    kernel: Optional[Callable] = field(default=None, compare=False)
    psd_repair: bool = False

    @classmethod
    def matern(cls, scale: float = 0.25, smoothness: float = 1.5) -> "CovarianceModel":
        return cls("matern", scale=scale, smoothness=smoothness)

    @classmethod
    def nonstationary_matern(cls, scale: float = 0.25, psd_repair: bool = True) -> "CovarianceModel":
        """The kernel is not positive semidefinite on fine grids (smallest
        eigenvalue about -1.4e-5 on 101 points), so sampling clips negative
        eigenvalues unless ``psd_repair`` is switched off."""
        return cls("nonstationary_matern", scale=scale, psd_repair=psd_repair)

    @classmethod
    def custom(cls, kernel: Callable) -> "CovarianceModel":
        return cls("custom", kernel=kernel)

    @classmethod
    def zero(cls) -> "CovarianceModel":
        return cls("zero")

    def __call__(self, t, s):
        if self.kind == "matern":
            return matern_cov(t, s, self.scale, self.smoothness)
        if self.kind == "nonstationary_matern":
            return nonstationary_matern_cov(t, s, self.scale)
        if self.kind == "zero":
            return np.zeros(np.broadcast(np.asarray(t), np.asarray(s)).shape)
        if self.kind == "custom":
            return np.asarray(self.kernel(t, s), dtype=float)
        raise InputError(f"unknown covariance kind {self.kind!r}")

    def matrix(self, grid: Grid) -> np.ndarray:
        tt, ss = np.meshgrid(grid.points, grid.points, indexing="ij")
        c = np.asarray(self(tt, ss), dtype=float)
        return 0.5 * (c + c.T)


# table scenarios
COV_SCENARIOS = {
    "Cov1": CovarianceModel.matern(0.25, 1.5),
    "Cov2": CovarianceModel.matern(0.25, 0.5),
    "Cov3": CovarianceModel.nonstationary_matern(0.25),
}


class CovarianceRepairWarning(RuntimeWarning):
    pass


@dataclass
class FunctionalSample:
    """``n`` curves on a common grid; ``mask[i, j]`` is True where curve i is observed."""

    grid: Grid
    curves: np.ndarray
    mask: np.ndarray = None

    def __post_init__(self):
        self.curves = np.atleast_2d(np.asarray(self.curves, dtype=float))
        if self.curves.shape[1] != self.grid.size:
            raise InputError(
                f"curves have {self.curves.shape[1]} columns but the grid has {self.grid.size} points"
            )
        if self.mask is None:
            self.mask = np.isfinite(self.curves)
        else:
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.mask.shape != self.curves.shape:
                raise InputError("mask shape does not match curves")

    @property
    def n(self) -> int:
        return self.curves.shape[0]

    @property
    def fully_observed(self) -> bool:
        return bool(self.mask.all())

    @property
    def local_counts(self) -> np.ndarray:
        """Number of curves observed at each grid point."""
        return self.mask.sum(axis=0)


def root_factor(cov: np.ndarray, psd_repair: bool = False) -> np.ndarray:
    """Root ``L`` with ``L @ L.T`` equal to ``cov``.

    Lower Cholesky with diagonal jitter escalating from 1e-12 to 1e-8 (relative
    to the largest variance). If that fails and ``psd_repair`` is set, fall
    back to the symmetric eigen-root with negative eigenvalues set to zero.
    """
    cov = np.asarray(cov, dtype=float)
    if not np.any(cov):
        return np.zeros_like(cov)
    scale = max(float(np.max(np.diag(cov))), 1e-300)
    eye = np.eye(cov.shape[0])
    for jitter in JITTERS:
        try:
            return np.linalg.cholesky(cov + jitter * scale * eye)
        except np.linalg.LinAlgError:
            continue
    if not psd_repair:
        raise ModelError(f"covariance is not positive definite even with jitter {JITTERS[-1]:g}")
    vals, vecs = np.linalg.eigh(0.5 * (cov + cov.T))
    warnings.warn(
        f"covariance has eigenvalues down to {vals[0]:.3g}; clipped at zero",
        CovarianceRepairWarning,
        stacklevel=3,
    )
    return vecs * np.sqrt(np.maximum(vals, 0.0))[None, :]


class GaussianSampler:
    """Reusable sampler: the covariance is factorized once per grid."""

    def __init__(self, cov: CovarianceModel, grid: Grid):
        self.grid = grid
        self.cov = cov
        with warnings.catch_warnings():
            if cov.psd_repair:
                warnings.simplefilter("ignore", CovarianceRepairWarning)
            self.root = root_factor(cov.matrix(grid), cov.psd_repair)

    def draw(self, mean, n: int, rng: np.random.Generator, mixing: Optional[np.ndarray] = None) -> np.ndarray:
        if n < 1:
            raise InputError("need at least one curve")
        z = rng.standard_normal((n, self.grid.size)) @ self.root.T
        if mixing is not None:
            z *= mixing[:, None]
        return _mean_on_grid(mean, self.grid)[None, :] + z


def _mean_on_grid(mean, grid: Grid) -> np.ndarray:
    if callable(mean):
        return np.asarray(mean(grid.points), dtype=float) * np.ones(grid.size)
    m = np.asarray(mean, dtype=float)
    if m.ndim == 0:
        return np.full(grid.size, float(m))
    if m.shape != (grid.size,):
        raise InputError("mean must be a callable, a scalar, or one value per grid point")
    return m


def sample_gp(mean, cov: CovarianceModel, grid: Grid, n: int, seed: SeedLike = None) -> FunctionalSample:
    """Draw ``n`` i.i.d. Gaussian curves ``mean + L z``."""
    rng = np.random.default_rng(seed)
    curves = GaussianSampler(cov, grid).draw(mean, n, rng)
    return FunctionalSample(grid, curves, np.ones(curves.shape, dtype=bool))


def t_mixing(nu: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Mixing scales ``V = sqrt(nu / chi2_nu)``."""
    if not nu > 0:
        raise DomainError(f"nu must be positive, got {nu}")
    return np.sqrt(nu / rng.chisquare(nu, size=n))


def sample_t_process(mean, cov: CovarianceModel, grid: Grid, n: int, nu: float, seed: SeedLike = None) -> FunctionalSample:
    """Draw ``n`` curves ``mean + V_i L z_i`` from a t-process."""
    rng = np.random.default_rng(seed)
    sampler = GaussianSampler(cov, grid)
    v = t_mixing(nu, n, rng)
    curves = sampler.draw(mean, n, rng, mixing=v)
    return FunctionalSample(grid, curves, np.ones(curves.shape, dtype=bool))


def beta_binomial(n_trials: int, a: float, b: float, size: int, rng: np.random.Generator) -> np.ndarray:
    p = rng.beta(a, b, size=size)
    return rng.binomial(n_trials, p)


def beta_binomial_pmf(k, n_trials: int, a: float, b: float):
    k = np.asarray(k, dtype=float)
    logp = (
        sc.gammaln(n_trials + 1) - sc.gammaln(k + 1) - sc.gammaln(n_trials - k + 1)
        + sc.betaln(k + a, n_trials - k + b) - sc.betaln(a, b)
    )
    return np.exp(logp)


def fragment_mask(grid: Grid, starts: np.ndarray, window: float) -> np.ndarray:
    """Observation mask for intervals ``[A_i, A_i + window]`` on the grid."""
    pts = grid.points[None, :]
    a = np.asarray(starts, dtype=float)[:, None]
    eps = 1e-9
    return (pts >= a - eps) & (pts <= a + window + eps)


def fragmentize(
    sample: FunctionalSample,
    window: float = 0.4,
    bb_n: int = 60,
    bb_a: float = 0.3,
    bb_b: float = 0.3,
    seed: SeedLike = None,
    starts: Optional[np.ndarray] = None,
) -> FunctionalSample:
    """Keep each curve only on ``[A_i, A_i + window]`` with ``100 A_i ~ BetaBinomial(bb_n, bb_a, bb_b)``.

    ``starts`` overrides the random draw (values of ``A_i`` directly).
    """
    if not 0 < window <= 1:
        raise InputError(f"window must lie in (0, 1], got {window}")
    if starts is None:
        rng = np.random.default_rng(seed)
        starts = beta_binomial(bb_n, bb_a, bb_b, sample.n, rng) / 100.0
    mask = fragment_mask(sample.grid, starts, window) & sample.mask
    curves = np.where(mask, sample.curves, np.nan)
    return FunctionalSample(sample.grid, curves, mask)
