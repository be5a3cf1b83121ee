"""Mean, covariance and roughness estimators for full and fragmentary curves."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ffband.errors import InputError, UnsupportedInputError
from ffband.process import FunctionalSample, Grid

TAU_MIN = 1e-4


class RoughnessClampWarning(RuntimeWarning):
    pass


@dataclass
class DiagonalCovInfo:
    """What a band needs from the covariance: its diagonal and the roughness.

    ``var_diag[t] / n_local[t]`` is the variance of the centre estimate at t.
    """

    grid: Grid
    var_diag: np.ndarray
    tau: np.ndarray
    n_local: np.ndarray

    def __post_init__(self):
        m = self.grid.size
        self.var_diag = np.asarray(self.var_diag, dtype=float)
        self.tau = np.asarray(self.tau, dtype=float)
        self.n_local = np.broadcast_to(np.asarray(self.n_local, dtype=float), (m,)).copy()
        if self.var_diag.shape != (m,) or self.tau.shape != (m,):
            raise InputError("diagonal info arrays must have one entry per grid point")

    @property
    def std_error(self) -> np.ndarray:
        return np.sqrt(self.var_diag / self.n_local)


def _require_full(sample: FunctionalSample, what: str):
    if not sample.fully_observed:
        raise UnsupportedInputError(f"{what} needs fully observed curves; use the fragment estimators")


def mean_estimate(sample: FunctionalSample) -> np.ndarray:
    _require_full(sample, "mean_estimate")
    return np.sum(sample.curves, axis=0) / float(sample.n)


def cov_estimate(sample: FunctionalSample) -> np.ndarray:
    """Sample covariance with ``1/(n-1)`` normalization."""
    _require_full(sample, "cov_estimate")
    if sample.n < 2:
        raise InputError("covariance estimation needs at least two curves")
    d = sample.curves - mean_estimate(sample)[None, :]
    return (d.T @ d) / (float(sample.n) - 1.0)


def frag_mean(sample: FunctionalSample) -> np.ndarray:
    """Pointwise mean over the curves observed at each point; NaN where nobody is."""
    o = sample.mask
    total = np.sum(np.where(o, sample.curves, 0.0), axis=0)
    count = o.sum(axis=0).astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(count > 0, total / count, np.nan)


def frag_cov(sample: FunctionalSample, return_counts: bool = False):
    """Pairwise-complete covariance; cells seen by fewer than two curves are NaN.

    On an all-true mask this is bitwise identical to :func:`cov_estimate`.
    """
    o = sample.mask
    mu = frag_mean(sample)
    d = np.where(o, sample.curves - mu[None, :], 0.0)
    of = o.astype(float)
    counts = of.T @ of
    with np.errstate(invalid="ignore", divide="ignore"):
        cov = np.where(counts >= 2, (d.T @ d) / (counts - 1.0), np.nan)
    if return_counts:
        return cov, counts
    return cov


def normalized_cov(cov: np.ndarray) -> np.ndarray:
    """Correlation ``C(t,s) / sqrt(C(t,t) C(s,s))`` with an exact unit diagonal."""
    v = np.diag(cov).copy()
    with np.errstate(invalid="ignore", divide="ignore"):
        sd = np.sqrt(v)
        c = cov / np.outer(sd, sd)
    idx = np.arange(c.shape[0])
    c[idx, idx] = np.where(v > 0, 1.0, np.nan)
    return c


def _midpoints_to_grid(tau2_mid: np.ndarray) -> np.ndarray:
    """Average squared roughness of the two adjacent grid intervals; one-sided at ends."""
    m = tau2_mid.size + 1
    out = np.empty(m)
    out[0] = tau2_mid[0]
    out[-1] = tau2_mid[-1]
    inner = np.vstack([tau2_mid[:-1], tau2_mid[1:]])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        out[1:-1] = np.nanmean(inner, axis=0)
    # an endpoint whose only interval is undefined borrows its neighbour
    if np.isnan(out[0]):
        out[0] = out[1]
    if np.isnan(out[-1]):
        out[-1] = out[-2]
    return out


def _clamp_tau(tau2: np.ndarray, tau_min: float) -> np.ndarray:
    bad = ~(tau2 >= tau_min**2)
    if np.any(bad & np.isfinite(tau2) & (tau2 < 0)):
        warnings.warn("negative roughness estimate clamped to tau_min", RoughnessClampWarning, stacklevel=3)
    tau2 = np.where(bad, tau_min**2, tau2)
    return np.sqrt(tau2)


def _ends_from_interior(tau2_inner: np.ndarray) -> np.ndarray:
    """Interior values with the nearest interior value copied to each endpoint."""
    return np.concatenate([tau2_inner[:1], tau2_inner, tau2_inner[-1:]])


def tau_hat_diag(cov: np.ndarray, grid: Grid, tau_min: float = TAU_MIN, lag: int = 1) -> np.ndarray:
    """Roughness from the normalized covariance just off its diagonal.

    With ``lag=1`` the mixed partial on each grid interval ``[t_i, t_{i+1}]``
    is ``(2 - 2 c(t_i, t_{i+1})) / h_i**2`` and grid values average the two
    neighbouring intervals. ``lag=2`` uses ``c(t_{i-1}, t_{i+1})`` across
    each interior point instead, which is what central differences of the
    standardized curves amount to (see :func:`tau_hat_deriv`). Only near-
    diagonal entries are read, so fragment covariances work too.
    """
    cov = np.asarray(cov, dtype=float)
    m = grid.size
    if cov.shape != (m, m):
        raise InputError("covariance matrix does not match the grid")
    d = np.diag(cov)
    if np.any(~(d > 0)):
        raise InputError("covariance diagonal must be positive")
    if lag not in (1, 2):
        raise InputError(f"lag must be 1 or 2, got {lag}")
    c = normalized_cov(cov)
    pts = grid.points
    off = c[np.arange(m - lag), np.arange(lag, m)]
    tau2 = (2.0 - 2.0 * off) / (pts[lag:] - pts[:-lag]) ** 2
    if lag == 1:
        return _clamp_tau(_midpoints_to_grid(tau2), tau_min)
    if np.any(np.isnan(tau2)):
        raise InputError("covariance is missing next to the diagonal")
    return _clamp_tau(_ends_from_interior(tau2), tau_min)


def tau_hat_deriv(sample: FunctionalSample, tau_min: float = TAU_MIN) -> np.ndarray:
    """Roughness as the pointwise standard deviation of standardized, differentiated curves.

    Derivatives are central differences at interior grid points; each
    endpoint copies its interior neighbour. Algebraically this equals
    ``tau_hat_diag(cov_estimate(sample), grid, lag=2)``.
    """
    if not sample.fully_observed:
        raise UnsupportedInputError("tau_hat_deriv needs complete curves; use tau_hat_diag for fragments")
    if sample.n < 2:
        raise InputError("roughness estimation needs at least two curves")
    x = sample.curves
    mu = mean_estimate(sample)
    d = x - mu[None, :]
    var = np.sum(d * d, axis=0) / (sample.n - 1.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        z = d / np.sqrt(var)[None, :]
    pts = sample.grid.points
    dz = (z[:, 2:] - z[:, :-2]) / (pts[2:] - pts[:-2])[None, :]
    with np.errstate(invalid="ignore"):
        tau2 = np.var(dz, axis=0, ddof=1)
    return _clamp_tau(_ends_from_interior(tau2), tau_min)


def mean_estimator_cov(cov: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Covariance of the pointwise mean ``C(t, s) n_ts / (n_t n_s)``.

    Curves entering and leaving the fragment windows make the mean estimate
    rougher than the curves themselves; this matrix carries that extra
    roughness. For complete data it is ``C / n``.
    """
    n_t = np.diag(counts)
    with np.errstate(invalid="ignore", divide="ignore"):
        return cov * counts / np.outer(n_t, n_t)


def tau_hat_mean(cov: np.ndarray, counts: np.ndarray, grid: Grid, tau_min: float = TAU_MIN) -> np.ndarray:
    """Roughness of the (fragment) mean estimate, central-difference stencil."""
    return tau_hat_diag(mean_estimator_cov(cov, counts), grid, tau_min, lag=2)


def diagonal_info(sample: FunctionalSample, tau_method: str = "auto") -> DiagonalCovInfo:
    """Diagonal covariance information for a one-sample mean band.

    ``tau_method``:

    * ``"deriv"`` -- :func:`tau_hat_deriv` (complete data only);
    * ``"diag"`` -- :func:`tau_hat_diag` with its default stencil;
    * ``"mean"`` -- :func:`tau_hat_mean`, roughness of the mean estimate;
    * ``"auto"`` -- ``"deriv"`` for complete data, ``"mean"`` for fragments.
      On complete data ``"mean"`` and ``"deriv"`` agree up to rounding.
    """
    if tau_method not in ("auto", "deriv", "diag", "mean"):
        raise InputError(f"unknown tau method {tau_method!r}")
    if sample.fully_observed:
        if tau_method in ("auto", "deriv"):
            tau = tau_hat_deriv(sample)
        elif tau_method == "diag":
            tau = tau_hat_diag(cov_estimate(sample), sample.grid)
        else:
            tau = tau_hat_diag(cov_estimate(sample), sample.grid, lag=2)
        var = np.var(sample.curves, axis=0, ddof=1)
        return DiagonalCovInfo(sample.grid, var, tau, np.full(sample.grid.size, float(sample.n)))
    if tau_method == "deriv":
        raise UnsupportedInputError("tau_hat_deriv needs complete curves; use tau_hat_diag for fragments")
    cov, counts = frag_cov(sample, return_counts=True)
    n_t = np.diag(counts)
    if np.any(n_t < 2):
        bad = np.flatnonzero(n_t < 2)
        raise InputError(f"grid points {bad.tolist()} are observed by fewer than two curves")
    if tau_method == "diag":
        tau = tau_hat_diag(cov, sample.grid)
    else:
        tau = tau_hat_mean(cov, counts, sample.grid)
    return DiagonalCovInfo(sample.grid, np.diag(cov).copy(), tau, n_t)


def two_sample_pooled(sample_a: FunctionalSample, sample_b: FunctionalSample):
    """Difference of means and pooled diagonal information for a two-sample band.

    Returns ``(diffmean, info, pooled_cov)``. ``info.var_diag / info.n_local``
    equals ``C_pooled(t,t) * (1/n_a(t) + 1/n_b(t))``; tau is the roughness of
    the difference of the two mean estimates under the pooled covariance.
    """
    if not sample_a.grid.same_as(sample_b.grid):
        raise InputError("two-sample band needs both samples on the same grid")
    cov_a, n_a = frag_cov(sample_a, return_counts=True)
    cov_b, n_b = frag_cov(sample_b, return_counts=True)
    na_t, nb_t = np.diag(n_a), np.diag(n_b)
    if np.any(na_t < 2) or np.any(nb_t < 2):
        bad = np.flatnonzero((na_t < 2) | (nb_t < 2))
        raise InputError(f"grid points {bad.tolist()} have fewer than two curves in a sample")
    with np.errstate(invalid="ignore", divide="ignore"):
        pooled = ((n_a - 1.0) * cov_a + (n_b - 1.0) * cov_b) / (n_a + n_b - 2.0)
        diff_cov = pooled * (n_a / np.outer(na_t, na_t) + n_b / np.outer(nb_t, nb_t))
    diff = frag_mean(sample_a) - frag_mean(sample_b)
    n_eff = 1.0 / (1.0 / na_t + 1.0 / nb_t)
    tau = tau_hat_diag(diff_cov, sample_a.grid, lag=2)
    info = DiagonalCovInfo(sample_a.grid, np.diag(pooled).copy(), tau, n_eff)
    return diff, info, pooled
