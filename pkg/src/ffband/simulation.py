"""Monte Carlo harness for size, power, width and region-of-interest fairness.

Every replication draws one sample and builds one band per method. The
covariance and roughness estimates do not react to a shift of the mean, so
the same band (moved by the shift) serves every effect size Delta; sizes and
powers are thus computed on common random numbers.

Replication ``r`` draws from ``SeedSequence(seed, spawn_key=(r,))``, and
per-replication outcomes are concatenated in replication order before any
summation, so results do not depend on how replications are split between
worker processes.
"""

from __future__ import annotations

import csv
import io
import json
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from ffband.errors import FFBandError, InputError
from ffband.estimators import RoughnessClampWarning, frag_cov, frag_mean, tau_hat_deriv, tau_hat_mean
from ffband.bands import METHODS, solve_threshold
from ffband.process import COV_SCENARIOS, FunctionalSample, GaussianSampler, Grid, fragment_mask, beta_binomial
from ffband.special import EllipticalFamily

MEAN_SCENARIOS = ("Mean1", "Mean2", "Mean3")


def theta0(t):
    """Polynomial mean ``10 t**3 - 15 t**4 + 6 t**6`` (exponents as printed, not smoothstep's ``6 t**5``)."""
    t = np.asarray(t, dtype=float)
    return 10.0 * t**3 - 15.0 * t**4 + 6.0 * t**6


def mean_shift(scenario: str, delta: float, t) -> np.ndarray:
    """Deviation ``theta(t) - theta0(t)`` under an alternative."""
    t = np.asarray(t, dtype=float)
    if scenario == "Mean1":
        return np.full(t.shape, float(delta))
    if scenario == "Mean2":
        return delta * theta0(t)
    if scenario == "Mean3":
        return delta * (t <= 0.125)
    raise InputError(f"unknown mean scenario {scenario!r}")


def mean_function(scenario: str, delta: float):
    return lambda t: theta0(t) + mean_shift(scenario, delta, t)


@dataclass
class FragmentConfig:
    window: float = 0.4
    bb_n: int = 60
    bb_a: float = 0.3
    bb_b: float = 0.3


@dataclass
class ScenarioConfig:
    """One simulation setting. ``deltas`` are effect sizes for ``mean``."""

    mean: str = "Mean1"
    deltas: list = field(default_factory=lambda: [0.0])
    cov: str = "Cov1"
    n: int = 15
    reps: int = 10_000
    alpha: float = 0.05
    methods: list = field(default_factory=lambda: ["kr-t", "ff-t"])
    n_cells: int = 9
    t0: float = 0.0
    fragment: Optional[FragmentConfig] = None
    seed: int = 0
    grid_size: int = 101
    roi: bool = False

    def __post_init__(self):
        if isinstance(self.fragment, dict):
            self.fragment = FragmentConfig(**self.fragment)
        self.deltas = [float(d) for d in np.atleast_1d(self.deltas)]
        if self.mean not in MEAN_SCENARIOS:
            raise InputError(f"mean must be one of {MEAN_SCENARIOS}")
        if self.cov not in COV_SCENARIOS:
            raise InputError(f"cov must be one of {tuple(COV_SCENARIOS)}")
        if any(d < 0 for d in self.deltas):
            raise InputError("effect sizes must be nonnegative")
        if self.reps < 1 or self.n < 2:
            raise InputError("need reps >= 1 and n >= 2")
        for m in self.methods:
            if m not in METHODS:
                raise InputError(f"unknown method {m!r}; choose from {METHODS}")

    @classmethod
    def from_json(cls, text: str) -> "ScenarioConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InputError(f"config is not valid JSON: {exc}") from None
        known = set(cls.__dataclass_fields__)
        extra = set(raw) - known
        if extra:
            raise InputError(f"unknown config keys: {sorted(extra)}")
        return cls(**raw)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class MethodResult:
    method: str
    reps: int
    failures: int
    rejections: np.ndarray  # per delta
    width_sum: float
    roi_rejections: dict = field(default_factory=dict)
    roi_nominal_sum: dict = field(default_factory=dict)

    @property
    def successes(self) -> int:
        return self.reps - self.failures

    @property
    def rates(self) -> np.ndarray:
        return self.rejections / max(self.successes, 1)

    @property
    def avg_width(self) -> float:
        return self.width_sum / max(self.successes, 1)

    def roi_rate(self, key) -> float:
        return self.roi_rejections[key] / max(self.successes, 1)

    def roi_nominal(self, key) -> float:
        return self.roi_nominal_sum[key] / max(self.successes, 1)


@dataclass
class SimulationResult:
    config: ScenarioConfig
    methods: dict

    def __getitem__(self, method) -> MethodResult:
        return self.methods[method]

    def rows(self):
        c = self.config
        out = []
        for name, res in self.methods.items():
            for d, rate in zip(c.deltas, res.rates):
                row = {
                    "method": name,
                    "mean": c.mean,
                    "cov": c.cov,
                    "n": c.n,
                    "delta": d,
                    "reps": res.reps,
                    "failures": res.failures,
                    "rate": rate,
                    "avg_width": res.avg_width,
                }
                for key in res.roi_rejections:
                    tag = f"[{key[0]:g},{key[1]:g}]"
                    row[f"roi_rate{tag}"] = res.roi_rate(key)
                    row[f"roi_nominal{tag}"] = res.roi_nominal(key)
                out.append(row)
        return out

    def to_csv(self) -> str:
        rows = self.rows()
        keys = list(dict.fromkeys(k for r in rows for k in r))
        buf = io.StringIO()
        w = csv.DictWriter(buf, keys, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in r.items()})
        return buf.getvalue()


# ----------------------------------------------------------------------------
# one replication


class _Setup:
    """Immutable per-scenario state shared by all replications."""

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.grid = Grid.uniform(config.grid_size)
        self.sampler = GaussianSampler(COV_SCENARIOS[config.cov], self.grid)
        pts = self.grid.points
        self.theta0 = theta0(pts)
        self.shifts = np.array([mean_shift(config.mean, d, pts) for d in config.deltas])
        self.rois, self.roi_masks = [], []
        if config.roi:
            t0 = config.t0
            self.rois = [(0.0, t0), (t0, 1.0)] if 0 < t0 < 1 else [(0.0, 1.0)]
            self.roi_masks = [(pts >= a - 1e-12) & (pts <= b + 1e-12) for a, b in self.rois]


def _estimate(setup: _Setup, rng: np.random.Generator):
    """Centre and noise of the estimate under the null, its standard error, tau and local counts."""
    c = setup.config
    x = setup.sampler.draw(setup.theta0, c.n, rng)
    if c.fragment is None:
        mu = x.mean(axis=0)
        d = x - mu
        var = np.sum(d * d, axis=0) / (c.n - 1.0)
        sample = FunctionalSample(setup.grid, x, np.ones(x.shape, dtype=bool))
        tau = tau_hat_deriv(sample)
        n_t = np.full(setup.grid.size, float(c.n))
    else:
        f = c.fragment
        starts = beta_binomial(f.bb_n, f.bb_a, f.bb_b, c.n, rng) / 100.0
        mask = fragment_mask(setup.grid, starts, f.window)
        sample = FunctionalSample(setup.grid, np.where(mask, x, np.nan), mask)
        cov, counts = frag_cov(sample, return_counts=True)
        n_t = np.diag(counts).copy()
        if np.any(n_t < 2):
            raise InputError("a grid point is observed by fewer than two curves")
        mu = frag_mean(sample)
        var = np.diag(cov).copy()
        tau = tau_hat_mean(cov, counts, setup.grid)
    return mu, np.sqrt(var / n_t), tau, n_t


def _replicate(setup: _Setup, r: int):
    """Outcomes of replication ``r`` for each method, or None on failure."""
    c = setup.config
    rng = np.random.default_rng(np.random.SeedSequence(c.seed, spawn_key=(r,)))
    out = {}
    try:
        mu, se, tau, n_t = _estimate(setup, rng)
    except FFBandError:
        return {m: None for m in c.methods}
    noise = mu - setup.theta0
    nu = float(np.min(n_t)) - 1.0
    for m in c.methods:
        fam = EllipticalFamily.student_t(nu) if m.endswith("-t") else EllipticalFamily.gaussian()
        try:
            thr = solve_threshold(m, tau, setup.grid, fam, c.alpha, c.t0, c.n_cells)
        except FFBandError:
            out[m] = None
            continue
        half = np.asarray(thr(setup.grid.points)) * se
        # the band covers theta0 iff |noise + shift| <= half everywhere
        exceed = np.abs(noise[None, :] + setup.shifts) > half[None, :]
        rej = exceed.any(axis=1)
        roi = []
        for (a, b), msk in zip(setup.rois, setup.roi_masks):
            roi.append((bool(exceed[0, msk].any()), thr.p_t0 + thr.a_star * (b - a)))
        out[m] = (rej, float(np.mean(2.0 * half)), roi)
    return out


def _run_chunk(args):
    config, start, stop = args
    setup = _Setup(config)
    with warnings.catch_warnings():
        # a clamped tau in one replication is part of the design, not news
        warnings.simplefilter("ignore", RoughnessClampWarning)
        return [_replicate(setup, r) for r in range(start, stop)]


def _threads(threads: Optional[int]) -> int:
    env = os.environ.get("FFBAND_THREADS")
    if env:
        try:
            threads = int(env)
        except ValueError:
            raise InputError(f"FFBAND_THREADS must be an integer, got {env!r}") from None
    return max(1, int(threads or 1))


def run_simulation(config: ScenarioConfig, threads: Optional[int] = 1, chunk: int = 250) -> SimulationResult:
    """Run all replications of ``config``; ``FFBAND_THREADS`` overrides ``threads``."""
    threads = _threads(threads)
    bounds = [(config, s, min(s + chunk, config.reps)) for s in range(0, config.reps, chunk)]
    if threads == 1:
        parts = [_run_chunk(b) for b in bounds]
    else:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(_run_chunk, bounds))
    outcomes = [o for part in parts for o in part]

    setup = _Setup(config)
    results = {}
    nd = len(config.deltas)
    for m in config.methods:
        per = [o[m] for o in outcomes]
        ok = [p for p in per if p is not None]
        rej = np.sum([p[0] for p in ok], axis=0) if ok else np.zeros(nd)
        widths = np.array([p[1] for p in ok])
        res = MethodResult(m, config.reps, len(per) - len(ok), np.asarray(rej, dtype=float), float(np.sum(widths)))
        for i, key in enumerate(setup.rois):
            res.roi_rejections[key] = float(sum(p[2][i][0] for p in ok))
            res.roi_nominal_sum[key] = float(np.sum([p[2][i][1] for p in ok]))
        results[m] = res
    return SimulationResult(config, results)


def run_size_power(config: ScenarioConfig, threads: Optional[int] = 1) -> SimulationResult:
    """Rejection rate per effect size and average band width."""
    return run_simulation(config, threads)


def run_fairness(config: ScenarioConfig, t0_list=(0.25,), threads: Optional[int] = 1) -> dict:
    """Region-of-interest rates under the null for each anchor in ``t0_list``."""
    out = {}
    for t0 in t0_list:
        cfg = ScenarioConfig(**{**config.to_dict(), "t0": float(t0), "roi": True, "deltas": [0.0]})
        out[float(t0)] = run_simulation(cfg, threads)
    return out


def run_fragment(config: ScenarioConfig, threads: Optional[int] = 1) -> SimulationResult:
    """Size and power for fragmentary curves (default fragment design if none set)."""
    if config.fragment is None:
        config = ScenarioConfig(**{**config.to_dict(), "fragment": FragmentConfig()})
    return run_simulation(config, threads)
