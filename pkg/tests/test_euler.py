import math
import warnings

import numpy as np
import pytest
from scipy import integrate, stats

from ffband.errors import DomainError, InputError
from ffband.euler import (
    NegativeThresholdWarning,
    ThresholdFunction,
    crossing_budget_on_interval,
    expected_euler,
    expected_euler_constant,
    tau_l1_norm,
)
from ffband.special import EllipticalFamily

PTS = np.linspace(0, 1, 101)
GAUSS = EllipticalFamily.gaussian()


def rice_counts(u, tau_fn, a, b, v=1.0, direction="up", breaks=PTS):
    """Expected up/down-crossings of ``u`` on [a, b] by ``v * Z``, Z unit-variance
    with derivative sd ``tau``, from Rice's formula (independent oracle)."""
    phi, Phi = stats.norm.pdf, stats.norm.cdf

    def dens(t):
        w, ws, tau = u(t) / v, u.derivative(t) / v, tau_fn(t)
        if direction == "up":
            return phi(w) * (tau * phi(ws / tau) - ws * Phi(-ws / tau))
        return phi(w) * (tau * phi(ws / tau) + ws * Phi(ws / tau))

    # integrate piecewise: tau kinks at the grid, u at the knots
    cuts = np.unique(np.concatenate([[a, b], [k for k in np.concatenate([u.knots, breaks]) if a < k < b]]))
    return math.fsum(integrate.quad(dens, lo, hi, epsabs=1e-15, epsrel=1e-13)[0] for lo, hi in zip(cuts[:-1], cuts[1:]))


def rice_euler(u, tau_fn, family, t0, breaks=PTS):
    """tail + down-crossings left of t0 + up-crossings right of t0."""
    if family.kind == "gaussian":
        mix = lambda f: f(1.0)
    else:
        nu = family.nu
        # V = sqrt(nu / chi2_nu); integrate over the chi-square variable
        chi = stats.chi2(nu)

        def mix(f):
            g = lambda q: f(math.sqrt(nu / q)) * chi.pdf(q)
            lo, hi = chi.ppf(1e-13), chi.isf(1e-13)
            return integrate.quad(g, lo, hi, limit=200, epsabs=1e-13, epsrel=1e-11)[0]

    down = mix(lambda v: rice_counts(u, tau_fn, 0.0, t0, v, "down", breaks)) if t0 > 0 else 0.0
    up = mix(lambda v: rice_counts(u, tau_fn, t0, 1.0, v, "up", breaks)) if t0 < 1 else 0.0
    return float(family.tail(u(t0))) + down + up


def random_threshold(rng, t0, n_cells=4, base=2.5):
    knots = np.unique(np.concatenate([np.linspace(0, 1, n_cells + 1), [t0]]))
    vals = base + rng.uniform(-0.8, 0.8, knots.size)
    return ThresholdFunction(knots, vals, t0)


class TestThresholdFunction:
    def test_coefficient_round_trip(self):
        rng = np.random.default_rng(0)
        for t0 in (0.0, 0.4, 0.8):
            knots = np.unique(np.concatenate([np.linspace(0, 1, 6), [t0]]))
            coefs = rng.normal(size=knots.size - 1)
            coefs[np.argmin(np.abs(knots - t0))] = 2.5
            u = ThresholdFunction.from_coefficients(knots, coefs, t0)
            assert np.allclose(u.coefficients, coefs, atol=1e-12)
            assert u(t0) == 2.5

    def test_slope_is_sum_of_coefficients(self):
        knots = np.array([0, 0.2, 0.5, 0.7, 1.0])
        u = ThresholdFunction.from_coefficients(knots, [0.3, 2.0, -1.0, 0.5], 0.2)
        assert u(0.2) == 2.0 and u(0.5) == 2.0  # c0 is the level on [a0, a1]
        assert np.allclose(u.slopes, [0.3, 0.0, -1.0, -0.5])

    def test_validation(self):
        with pytest.raises(InputError):
            ThresholdFunction(np.array([0, 0.5]), np.array([1.0, 1.0]), 0.0)
        with pytest.raises(InputError):
            ThresholdFunction(np.array([0, 0.5, 1]), np.array([1.0, 1.0, 1.0]), 0.3)

    def test_immutable(self):
        u = ThresholdFunction.constant(2.0)
        with pytest.raises(ValueError):
            u.values[0] = 3.0


class TestExamples:
    def test_zero_level(self):
        val = expected_euler(ThresholdFunction.constant(0.0), PTS, np.ones(101), GAUSS, 0.0)
        assert abs(val - (0.5 + 1 / (2 * math.pi))) < 1e-12
        assert abs(val - 0.6591549) < 1e-7

    def test_roughness_free_limit(self):
        val = expected_euler(ThresholdFunction.constant(3.0), PTS, np.full(101, 1e-4), GAUSS)
        assert abs(val - stats.norm.sf(3.0)) < 1e-6

    def test_constant_closed_form(self):
        assert abs(expected_euler_constant(0.0, 1.0, GAUSS) - 0.6591549) < 1e-7
        t10 = EllipticalFamily.student_t(10)
        assert abs(expected_euler_constant(2.228139, 0.0, t10) - 0.025) < 1e-6
        assert expected_euler_constant(2.0, 1.0, GAUSS) > expected_euler_constant(3.0, 1.0, GAUSS)

    @pytest.mark.parametrize("fam", [GAUSS, EllipticalFamily.student_t(6)])
    def test_constant_matches_general(self, fam):
        tau = 1 + PTS**2
        val = expected_euler(ThresholdFunction.constant(2.4), PTS, tau, fam)
        assert abs(val - expected_euler_constant(2.4, tau_l1_norm(PTS, tau), fam)) < 1e-12

    def test_slope_zero_budget(self):
        tau = 0.5 + 3 * PTS
        u = ThresholdFunction.constant(2.0)
        b = crossing_budget_on_interval(u, PTS, tau, GAUSS, (0.2, 0.6), "up")
        assert abs(b - tau_l1_norm(PTS[20:61], tau[20:61]) / (2 * math.pi) * math.exp(-2.0)) < 1e-14


class TestAgainstRice:
    @pytest.mark.parametrize("t0", [0.0, 0.35, 0.5, 1.0])
    def test_gaussian(self, t0):
        rng = np.random.default_rng(int(100 * t0))
        tau = 1.0 + 2.0 * np.sin(3 * PTS) ** 2
        tau_fn = lambda t: np.interp(t, PTS, tau)
        u = random_threshold(rng, t0)
        assert abs(expected_euler(u, PTS, tau, GAUSS) - rice_euler(u, tau_fn, GAUSS, t0)) < 1e-10

    @pytest.mark.parametrize("nu,t0", [(4.0, 0.0), (9.0, 0.5), (2.5, 0.8)])
    def test_student_t(self, nu, t0):
        rng = np.random.default_rng(7)
        pts = np.linspace(0, 1, 6)
        tau = np.array([1.0, 2.0, 3.0, 2.5, 4.0, 1.5])
        tau_fn = lambda t: np.interp(t, pts, tau)
        u = random_threshold(rng, t0, 3)
        fam = EllipticalFamily.student_t(nu)
        got = expected_euler(u, pts, tau, fam)
        ref = rice_euler(u, tau_fn, fam, t0, pts)
        assert abs(got - ref) < 1e-8

    @pytest.mark.parametrize("t0", [0.0, 0.4])
    def test_steep_slopes(self, t0):
        knots = np.unique([0.0, t0, 0.5, 1.0])
        u = ThresholdFunction(knots, np.linspace(4.0, 0.5, knots.size) + (knots - 0.5) ** 2 * 20, t0)
        tau = np.full(101, 2.0)
        tau_fn = lambda t: 2.0
        assert abs(expected_euler(u, PTS, tau, GAUSS) - rice_euler(u, tau_fn, GAUSS, t0)) < 1e-10


class TestProperties:
    def test_decomposition(self):
        rng = np.random.default_rng(3)
        u = random_threshold(rng, 0.5, 6)
        tau = 1 + PTS
        total, tail, budgets = expected_euler(u, PTS, tau, GAUSS, return_parts=True)
        assert abs(total - tail - sum(budgets)) < 1e-10
        assert len(budgets) == len(u.cells())

    def test_additivity(self):
        rng = np.random.default_rng(4)
        u = random_threshold(rng, 0.0, 2)
        tau = 1 + np.cos(5 * PTS) ** 2
        whole = crossing_budget_on_interval(u, PTS, tau, GAUSS, (0.0, 0.5), "up")
        parts = sum(crossing_budget_on_interval(u, PTS, tau, GAUSS, c, "up") for c in [(0, 0.13), (0.13, 0.3), (0.3, 0.5)])
        assert abs(whole - parts) < 1e-10

    def test_reflection(self):
        tau = 1 + 4 * (PTS - 0.5) ** 2
        knots = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
        right = np.array([2.0, 2.6, 3.1])
        u = ThresholdFunction(knots, np.concatenate([right[::-1], right[1:]]), 0.5)
        up = crossing_budget_on_interval(u, PTS, tau, GAUSS, (0.5, 1.0), "up")
        down = crossing_budget_on_interval(u, PTS, tau, GAUSS, (0.0, 0.5), "down")
        assert abs(up - down) < 1e-8
        ref = rice_counts(u, lambda t: np.interp(t, PTS, tau), 0.5, 1.0, 1.0, "up")
        assert abs(up - ref) < 1e-10

    def test_shift_monotone(self):
        rng = np.random.default_rng(5)
        for fam in (GAUSS, EllipticalFamily.student_t(5)):
            u = random_threshold(rng, 0.3, 5)
            tau = 1 + 3 * PTS
            vals = [expected_euler(u.shifted(c), PTS, tau, fam) for c in (0.0, 0.1, 0.5, 1.0)]
            assert np.all(np.diff(vals) < 0)

    def test_custom_mgf_matches_gaussian(self):
        rng = np.random.default_rng(6)
        for sigma in (1.0, 1.7):
            g = EllipticalFamily.gaussian(sigma)
            cust = EllipticalFamily.custom(g.mgf, g.mgf_deriv, g.tail)
            for t0 in (0.0, 0.5):
                u = random_threshold(rng, t0, 3)
                tau = 1 + 2 * PTS
                a = expected_euler(u, PTS, tau, g)
                b = expected_euler(u, PTS, tau, cust)
                assert abs(a - b) < 1e-6

    def test_custom_mgf_matches_t(self):
        rng = np.random.default_rng(8)
        t = EllipticalFamily.student_t(5)
        cust = EllipticalFamily.custom(t.mgf, t.mgf_deriv, t.tail)
        u = random_threshold(rng, 0.5, 3)
        tau = 1 + 2 * PTS
        assert abs(expected_euler(u, PTS, tau, t) - expected_euler(u, PTS, tau, cust)) < 1e-6

    def test_t_limit(self):
        rng = np.random.default_rng(9)
        big = EllipticalFamily.student_t(1e6)
        for t0 in (0.0, 0.6):
            u = random_threshold(rng, t0)
            tau = 2 + PTS
            assert abs(expected_euler(u, PTS, tau, big) - expected_euler(u, PTS, tau, GAUSS)) < 1e-4

    @pytest.mark.parametrize("fam", [GAUSS, EllipticalFamily.student_t(3)])
    def test_node_doubling(self, fam):
        rng = np.random.default_rng(10)
        u = random_threshold(rng, 0.4, 9)
        tau = 1 + 3 * np.abs(np.sin(7 * PTS))
        a = expected_euler(u, PTS, tau, fam, nodes=4)
        b = expected_euler(u, PTS, tau, fam, nodes=8)
        assert abs(a - b) < 1e-8


class TestErrors:
    def test_nonpositive_tau(self):
        u = ThresholdFunction.constant(2.0)
        with pytest.raises(DomainError):
            expected_euler(u, PTS, np.zeros(101), GAUSS)

    def test_anchor_must_be_knot(self):
        with pytest.raises(InputError):
            expected_euler(ThresholdFunction.constant(2.0), PTS, np.ones(101), GAUSS, t0=0.3)

    def test_negative_threshold_warns(self):
        with pytest.warns(NegativeThresholdWarning):
            expected_euler(ThresholdFunction.constant(-0.5), PTS, np.ones(101), GAUSS)

    def test_bad_direction(self):
        with pytest.raises(InputError):
            crossing_budget_on_interval(ThresholdFunction.constant(2.0), PTS, np.ones(101), GAUSS, (0, 1), "sideways")
