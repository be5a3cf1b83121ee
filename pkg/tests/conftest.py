import numpy as np
import pytest

from ffband.process import COV_SCENARIOS, Grid, sample_gp


@pytest.fixture
def grid():
    return Grid.uniform(101)


@pytest.fixture
def cov1_sample(grid):
    return sample_gp(0.0, COV_SCENARIOS["Cov1"], grid, 40, seed=11)


def random_tau(rng, m=101, n_knots=6):
    """Positive smooth-ish roughness profile: a cubic spline through random levels."""
    from scipy.interpolate import CubicSpline

    x = np.linspace(0, 1, n_knots)
    y = rng.uniform(0.5, 6.0, n_knots)
    t = np.linspace(0, 1, m)
    return np.maximum(CubicSpline(x, y)(t), 0.2)
