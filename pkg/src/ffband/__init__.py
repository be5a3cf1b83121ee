"""Fast and fair simultaneous confidence bands for functional parameters."""

from ffband.bands import Band, build_band, mean_band, roi_test, test_covers, two_sample_band
from ffband.errors import DomainError, FFBandError, InputError, ModelError, SolverError, UnsupportedInputError
from ffband.estimators import (
    DiagonalCovInfo,
    cov_estimate,
    diagonal_info,
    frag_cov,
    frag_mean,
    mean_estimate,
    tau_hat_deriv,
    tau_hat_diag,
    two_sample_pooled,
)
from ffband.euler import (
    ThresholdFunction,
    crossing_budget_on_interval,
    expected_euler,
    expected_euler_constant,
    tau_l1_norm,
)
from ffband.io import read_curves_csv, write_curves_csv
from ffband.process import (
    COV_SCENARIOS,
    CovarianceModel,
    FunctionalSample,
    Grid,
    fragmentize,
    matern_cov,
    nonstationary_matern_cov,
    sample_gp,
    sample_t_process,
)
from ffband.simulation import ScenarioConfig, run_fairness, run_fragment, run_simulation, run_size_power
from ffband.special import EllipticalFamily, mgf_V, mgf_V_deriv, std_normal_cdf, student_t_cdf
from ffband.threshold import equidistant_knots, fair_threshold, kac_rice_threshold, pvalue_function

__version__ = "0.1.0"
