"""Log-symmetric ARMAX regression for positive, autocorrelated time series."""

from .diagnostics import (
    ResidualReport,
    ljung_box,
    quantile_residuals,
    residual_report,
    sample_acf,
    sample_pacf,
    simulated_envelope,
)
from .estimation import (
    FitOptions,
    FitResult,
    fit,
    initialize,
    observed_information,
    profile_theta,
    score,
    wald_tests,
)
from .estimator import LogSymmetricARMAX
from .kernels import (
    KernelFamily,
    LogNormal,
    LogPowerExponential,
    LogStudentT,
    cdf_standard,
    g_log_deriv,
    kernel_g,
    log_pdf,
    make_kernel,
    normalizer,
    sample_standard,
    variance_constant,
)
from .model import (
    ModelSpec,
    ParamVector,
    SimState,
    TimeSeriesData,
    conditional_loglik,
    recurse_state,
    simulate_forward,
)
from .simulation import McConfig, McResultTable, generate_dataset, run_monte_carlo
from .theory import ArmaPolynomials, check_stationarity, marginal_moments, psi_weights

__version__ = "0.1.0"
