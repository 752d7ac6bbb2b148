"""
Conditional maximum likelihood for log-symmetric-ARMAX models.

The score is analytic: derivatives of ``mu_t`` follow the same MA filter as the
innovations, e.g. ``dmu_t/dbeta_r = x_tr - sum_l kappa_l x_{t-l,r} - sum_j zeta_j dmu_{t-j}/dbeta_r``.
The observed information is obtained by central differences of that score.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import special
from scipy.signal import lfilter
from sklearn.exceptions import ConvergenceWarning

from .kernels import KernelDomainError, KernelFamily, make_kernel
from .model import (
    ModelSpec,
    NonFiniteError,
    ParamVector,
    TimeSeriesData,
    _ar_input,
    _check,
    conditional_loglik,
    recurse_state,
)

__all__ = [
    "FitOptions",
    "FitResult",
    "SingularInformationWarning",
    "score",
    "observed_information",
    "initialize",
    "fit",
    "bfgs_maximize",
    "wald_tests",
    "profile_theta",
    "yule_walker",
]

logger = logging.getLogger(__name__)

U_FLOOR = 1e-12


class SingularInformationWarning(RuntimeWarning):
    """Observed information is not positive definite; standard errors are missing."""


# score ---------------------------------------------------------------------


def _mu_jacobian(spec: ModelSpec, theta: ParamVector, data: TimeSeriesData, st) -> np.ndarray:
    """n x (n_beta + p + q) matrix of dmu_t/d(beta, kappa, zeta), zero for t <= m."""
    m, n = spec.m, data.n
    xb = data.X @ theta.beta
    w = data.v - xb
    cols = []
    D_beta = np.zeros_like(data.X)
    D_beta[m:] = data.X[m:]
    for lag, k in enumerate(theta.kappa, start=1):
        D_beta[m:] -= k * data.X[m - lag : n - lag]
    cols.append(D_beta)
    if spec.p:
        D_k = np.zeros((n, spec.p))
        for lag in range(1, spec.p + 1):
            D_k[m:, lag - 1] = w[m - lag : n - lag]
        cols.append(D_k)
    if spec.q:
        D_z = np.zeros((n, spec.q))
        for lag in range(1, spec.q + 1):
            D_z[m:, lag - 1] = st.r[m - lag : n - lag]
        cols.append(D_z)
    D = np.hstack(cols)
    if spec.q:
        D = lfilter([1.0], np.r_[1.0, theta.zeta], D, axis=0)
    return D


def _score_parts(spec, theta, data):
    st = recurse_state(spec, theta, data)
    m = spec.m
    z = st.z[m:]
    z2 = z**2
    kern = spec.kernel
    try:
        gl = kern.dlog_g(z2)
    except KernelDomainError:
        gl = kern.dlog_g(np.maximum(z2, U_FLOOR))
    gl = np.broadcast_to(gl, z2.shape)
    J = _mu_jacobian(spec, theta, data, st)[m:]
    coef_mu = -2.0 * z / np.sqrt(st.phi[m:]) * gl
    g_mu = J.T @ coef_mu
    W = data.W[m:]
    g_tau = W.T @ (-0.5 - z2 * gl)
    return st, g_mu, g_tau


def score(spec: ModelSpec, theta: ParamVector, data: TimeSeriesData) -> np.ndarray:
    """Analytic gradient of the conditional log-likelihood (flat ParamVector layout)."""
    _check(spec, theta, data)
    _, g_mu, g_tau = _score_parts(spec, theta, data)
    nb = spec.n_beta
    return np.concatenate([g_mu[:nb], g_tau, g_mu[nb:]])


def _flat_score(spec, data):
    def f(x):
        return score(spec, ParamVector.from_flat(x, spec), data)

    return f


def _fd_jacobian(func, x, steps) -> np.ndarray:
    d = len(x)
    M = np.empty((d, d))
    for i in range(d):
        e = np.zeros(d)
        e[i] = steps[i]
        M[:, i] = (func(x + e) - func(x - e)) / (2.0 * steps[i])
    return M


@dataclass
class Information:
    matrix: np.ndarray
    asymmetry: float
    positive_definite: bool


def observed_information(
    spec: ModelSpec, theta: ParamVector, data: TimeSeriesData, details: bool = False
):
    """Negative Hessian of the conditional log-likelihood.

    Central differences of :func:`score` with steps ``max(1e-5, 1e-5 |theta_i|)``,
    symmetrized.  With ``details=True`` an :class:`Information` record with the
    pre-symmetrization asymmetry and a positive-definiteness flag is returned.
    """
    x = theta.to_flat()
    steps = np.maximum(1e-5, 1e-5 * np.abs(x))
    H = _fd_jacobian(_flat_score(spec, data), x, steps)
    M = -H
    denom = np.max(np.abs(M))
    asym = float(np.max(np.abs(M - M.T)) / denom) if denom > 0 else 0.0
    M = 0.5 * (M + M.T)
    pd = _is_pd(M)
    if not pd:
        warnings.warn("observed information is not positive definite", SingularInformationWarning)
    if details:
        return Information(M, asym, pd)
    return M


def _is_pd(M) -> bool:
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        return False
    return bool(np.all(np.isfinite(M)))


# initial values --------------------------------------------------------------


def yule_walker(x, order: int) -> np.ndarray:
    """AR coefficients by Durbin-Levinson on the biased sample autocovariances."""
    from .diagnostics import durbin_levinson, sample_acf

    if order == 0:
        return np.zeros(0)
    rho = sample_acf(x, order)
    coefs, _ = durbin_levinson(np.r_[1.0, rho])
    return coefs


def initialize(spec: ModelSpec, data: TimeSeriesData) -> ParamVector:
    """OLS for beta, log residual variance for tau, Yule-Walker for kappa, zeta = 0."""
    X, v = data.X, data.v
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise np.linalg.LinAlgError("median covariate matrix X is rank deficient")
    beta, *_ = np.linalg.lstsq(X, v, rcond=None)
    res = v - X @ beta
    s2 = max(float(np.mean(res**2)), 1e-300)
    tau = np.zeros(spec.n_tau)
    ones = np.allclose(data.W[:, 0], 1.0)
    if ones:
        tau[0] = math.log(s2)
    else:
        tau, *_ = np.linalg.lstsq(data.W, np.full(data.n, math.log(s2)), rcond=None)
    kappa = yule_walker(res, spec.p) if spec.p else np.zeros(0)
    if spec.p:
        from .theory import ArmaPolynomials, check_stationarity

        if not check_stationarity(ArmaPolynomials(kappa)).stationary:
            kappa = np.zeros(spec.p)
    return ParamVector(beta, tau, kappa, np.zeros(spec.q))


# optimizer -------------------------------------------------------------------


@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    converged: bool
    iterations: int
    history: list = field(default_factory=list)
    message: str = ""


def bfgs_maximize(
    fun,
    grad,
    x0,
    H0=None,
    max_iter: int = 500,
    grad_tol: float = 1e-6,
    c1: float = 1e-4,
    shrink: float = 0.5,
    max_backtrack: int = 60,
    noise: float = 1e-12,
) -> OptimizeResult:
    """Maximize ``fun`` by BFGS with Armijo backtracking.

    ``H0`` is the initial inverse-Hessian approximation of ``-fun``.  When the
    objective is flat to relative rounding ``noise``, a step that strictly
    lowers the largest gradient component is accepted instead.  Objective
    failures (``NonFiniteError``, overflow) during the line search are treated
    as rejected steps.
    """
    x = np.asarray(x0, dtype=float).copy()
    d = len(x)
    f = fun(x)
    g = grad(x)
    Hinv = np.eye(d) if H0 is None else np.array(H0, dtype=float)
    history = [f]
    resets = 0
    it = 0
    message = "max_iter reached"
    converged = bool(np.max(np.abs(g)) < grad_tol) if d else True
    while not converged and it < max_iter:
        it += 1
        # ascent direction for fun = descent for -fun
        direction = Hinv @ g
        slope = g @ direction
        if not np.isfinite(slope) or slope <= 0:
            Hinv = _reset_scale(g, d)
            direction = Hinv @ g
            slope = g @ direction
        step = 1.0
        accepted = False
        for _ in range(max_backtrack):
            xn = x + step * direction
            try:
                fn = fun(xn)
            except (NonFiniteError, FloatingPointError, KernelDomainError, ValueError):
                fn = -np.inf
            if np.isfinite(fn) and fn >= f + c1 * step * slope:
                accepted = True
                break
            if np.isfinite(fn) and fn >= f - noise * abs(f):
                # objective flat to rounding: let the gradient decide
                try:
                    gn = grad(xn)
                except (NonFiniteError, FloatingPointError, KernelDomainError):
                    gn = None
                if gn is not None and np.max(np.abs(gn)) < np.max(np.abs(g)):
                    accepted = True
                    break
            step *= shrink
        if not accepted:
            if resets < 2:
                resets += 1
                Hinv = _reset_scale(g, d)
                continue
            message = "line search failed"
            break
        try:
            gn = grad(xn)
        except (NonFiniteError, FloatingPointError, KernelDomainError):
            message = "gradient evaluation failed"
            break
        s = xn - x
        yv = -(gn - g)  # gradient change of -fun
        sy = s @ yv
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(yv):
            rho = 1.0 / sy
            Hy = Hinv @ yv
            Hinv = Hinv + ((sy + yv @ Hy) * rho**2) * np.outer(s, s) - rho * (
                np.outer(Hy, s) + np.outer(s, Hy)
            )
        x, f, g = xn, fn, gn
        history.append(f)
        if np.max(np.abs(g)) < grad_tol:
            converged = True
            message = "gradient tolerance reached"
    return OptimizeResult(x, f, g, converged, it, history, message if not converged else "gradient tolerance reached")


def _reset_scale(g, d):
    gn = np.linalg.norm(g)
    return np.eye(d) * (1.0 / max(gn, 1.0))


# fitting ---------------------------------------------------------------------


@dataclass
class FitOptions:
    max_iter: int = 500
    grad_tol: float = 1e-6
    init_strategy: str = "ols"
    seed: int | None = None
    theta0: np.ndarray | None = None


@dataclass
class FitResult:
    """Estimates, inference and fit summaries of a log-symmetric-ARMAX model."""

    spec: ModelSpec
    theta_hat: ParamVector
    se: np.ndarray
    p_values: np.ndarray
    loglik_full: float
    aic: float
    bic: float
    rmse: float
    mu_hat: np.ndarray
    r_hat: np.ndarray
    z_hat: np.ndarray
    hessian: np.ndarray
    converged: bool
    iterations: int
    n_obs: int
    loglik_history: list = field(default_factory=list)
    information_pd: bool = True
    sum_log_response: float = 0.0
    message: str = ""

    @property
    def kernel(self) -> KernelFamily:
        return self.spec.kernel

    @property
    def n_params(self) -> int:
        return self.spec.n_params

    @property
    def n_effective(self) -> int:
        return self.n_obs - self.spec.m

    @property
    def loglik_logscale(self) -> float:
        """Log-likelihood of ``log(y)`` (no Jacobian term)."""
        return self.loglik_full + self.sum_log_response

    @property
    def param_names(self) -> list[str]:
        return self.spec.param_names()

    @property
    def phi_hat(self) -> float:
        return float(np.exp(self.theta_hat.tau[0]))

    def covariance(self) -> np.ndarray:
        try:
            return np.linalg.inv(-self.hessian)
        except np.linalg.LinAlgError:
            return np.full_like(self.hessian, np.nan)

    def to_dict(self) -> dict:
        return {
            "model": {
                "p": self.spec.p,
                "q": self.spec.q,
                "n_beta": self.spec.n_beta,
                "n_tau": self.spec.n_tau,
                "kernel": self.spec.kernel.to_dict(),
            },
            "parameters": self.param_names,
            "estimate": self.theta_hat.to_flat().tolist(),
            "se": _nan_to_none(self.se),
            "p_value": _nan_to_none(self.p_values),
            "loglik": self.loglik_full,
            "loglik_logscale": self.loglik_logscale,
            "aic": self.aic,
            "bic": self.bic,
            "rmse": self.rmse,
            "n_obs": self.n_obs,
            "converged": self.converged,
            "iterations": self.iterations,
            "information_pd": self.information_pd,
            "message": self.message,
            "hessian": self.hessian.tolist(),
            "sum_log_response": self.sum_log_response,
            "mu_hat": self.mu_hat.tolist(),
            "r_hat": self.r_hat.tolist(),
            "z_hat": self.z_hat.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        md = d["model"]
        kern = make_kernel(md["kernel"]["family"], md["kernel"]["theta"])
        spec = ModelSpec(md["p"], md["q"], md["n_beta"], md["n_tau"], kern)
        return cls(
            spec=spec,
            theta_hat=ParamVector.from_flat(np.array(d["estimate"], dtype=float), spec),
            se=_none_to_nan(d["se"]),
            p_values=_none_to_nan(d["p_value"]),
            loglik_full=d["loglik"],
            aic=d["aic"],
            bic=d["bic"],
            rmse=d["rmse"],
            mu_hat=np.array(d["mu_hat"], dtype=float),
            r_hat=np.array(d["r_hat"], dtype=float),
            z_hat=np.array(d["z_hat"], dtype=float),
            hessian=np.array(d["hessian"], dtype=float),
            converged=d["converged"],
            iterations=d["iterations"],
            n_obs=d["n_obs"],
            information_pd=d.get("information_pd", True),
            sum_log_response=d.get("sum_log_response", 0.0),
            message=d.get("message", ""),
        )


def _nan_to_none(a):
    return [None if not np.isfinite(x) else float(x) for x in np.asarray(a, dtype=float)]


def _none_to_nan(a):
    return np.array([np.nan if x is None else x for x in a], dtype=float)


def _standardizer(M: np.ndarray) -> np.ndarray:
    """A with M @ A centred/scaled (non-constant columns; centring only with an intercept)."""
    k = M.shape[1]
    A = np.eye(k)
    const = [j for j in range(k) if np.ptp(M[:, j]) == 0 and M[0, j] != 0]
    icpt = const[0] if const else None
    for j in range(k):
        if j in const:
            continue
        col = M[:, j]
        c = col.mean() if icpt is not None else 0.0
        s = col.std()
        if s == 0:
            s = 1.0
        A[j, j] = 1.0 / s
        if icpt is not None:
            A[icpt, j] = -c / (s * M[0, icpt])
    return A


def fit(
    spec: ModelSpec,
    data: TimeSeriesData,
    options: FitOptions | None = None,
    **kwargs,
) -> FitResult:
    """Maximize the conditional log-likelihood by BFGS.

    The optimizer runs on internally standardized covariates (an exact linear
    reparametrization of beta and tau); the convergence test and the finite-
    difference Hessian live in that well-conditioned space and are mapped back.
    """
    opts = options if options is not None else FitOptions(**kwargs)
    if data.n <= spec.m:
        raise ValueError(f"need more than m={spec.m} observations, got {data.n}")
    if data.X.shape[1] != spec.n_beta or data.W.shape[1] != spec.n_tau:
        raise ValueError("covariate matrices do not match the model specification")

    A_beta = _standardizer(data.X)
    A_tau = _standardizer(data.W)
    d = spec.n_params
    T = np.eye(d)
    sl = spec.slices()
    T[sl["beta"], sl["beta"]] = A_beta
    T[sl["tau"], sl["tau"]] = A_tau
    std_data = TimeSeriesData(data.y, data.X @ A_beta, data.W @ A_tau)

    if opts.theta0 is not None:
        theta0 = ParamVector.from_flat(np.asarray(opts.theta0, dtype=float), spec)
    else:
        theta0 = initialize(spec, data)
        if opts.init_strategy == "jitter":
            rng = np.random.default_rng(opts.seed)
            flat = theta0.to_flat()
            flat[sl["kappa"]] += rng.normal(0, 0.05, spec.p)
            flat[sl["zeta"]] += rng.normal(0, 0.05, spec.q)
            theta0 = ParamVector.from_flat(flat, spec)
        elif opts.init_strategy != "ols":
            raise ValueError(f"unknown init_strategy {opts.init_strategy!r}")
    u0 = np.linalg.solve(T, theta0.to_flat())

    scale = 1.0 / max(data.n - spec.m, 1)

    def fun(u):
        return conditional_loglik(spec, ParamVector.from_flat(u, spec), std_data)

    def grad(u):
        return score(spec, ParamVector.from_flat(u, spec), std_data)

    H0 = None
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SingularInformationWarning)
            info0 = observed_information(spec, ParamVector.from_flat(u0, spec), std_data)
        if _is_pd(info0):
            H0 = np.linalg.inv(info0)
    except (NonFiniteError, FloatingPointError, KernelDomainError, np.linalg.LinAlgError):
        H0 = None
    if H0 is None:
        H0 = np.eye(d) * scale

    res = bfgs_maximize(fun, grad, u0, H0=H0, max_iter=opts.max_iter, grad_tol=opts.grad_tol)
    if not res.converged:
        warnings.warn(
            f"BFGS did not converge ({res.message}) after {res.iterations} iterations",
            ConvergenceWarning,
        )

    theta_hat = ParamVector.from_flat(T @ res.x, spec)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SingularInformationWarning)
        info_u = observed_information(spec, ParamVector.from_flat(res.x, spec), std_data, details=True)
    Tinv = np.linalg.inv(T)
    hessian = -(Tinv.T @ info_u.matrix @ Tinv)
    hessian = 0.5 * (hessian + hessian.T)
    if info_u.positive_definite:
        cov_u = np.linalg.inv(info_u.matrix)
        cov = T @ cov_u @ T.T
        diag = np.diag(cov)
        se = np.where(diag > 0, np.sqrt(np.abs(diag)), np.nan)
    else:
        warnings.warn("observed information is singular; standard errors missing", SingularInformationWarning)
        se = np.full(d, np.nan)

    st = recurse_state(spec, theta_hat, data)
    m = spec.m
    ll = conditional_loglik(spec, theta_hat, data, include_constants=True)
    n_eff = data.n - m
    rmse = float(np.sqrt(np.mean(st.r[m:] ** 2)))
    result = FitResult(
        spec=spec,
        theta_hat=theta_hat,
        se=se,
        p_values=np.full(d, np.nan),
        loglik_full=ll,
        aic=-2.0 * ll + 2.0 * d,
        bic=-2.0 * ll + d * math.log(n_eff),
        rmse=rmse,
        mu_hat=st.mu,
        r_hat=st.r,
        z_hat=st.z,
        hessian=hessian,
        converged=res.converged,
        iterations=res.iterations,
        n_obs=data.n,
        loglik_history=[h for h in res.history],
        information_pd=info_u.positive_definite,
        sum_log_response=float(np.sum(data.v[m:])),
        message=res.message,
    )
    result.p_values = wald_tests(result)
    return result


def wald_tests(fit_result: FitResult) -> np.ndarray:
    """Two-sided normal p-values of ``theta_i / se_i`` (NaN where the SE is missing)."""
    est = fit_result.theta_hat.to_flat()
    se = np.asarray(fit_result.se, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        zstat = est / se
        p = 2.0 * special.ndtr(-np.abs(zstat))
    p = np.where(est == 0, 1.0, p)
    return np.where(np.isfinite(se) & (se > 0), p, np.nan)


@dataclass
class ProfileResult:
    best: float
    table: list  # (theta, loglik_full or nan)
    fits: dict
    errors: dict


def profile_theta(
    spec: ModelSpec,
    data: TimeSeriesData,
    grid,
    options: FitOptions | None = None,
) -> ProfileResult:
    """Fit at each shape value in ``grid`` and keep the highest full log-likelihood.

    Ties go to the smaller shape value; failing grid points are recorded and skipped.
    """
    kern = spec.kernel
    if not kern.has_shape:
        raise KernelDomainError(f"{kern.tag} has no shape parameter to profile")
    grid = sorted(float(g) for g in grid)
    if not grid:
        raise ValueError("empty grid")
    table, fits, errors = [], {}, {}
    for th in grid:
        try:
            k = type(kern)(th)
            s = ModelSpec(spec.p, spec.q, spec.n_beta, spec.n_tau, k)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ConvergenceWarning)
                warnings.simplefilter("ignore", SingularInformationWarning)
                fr = fit(s, data, options)
            fits[th] = fr
            table.append((th, fr.loglik_full))
        except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
            logger.warning("profile point %g failed: %s", th, exc)
            errors[th] = str(exc)
            table.append((th, float("nan")))
    valid = [(th, ll) for th, ll in table if np.isfinite(ll)]
    if not valid:
        raise RuntimeError("every grid point failed")
    best_ll = max(ll for _, ll in valid)
    best = min(th for th, ll in valid if ll == best_ll)
    return ProfileResult(best, table, fits, errors)
