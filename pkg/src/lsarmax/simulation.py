"""
Series generation and the Monte Carlo harness for estimator bias and MSE.

Replicate ``i`` of sample size ``n`` draws its covariates and standardized
innovations from a stream derived from ``(seed, n, i)`` only, so all values of
phi in a grid share common random numbers and results do not depend on the
number of worker processes.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from numpy.random import SeedSequence, default_rng
from sklearn.exceptions import ConvergenceWarning

from .estimation import FitOptions, SingularInformationWarning, fit
from .kernels import KernelFamily
from .model import ModelSpec, NonFiniteError, ParamVector, TimeSeriesData, simulate_forward
from .theory import ArmaPolynomials, check_stationarity

__all__ = [
    "COVARIATE_RULES",
    "McConfig",
    "McCell",
    "McResultTable",
    "generate_dataset",
    "run_monte_carlo",
]

COVARIATE_RULES = ("iid_standard_normal", "iid_uniform01", "from_file")


def _draw_covariates(rule: str, n: int, k: int, rng, given=None) -> np.ndarray:
    if k == 0:
        return np.zeros((n, 0))
    if rule == "iid_standard_normal":
        return rng.standard_normal((n, k))
    if rule == "iid_uniform01":
        return rng.random((n, k))
    if rule == "from_file":
        if given is None:
            raise ValueError("covariate_rule='from_file' needs covariate values")
        given = np.asarray(given, dtype=float)
        if given.ndim == 1:
            given = given[:, None]
        if given.shape[0] < n or given.shape[1] != k:
            raise ValueError(f"need at least {n} rows and {k} columns of covariates")
        return given[-n:]
    raise ValueError(f"unknown covariate rule {rule!r}; choose from {COVARIATE_RULES}")


def _simulate(spec, theta, n, burnin, covariate_rule, rng, covariates=None, skew_covariates=None):
    total = n + burnin
    Xc = _draw_covariates(covariate_rule, total, spec.n_beta - 1, rng, covariates)
    Wc = _draw_covariates(covariate_rule, total, spec.n_tau - 1, rng, skew_covariates)
    X = np.column_stack([np.ones(total), Xc])
    W = np.column_stack([np.ones(total), Wc])
    eps = spec.kernel.rvs(total, rng)
    v = simulate_forward(spec, theta, X, eps, w_future=W)
    return TimeSeriesData.from_log(v[burnin:], X[burnin:], W[burnin:])


def generate_dataset(
    spec: ModelSpec,
    theta: ParamVector,
    n: int,
    covariate_rule: str = "iid_standard_normal",
    burnin: int = 200,
    seed=None,
    covariates=None,
    skew_covariates=None,
) -> TimeSeriesData:
    """Simulate ``n`` observations (after ``burnin``) with an intercept in X and W.

    Non-intercept covariate columns are drawn by ``covariate_rule``; with
    ``"from_file"`` the last ``n + burnin`` rows of ``covariates`` are used.
    """
    if n < spec.m + 2:
        raise ValueError(f"n must be at least m + 2 = {spec.m + 2}")
    if burnin < 0:
        raise ValueError("burnin must be >= 0")
    if spec.p and not check_stationarity(ArmaPolynomials(theta.kappa)).stationary:
        warnings.warn("AR polynomial is not stationary; the path may explode", RuntimeWarning)
    rng = default_rng(seed)
    return _simulate(spec, theta, n, burnin, covariate_rule, rng, covariates, skew_covariates)


@dataclass
class McConfig:
    kernel: KernelFamily
    true_theta: ParamVector
    p: int = 1
    q: int = 1
    n_grid: tuple = (100, 300, 500)
    phi_grid: tuple = (0.5, 1.0, 2.0)
    replicates: int = 500
    burnin: int = 200
    covariate_rule: str = "iid_standard_normal"
    seed: int = 0
    n_jobs: int = 1
    max_failure_rate: float = 0.05
    covariates: np.ndarray | None = None

    def __post_init__(self):
        if self.replicates < 2:
            raise ValueError("replicates must be >= 2")
        if self.burnin < 0:
            raise ValueError("burnin must be >= 0")
        if any(ph <= 0 for ph in self.phi_grid):
            raise ValueError("all phi values must be positive")
        if self.covariate_rule not in COVARIATE_RULES:
            raise ValueError(f"unknown covariate rule {self.covariate_rule!r}")

    @property
    def spec(self) -> ModelSpec:
        return ModelSpec(self.p, self.q, len(self.true_theta.beta), 1, self.kernel)

    def theta_for(self, phi: float) -> ParamVector:
        t = self.true_theta
        return ParamVector(t.beta, [math.log(phi)], t.kappa, t.zeta)

    def param_names(self) -> list[str]:
        nb = len(self.true_theta.beta)
        return ["phi"] + [f"beta{i}" for i in range(nb)] + [f"kappa{i + 1}" for i in range(self.p)] + [
            f"zeta{i + 1}" for i in range(self.q)
        ]

    def truth(self, phi: float) -> np.ndarray:
        t = self.true_theta
        return np.r_[phi, t.beta, t.kappa, t.zeta]


@dataclass
class McCell:
    n: int
    phi: float
    parameter: str
    bias: float
    mse: float
    bias_se: float
    used: int
    failed: int
    cell_failed: bool


@dataclass
class McResultTable:
    cells: list = field(default_factory=list)
    estimates: dict = field(default_factory=dict)  # (n, phi) -> (R x d) array, NaN rows for failures

    def get(self, n, phi, parameter) -> McCell:
        for c in self.cells:
            if c.n == n and c.phi == phi and c.parameter == parameter:
                return c
        raise KeyError((n, phi, parameter))

    def to_rows(self) -> list[dict]:
        return [dict(c.__dict__) for c in self.cells]

    def to_csv(self) -> str:
        """Rows: (n, parameter); column pairs: bias and MSE per phi."""
        phis = sorted({c.phi for c in self.cells})
        ns = sorted({c.n for c in self.cells})
        params = list(dict.fromkeys(c.parameter for c in self.cells))
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = ["n", "parameter"]
        for ph in phis:
            header += [f"bias_phi={ph:g}", f"mse_phi={ph:g}"]
        w.writerow(header)
        for n in ns:
            for par in params:
                row = [n, par]
                for ph in phis:
                    c = self.get(n, ph, par)
                    row += [f"{c.bias:.6f}", f"{c.mse:.6f}"]
                w.writerow(row)
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"cells": self.to_rows()}


def _replicate(cfg: McConfig, n: int, rep: int) -> np.ndarray:
    """Estimates for every phi in the grid from one set of random numbers."""
    spec = cfg.spec
    ss = SeedSequence([int(cfg.seed), int(n), int(rep)])
    out = np.full((len(cfg.phi_grid), len(cfg.param_names())), np.nan)
    for i, phi in enumerate(cfg.phi_grid):
        rng = default_rng(ss)
        theta = cfg.theta_for(phi)
        try:
            data = _simulate(spec, theta, n, cfg.burnin, cfg.covariate_rule, rng, cfg.covariates)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ConvergenceWarning)
                warnings.simplefilter("ignore", SingularInformationWarning)
                fr = fit(spec, data, FitOptions())
        except (ValueError, NonFiniteError, FloatingPointError, np.linalg.LinAlgError):
            continue
        if not fr.converged:
            continue
        th = fr.theta_hat
        out[i] = np.r_[math.exp(th.tau[0]), th.beta, th.kappa, th.zeta]
    return out


def run_monte_carlo(cfg: McConfig) -> McResultTable:
    """Empirical bias and MSE for each (n, phi, parameter) cell.

    Non-converged fits are excluded and counted; a cell is flagged as failed
    when more than ``max_failure_rate`` of its replicates were excluded.
    """
    table = McResultTable()
    names = cfg.param_names()
    for n in cfg.n_grid:
        reps = Parallel(n_jobs=cfg.n_jobs)(
            delayed(_replicate)(cfg, n, r) for r in range(cfg.replicates)
        )
        est = np.stack(reps, axis=0)  # R x n_phi x d
        for i, phi in enumerate(cfg.phi_grid):
            E = est[:, i, :]
            table.estimates[(n, phi)] = E
            ok = np.all(np.isfinite(E), axis=1)
            used = int(ok.sum())
            failed = cfg.replicates - used
            err = E[ok] - cfg.truth(phi)
            for j, name in enumerate(names):
                e = err[:, j]
                if used:
                    bias = math.fsum(e) / used
                    mse = math.fsum(e * e) / used
                    sd = math.sqrt(max(mse - bias * bias, 0.0) * used / max(used - 1, 1))
                    bias_se = sd / math.sqrt(used)
                else:
                    bias = mse = bias_se = float("nan")
                table.cells.append(
                    McCell(
                        n=n,
                        phi=phi,
                        parameter=name,
                        bias=bias,
                        mse=mse,
                        bias_se=bias_se,
                        used=used,
                        failed=failed,
                        cell_failed=failed > cfg.max_failure_rate * cfg.replicates,
                    )
                )
    return table
