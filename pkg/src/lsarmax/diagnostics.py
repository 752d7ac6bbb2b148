"""
Residual diagnostics: quantile residuals, sample ACF/PACF, Ljung-Box and
simulated QQ envelopes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.random import SeedSequence, default_rng
from scipy import special, stats

from .model import ModelSpec, SimState, TimeSeriesData, recurse_state, simulate_forward

__all__ = [
    "ResidualReport",
    "quantile_residuals",
    "quantile_residuals_from_z",
    "sample_acf",
    "sample_pacf",
    "durbin_levinson",
    "ljung_box",
    "simulated_envelope",
    "residual_report",
]

P_CLAMP = 1e-12


def quantile_residuals_from_z(z, kernel, orientation: str = "cdf") -> np.ndarray:
    """Phi^{-1}(F(z)) for standardized residuals ``z``; ``orientation="survival"`` uses 1 - F."""
    z = np.asarray(z, dtype=float)
    if orientation == "cdf":
        sign = 1.0
    elif orientation == "survival":
        sign = -1.0
    else:
        raise ValueError("orientation must be 'cdf' or 'survival'")
    # work with the lower tail F(-|z|), accurate for large |z|, then restore the sign
    tail = np.asarray(kernel.cdf(-np.abs(z)), dtype=float)
    tail = np.clip(tail, P_CLAMP, 0.5)
    return sign * np.sign(z) * -special.ndtri(tail)


def quantile_residuals(fit, spec: ModelSpec, data: TimeSeriesData, orientation: str = "cdf") -> np.ndarray:
    """Quantile residuals for ``t = m+1..n`` evaluated at the fitted parameters."""
    st = recurse_state(spec, fit.theta_hat, data)
    return quantile_residuals_from_z(st.z[spec.m :], spec.kernel, orientation)


def sample_acf(x, L: int) -> np.ndarray:
    """Sample autocorrelations at lags 1..L (biased autocovariance estimator)."""
    x = np.asarray(x, dtype=float).ravel()
    n = len(x)
    if L >= n:
        raise ValueError("max lag must be smaller than the series length")
    xc = x - x.mean()
    denom = float(xc @ xc)
    if denom == 0:
        raise ValueError("series has zero variance")
    return np.array([xc[k:] @ xc[: n - k] / denom for k in range(1, L + 1)])


def durbin_levinson(rho) -> tuple[np.ndarray, np.ndarray]:
    """AR coefficients of order L and partial autocorrelations from ``rho[0..L]``.

    ``rho[0]`` must be 1.
    """
    rho = np.asarray(rho, dtype=float)
    if rho.ndim != 1 or len(rho) < 2 or rho[0] != 1.0:
        raise ValueError("rho must be a vector of autocorrelations starting with rho[0] = 1")
    L = len(rho) - 1
    phi = np.zeros(L)
    pacf = np.zeros(L)
    v = 1.0
    for k in range(1, L + 1):
        num = rho[k] - phi[: k - 1] @ rho[k - 1 : 0 : -1] if k > 1 else rho[1]
        a = num / v
        prev = phi[: k - 1].copy()
        phi[: k - 1] = prev - a * prev[::-1]
        phi[k - 1] = a
        pacf[k - 1] = a
        v *= 1.0 - a * a
        if v <= 0:
            pacf[k:] = np.nan
            break
    return phi, pacf


def sample_pacf(x, L: int) -> np.ndarray:
    """Sample partial autocorrelations at lags 1..L."""
    rho = sample_acf(x, L)
    return durbin_levinson(np.r_[1.0, rho])[1]


def ljung_box(x, lags: int = 20, dof: int = 0) -> tuple[float, float]:
    """Ljung-Box statistic at ``lags`` and its chi-square p-value on ``lags - dof`` df."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    rho = sample_acf(x, lags)
    Q = n * (n + 2) * float(np.sum(rho**2 / (n - np.arange(1, lags + 1))))
    df = lags - dof
    if df <= 0:
        raise ValueError("lags must exceed the fitted ARMA order")
    return Q, float(stats.chi2.sf(Q, df))


@dataclass
class Envelope:
    lower: np.ndarray
    median: np.ndarray
    upper: np.ndarray
    level: float
    B: int

    def coverage(self, rq) -> float:
        s = np.sort(np.asarray(rq, dtype=float))
        return float(np.mean((s >= self.lower) & (s <= self.upper)))


def _simulate_like(spec, theta, data, eps_rng):
    """One dataset from the model with the observed covariates and first m observations."""
    m = spec.m
    n = data.n
    eps = spec.kernel.rvs(n - m, eps_rng)
    state = SimState(data.v[:m], np.zeros(m), data.X[:m]) if m else None
    v_new = simulate_forward(spec, theta, data.X[m:], eps, state=state, w_future=data.W[m:])
    v = np.r_[data.v[:m], v_new]
    return TimeSeriesData.from_log(v, data.X, data.W)


def simulated_envelope(
    fit,
    spec: ModelSpec,
    data: TimeSeriesData,
    B: int = 100,
    level: float = 0.95,
    seed=None,
    refit: bool = False,
) -> Envelope:
    """Pointwise bands of sorted quantile residuals from ``B`` simulated datasets."""
    if B < 19:
        raise ValueError("envelope needs at least 19 replicates")
    if not (0.0 <= level < 1.0):
        raise ValueError("level must lie in [0, 1)")
    children = SeedSequence(seed).spawn(B)
    theta = fit.theta_hat
    sims = np.empty((B, data.n - spec.m))
    for b, ss in enumerate(children):
        sim = _simulate_like(spec, theta, data, default_rng(ss))
        if refit:
            from .estimation import fit as fit_model

            fb = fit_model(spec, sim)
            rq = quantile_residuals(fb, spec, sim)
        else:
            rq = quantile_residuals(fit, spec, sim)
        sims[b] = np.sort(rq)
    lo, med, hi = np.quantile(sims, [(1 - level) / 2, 0.5, (1 + level) / 2], axis=0)
    return Envelope(lo, med, hi, level, B)


@dataclass
class ResidualReport:
    rq: np.ndarray
    acf: np.ndarray
    pacf: np.ndarray
    envelope: Envelope | None
    ks_stat: float
    ks_pvalue: float
    ljung_box: tuple[float, float]
    lags: int

    def to_dict(self) -> dict:
        out = {
            "lags": self.lags,
            "quantile_residuals": self.rq.tolist(),
            "acf": self.acf.tolist(),
            "pacf": self.pacf.tolist(),
            "ks_stat": self.ks_stat,
            "ks_pvalue": self.ks_pvalue,
            "ljung_box": {"statistic": self.ljung_box[0], "p_value": self.ljung_box[1]},
        }
        if self.envelope is not None:
            out["envelope"] = {
                "level": self.envelope.level,
                "B": self.envelope.B,
                "lower": self.envelope.lower.tolist(),
                "median": self.envelope.median.tolist(),
                "upper": self.envelope.upper.tolist(),
            }
        return out


def residual_report(
    fit,
    spec: ModelSpec,
    data: TimeSeriesData,
    lags: int = 20,
    envelope_B: int | None = 100,
    level: float = 0.95,
    seed=None,
    refit: bool = False,
) -> ResidualReport:
    rq = quantile_residuals(fit, spec, data)
    L = min(lags, len(rq) - 1)
    ks = stats.kstest(rq, "norm")
    env = None
    if envelope_B:
        env = simulated_envelope(fit, spec, data, envelope_B, level, seed, refit)
    return ResidualReport(
        rq=rq,
        acf=sample_acf(rq, L),
        pacf=sample_pacf(rq, L),
        envelope=env,
        ks_stat=float(ks.statistic),
        ks_pvalue=float(ks.pvalue),
        ljung_box=ljung_box(rq, L, dof=spec.p + spec.q if L > spec.p + spec.q else 0),
        lags=L,
    )
