"""
Model specification, parameter layout and the conditional recursion.

With ``v_t = log(y_t)`` and ``w_t = v_t - x_t' beta``, the conditional median on
the log scale is

    mu_t = x_t' beta + sum_l kappa_l w_{t-l} + sum_j zeta_j r_{t-j},   r_t = v_t - mu_t

and ``phi_t = exp(w_t' tau)``.  The first ``m = max(p, q)`` observations are
conditioned on, with ``r_t = 0`` and ``mu_t = x_t' beta`` there.  Both the
recursion and its inverse (simulation) are evaluated as linear filters.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.signal import lfilter, lfiltic

from .kernels import KernelFamily, make_kernel

__all__ = [
    "ModelSpec",
    "ParamVector",
    "TimeSeriesData",
    "State",
    "SimState",
    "NonFiniteError",
    "recurse_state",
    "conditional_loglik",
    "simulate_forward",
]


class NonFiniteError(FloatingPointError):
    """Recursion or likelihood produced a non-finite value."""


@dataclass(frozen=True)
class ModelSpec:
    """Orders, covariate counts and kernel of a log-symmetric-ARMAX(p, q) model."""

    p: int = 0
    q: int = 0
    n_beta: int = 1
    n_tau: int = 1
    kernel: KernelFamily = field(default_factory=lambda: make_kernel("lognormal"))

    def __post_init__(self):
        if self.p < 0 or self.q < 0:
            raise ValueError("orders p and q must be >= 0")
        if self.n_beta < 1 or self.n_tau < 1:
            raise ValueError("n_beta and n_tau must be >= 1")

    @property
    def m(self) -> int:
        return max(self.p, self.q)

    @property
    def n_params(self) -> int:
        return self.n_beta + self.n_tau + self.p + self.q

    def param_names(self) -> list[str]:
        return (
            [f"beta{i}" for i in range(self.n_beta)]
            + [f"tau{i}" for i in range(self.n_tau)]
            + [f"kappa{i + 1}" for i in range(self.p)]
            + [f"zeta{i + 1}" for i in range(self.q)]
        )

    def slices(self) -> dict[str, slice]:
        a = self.n_beta
        b = a + self.n_tau
        c = b + self.p
        return {
            "beta": slice(0, a),
            "tau": slice(a, b),
            "kappa": slice(b, c),
            "zeta": slice(c, c + self.q),
        }

    @classmethod
    def for_data(cls, data: "TimeSeriesData", p=0, q=0, kernel=None) -> "ModelSpec":
        return cls(
            p=p,
            q=q,
            n_beta=data.X.shape[1],
            n_tau=data.W.shape[1],
            kernel=kernel if kernel is not None else make_kernel("lognormal"),
        )


@dataclass
class ParamVector:
    """theta = (beta, tau, kappa, zeta); the flat layout is always in this order."""

    beta: np.ndarray
    tau: np.ndarray
    kappa: np.ndarray = field(default_factory=lambda: np.zeros(0))
    zeta: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        self.tau = np.atleast_1d(np.asarray(self.tau, dtype=float))
        self.kappa = np.atleast_1d(np.asarray(self.kappa, dtype=float))
        self.zeta = np.atleast_1d(np.asarray(self.zeta, dtype=float))

    def to_flat(self) -> np.ndarray:
        return np.concatenate([self.beta, self.tau, self.kappa, self.zeta])

    @classmethod
    def from_flat(cls, flat, spec: ModelSpec) -> "ParamVector":
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (spec.n_params,):
            raise ValueError(f"expected {spec.n_params} parameters, got shape {flat.shape}")
        s = spec.slices()
        return cls(flat[s["beta"]], flat[s["tau"]], flat[s["kappa"]], flat[s["zeta"]])

    def check(self, spec: ModelSpec) -> None:
        sizes = (len(self.beta), len(self.tau), len(self.kappa), len(self.zeta))
        want = (spec.n_beta, spec.n_tau, spec.p, spec.q)
        if sizes != want:
            raise ValueError(f"parameter sizes {sizes} do not match model {want}")


@dataclass
class TimeSeriesData:
    """Positive responses with median covariates ``X`` and skewness covariates ``W``."""

    y: np.ndarray
    X: np.ndarray
    W: np.ndarray | None = None
    time: np.ndarray | None = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).ravel()
        n = self.y.shape[0]
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim == 1:
            self.X = self.X[:, None]
        if self.W is None:
            self.W = np.ones((n, 1))
        self.W = np.asarray(self.W, dtype=float)
        if self.W.ndim == 1:
            self.W = self.W[:, None]
        if self.X.shape[0] != n or self.W.shape[0] != n:
            raise ValueError(
                f"length mismatch: y has {n} rows, X {self.X.shape[0]}, W {self.W.shape[0]}"
            )
        if not np.all(np.isfinite(self.y)) or np.any(self.y <= 0):
            raise ValueError("responses must be finite and strictly positive")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.W))):
            raise ValueError("covariates must be finite")
        self.v = np.log(self.y)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @classmethod
    def from_log(cls, v, X, W=None, time=None) -> "TimeSeriesData":
        return cls(np.exp(np.asarray(v, dtype=float)), X, W, time)


class State(NamedTuple):
    mu: np.ndarray
    r: np.ndarray
    z: np.ndarray
    phi: np.ndarray


def _check(spec: ModelSpec, theta: ParamVector, data: TimeSeriesData) -> None:
    theta.check(spec)
    if data.X.shape[1] != spec.n_beta or data.W.shape[1] != spec.n_tau:
        raise ValueError("covariate matrices do not match the model specification")
    if data.n <= spec.m:
        raise ValueError(f"need more than m={spec.m} observations, got {data.n}")


def _ar_input(w: np.ndarray, kappa: np.ndarray, m: int) -> np.ndarray:
    # e_t = w_t - sum_l kappa_l w_{t-l} for t >= m, zero before
    e = np.zeros_like(w)
    e[m:] = w[m:]
    for lag, k in enumerate(kappa, start=1):
        e[m:] -= k * w[m - lag : len(w) - lag]
    return e


def recurse_state(spec: ModelSpec, theta: ParamVector, data: TimeSeriesData) -> State:
    """Conditional medians ``mu``, innovations ``r``, standardized ``z`` and ``phi``."""
    _check(spec, theta, data)
    m = spec.m
    xb = data.X @ theta.beta
    w = data.v - xb
    e = _ar_input(w, theta.kappa, m)
    if spec.q:
        r = lfilter([1.0], np.r_[1.0, theta.zeta], e)
    else:
        r = e
    mu = data.v - r
    mu[:m] = xb[:m]
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        phi = np.exp(data.W @ theta.tau)
        z = r / np.sqrt(phi)
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(z)) and np.all(phi > 0)):
        raise NonFiniteError("non-finite conditional median or standardized residual")
    return State(mu, r, z, phi)


def conditional_loglik(
    spec: ModelSpec,
    theta: ParamVector,
    data: TimeSeriesData,
    include_constants: bool = True,
) -> float:
    """Conditional log-likelihood over ``t = m+1..n``.

    Without constants this is ``-1/2 sum log phi_t + sum log g(z_t**2)``.  With
    constants it is the full log-density of ``y``, adding ``log xi - v_t`` per term.
    """
    st = recurse_state(spec, theta, data)
    m = spec.m
    with np.errstate(over="ignore", invalid="ignore"):
        z2 = st.z[m:] ** 2
        ll = -0.5 * np.sum(np.log(st.phi[m:])) + np.sum(spec.kernel.log_g(z2))
    if include_constants:
        ll += (data.n - m) * spec.kernel.log_normalizer() - np.sum(data.v[m:])
    if not np.isfinite(ll):
        raise NonFiniteError("non-finite log-likelihood")
    return float(ll)


@dataclass
class SimState:
    """Last ``m`` values (oldest first) of the log response, innovations and covariate rows."""

    v: np.ndarray
    r: np.ndarray
    X: np.ndarray


def simulate_forward(
    spec: ModelSpec,
    theta: ParamVector,
    x_future,
    eps,
    state: SimState | None = None,
    w_future=None,
) -> np.ndarray:
    """Generate ``v_t = mu_t + sqrt(phi_t) eps_t`` for each row of ``x_future``.

    ``state`` holds the presample history; ``None`` starts from zero deviations
    and zero innovations.  The output is deterministic given ``eps``.
    """
    theta.check(spec)
    X = np.asarray(x_future, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    eps = np.asarray(eps, dtype=float).ravel()
    h = X.shape[0]
    if eps.shape[0] != h:
        raise ValueError(f"eps has length {eps.shape[0]} but horizon is {h}")
    W = np.ones((h, 1)) if w_future is None else np.asarray(w_future, dtype=float)
    if W.ndim == 1:
        W = W[:, None]
    if W.shape[0] != h:
        raise ValueError("w_future length does not match horizon")
    phi = np.exp(W @ theta.tau)
    r = np.sqrt(phi) * eps
    b = np.r_[1.0, theta.zeta]
    a = np.r_[1.0, -theta.kappa]
    zi = None
    m = spec.m
    if m and state is not None:
        sv = np.asarray(state.v, dtype=float)
        sr = np.asarray(state.r, dtype=float)
        sx = np.asarray(state.X, dtype=float)
        if sx.ndim == 1:
            sx = sx[:, None]
        if len(sv) < m or len(sr) < m or sx.shape[0] < m:
            raise ValueError(f"state must hold at least m={m} past values")
        w_hist = (sv - sx @ theta.beta)[::-1]
        zi = lfiltic(b, a, w_hist, sr[::-1])
    if zi is None:
        w = lfilter(b, a, r)
    else:
        w, _ = lfilter(b, a, r, zi=zi)
    v = X @ theta.beta + w
    if not np.all(np.isfinite(v)):
        raise NonFiniteError("simulated path overflowed; check stationarity")
    return v
