"""
MA(infinity) expansion of the ARMA operator and the marginal moments it implies.

For ``w_t = h(Y_t) - x_t' beta`` the model reads ``Phi(B) w_t = Theta(B) r_t`` with
``Phi(B) = 1 - sum kappa_i B^i`` and ``Theta(B) = 1 + sum zeta_j B^j``, so
``w_t = sum_i psi_i r_{t-i}``.  Since ``Var[r_t | past] = xi_var * phi_t``,

    Var[w_t]          = xi_var * sum_i psi_i**2 phi_{t-i}
    Cov[w_t, w_{t-k}] = xi_var * sum_i psi_i psi_{i-k} phi_{t-i}     (psi_j = 0 for j < 0)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import KernelFamily, make_kernel

__all__ = [
    "ArmaPolynomials",
    "NonStationaryError",
    "Stationarity",
    "MarginalMoments",
    "psi_weights",
    "check_stationarity",
    "choose_truncation",
    "marginal_moments",
]

MAX_TRUNCATION = 100_000


class NonStationaryError(ValueError):
    pass


@dataclass(frozen=True)
class ArmaPolynomials:
    kappa: tuple = ()
    zeta: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "kappa", tuple(float(k) for k in np.atleast_1d(self.kappa)))
        object.__setattr__(self, "zeta", tuple(float(z) for z in np.atleast_1d(self.zeta)))

    @property
    def p(self) -> int:
        return len(self.kappa)

    @property
    def q(self) -> int:
        return len(self.zeta)


def psi_weights(poly: ArmaPolynomials, K: int) -> np.ndarray:
    """psi_0..psi_K of Theta(B)/Phi(B)."""
    if K < 0:
        raise ValueError("K must be >= 0")
    psi = np.zeros(K + 1)
    psi[0] = 1.0
    kappa, zeta = poly.kappa, poly.zeta
    for j in range(1, K + 1):
        acc = zeta[j - 1] if j <= len(zeta) else 0.0
        for i in range(1, min(j, len(kappa)) + 1):
            acc += kappa[i - 1] * psi[j - i]
        psi[j] = acc
    return psi


@dataclass
class Stationarity:
    stationary: bool
    ar_root_moduli: np.ndarray
    invertible: bool = True
    ma_root_moduli: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _root_moduli(coefs_ascending) -> np.ndarray:
    c = np.asarray(coefs_ascending, dtype=float)
    nz = np.flatnonzero(c)
    if len(nz) == 0 or nz[-1] == 0:
        return np.zeros(0)
    degree = nz[-1]
    # leading terms below rounding of the largest one only carry roots near
    # infinity; np.roots would overflow on them, so report those moduli as inf
    keep = np.flatnonzero(np.abs(c) > np.finfo(float).eps * np.max(np.abs(c)))
    c = c[: keep[-1] + 1]
    finite = np.abs(np.roots(c[::-1])) if len(c) > 1 else np.zeros(0)
    return np.sort(np.r_[finite, np.full(degree - (len(c) - 1), np.inf)])


def check_stationarity(poly: ArmaPolynomials, tol: float = 1e-10) -> Stationarity:
    """Roots of 1 - sum kappa_i B^i (and of the MA polynomial) versus the unit circle."""
    ar = _root_moduli(np.r_[1.0, -np.asarray(poly.kappa, dtype=float)])
    ma = _root_moduli(np.r_[1.0, np.asarray(poly.zeta, dtype=float)])
    return Stationarity(
        stationary=bool(np.all(ar > 1.0 + tol)),
        ar_root_moduli=ar,
        invertible=bool(np.all(ma > 1.0 + tol)),
        ma_root_moduli=ma,
    )


def choose_truncation(poly: ArmaPolynomials, tol: float = 1e-12, kmax: int = MAX_TRUNCATION) -> int:
    """Smallest K with |psi_K| * max(1, sum |psi|) < tol (and past every AR/MA lag)."""
    if not check_stationarity(poly).stationary:
        raise NonStationaryError("AR polynomial has a root on or inside the unit circle")
    K = max(16, 2 * (poly.p + poly.q))
    while True:
        psi = psi_weights(poly, K)
        scale = max(1.0, np.sum(np.abs(psi)))
        # a run of p small weights guarantees the tail stays small
        run = max(poly.p, 1)
        small = np.abs(psi) * scale < tol
        idx = None
        start = max(poly.q, poly.p)
        for k in range(start, K + 1 - run + 1):
            if small[k : k + run].all():
                idx = k
                break
        if idx is not None:
            return int(idx)
        if K >= kmax:
            raise NonStationaryError("psi weights did not decay within the truncation limit")
        K = min(2 * K, kmax)


@dataclass
class MarginalMoments:
    mean_shift: float
    var: float
    psi: np.ndarray
    xi_var: float
    phi: float | np.ndarray

    def autocov(self, k):
        """Autocovariance at lag ``k`` (constant phi) or at the path end (time-varying phi)."""
        k = np.atleast_1d(np.asarray(k, dtype=int))
        out = np.array([self._cov(int(kk)) for kk in k])
        return out if out.size > 1 else float(out[0])

    def autocorr(self, k):
        k = np.atleast_1d(np.asarray(k, dtype=int))
        out = np.array([self._corr(int(kk)) for kk in k])
        return out if out.size > 1 else float(out[0])

    # constant phi uses the shifted-sum form sum_i psi_i psi_{i+k}
    def _weights(self, t_offset: int) -> np.ndarray:
        K = len(self.psi) - 1
        if np.ndim(self.phi) == 0:
            return np.full(K + 1, float(self.phi))
        path = np.asarray(self.phi, dtype=float)
        # phi_{t - t_offset - i}, t = last index of the path
        idx = len(path) - 1 - t_offset - np.arange(K + 1)
        idx = np.clip(idx, 0, len(path) - 1)
        return path[idx]

    def _var_at(self, t_offset: int) -> float:
        return self.xi_var * float(np.sum(self.psi**2 * self._weights(t_offset)))

    def _cov(self, k: int) -> float:
        k = abs(k)
        psi = self.psi
        if k >= len(psi):
            return 0.0
        wts = self._weights(0)
        # sum_i psi_i psi_{i-k} phi_{t-i}, i >= k
        return self.xi_var * float(np.sum(psi[k:] * psi[: len(psi) - k] * wts[k:]))

    def _corr(self, k: int) -> float:
        if k == 0:
            return 1.0
        return self._cov(k) / np.sqrt(self._var_at(0) * self._var_at(abs(k)))


def marginal_moments(
    poly: ArmaPolynomials,
    phi: float | np.ndarray = 1.0,
    kernel: KernelFamily | None = None,
    K: int | None = None,
) -> MarginalMoments:
    """Marginal mean shift, variance and autocovariances of ``h(Y_t) - x_t' beta``.

    ``phi`` is a constant or a path ending at the time of interest.  ``K`` is the
    psi truncation; by default it is chosen so the neglected tail is below 1e-12.
    """
    kernel = kernel if kernel is not None else make_kernel("lognormal")
    if not check_stationarity(poly).stationary:
        raise NonStationaryError("marginal moments need a stationary AR polynomial")
    if K is None:
        K = choose_truncation(poly)
    psi = psi_weights(poly, K)
    xi_var = kernel.variance()
    if np.ndim(phi) and np.any(np.asarray(phi) <= 0):
        raise ValueError("phi must be positive")
    if np.ndim(phi) == 0 and float(phi) <= 0:
        raise ValueError("phi must be positive")
    mm = MarginalMoments(mean_shift=0.0, var=0.0, psi=psi, xi_var=xi_var, phi=phi)
    mm.var = mm._var_at(0)
    return mm
