"""
Density generating kernels of the symmetric family.

A log-symmetric variable ``Y = exp(V)`` with ``V ~ S(mu, phi, g)`` has density

    f_Y(y) = xi / (sqrt(phi) * y) * g(log(y / lambda)**2 / phi),   lambda = exp(mu)

Every family is a subclass of :class:`KernelFamily`.  Registering a new member
only needs a subclass decorated with :func:`register` in a single file.
"""

from __future__ import annotations

import math
from abc import ABCMeta, abstractmethod

import numpy as np
from numpy.random import Generator, SeedSequence, default_rng
from scipy import special

__all__ = [
    "KernelFamily",
    "LogNormal",
    "LogStudentT",
    "LogPowerExponential",
    "KernelDomainError",
    "KernelSingularityError",
    "make_kernel",
    "kernel_g",
    "normalizer",
    "log_pdf",
    "g_log_deriv",
    "cdf_standard",
    "sample_standard",
    "variance_constant",
]

_REGISTRY: dict[str, type["KernelFamily"]] = {}


class KernelDomainError(ValueError):
    """Argument or shape parameter outside the family's domain."""


class KernelSingularityError(KernelDomainError):
    """Log-derivative requested where the kernel is not differentiable."""


def register(cls):
    _REGISTRY[cls.tag] = cls
    for alias in cls.aliases:
        _REGISTRY[alias] = cls
    return cls


def _as_rng(seed) -> Generator:
    if isinstance(seed, Generator):
        return seed
    if isinstance(seed, SeedSequence):
        return default_rng(seed)
    return default_rng(seed)


class KernelFamily(metaclass=ABCMeta):
    """Base class for density generating kernels ``g``.

    Subclasses implement the kernel on the log scale and the standardized
    distribution functions of ``eps ~ S(0, 1, g)``.  Instances are immutable
    and hashable so they can be shared between threads and processes.
    """

    tag: str = ""
    aliases: tuple[str, ...] = ()
    has_shape: bool = False

    def __init__(self, theta: float | None = None) -> None:
        if self.has_shape:
            if theta is None:
                raise KernelDomainError(f"{self.tag} requires a shape parameter")
            theta = float(theta)
            self._check_theta(theta)
        elif theta is not None:
            raise KernelDomainError(f"{self.tag} has no shape parameter")
        self._theta = theta

    @property
    def theta(self) -> float | None:
        """Extra (shape) parameter, ``None`` when the family has none."""
        return self._theta

    def _check_theta(self, theta: float) -> None:  # pragma: no cover - overridden
        pass

    def __repr__(self) -> str:
        if self.has_shape:
            return f"{type(self).__name__}({self._theta:g})"
        return f"{type(self).__name__}()"

    def __eq__(self, other) -> bool:
        return type(self) is type(other) and self._theta == other._theta

    def __hash__(self) -> int:
        return hash((self.tag, self._theta))

    def to_dict(self) -> dict:
        return {"family": self.tag, "theta": self._theta}

    # kernel ---------------------------------------------------------------
    @abstractmethod
    def log_g(self, u):
        """log g(u) for u >= 0 (no argument checks)."""

    @abstractmethod
    def log_normalizer(self) -> float:
        """log xi such that xi * integral g(z**2) dz = 1."""

    @abstractmethod
    def dlog_g(self, u):
        """d log g(u) / du (no argument checks)."""

    # standardized distribution -------------------------------------------
    @abstractmethod
    def cdf(self, z):
        """CDF of eps ~ S(0, 1, g)."""

    @abstractmethod
    def ppf(self, p):
        """Quantile function of eps ~ S(0, 1, g)."""

    @abstractmethod
    def rvs(self, n: int, rng: Generator) -> np.ndarray:
        """Draw ``n`` values of eps using ``rng``."""

    @abstractmethod
    def variance(self) -> float:
        """Var[eps]."""

    # checked public wrappers ---------------------------------------------
    def g(self, u):
        u = _check_nonneg(u)
        return np.exp(self.log_g(u))

    @property
    def normalizer(self) -> float:
        return math.exp(self.log_normalizer())

    def g_log_deriv(self, u):
        u = _check_nonneg(u)
        return self.dlog_g(u)

    def sample(self, n: int, seed=None) -> np.ndarray:
        if n < 1:
            raise ValueError("n must be >= 1")
        return self.rvs(int(n), _as_rng(seed))


def _check_nonneg(u):
    arr = np.asarray(u, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise KernelDomainError("kernel argument u must be >= 0")
    return arr if arr.ndim else float(arr)


@register
class LogNormal(KernelFamily):
    """Normal kernel ``g(u) = exp(-u/2)``."""

    tag = "lognormal"
    aliases = ("normal", "logn")

    def log_g(self, u):
        return -0.5 * np.asarray(u, dtype=float)

    def log_normalizer(self) -> float:
        return -0.5 * math.log(2.0 * math.pi)

    def dlog_g(self, u):
        return np.full_like(np.asarray(u, dtype=float), -0.5)[()]

    def cdf(self, z):
        return special.ndtr(z)

    def ppf(self, p):
        return special.ndtri(p)

    def rvs(self, n, rng):
        return rng.standard_normal(n)

    def variance(self) -> float:
        return 1.0


@register
class LogStudentT(KernelFamily):
    """Student-t kernel ``g(u) = (1 + u/theta)**(-(theta+1)/2)``, theta = degrees of freedom."""

    tag = "logt"
    aliases = ("studentt", "t", "logstudentt")
    has_shape = True

    def _check_theta(self, theta):
        if not (theta > 0 and math.isfinite(theta)):
            raise KernelDomainError("degrees of freedom must be a positive finite number")

    def log_g(self, u):
        nu = self._theta
        return -0.5 * (nu + 1.0) * np.log1p(np.asarray(u, dtype=float) / nu)

    def log_normalizer(self) -> float:
        nu = self._theta
        return (
            special.gammaln(0.5 * (nu + 1.0))
            - special.gammaln(0.5 * nu)
            - 0.5 * math.log(math.pi * nu)
        )

    def dlog_g(self, u):
        nu = self._theta
        return -(nu + 1.0) / (2.0 * (nu + np.asarray(u, dtype=float)))

    def cdf(self, z):
        return special.stdtr(self._theta, z)

    def ppf(self, p):
        return special.stdtrit(self._theta, p)

    def rvs(self, n, rng):
        return rng.standard_t(self._theta, size=n)

    def variance(self) -> float:
        nu = self._theta
        if nu <= 2:
            raise KernelDomainError("Student-t variance needs more than 2 degrees of freedom")
        return nu / (nu - 2.0)


@register
class LogPowerExponential(KernelFamily):
    """Power-exponential kernel ``g(u) = exp(-u**(1/(1+theta)) / 2)``, theta in (-1, 1].

    ``theta = 0`` is the normal kernel; ``|eps|**(2/(1+theta))`` is chi-square
    with ``1 + theta`` degrees of freedom, which gives the CDF and sampler.
    """

    tag = "logpe"
    aliases = ("pe", "powerexponential", "logpowerexponential")
    has_shape = True

    def _check_theta(self, theta):
        if not (-1.0 < theta <= 1.0):
            raise KernelDomainError("power-exponential shape must lie in (-1, 1]")

    def log_g(self, u):
        return -0.5 * np.power(np.asarray(u, dtype=float), 1.0 / (1.0 + self._theta))

    def log_normalizer(self) -> float:
        a = 0.5 * (1.0 + self._theta)
        return -(math.log1p(self._theta) + special.gammaln(a) + a * math.log(2.0))

    def dlog_g(self, u):
        th = self._theta
        u = np.asarray(u, dtype=float)
        expo = 1.0 / (1.0 + th) - 1.0
        if th > 0 and np.any(u == 0):
            raise KernelSingularityError(
                "power-exponential log-derivative is singular at u=0 for theta > 0"
            )
        with np.errstate(divide="ignore"):
            out = -np.power(u, expo) / (2.0 * (1.0 + th))
        return out[()]

    def cdf(self, z):
        z = np.asarray(z, dtype=float)
        a = 0.5 * (1.0 + self._theta)
        s = np.power(np.abs(z), 1.0 / a)
        return (0.5 + 0.5 * np.sign(z) * special.gammainc(a, 0.5 * s))[()]

    def ppf(self, p):
        p = np.asarray(p, dtype=float)
        a = 0.5 * (1.0 + self._theta)
        q = np.abs(2.0 * p - 1.0)
        s = 2.0 * special.gammaincinv(a, q)
        return (np.sign(p - 0.5) * np.power(s, a))[()]

    def rvs(self, n, rng):
        a = 0.5 * (1.0 + self._theta)
        s = rng.chisquare(1.0 + self._theta, size=n)
        sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        return sign * np.power(s, a)

    def variance(self) -> float:
        th = self._theta
        return math.exp(
            (1.0 + th) * math.log(2.0)
            + special.gammaln(1.5 * (1.0 + th))
            - special.gammaln(0.5 * (1.0 + th))
        )


def make_kernel(family: str | KernelFamily, theta: float | None = None) -> KernelFamily:
    """Build a kernel from its tag (``"lognormal"``, ``"logt"``, ``"logpe"`` or an alias)."""
    if isinstance(family, KernelFamily):
        return family
    key = str(family).strip().lower().replace("-", "").replace("_", "")
    try:
        cls = _REGISTRY[key]
    except KeyError:
        raise KernelDomainError(
            f"unknown kernel family {family!r}; known: {sorted(set(c.tag for c in _REGISTRY.values()))}"
        ) from None
    return cls(theta)


# functional interface ----------------------------------------------------


def kernel_g(u, k: KernelFamily):
    """Evaluate the kernel ``g(u)``."""
    return k.g(u)


def normalizer(k: KernelFamily) -> float:
    """Normalizing constant ``xi`` of the kernel."""
    return k.normalizer


def log_pdf(y, lam, phi, k: KernelFamily):
    """Full log-density of ``Y ~ LS(lam, phi, g)`` at ``y``, constants included."""
    y = np.asarray(y, dtype=float)
    lam = np.asarray(lam, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if np.any(y <= 0) or np.any(lam <= 0) or np.any(phi <= 0):
        raise KernelDomainError("y, lambda and phi must be positive")
    logy = np.log(y)
    u = (logy - np.log(lam)) ** 2 / phi
    out = k.log_normalizer() - 0.5 * np.log(phi) - logy + k.log_g(u)
    return out[()]


def g_log_deriv(u, k: KernelFamily):
    """``d log g(u) / du``."""
    return k.g_log_deriv(u)


def cdf_standard(z, k: KernelFamily):
    """CDF of ``eps ~ S(0, 1, g)``."""
    return k.cdf(z)


def sample_standard(n: int, k: KernelFamily, seed=None) -> np.ndarray:
    """``n`` iid draws of ``eps ~ S(0, 1, g)``; deterministic for a given seed."""
    return k.sample(n, seed)


def variance_constant(k: KernelFamily) -> float:
    """``Var[eps]`` for ``eps ~ S(0, 1, g)``."""
    return k.variance()
