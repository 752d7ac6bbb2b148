"""scikit-learn compatible front end for log-symmetric-ARMAX regression."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .diagnostics import quantile_residuals
from .estimation import FitOptions, fit
from .kernels import make_kernel
from .model import ModelSpec, TimeSeriesData, recurse_state

__all__ = ["LogSymmetricARMAX", "check_series"]


def check_series(X, y=None, W=None, fit_intercept=True):
    """Validate covariates (and a positive response) and add intercept columns.

    Row order is time order.  Returns ``(X, y, W)`` as float arrays; ``W`` gets
    a leading column of ones and defaults to that column alone.
    """
    X = check_array(X, ensure_2d=True, dtype=float, ensure_min_features=0)
    n = X.shape[0]
    if fit_intercept:
        X = np.column_stack([np.ones(n), X])
    if X.shape[1] == 0:
        raise ValueError("no median covariates and fit_intercept=False")
    if W is None:
        Wm = np.ones((n, 1))
    else:
        Wm = check_array(W, ensure_2d=True, dtype=float)
        Wm = np.column_stack([np.ones(n), Wm])
    if Wm.shape[0] != n:
        raise ValueError("X and W have different numbers of rows")
    if y is not None:
        y = check_array(y, ensure_2d=False, dtype=float).ravel()
        if y.shape[0] != n:
            raise ValueError(f"X has {n} rows but y has {y.shape[0]}")
        if np.any(y <= 0):
            raise ValueError("y must be strictly positive")
    return X, y, Wm


class LogSymmetricARMAX(BaseEstimator):
    """Log-symmetric-ARMAX(p, q) regression fitted by conditional maximum likelihood.

    Parameters
    ----------
    family : {"lognormal", "logt", "logpe"}
        Density generating kernel.
    kernel_param : float, optional
        Fixed shape parameter (degrees of freedom for ``"logt"``, power
        exponential shape in (-1, 1] for ``"logpe"``).
    order : tuple of int
        ``(p, q)`` autoregressive and moving average orders.
    fit_intercept : bool
        Prepend a column of ones to ``X``.
    max_iter, grad_tol : optimizer controls.

    Attributes
    ----------
    coef_ : ndarray
        Median coefficients (intercept first when ``fit_intercept``).
    tau_, kappa_, zeta_ : ndarray
        Skewness, AR and MA coefficients.
    result_ : FitResult
        Full fit summary including standard errors and information criteria.
    """

    def __init__(
        self,
        family="lognormal",
        kernel_param=None,
        order=(0, 0),
        fit_intercept=True,
        max_iter=500,
        grad_tol=1e-6,
    ):
        self.family = family
        self.kernel_param = kernel_param
        self.order = order
        self.fit_intercept = fit_intercept
        self.max_iter = max_iter
        self.grad_tol = grad_tol

    def _spec(self, X, W) -> ModelSpec:
        p, q = self.order
        return ModelSpec(int(p), int(q), X.shape[1], W.shape[1], make_kernel(self.family, self.kernel_param))

    def fit(self, X, y, W=None):
        """Fit on time-ordered rows of ``X`` (median covariates) and ``W`` (skewness covariates)."""
        Xm, y, Wm = check_series(X, y, W, self.fit_intercept)
        self.n_features_in_ = Xm.shape[1] - int(self.fit_intercept)
        data = TimeSeriesData(y, Xm, Wm)
        spec = self._spec(Xm, Wm)
        self.spec_ = spec
        self.result_ = fit(spec, data, FitOptions(max_iter=self.max_iter, grad_tol=self.grad_tol))
        th = self.result_.theta_hat
        self.coef_ = th.beta
        self.tau_ = th.tau
        self.kappa_ = th.kappa
        self.zeta_ = th.zeta
        self.se_ = self.result_.se
        return self

    def _data(self, X, y, W):
        check_is_fitted(self, "result_")
        Xm, y, Wm = check_series(X, y, W, self.fit_intercept)
        if Xm.shape[1] != self.spec_.n_beta:
            raise ValueError(f"X has {Xm.shape[1] - int(self.fit_intercept)} features, expected {self.n_features_in_}")
        return Xm, y, Wm

    def predict(self, X, y=None, W=None):
        """Conditional medians.

        With the observed ``y`` this is the one-step-ahead median ``exp(mu_t)``;
        without it, the covariate-only median ``exp(x_t' beta)``.
        """
        Xm, y, Wm = self._data(X, y, W)
        if y is None:
            return np.exp(Xm @ self.coef_)
        st = recurse_state(self.spec_, self.result_.theta_hat, TimeSeriesData(y, Xm, Wm))
        return np.exp(st.mu)

    def score(self, X, y, W=None):
        """Average conditional log-likelihood per usable observation."""
        from .model import conditional_loglik

        Xm, y, Wm = self._data(X, y, W)
        data = TimeSeriesData(y, Xm, Wm)
        ll = conditional_loglik(self.spec_, self.result_.theta_hat, data)
        return ll / (data.n - self.spec_.m)

    def quantile_residuals(self, X, y, W=None):
        Xm, y, Wm = self._data(X, y, W)
        return quantile_residuals(self.result_, self.spec_, TimeSeriesData(y, Xm, Wm))
