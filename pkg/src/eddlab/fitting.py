"""Log-log least-squares fits of scaling exponents."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, check_X_y, column_or_1d


@dataclass(frozen=True)
class FitResult:
    exponent: float
    intercept: float
    r_squared: float
    stderr: float

    def to_dict(self) -> dict:
        return asdict(self)


def ols_fit(x, y) -> FitResult:
    """Ordinary least squares of y on x; exponent is the slope."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D of equal length")
    if np.unique(x).size < 2:
        raise ValueError("need at least two distinct abscissae")
    res = stats.linregress(x, y)
    r2 = res.rvalue ** 2 if np.ptp(y) > 0 else 1.0
    stderr = res.stderr if x.size > 2 else math.nan
    return FitResult(float(res.slope), float(res.intercept), float(r2), float(stderr))


class PowerLawRegressor(RegressorMixin, BaseEstimator):
    """Fits y ~ C x^a (log x)^p by OLS of log y - p log log x on log x.

    ``log_correction_power`` fixes p; only a and C are estimated.
    """

    def __init__(self, log_correction_power: float = 0.0):
        self.log_correction_power = log_correction_power

    def _design(self, X):
        x = column_or_1d(np.asarray(X, dtype=float).reshape(-1, 1))
        if np.any(x <= 0) or (self.log_correction_power and np.any(x <= 1)):
            raise ValueError("abscissae must be positive (and > 1 with a log correction)")
        return x

    def fit(self, X, y):
        X, y = check_X_y(np.asarray(X, dtype=float).reshape(-1, 1), y, ensure_min_samples=2)
        x = self._design(X)
        if np.any(y <= 0):
            raise ValueError("responses must be positive")
        z = np.log(y)
        if self.log_correction_power:
            z = z - self.log_correction_power * np.log(np.log(x))
        self.fit_result_ = ols_fit(np.log(x), z)
        self.coef_ = self.fit_result_.exponent
        self.intercept_ = self.fit_result_.intercept
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self)
        x = self._design(X)
        out = np.exp(self.intercept_) * x ** self.coef_
        if self.log_correction_power:
            out = out * np.log(x) ** self.log_correction_power
        return out

    def score(self, X, y, sample_weight=None):
        """R^2 on the log scale, the quantity the fit optimizes."""
        check_is_fitted(self)
        y = np.asarray(y, dtype=float)
        pred = np.log(self.predict(X))
        z = np.log(y)
        ss_res = float(((z - pred) ** 2).sum())
        ss_tot = float(((z - z.mean()) ** 2).sum())
        return 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0


def variance_scaling_fit(pairs) -> FitResult:
    """Slope of log variance on log alpha."""
    a, v = _unzip(pairs)
    if np.unique(a).size < 3:
        raise ValueError("need at least three distinct alphas")
    if np.any(v <= 0):
        raise ValueError("variances must be positive")
    return PowerLawRegressor().fit(a, v).fit_result_


def rate_fit(pairs, log_correction_power: float = 0) -> FitResult:
    """Slope of log d - p log log alpha on log alpha."""
    a, d = _unzip(pairs)
    if np.unique(a).size < 3:
        raise ValueError("need at least three distinct alphas")
    if np.any(d <= 0):
        raise ValueError("estimates must be positive")
    return PowerLawRegressor(log_correction_power).fit(a, d).fit_result_


def _unzip(pairs):
    arr = np.asarray(list(pairs), dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("expected a list of (alpha, value) pairs")
    return arr[:, 0], arr[:, 1]
