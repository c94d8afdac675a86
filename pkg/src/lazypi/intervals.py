"""Order-statistic quantile operators and prediction-interval constructions.

The upper operator returns the ceil((1-alpha)(n+1))-th smallest of n values,
the lower operator the floor(alpha(n+1))-th smallest; indices outside [1, n]
map to +/-infinity, which keeps every construction conservative. Four
interval builders sit on top: naive (training residuals), jackknife
(leave-one-out residuals around the full-data prediction), jackknife+
(leave-one-out predictions shifted by leave-one-out residuals), and the
relaxed variant that widens jackknife+ by a slack nu on both ends.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Rank indices are real-number expressions like (1-alpha)*(n+1); evaluated in
# floats they can land a hair above an exact integer (0.9*200 = 180.0000...3),
# which would shift the order statistic by one. Snap to the integer when
# within this tolerance.
_RANK_SNAP_TOL = 1e-9


@dataclass(frozen=True)
class IntervalConfig:
    """Miscoverage level alpha in (0, 0.5) and relaxation nu >= 0."""

    alpha: float
    nu: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.alpha < 0.5):
            raise ValueError(f"alpha must lie in (0, 0.5), got {self.alpha}")
        if self.nu < 0.0:
            raise ValueError(f"nu must be nonnegative, got {self.nu}")


@dataclass(frozen=True)
class PredictionInterval:
    """Closed interval [lower, upper]; endpoints may be +/-inf."""

    lower: float
    upper: float

    def __post_init__(self):
        if math.isnan(self.lower) or math.isnan(self.upper):
            raise ValueError("interval endpoints must not be NaN")
        if self.lower > self.upper:
            raise ValueError(f"lower={self.lower} exceeds upper={self.upper}")

    @property
    def width(self):
        return self.upper - self.lower

    def contains(self, y):
        return bool(self.lower <= y <= self.upper)


def _snap(x):
    r = round(x)
    return float(r) if abs(x - r) <= _RANK_SNAP_TOL * max(1.0, abs(x)) else x


def _ceil_rank(x):
    return int(math.ceil(_snap(x)))


def _floor_rank(x):
    return int(math.floor(_snap(x)))


def _validate(values, alpha):
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("values must be a nonempty 1-D vector")
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return v


def quantile_upper(values, alpha) -> float:
    """k-th smallest of the values with k = ceil((1-alpha)(n+1)).

    Returns +inf when k exceeds n. Selection uses a partial sort
    (introselect), which agrees exactly with a full sort.
    """
    v = _validate(values, alpha)
    n = v.size
    k = _ceil_rank((1.0 - alpha) * (n + 1))
    if k > n:
        return math.inf
    return float(np.partition(v, k - 1)[k - 1])


def quantile_lower(values, alpha) -> float:
    """k-th smallest of the values with k = floor(alpha(n+1)).

    Returns -inf when k < 1. Satisfies the reflection identity
    quantile_lower(v, alpha) == -quantile_upper(-v, alpha).
    """
    v = _validate(values, alpha)
    k = _floor_rank(alpha * (v.size + 1))
    if k < 1:
        return -math.inf
    return float(np.partition(v, k - 1)[k - 1])


def naive_interval(fhat_x, train_residuals, alpha) -> PredictionInterval:
    """Center at fhat_x with margin Q+_alpha of the absolute residuals."""
    margin = quantile_upper(np.abs(np.asarray(train_residuals, dtype=np.float64)), alpha)
    return PredictionInterval(fhat_x - margin, fhat_x + margin)


def jackknife_interval(fhat_x, loo_residuals, alpha) -> PredictionInterval:
    """Same construction as the naive interval but fed leave-one-out residuals."""
    return naive_interval(fhat_x, loo_residuals, alpha)


def jackknife_plus_interval(loo_preds_at_x, loo_residuals, alpha) -> PredictionInterval:
    """[Q-_alpha{pred_i - R_i}, Q+_alpha{pred_i + R_i}] over the n LOO models."""
    preds = np.asarray(loo_preds_at_x, dtype=np.float64)
    res = np.asarray(loo_residuals, dtype=np.float64)
    if preds.shape != res.shape:
        raise ValueError(f"length mismatch: {preds.shape} predictions vs {res.shape} residuals")
    lower = quantile_lower(preds - res, alpha)
    upper = quantile_upper(preds + res, alpha)
    return PredictionInterval(lower, upper)


def dp_lazy_interval(loo_preds_at_x, loo_residuals, cfg: IntervalConfig) -> PredictionInterval:
    """Jackknife+ interval widened by cfg.nu on each side; nu=0 reduces to
    jackknife+ exactly."""
    base = jackknife_plus_interval(loo_preds_at_x, loo_residuals, cfg.alpha)
    return PredictionInterval(base.lower - cfg.nu, base.upper + cfg.nu)


def jackknife_plus_bounds(pred_matrix, loo_residuals, alpha, nu=0.0):
    """Vectorized jackknife+ endpoints for many test points at once.

    pred_matrix has shape (n_test, n_models) with entry [t, j] the j-th LOO
    model's prediction at test point t. Returns (lower, upper) arrays of
    length n_test. Equivalent to calling dp_lazy_interval row by row.
    """
    P = np.asarray(pred_matrix, dtype=np.float64)
    res = np.asarray(loo_residuals, dtype=np.float64)
    if P.ndim != 2 or P.shape[1] != res.size:
        raise ValueError(f"prediction matrix {P.shape} does not match {res.size} residuals")
    n_test, n = P.shape
    k_up = _ceil_rank((1.0 - alpha) * (n + 1))
    k_lo = _floor_rank(alpha * (n + 1))
    if k_up > n:
        upper = np.full(n_test, math.inf)
    else:
        upper = np.partition(P + res[None, :], k_up - 1, axis=1)[:, k_up - 1]
    if k_lo < 1:
        lower = np.full(n_test, -math.inf)
    else:
        lower = np.partition(P - res[None, :], k_lo - 1, axis=1)[:, k_lo - 1]
    return lower - nu, upper + nu
