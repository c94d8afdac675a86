import math
from fractions import Fraction

import numpy as np
import pytest

from lazypi import (
    IntervalConfig,
    PredictionInterval,
    dp_lazy_interval,
    jackknife_interval,
    jackknife_plus_bounds,
    jackknife_plus_interval,
    naive_interval,
    quantile_lower,
    quantile_upper,
)


def oracle_upper(values, alpha: Fraction):
    """Full sort plus exact rational rank arithmetic."""
    n = len(values)
    k = math.ceil((1 - alpha) * (n + 1))
    return math.inf if k > n else sorted(values)[k - 1]


def oracle_lower(values, alpha: Fraction):
    n = len(values)
    k = math.floor(alpha * (n + 1))
    return -math.inf if k < 1 else sorted(values)[k - 1]


ALPHA_GRID = [Fraction(num, 100) for num in (5, 10, 17, 25, 33, 40, 49, 60, 75, 90)]


def test_quantile_upper_examples():
    assert quantile_upper([3.0, 1.0, 2.0], 0.5) == 2.0
    assert quantile_upper([3.0, 1.0, 2.0], 0.1) == math.inf
    rng = np.random.default_rng(0)
    v = rng.normal(size=199)
    assert quantile_upper(v, 0.1) == sorted(v)[180 - 1]


def test_quantile_lower_examples():
    assert quantile_lower([3.0, 1.0, 2.0], 0.25) == 1.0
    assert quantile_lower([3.0, 1.0, 2.0], 0.1) == -math.inf


def test_quantiles_match_sort_oracle():
    rng = np.random.default_rng(1)
    for _ in range(400):
        n = int(rng.integers(1, 120))
        v = rng.normal(size=n) * 10.0 ** rng.integers(-2, 3)
        alpha = ALPHA_GRID[rng.integers(len(ALPHA_GRID))]
        assert quantile_upper(v, float(alpha)) == oracle_upper(v.tolist(), alpha)
        assert quantile_lower(v, float(alpha)) == oracle_lower(v.tolist(), alpha)


def test_quantiles_with_ties():
    v = [2.0, 2.0, 2.0, 1.0, 1.0]
    for alpha in ALPHA_GRID:
        assert quantile_upper(v, float(alpha)) == oracle_upper(v, alpha)
        assert quantile_lower(v, float(alpha)) == oracle_lower(v, alpha)


def test_reflection_identity():
    rng = np.random.default_rng(2)
    for _ in range(300):
        n = int(rng.integers(1, 60))
        v = rng.normal(size=n)
        alpha = float(ALPHA_GRID[rng.integers(len(ALPHA_GRID))])
        assert quantile_lower(v, alpha) == -quantile_upper(-v, alpha)


def test_alpha_monotonicity():
    rng = np.random.default_rng(3)
    v = rng.normal(size=37)
    alphas = sorted(float(a) for a in ALPHA_GRID)
    ups = [quantile_upper(v, a) for a in alphas]
    assert all(ups[i] >= ups[i + 1] for i in range(len(ups) - 1))
    intervals = [naive_interval(0.0, np.abs(v), a) for a in alphas if a < 0.5]
    for wider, narrower in zip(intervals, intervals[1:]):
        assert wider.lower <= narrower.lower and narrower.upper <= wider.upper


def test_empty_and_bad_inputs():
    with pytest.raises(ValueError):
        quantile_upper([], 0.1)
    with pytest.raises(ValueError):
        quantile_upper([1.0], 0.0)
    with pytest.raises(ValueError):
        quantile_lower([1.0], 1.0)


def test_naive_interval_examples():
    degenerate = naive_interval(5.0, np.zeros(9), 0.1)
    assert degenerate.lower == degenerate.upper == 5.0
    iv = naive_interval(1.0, [1.0, 2.0, 3.0], 0.5)
    assert (iv.lower, iv.upper) == (-1.0, 3.0)
    inf_iv = naive_interval(0.0, [1.0], 0.1)
    assert (inf_iv.lower, inf_iv.upper) == (-math.inf, math.inf)


def test_jackknife_interval_examples():
    res = [1.0, 2.0, 3.0]
    assert jackknife_interval(1.0, res, 0.5) == naive_interval(1.0, res, 0.5)
    nine_zeros = jackknife_interval(2.0, np.zeros(9), 0.1)
    assert nine_zeros.width == 0.0
    single = jackknife_interval(0.0, [1.0], 0.4)
    assert (single.lower, single.upper) == (-math.inf, math.inf)


def test_jackknife_plus_examples():
    constant = jackknife_plus_interval(np.full(9, 3.0), np.full(9, 0.5), 0.25)
    assert (constant.lower, constant.upper) == (2.5, 3.5)
    preds = np.array([1.0, 2.0, 3.0, 4.0])
    res = np.full(4, 0.5)
    iv = jackknife_plus_interval(preds, res, 0.25)
    assert (iv.lower, iv.upper) == (0.5, 4.5)


def test_dp_lazy_interval_reduction_and_relaxation():
    rng = np.random.default_rng(4)
    preds = rng.normal(size=15)
    res = np.abs(rng.normal(size=15))
    base = jackknife_plus_interval(preds, res, 0.2)
    relaxed_zero = dp_lazy_interval(preds, res, IntervalConfig(0.2, nu=0.0))
    assert (relaxed_zero.lower, relaxed_zero.upper) == (base.lower, base.upper)

    iv = dp_lazy_interval(
        np.array([1.0, 2.0, 3.0, 4.0]), np.full(4, 0.5), IntervalConfig(0.25, nu=1.0)
    )
    assert (iv.lower, iv.upper) == (-0.5, 5.5)


def test_nu_nesting():
    rng = np.random.default_rng(5)
    preds = rng.normal(size=20)
    res = np.abs(rng.normal(size=20))
    nus = [0.0, 0.1, 0.5, 2.0]
    ivs = [dp_lazy_interval(preds, res, IntervalConfig(0.1, nu=nu)) for nu in nus]
    for inner, outer in zip(ivs, ivs[1:]):
        assert outer.lower <= inner.lower and inner.upper <= outer.upper


def test_shift_equivariance():
    rng = np.random.default_rng(6)
    preds = rng.normal(size=25)
    res = np.abs(rng.normal(size=25))
    base = jackknife_plus_interval(preds, res, 0.1)
    for c in (-3.5, 0.25, 11.0):
        shifted = jackknife_plus_interval(preds + c, res, 0.1)
        assert shifted.lower == pytest.approx(base.lower + c, abs=1e-12)
        assert shifted.upper == pytest.approx(base.upper + c, abs=1e-12)


def test_lower_never_exceeds_upper():
    rng = np.random.default_rng(7)
    for _ in range(200):
        n = int(rng.integers(1, 40))
        preds = rng.normal(size=n)
        res = np.abs(rng.normal(size=n))
        alpha = float(rng.choice([0.05, 0.1, 0.25, 0.4]))
        iv = jackknife_plus_interval(preds, res, alpha)
        assert iv.lower <= iv.upper
        nv = naive_interval(float(rng.normal()), res, alpha)
        assert nv.lower <= nv.upper


def test_length_mismatch_error():
    with pytest.raises(ValueError):
        jackknife_plus_interval(np.ones(3), np.ones(4), 0.1)


def test_batch_bounds_match_per_point_interval():
    rng = np.random.default_rng(8)
    P = rng.normal(size=(50, 21))
    res = np.abs(rng.normal(size=21))
    for alpha, nu in ((0.1, 0.0), (0.25, 0.7), (0.45, 0.0)):
        lower, upper = jackknife_plus_bounds(P, res, alpha, nu)
        cfg = IntervalConfig(alpha, nu=nu)
        for t in range(P.shape[0]):
            iv = dp_lazy_interval(P[t], res, cfg)
            assert lower[t] == iv.lower
            assert upper[t] == iv.upper


def test_batch_bounds_out_of_range_rank():
    P = np.zeros((4, 3))
    res = np.zeros(3)
    lower, upper = jackknife_plus_bounds(P, res, 0.1)
    assert np.all(np.isneginf(lower)) and np.all(np.isposinf(upper))


def test_prediction_interval_validation():
    with pytest.raises(ValueError):
        PredictionInterval(2.0, 1.0)
    with pytest.raises(ValueError):
        PredictionInterval(math.nan, 1.0)
    iv = PredictionInterval(-math.inf, math.inf)
    assert iv.contains(1e300) and iv.width == math.inf


def test_interval_config_validation():
    with pytest.raises(ValueError):
        IntervalConfig(0.0)
    with pytest.raises(ValueError):
        IntervalConfig(0.5)
    with pytest.raises(ValueError):
        IntervalConfig(0.1, nu=-0.1)
