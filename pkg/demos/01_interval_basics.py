"""Quantile operators and the four interval constructions on a toy problem.

Everything here is order statistics: the upper operator picks the
ceil((1-alpha)(n+1))-th smallest value, the lower operator the
floor(alpha(n+1))-th, and out-of-range ranks become +/-infinity so small
calibration sets can only make intervals wider, never anti-conservative.
"""

import numpy as np

from lazypi import (
    IntervalConfig,
    dp_lazy_interval,
    jackknife_interval,
    jackknife_plus_interval,
    naive_interval,
    quantile_lower,
    quantile_upper,
)

rng = np.random.default_rng(0)

print("=== quantile operators ===")
values = np.array([3.0, 1.0, 2.0])
print(f"values {values.tolist()}")
print(f"  upper at alpha=0.5  -> {quantile_upper(values, 0.5)}   (rank ceil(0.5*4)=2)")
print(f"  upper at alpha=0.1  -> {quantile_upper(values, 0.1)}   (rank 4 > n=3)")
print(f"  lower at alpha=0.25 -> {quantile_lower(values, 0.25)}  (rank floor(0.25*4)=1)")
print(f"  lower at alpha=0.1  -> {quantile_lower(values, 0.1)} (rank 0 < 1)")
print(f"  reflection: lower(v) == -upper(-v): "
      f"{quantile_lower(values, 0.3) == -quantile_upper(-values, 0.3)}")

print("\n=== interval constructions around a fitted value ===")
# Pretend a model predicts 2.0 at a new point and produced these residuals.
fhat = 2.0
train_residuals = np.abs(rng.normal(0.8, 0.3, size=40))
loo_residuals = np.abs(rng.normal(1.0, 0.35, size=40))  # LOO errors run larger
loo_preds = fhat + rng.normal(0.0, 0.2, size=40)        # one prediction per LOO model
alpha = 0.1

naive = naive_interval(fhat, train_residuals, alpha)
jack = jackknife_interval(fhat, loo_residuals, alpha)
plus = jackknife_plus_interval(loo_preds, loo_residuals, alpha)
print(f"naive      [{naive.lower:7.3f}, {naive.upper:7.3f}]  width {naive.width:.3f}")
print(f"jackknife  [{jack.lower:7.3f}, {jack.upper:7.3f}]  width {jack.width:.3f}")
print(f"jackknife+ [{plus.lower:7.3f}, {plus.upper:7.3f}]  width {plus.width:.3f}")

print("\n=== relaxation ===")
for nu in (0.0, 0.25, 1.0):
    iv = dp_lazy_interval(loo_preds, loo_residuals, IntervalConfig(alpha, nu=nu))
    tag = "  (identical to jackknife+)" if nu == 0.0 else ""
    print(f"nu={nu:<5} [{iv.lower:7.3f}, {iv.upper:7.3f}]  width {iv.width:.3f}{tag}")

print("\n=== tiny calibration sets go infinite, not invalid ===")
short = jackknife_plus_interval(loo_preds[:3], loo_residuals[:3], alpha)
print(f"n=3 at alpha=0.1 -> [{short.lower}, {short.upper}] (covers everything)")
