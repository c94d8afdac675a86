"""A scaled-down run of the simulation benchmark.

Same protocol as the full experiment (random train/test split, jackknife+
against the two lazy variants, coverage/width/time per trial) with a smaller
dataset and three trials so it finishes in under a minute. The full-size
configurations live in manifests/.
"""

import tempfile
from pathlib import Path

from lazypi import RunManifest, SimConfig, run_comparison

manifest = RunManifest(
    methods=("jackknife_plus", "lazy_finetune", "dp_lazy"),
    trials=3,
    n_train=60,
    hidden=(32, 32),
    batch_size=10,
    epochs=10,
    sigma=1.0,
    ridge_lambda=10.0,
    alpha=0.1,
    sim=SimConfig(n_samples=800, p=8, seed=0),
)

out_dir = Path(tempfile.mkdtemp(prefix="lazypi_demo_"))
result = run_comparison(manifest, out_dir)

print(f"manifest hash {manifest.content_hash()}, outputs in {out_dir}\n")
print(f"{'method':>15} {'coverage':>9} {'width':>8} {'train s':>8} {'eval s':>7}")
for row in result.aggregates:
    print(f"{row['method']:>15} {row['coverage_mean']:>9.3f} {row['width_mean']:>8.3f} "
          f"{row['train_seconds_mean']:>8.3f} {row['eval_seconds_mean']:>7.3f}")

jk = next(r for r in result.aggregates if r["method"] == "jackknife_plus")
dp = next(r for r in result.aggregates if r["method"] == "dp_lazy")
jk_total = jk["train_seconds_mean"] + jk["eval_seconds_mean"]
dp_total = dp["train_seconds_mean"] + dp["eval_seconds_mean"]
print(f"\naverage total-time speedup of dp_lazy over jackknife+: {jk_total / dp_total:.1f}x")
print(f"accounted epsilon for the DP trainer: {result.accounted_epsilon:.4g} "
      f"(nominal label {manifest.nominal_epsilon})")
print("per-trial rows: results.csv; per-method summary: aggregates.csv")
