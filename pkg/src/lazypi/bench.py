"""Experiment harness: synthetic data, tabular ingestion, and the
method-comparison loop measuring coverage, interval width, and wall-clock
time over repeated seeded trials.

Five methods are runnable per trial. naive and jackknife center a band at
the full-data prediction (margins from training and leave-one-out residuals
respectively); jackknife_plus retrains one fresh network per left-out row;
lazy_finetune and dp_lazy train a single network (noise disabled
vs. noisy) and recover every leave-one-out model with the closed-form
linearized solve. All network training in the harness goes through the same
clipped-lot trainer so that the only difference between dp_lazy and
lazy_finetune is the noise scale.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
import pandas as pd

from .intervals import jackknife_plus_bounds, quantile_upper
from .lazy import LazyConfig, fit_all_loo, loo_predictions
from .nn import MlpArchitecture, ParamVector, RegressionDataset, batch_forward, batch_forward_many
from .privacy import DpSgdConfig, account_privacy, dp_sgd_train

METHODS = ("naive", "jackknife", "jackknife_plus", "lazy_finetune", "dp_lazy")
TRANSFORMS = ("identity", "log1p")


@dataclass(frozen=True)
class SimConfig:
    """Synthetic generator: X ~ N(0, x_scale I_p), one Beta(beta_a, beta_b)
    coefficient vector per dataset, Y = sqrt(relu(X beta)) + N(0, noise_sd^2)."""

    n_samples: int
    p: int
    x_scale: float = 5.0
    noise_sd: float = 0.5
    beta_a: float = 1.0
    beta_b: float = 2.5
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 2:
            raise ValueError(f"n_samples must be >= 2, got {self.n_samples}")
        if self.p < 1:
            raise ValueError(f"p must be >= 1, got {self.p}")
        if self.x_scale <= 0.0:
            raise ValueError(f"x_scale must be positive, got {self.x_scale}")
        if self.noise_sd < 0.0:
            raise ValueError(f"noise_sd must be nonnegative, got {self.noise_sd}")


@dataclass(frozen=True)
class TrialResult:
    method: str
    coverage: float
    avg_width: float
    train_seconds: float
    eval_seconds: float
    seed: int

    def __post_init__(self):
        if not (0.0 <= self.coverage <= 1.0):
            raise ValueError(f"coverage must lie in [0, 1], got {self.coverage}")
        if self.train_seconds < 0.0 or self.eval_seconds < 0.0:
            raise ValueError("timing fields must be nonnegative")


@dataclass(frozen=True)
class TabularLoadResult:
    dataset: RegressionDataset
    dropped_rows: int
    feature_columns: tuple
    response_column: str


@dataclass(frozen=True)
class RunManifest:
    """Everything a comparison run needs, serializable and content-hashed so
    a rerun of the same manifest reproduces the same method outputs."""

    methods: tuple = ("jackknife_plus", "lazy_finetune", "dp_lazy")
    trials: int = 15
    base_seed: int = 0
    n_train: int = 100
    hidden: tuple = (64, 64)
    activation: str = "relu"
    learning_rate: float = 0.01
    batch_size: int = 10
    epochs: int = 10
    clip_norm: float = 1.0
    sigma: float = 1.0
    nominal_epsilon: float = 0.01
    target_delta: float = 1e-3
    ridge_lambda: float = 10.0
    jacobian_reuse: bool = True
    alpha: float = 0.1
    nu: float = 0.0
    workers: int = 1
    sim: SimConfig | None = SimConfig(n_samples=5000, p=16)
    dataset_path: str | None = None
    response_column: str = "y"
    transform: str = "identity"

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}; choose from {METHODS}")
        if not self.methods:
            raise ValueError("at least one method required")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if self.n_train < 2:
            raise ValueError(f"n_train must be >= 2, got {self.n_train}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")
        if self.transform not in TRANSFORMS:
            raise ValueError(f"transform must be one of {TRANSFORMS}, got {self.transform!r}")
        if (self.sim is None) == (self.dataset_path is None):
            raise ValueError("exactly one of sim / dataset_path must be set")

    def iterations(self, n_rows: int) -> int:
        return self.epochs * math.ceil(n_rows / self.batch_size)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["methods"] = list(self.methods)
        d["hidden"] = list(self.hidden)
        if self.sim is not None:
            d["sim"] = asdict(self.sim)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        d = dict(d)
        d.pop("content_hash", None)
        if d.get("dataset_path") is not None:
            d.setdefault("sim", None)
        if d.get("sim") is not None:
            d["sim"] = SimConfig(**d["sim"])
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown manifest fields: {sorted(unknown)}")
        return cls(**d)

    def content_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def simulate_data(cfg: SimConfig) -> RegressionDataset:
    """Draw one synthetic dataset; deterministic given cfg.seed.

    Draw order is fixed: beta first, then X row block, then response noise.
    """
    rng = np.random.default_rng(cfg.seed)
    beta = rng.beta(cfg.beta_a, cfg.beta_b, size=cfg.p)
    X = rng.normal(0.0, math.sqrt(cfg.x_scale), size=(cfg.n_samples, cfg.p))
    signal = np.sqrt(np.maximum(X @ beta, 0.0))
    y = signal + rng.normal(0.0, cfg.noise_sd, size=cfg.n_samples)
    return RegressionDataset(X, y)


def write_dataset_csv(dataset: RegressionDataset, path, response_column="y"):
    """Dataset as RFC-4180 CSV with header x1..xp plus the response column."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i + 1}" for i in range(dataset.p)] + [response_column])
        for row, y in zip(dataset.features, dataset.responses):
            writer.writerow([repr(float(v)) for v in row] + [repr(float(y))])


def load_tabular(path, response_column, transform="identity") -> TabularLoadResult:
    """Read a numeric CSV into a dataset.

    Features are all non-response columns in file order; the response is
    transformed as requested; rows containing any non-finite value are
    dropped and counted. Non-numeric cells are an error, reported with their
    row and column.
    """
    if transform not in TRANSFORMS:
        raise ValueError(f"transform must be one of {TRANSFORMS}, got {transform!r}")
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such dataset file: {path}")
    frame = pd.read_csv(path, float_precision="round_trip")
    if response_column not in frame.columns:
        raise ValueError(
            f"response column {response_column!r} not in file "
            f"(columns: {list(frame.columns)})"
        )
    numeric = {}
    for col in frame.columns:
        series = frame[col]
        coerced = pd.to_numeric(series, errors="coerce")
        bad = coerced.isna() & series.notna()
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise ValueError(
                f"non-numeric cell at data row {row}, column {col!r}: {series.iloc[row]!r}"
            )
        numeric[col] = coerced.to_numpy(dtype=np.float64)
    feature_columns = tuple(c for c in frame.columns if c != response_column)
    X = np.column_stack([numeric[c] for c in feature_columns]) if feature_columns else np.empty((len(frame), 0))
    y = numeric[response_column]
    finite = np.isfinite(X).all(axis=1) & np.isfinite(y)
    dropped = int((~finite).sum())
    X, y = X[finite], y[finite]
    if X.shape[0] == 0:
        raise ValueError(f"no usable rows in {path} after dropping non-finite values")
    if X.shape[1] == 0:
        raise ValueError(f"no feature columns besides the response in {path}")
    if transform == "log1p":
        y = np.log1p(y)
    return TabularLoadResult(RegressionDataset(X, y), dropped, feature_columns, response_column)


def split_data(data: RegressionDataset, n_train: int, seed: int):
    """Seeded permutation split shared by every method in a trial."""
    if data.n < n_train + 1:
        raise ValueError(f"dataset with {data.n} rows cannot supply {n_train} train + >=1 test")
    perm = np.random.default_rng(seed).permutation(data.n)
    return data.subset(perm[:n_train]), data.subset(perm[n_train:])


def _trainer_config(manifest: RunManifest, n_rows: int, sigma: float, seed: int) -> DpSgdConfig:
    return DpSgdConfig(
        noise_scale=sigma,
        learning_rate=manifest.learning_rate,
        lot_size=min(manifest.batch_size, n_rows),
        clip_norm=manifest.clip_norm,
        iterations=manifest.iterations(n_rows),
        target_delta=manifest.target_delta,
        seed=seed,
    )


def _train_network(manifest, arch, data, sigma, seed) -> ParamVector:
    params, _ = dp_sgd_train(data, arch, _trainer_config(manifest, data.n, sigma, seed))
    return params


def _metrics(lower, upper, y_test):
    covered = (lower <= y_test) & (y_test <= upper)
    coverage = float(np.mean(covered))
    if np.any(np.isinf(lower)) or np.any(np.isinf(upper)):
        avg_width = math.inf
    else:
        avg_width = float(np.mean(upper - lower))
    return coverage, avg_width


def run_trial(method: str, data: RegressionDataset, manifest: RunManifest, seed: int) -> TrialResult:
    """One seeded train/test split, one method, coverage/width/time out."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    train, test = split_data(data, manifest.n_train, seed)
    arch = MlpArchitecture(train.p, manifest.hidden, manifest.activation)
    lazy_cfg = LazyConfig(manifest.ridge_lambda, manifest.jacobian_reuse)
    n = train.n

    t0 = time.perf_counter()
    if method in ("dp_lazy", "lazy_finetune"):
        sigma = manifest.sigma if method == "dp_lazy" else 0.0
        base = _train_network(manifest, arch, train, sigma, seed)
        fit = fit_all_loo(base, arch, train, lazy_cfg)
        t1 = time.perf_counter()
        preds = loo_predictions(fit, arch, test.features)
        lower, upper = jackknife_plus_bounds(preds, fit.loo_residuals, manifest.alpha, manifest.nu)
    elif method == "jackknife_plus":
        loo_seeds = np.random.SeedSequence(seed).generate_state(n)
        models, residuals = [], np.empty(n)
        for j in range(n):
            params = _train_network(manifest, arch, train.drop_row(j), 0.0, int(loo_seeds[j]))
            models.append(params)
            residuals[j] = abs(
                train.responses[j] - batch_forward(params, arch, train.features[j][None, :])[0]
            )
        t1 = time.perf_counter()
        preds = batch_forward_many(models, arch, test.features).T
        lower, upper = jackknife_plus_bounds(preds, residuals, manifest.alpha)
    elif method == "jackknife":
        base = _train_network(manifest, arch, train, 0.0, seed)
        loo_seeds = np.random.SeedSequence(seed).generate_state(n)
        residuals = np.empty(n)
        for j in range(n):
            params = _train_network(manifest, arch, train.drop_row(j), 0.0, int(loo_seeds[j]))
            residuals[j] = abs(
                train.responses[j] - batch_forward(params, arch, train.features[j][None, :])[0]
            )
        t1 = time.perf_counter()
        centers = batch_forward(base, arch, test.features)
        margin = quantile_upper(residuals, manifest.alpha)
        lower, upper = centers - margin, centers + margin
    else:  # naive
        base = _train_network(manifest, arch, train, 0.0, seed)
        t1 = time.perf_counter()
        centers = batch_forward(base, arch, test.features)
        train_residuals = np.abs(train.responses - batch_forward(base, arch, train.features))
        margin = quantile_upper(train_residuals, manifest.alpha)
        lower, upper = centers - margin, centers + margin
    coverage, avg_width = _metrics(lower, upper, test.responses)
    t2 = time.perf_counter()

    return TrialResult(
        method=method,
        coverage=coverage,
        avg_width=avg_width,
        train_seconds=t1 - t0,
        eval_seconds=t2 - t1,
        seed=seed,
    )


@dataclass(frozen=True)
class ComparisonResult:
    manifest: RunManifest
    trial_results: tuple
    aggregates: tuple
    accounted_epsilon: float


def load_manifest_data(manifest: RunManifest) -> RegressionDataset:
    if manifest.sim is not None:
        return simulate_data(manifest.sim)
    return load_tabular(manifest.dataset_path, manifest.response_column, manifest.transform).dataset


def _fmt(value) -> str:
    return repr(float(value)) if isinstance(value, float) else str(value)


_RESULT_COLUMNS = ("method", "trial", "seed", "coverage", "avg_width", "train_seconds", "eval_seconds")
_AGG_COLUMNS = (
    "method", "trials", "coverage_mean", "coverage_se", "width_mean", "width_se",
    "train_seconds_mean", "eval_seconds_mean",
)


def _mean_se(values):
    values = np.asarray(values, dtype=np.float64)
    if np.any(np.isinf(values)):
        return math.inf, math.nan
    mean = float(np.mean(values))
    se = 0.0 if values.size < 2 else float(np.std(values, ddof=1) / math.sqrt(values.size))
    return mean, se


def aggregate_results(results) -> tuple:
    rows = []
    seen = []
    for r in results:
        if r.method not in seen:
            seen.append(r.method)
    for method in seen:
        group = [r for r in results if r.method == method]
        cov_mean, cov_se = _mean_se([r.coverage for r in group])
        w_mean, w_se = _mean_se([r.avg_width for r in group])
        rows.append({
            "method": method,
            "trials": len(group),
            "coverage_mean": cov_mean,
            "coverage_se": cov_se,
            "width_mean": w_mean,
            "width_se": w_se,
            "train_seconds_mean": float(np.mean([r.train_seconds for r in group])),
            "eval_seconds_mean": float(np.mean([r.eval_seconds for r in group])),
        })
    return tuple(rows)


def _trial_cell(args):
    data, manifest, method, trial_index, seed = args
    return trial_index, run_trial(method, data, manifest, seed)


def run_comparison(manifest: RunManifest, output_dir=None) -> ComparisonResult:
    """Execute every (trial x method) cell, write per-trial rows plus
    per-method aggregates, and return everything in memory.

    Per-trial rows are flushed as they complete so a failure preserves
    partial results. Method outputs are deterministic given the manifest;
    the timing columns are wall-clock measurements and vary run to run.
    """
    data = load_manifest_data(manifest)
    cells = []
    for t in range(manifest.trials):
        seed = manifest.base_seed + t
        for method in manifest.methods:
            cells.append((data, manifest, method, t, seed))

    out_path = agg_path = None
    results_fh = None
    writer = None
    if output_dir is not None:
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        out_path = output_dir / "results.csv"
        agg_path = output_dir / "aggregates.csv"
        results_fh = out_path.open("w", newline="")
        writer = csv.writer(results_fh)
        writer.writerow(_RESULT_COLUMNS)
        results_fh.flush()

    results = []
    try:
        if manifest.workers > 1:
            with ProcessPoolExecutor(max_workers=manifest.workers) as pool:
                iterator = pool.map(_trial_cell, cells)
                for (trial_index, result) in iterator:
                    results.append((trial_index, result))
                    if writer is not None:
                        _write_result_row(writer, results_fh, trial_index, result)
        else:
            for cell in cells:
                trial_index, result = _trial_cell(cell)
                results.append((trial_index, result))
                if writer is not None:
                    _write_result_row(writer, results_fh, trial_index, result)
    finally:
        if results_fh is not None:
            results_fh.close()

    trial_results = tuple(r for _, r in results)
    aggregates = aggregate_results(trial_results)
    if agg_path is not None:
        with agg_path.open("w", newline="") as fh:
            agg_writer = csv.writer(fh)
            agg_writer.writerow(_AGG_COLUMNS)
            for row in aggregates:
                agg_writer.writerow([_fmt(row[c]) for c in _AGG_COLUMNS])

    q = manifest.batch_size / manifest.n_train
    accounted = account_privacy(
        manifest.sigma, q, manifest.iterations(manifest.n_train), manifest.target_delta
    )
    return ComparisonResult(manifest, trial_results, aggregates, accounted)


def _write_result_row(writer, fh, trial_index, result: TrialResult):
    writer.writerow([
        result.method,
        trial_index,
        result.seed,
        _fmt(result.coverage),
        _fmt(result.avg_width),
        _fmt(result.train_seconds),
        _fmt(result.eval_seconds),
    ])
    fh.flush()
