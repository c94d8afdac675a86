import csv
import math

import numpy as np
import pytest

from lazypi import RunManifest, SimConfig, run_trial, simulate_data, split_data, write_dataset_csv
from lazypi.bench import aggregate_results, load_tabular, run_comparison


def tiny_manifest(**overrides):
    """Small enough to train in milliseconds; paper-shaped knobs otherwise."""
    defaults = dict(
        methods=("dp_lazy",),
        trials=1,
        base_seed=0,
        n_train=12,
        hidden=(4,),
        learning_rate=0.05,
        batch_size=4,
        epochs=2,
        clip_norm=1.0,
        sigma=1.0,
        ridge_lambda=1.0,
        alpha=0.2,
        sim=SimConfig(n_samples=60, p=2, seed=0),
    )
    defaults.update(overrides)
    return RunManifest(**defaults)


def test_simulate_paper_shapes():
    data = simulate_data(SimConfig(n_samples=5000, p=16, seed=1))
    assert data.features.shape == (5000, 16)
    assert data.responses.shape == (5000,)


def test_simulate_deterministic():
    cfg = SimConfig(n_samples=50, p=3, seed=9)
    a, b = simulate_data(cfg), simulate_data(cfg)
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.responses, b.responses)
    c = simulate_data(SimConfig(n_samples=50, p=3, seed=10))
    assert not np.array_equal(a.responses, c.responses)


def test_simulate_relu_kills_negative_signal():
    # Without response noise, rows whose linear signal is nonpositive give
    # exactly zero responses.
    cfg = SimConfig(n_samples=400, p=2, noise_sd=0.0, seed=3)
    data = simulate_data(cfg)
    rng = np.random.default_rng(cfg.seed)
    beta = rng.beta(cfg.beta_a, cfg.beta_b, size=cfg.p)
    signal = data.features @ beta
    assert np.any(signal <= 0.0)
    assert np.all(data.responses[signal <= 0.0] == 0.0)


def test_sim_config_validation():
    with pytest.raises(ValueError):
        SimConfig(n_samples=1, p=2)
    with pytest.raises(ValueError):
        SimConfig(n_samples=10, p=0)
    with pytest.raises(ValueError):
        SimConfig(n_samples=10, p=2, noise_sd=-1.0)


def test_load_tabular_log1p_transform(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("a,b,y\n1,2,0\n3,4,9\n5,6,99\n")
    loaded = load_tabular(path, "y", transform="log1p")
    np.testing.assert_allclose(
        loaded.dataset.responses, [0.0, math.log(10.0), math.log(100.0)], rtol=1e-14
    )
    assert loaded.feature_columns == ("a", "b")
    assert loaded.dropped_rows == 0


def test_load_tabular_identity_unchanged(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("a,y\n1,0.5\n2,1.5\n")
    loaded = load_tabular(path, "y")
    assert np.array_equal(loaded.dataset.responses, [0.5, 1.5])
    assert np.array_equal(loaded.dataset.features[:, 0], [1.0, 2.0])


def test_load_tabular_drops_and_counts_nonfinite(tmp_path):
    path = tmp_path / "d.csv"
    rows = ["a,y"] + [f"{i},{i * 2}" for i in range(9)] + [",7"]
    path.write_text("\n".join(rows) + "\n")
    loaded = load_tabular(path, "y")
    assert loaded.dataset.n == 9
    assert loaded.dropped_rows == 1


def test_load_tabular_errors(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("a,y\n1,2\n")
    with pytest.raises(ValueError, match="response column"):
        load_tabular(path, "missing")

    bad = tmp_path / "bad.csv"
    bad.write_text("a,y\n1,2\nfoo,3\n")
    with pytest.raises(ValueError, match=r"row 1, column 'a'"):
        load_tabular(bad, "y")

    empty = tmp_path / "empty.csv"
    empty.write_text("a,y\n,\n")
    with pytest.raises(ValueError, match="no usable rows"):
        load_tabular(empty, "y")

    with pytest.raises(FileNotFoundError):
        load_tabular(tmp_path / "nope.csv", "y")


def test_dataset_csv_roundtrip(tmp_path):
    data = simulate_data(SimConfig(n_samples=25, p=3, seed=4))
    path = tmp_path / "sim.csv"
    write_dataset_csv(data, path)
    loaded = load_tabular(path, "y")
    assert np.array_equal(loaded.dataset.features, data.features)
    assert np.array_equal(loaded.dataset.responses, data.responses)


def test_split_deterministic_and_shared():
    data = simulate_data(SimConfig(n_samples=40, p=2, seed=0))
    a_train, a_test = split_data(data, 10, seed=5)
    b_train, b_test = split_data(data, 10, seed=5)
    assert np.array_equal(a_train.features, b_train.features)
    assert np.array_equal(a_test.responses, b_test.responses)
    c_train, _ = split_data(data, 10, seed=6)
    assert not np.array_equal(a_train.features, c_train.features)
    with pytest.raises(ValueError):
        split_data(data, 40, seed=0)


def test_run_trial_infinite_intervals_cover_everything():
    # Three training rows at alpha = 0.1 push every rank out of range.
    man = tiny_manifest(n_train=3, alpha=0.1, sim=SimConfig(n_samples=30, p=2, seed=0))
    data = simulate_data(man.sim)
    for method in ("dp_lazy", "naive"):
        result = run_trial(method, data, man, seed=0)
        assert result.coverage == 1.0
        assert result.avg_width == math.inf


def test_run_trial_sigma_zero_equals_lazy_finetune():
    man = tiny_manifest(sigma=0.0, methods=("dp_lazy", "lazy_finetune"))
    data = simulate_data(man.sim)
    dp = run_trial("dp_lazy", data, man, seed=3)
    ft = run_trial("lazy_finetune", data, man, seed=3)
    assert dp.coverage == ft.coverage
    assert dp.avg_width == ft.avg_width


def test_run_trial_degenerate_zero_dataset_gives_zero_width():
    # All-zero rows with zero responses: a relu network with zero biases
    # predicts 0 at x = 0 for any weights, every gradient vanishes, so every
    # jackknife+ model is exact and the intervals collapse to width 0.
    from lazypi import RegressionDataset

    man = tiny_manifest(methods=("jackknife_plus",), n_train=20, alpha=0.2)
    data = RegressionDataset(np.zeros((30, 2)), np.zeros(30))
    result = run_trial("jackknife_plus", data, man, seed=1)
    assert result.avg_width == 0.0
    assert result.coverage == 1.0


def test_run_trial_jackknife_and_naive_methods_run():
    man = tiny_manifest()
    data = simulate_data(man.sim)
    for method in ("naive", "jackknife"):
        result = run_trial(method, data, man, seed=2)
        assert 0.0 <= result.coverage <= 1.0
        assert result.train_seconds >= 0.0


def test_run_trial_rejects_unknown_method():
    man = tiny_manifest()
    data = simulate_data(man.sim)
    with pytest.raises(ValueError):
        run_trial("bootstrap", data, man, seed=0)


def test_single_trial_aggregate_equals_trial(tmp_path):
    man = tiny_manifest(trials=1)
    result = run_comparison(man, tmp_path)
    assert len(result.trial_results) == 1
    agg = result.aggregates[0]
    trial = result.trial_results[0]
    assert agg["coverage_mean"] == trial.coverage
    assert agg["width_mean"] == trial.avg_width
    assert agg["coverage_se"] == 0.0


def test_aggregate_se_matches_hand_computation(tmp_path):
    man = tiny_manifest(methods=("naive",), trials=15)
    out = tmp_path / "run"
    result = run_comparison(man, out)

    with (out / "results.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 15
    coverages = [float(r["coverage"]) for r in rows]
    mean = sum(coverages) / 15
    sd = math.sqrt(sum((c - mean) ** 2 for c in coverages) / 14)
    expected_se = sd / math.sqrt(15)

    with (out / "aggregates.csv").open() as fh:
        agg = next(csv.DictReader(fh))
    assert float(agg["coverage_mean"]) == pytest.approx(mean, abs=1e-12)
    assert float(agg["coverage_se"]) == pytest.approx(expected_se, abs=1e-12)


def test_rerun_reproduces_method_outputs(tmp_path):
    man = tiny_manifest(methods=("naive", "dp_lazy"), trials=2)
    first = run_comparison(man, tmp_path / "a")
    second = run_comparison(man, tmp_path / "b")
    deterministic = ("method", "trial", "seed", "coverage", "avg_width")

    def stripped(path):
        with path.open() as fh:
            return [[row[c] for c in deterministic] for row in csv.DictReader(fh)]

    assert stripped(tmp_path / "a" / "results.csv") == stripped(tmp_path / "b" / "results.csv")
    for x, y in zip(first.trial_results, second.trial_results):
        assert (x.method, x.coverage, x.avg_width) == (y.method, y.coverage, y.avg_width)


def test_workers_do_not_change_results(tmp_path):
    man_serial = tiny_manifest(methods=("naive", "dp_lazy"), trials=2, workers=1)
    man_pool = tiny_manifest(methods=("naive", "dp_lazy"), trials=2, workers=2)
    serial = run_comparison(man_serial, None)
    pooled = run_comparison(man_pool, None)
    for x, y in zip(serial.trial_results, pooled.trial_results):
        assert (x.method, x.seed, x.coverage, x.avg_width) == (y.method, y.seed, y.coverage, y.avg_width)


def test_infinite_width_aggregation():
    from lazypi.bench import TrialResult

    rows = [
        TrialResult("naive", 1.0, math.inf, 0.1, 0.1, 0),
        TrialResult("naive", 0.9, 2.0, 0.1, 0.1, 1),
    ]
    agg = aggregate_results(rows)[0]
    assert agg["width_mean"] == math.inf
    assert math.isnan(agg["width_se"])


def test_manifest_roundtrip_and_hash():
    man = tiny_manifest()
    clone = RunManifest.from_dict(man.to_dict())
    assert clone == man
    assert clone.content_hash() == man.content_hash()
    other = tiny_manifest(alpha=0.25)
    assert other.content_hash() != man.content_hash()


def test_manifest_validation():
    with pytest.raises(ValueError):
        tiny_manifest(trials=0)
    with pytest.raises(ValueError):
        tiny_manifest(methods=("bootstrap",))
    with pytest.raises(ValueError):
        RunManifest.from_dict({"unknown_field": 1})
    with pytest.raises(ValueError):
        RunManifest(sim=None, dataset_path=None)


def test_accounted_epsilon_reported(tmp_path):
    man = tiny_manifest(sigma=2.0)
    result = run_comparison(man, None)
    assert math.isfinite(result.accounted_epsilon)
    assert result.accounted_epsilon > 0.0
    zero_noise = run_comparison(tiny_manifest(sigma=0.0), None)
    assert zero_noise.accounted_epsilon == math.inf
