"""Command-line entry point: simulate, compare, intervals, stability, and
accountant subcommands with manifest-driven reproducibility.

Exit codes are a stable contract for scripting: 0 success, 1 validation
error (bad flags, bad manifest, bad input files), 2 runtime failure.
Explicit flags override manifest fields; the resolved configuration is
echoed to <output-dir>/manifest.resolved for provenance. --dry-run prints
the resolved configuration and writes nothing.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import bench
from .bench import RunManifest, SimConfig, load_tabular, simulate_data, split_data, write_dataset_csv
from .intervals import IntervalConfig, dp_lazy_interval
from .lazy import LazyConfig, estimate_stability, fit_all_loo, loo_predictions
from .nn import MlpArchitecture
from .privacy import account_privacy, dp_sgd_train, theorem_slack


class CliError(Exception):
    """Validation problem; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _add_common_training_flags(p):
    p.add_argument("--alpha", type=float, default=None, help="miscoverage level")
    p.add_argument("--lambda", dest="ridge_lambda", type=float, default=None,
                   help="ridge penalty of the lazy solve")
    p.add_argument("--nu", type=float, default=None, help="interval relaxation")
    p.add_argument("--epsilon", type=float, default=None, help="nominal privacy epsilon label")
    p.add_argument("--delta", type=float, default=None, help="privacy delta")
    p.add_argument("--sigma", type=float, default=None, help="DP-SGD noise multiplier")
    p.add_argument("--clip-norm", type=float, default=None, help="per-example gradient bound")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--hidden", type=str, default=None, help="comma-separated widths, e.g. 64,64")
    p.add_argument("--lr", type=float, default=None, help="learning rate")
    p.add_argument("--n-train", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)


def build_parser() -> _Parser:
    parser = _Parser(prog="lazypi", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="write a synthetic dataset as CSV")
    p_sim.add_argument("--n", type=int, required=True, help="total samples")
    p_sim.add_argument("--p", type=int, required=True, help="feature dimension")
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--x-scale", type=float, default=5.0)
    p_sim.add_argument("--noise-sd", type=float, default=0.5)
    p_sim.add_argument("--beta-a", type=float, default=1.0)
    p_sim.add_argument("--beta-b", type=float, default=2.5)
    p_sim.add_argument("--out", type=str, default=None, help="output CSV (default <output-dir>/dataset.csv)")
    p_sim.add_argument("--output-dir", type=str, default=".")
    p_sim.add_argument("--dry-run", action="store_true")

    p_cmp = sub.add_parser("compare", help="run the method comparison from a manifest")
    p_cmp.add_argument("--manifest", type=str, default=None, help="JSON manifest path")
    p_cmp.add_argument("--methods", type=str, default=None, help="comma-separated method names")
    p_cmp.add_argument("--trials", type=int, default=None)
    p_cmp.add_argument("--data", type=str, default=None, help="dataset CSV instead of simulation")
    p_cmp.add_argument("--response", type=str, default=None)
    p_cmp.add_argument("--transform", type=str, default=None, choices=bench.TRANSFORMS)
    p_cmp.add_argument("--sim-n", type=int, default=None, help="simulated dataset size")
    p_cmp.add_argument("--sim-p", type=int, default=None, help="simulated feature dimension")
    p_cmp.add_argument("--sim-seed", type=int, default=None)
    p_cmp.add_argument("--output-dir", type=str, default="lazypi_out")
    p_cmp.add_argument("--dry-run", action="store_true")
    _add_common_training_flags(p_cmp)

    p_int = sub.add_parser("intervals", help="fit one method and write per-test-point intervals")
    p_int.add_argument("--data", type=str, required=True, help="dataset CSV")
    p_int.add_argument("--response", type=str, default="y")
    p_int.add_argument("--transform", type=str, default="identity", choices=bench.TRANSFORMS)
    p_int.add_argument("--method", type=str, default="dp_lazy", choices=("dp_lazy", "lazy_finetune"))
    p_int.add_argument("--out", type=str, default=None, help="output CSV (default <output-dir>/intervals.csv)")
    p_int.add_argument("--output-dir", type=str, default=".")
    p_int.add_argument("--dry-run", action="store_true")
    _add_common_training_flags(p_int)

    p_sta = sub.add_parser("stability", help="Monte-Carlo out-of-sample stability estimate")
    p_sta.add_argument("--data", type=str, default=None, help="dataset CSV; omit to simulate")
    p_sta.add_argument("--response", type=str, default="y")
    p_sta.add_argument("--transform", type=str, default="identity", choices=bench.TRANSFORMS)
    p_sta.add_argument("--sim-n", type=int, default=200)
    p_sta.add_argument("--sim-p", type=int, default=4)
    p_sta.add_argument("--sim-seed", type=int, default=0)
    p_sta.add_argument("--stability-nu", type=float, required=True, help="threshold nu of the stability event")
    p_sta.add_argument("--trials", type=int, default=20)
    p_sta.add_argument("--test-points", type=int, default=50)
    p_sta.add_argument("--output-dir", type=str, default=".")
    p_sta.add_argument("--dry-run", action="store_true")
    _add_common_training_flags(p_sta)

    p_acc = sub.add_parser("accountant", help="privacy accounting and coverage slack")
    p_acc.add_argument("--sigma", type=float, default=None, help="noise multiplier to account")
    p_acc.add_argument("--sampling-rate", type=float, default=1.0)
    p_acc.add_argument("--steps", type=int, default=1)
    p_acc.add_argument("--delta", type=float, required=True)
    p_acc.add_argument("--eta", type=float, default=0.0, help="out-of-sample instability frequency")
    p_acc.add_argument("--epsilon", type=float, default=None,
                       help="assumed epsilon (skips accounting)")

    return parser


def _parse_hidden(text):
    if not text:
        return ()
    try:
        return tuple(int(tok) for tok in text.split(",") if tok.strip())
    except ValueError as exc:
        raise CliError(f"bad --hidden value {text!r}: {exc}") from None


_FLAG_TO_FIELD = {
    "methods": "methods",
    "trials": "trials",
    "seed": "base_seed",
    "n_train": "n_train",
    "hidden": "hidden",
    "lr": "learning_rate",
    "batch_size": "batch_size",
    "epochs": "epochs",
    "clip_norm": "clip_norm",
    "sigma": "sigma",
    "epsilon": "nominal_epsilon",
    "delta": "target_delta",
    "ridge_lambda": "ridge_lambda",
    "alpha": "alpha",
    "nu": "nu",
    "workers": "workers",
    "data": "dataset_path",
    "response": "response_column",
    "transform": "transform",
}


def resolve_manifest(args) -> RunManifest:
    """Manifest file first, explicit flags on top."""
    base = {}
    if args.manifest is not None:
        path = Path(args.manifest)
        if not path.exists():
            raise CliError(f"manifest not found: {path}")
        try:
            base = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise CliError(f"manifest {path} is not valid JSON: {exc}") from None
    for flag, field_name in _FLAG_TO_FIELD.items():
        value = getattr(args, flag, None)
        if value is None:
            continue
        if flag == "hidden":
            value = _parse_hidden(value)
        if flag == "methods":
            value = tuple(tok.strip() for tok in value.split(",") if tok.strip())
        base[field_name] = value
    sim_overrides = {
        k: getattr(args, f"sim_{k2}", None)
        for k, k2 in (("n_samples", "n"), ("p", "p"), ("seed", "seed"))
    }
    if base.get("dataset_path"):
        base["sim"] = None
    elif any(v is not None for v in sim_overrides.values()) or "sim" not in base or base["sim"] is None:
        sim = dict(base.get("sim") or {"n_samples": 5000, "p": 16, "seed": 0})
        for k, v in sim_overrides.items():
            if v is not None:
                sim[k] = v
        base["sim"] = sim
    try:
        return RunManifest.from_dict(base)
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid configuration: {exc}") from None


def _echo_resolved(manifest: RunManifest, output_dir: Path, extra=None):
    payload = manifest.to_dict()
    payload["content_hash"] = manifest.content_hash()
    if extra:
        payload.update(extra)
    (output_dir / "manifest.resolved").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def cmd_simulate(args) -> int:
    if args.p < 1:
        raise CliError(f"--p must be >= 1, got {args.p}")
    if args.n < 2:
        raise CliError(f"--n must be >= 2, got {args.n}")
    cfg = SimConfig(
        n_samples=args.n, p=args.p, x_scale=args.x_scale, noise_sd=args.noise_sd,
        beta_a=args.beta_a, beta_b=args.beta_b, seed=args.seed,
    )
    if args.dry_run:
        print(json.dumps({"simulate": cfg.__dict__}, sort_keys=True))
        return 0
    dataset = simulate_data(cfg)
    out = Path(args.out) if args.out else Path(args.output_dir) / "dataset.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_dataset_csv(dataset, out)
    print(f"wrote {dataset.n} rows x {dataset.p + 1} columns ({dataset.p} features + response) to {out}")
    return 0


def cmd_compare(args) -> int:
    manifest = resolve_manifest(args)
    if args.dry_run:
        payload = manifest.to_dict()
        payload["content_hash"] = manifest.content_hash()
        print(json.dumps(payload, indent=2, sort_keys=True))
        return 0
    output_dir = Path(args.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    result = bench.run_comparison(manifest, output_dir)
    _echo_resolved(manifest, output_dir, extra={"accounted_epsilon": result.accounted_epsilon})
    print(f"results: {output_dir / 'results.csv'}")
    print(f"aggregates: {output_dir / 'aggregates.csv'}")
    for row in result.aggregates:
        print(
            f"{row['method']:>14}: coverage {row['coverage_mean']:.3f} +/- {row['coverage_se']:.3f}"
            f", width {row['width_mean']:.3f}"
            f", train {row['train_seconds_mean']:.3f}s, eval {row['eval_seconds_mean']:.3f}s"
        )
    eps = result.accounted_epsilon
    marker = ""
    if not math.isclose(eps, manifest.nominal_epsilon, rel_tol=0.05, abs_tol=1e-12):
        marker = "  [MISMATCH: accounted budget differs from the nominal label]"
    print(f"privacy: nominal epsilon {manifest.nominal_epsilon}, accounted epsilon {eps:.4g} "
          f"at delta {manifest.target_delta}{marker}")
    return 0


def cmd_intervals(args) -> int:
    args.manifest = None
    args.methods = None
    manifest = resolve_manifest(args)
    if args.dry_run:
        print(json.dumps(manifest.to_dict(), indent=2, sort_keys=True))
        return 0
    data = bench.load_manifest_data(manifest)
    train, test = split_data(data, manifest.n_train, manifest.base_seed)
    arch = MlpArchitecture(train.p, manifest.hidden, manifest.activation)
    sigma = manifest.sigma if args.method == "dp_lazy" else 0.0
    base = bench._train_network(manifest, arch, train, sigma, manifest.base_seed)
    fit = fit_all_loo(base, arch, train, LazyConfig(manifest.ridge_lambda, manifest.jacobian_reuse))
    preds = loo_predictions(fit, arch, test.features)
    cfg = IntervalConfig(manifest.alpha, manifest.nu)
    rows = [dp_lazy_interval(preds[i], fit.loo_residuals, cfg) for i in range(test.n)]

    out = Path(args.out) if args.out else Path(args.output_dir) / "intervals.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        fh.write("row,y_true,lower,upper,covered\n")
        for i, interval in enumerate(rows):
            y = float(test.responses[i])
            fh.write(f"{i},{y!r},{interval.lower!r},{interval.upper!r},{int(interval.contains(y))}\n")
    covered = float(np.mean([iv.contains(float(y)) for iv, y in zip(rows, test.responses)]))
    widths = [iv.width for iv in rows]
    width = math.inf if any(math.isinf(w) for w in widths) else float(np.mean(widths))
    print(f"wrote {test.n} intervals to {out}")
    print(f"{args.method}: coverage {covered:.3f}, average width {width:.3f} at alpha {manifest.alpha}")
    return 0


def cmd_stability(args) -> int:
    args.manifest = None
    args.methods = None
    manifest = resolve_manifest(args)
    if args.dry_run:
        payload = manifest.to_dict()
        payload["stability_nu"] = args.stability_nu
        payload["stability_trials"] = args.trials
        print(json.dumps(payload, indent=2, sort_keys=True))
        return 0
    if args.trials < 1:
        raise CliError(f"--trials must be >= 1, got {args.trials}")
    data = bench.load_manifest_data(manifest)
    train, test = split_data(data, manifest.n_train, manifest.base_seed)
    m = min(args.test_points, test.n)
    arch = MlpArchitecture(train.p, manifest.hidden, manifest.activation)

    def trainer(dataset, seed):
        return bench._train_network(manifest, arch, dataset, manifest.sigma, seed)

    eta = estimate_stability(
        train, test.features[:m], arch,
        LazyConfig(manifest.ridge_lambda, manifest.jacobian_reuse),
        trainer, nu=args.stability_nu, trials=args.trials, seed=manifest.base_seed,
    )
    q = manifest.batch_size / train.n
    eps = account_privacy(manifest.sigma, q, manifest.iterations(train.n), manifest.target_delta)
    print(f"estimated eta {eta:.4f} over {args.trials} trials at nu {args.stability_nu}")
    print(f"accounted epsilon {eps:.4g} at delta {manifest.target_delta}")
    if math.isinf(eps):
        print("coverage slack 3*sqrt(2*eta + 2*eps + delta) = inf")
    else:
        print(f"coverage slack 3*sqrt(2*eta + 2*eps + delta) = "
              f"{theorem_slack(eta, eps, manifest.target_delta):.4f}")
    return 0


def cmd_accountant(args) -> int:
    if args.epsilon is not None:
        eps = args.epsilon
        if eps < 0:
            raise CliError(f"--epsilon must be nonnegative, got {eps}")
        print(f"assumed epsilon {eps} at delta {args.delta}")
    else:
        if args.sigma is None:
            raise CliError("provide --sigma to account, or --epsilon to assume a budget")
        try:
            eps = account_privacy(args.sigma, args.sampling_rate, args.steps, args.delta)
        except ValueError as exc:
            raise CliError(str(exc)) from None
        print(f"accounted epsilon {eps:.6g} at delta {args.delta} "
              f"(sigma {args.sigma}, sampling rate {args.sampling_rate}, steps {args.steps})")
        if math.isinf(eps):
            print("warning: sigma = 0 adds no noise, the budget is unbounded")
    if math.isinf(eps):
        print("coverage slack 3*sqrt(2*eta + 2*eps + delta) = inf")
    else:
        print(f"coverage slack 3*sqrt(2*eta + 2*eps + delta) = "
              f"{theorem_slack(args.eta, eps, args.delta):.6g} at eta {args.eta}")
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "intervals": cmd_intervals,
    "stability": cmd_stability,
    "accountant": cmd_accountant,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - unexpected runtime failures
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
