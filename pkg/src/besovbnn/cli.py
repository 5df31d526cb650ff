"""Command-line orchestration: design tables, fit/evaluate experiments, prior
condition checks, covering bounds, and contraction-rate studies.

Subcommands: design, fit, predict, check-prior, rate-study, covering.
Exit codes: 0 success, 1 runtime failure, 2 invalid arguments.  Every command
is deterministic given --seed; derived seeds are recorded in run manifests.
Plot emission is data-only (CSV); figures are left to external tooling.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import design as dz
from . import priors, testbed, vi

SCHEMA_VERSION = 1
DESK_MAX_PARAMS = 100_000
DESK_DEPTH = 2
DESK_WIDTH = 24

BUILTIN_FUNCTIONS = {
    "f1": {
        "function": testbed.cantor_function,
        "spec": dict(s=math.log(2) / math.log(3), p=math.inf, q=math.inf, d=1, m=2),
    },
    "f2": {
        "function": testbed.log_singular_function,
        "spec": dict(s=1.5, p=1.0, q=1.0, d=1, m=2),
    },
}


class ArgumentError(Exception):
    """Invalid arguments; maps to exit code 2."""


def _smoothness_from_args(args) -> tuple[dz.SmoothnessSpec, object | None]:
    """Resolve a SmoothnessSpec (and the true function, when built-in)."""
    if getattr(args, "function", None):
        if args.function not in BUILTIN_FUNCTIONS:
            raise ArgumentError(f"unknown function {args.function!r}; choose f1 or f2")
        entry = BUILTIN_FUNCTIONS[args.function]
        return dz.SmoothnessSpec(**entry["spec"]), entry["function"]()
    if args.s is None:
        raise ArgumentError("give either --function or explicit --s/--p/--q/--d/--m")
    try:
        spec = dz.SmoothnessSpec(s=args.s, p=args.p, q=args.q, d=args.d, m=args.m)
    except ValueError as exc:
        raise ArgumentError(str(exc)) from exc
    return spec, None


def _parse_n_list(text: str, minimum: int = 1) -> list[int]:
    try:
        ns = [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ArgumentError(f"bad n list {text!r}") from exc
    if len(ns) < minimum or any(n < 2 for n in ns):
        raise ArgumentError(f"need at least {minimum} sample sizes, each >= 2")
    if sorted(ns) != ns or len(set(ns)) != len(ns):
        raise ArgumentError("n list must be strictly increasing")
    return ns


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _design_record(spec: dz.SmoothnessSpec, n: int, cB: float, K0: float,
                   counting: str):
    arch = dz.design_architecture(spec, n, cB)
    mix = dz.mixture_hyperparams(arch, K0=K0, counting=counting)
    record = {
        "schema_version": SCHEMA_VERSION,
        "n": n,
        "s": spec.s,
        "p": None if math.isinf(spec.p) else spec.p,
        "q": None if math.isinf(spec.q) else spec.q,
        "d": spec.d,
        "m": spec.m,
        "N": arch.N,
        "W0": arch.W0,
        "L": arch.L,
        "W": arch.W,
        "S": arch.S,
        "B": arch.B,
        "T": arch.T,
        "eps": arch.eps,
        "log_a": mix.log_a,
        "eta": mix.eta,
        "log_sigma1": mix.log_sigma1,
        "sigma2": mix.sigma2,
        "pi1": mix.pi1,
        "pi2": mix.pi2,
    }
    return arch, mix, record


def cmd_design(args) -> int:
    spec, _ = _smoothness_from_args(args)
    ns = _parse_n_list(args.n)
    records = []
    csv_rows = []
    for n in ns:
        _, mix, record = _design_record(spec, n, args.cB, args.K0, args.counting)
        records.append(record)
        log10_s1 = mix.log_sigma1 / math.log(10.0)
        sigma1_linear = math.exp(mix.log_sigma1) if mix.log_sigma1 > -700 else 0.0
        csv_rows.append(
            [n, record["L"], record["W"], sigma1_linear, mix.sigma2, mix.pi1, mix.pi2]
        )
        print(
            f"n={n}  L={record['L']}  W={record['W']}  "
            f"sigma1=10^{log10_s1:.3f}  sigma2={mix.sigma2:.4f}  "
            f"pi1={mix.pi1:.4f}  pi2={mix.pi2:.4f}"
        )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "design.json", {"schema_version": SCHEMA_VERSION, "rows": records})
    (out_dir / "design.csv").write_text(
        _csv_text(["n", "L_n", "W_n", "sigma_1n", "sigma_2n", "pi_1n", "pi_2n"], csv_rows)
    )
    return 0


def _desk_shape(spec: dz.SmoothnessSpec, arch, full_scale: bool):
    from .network import NetworkShape

    if full_scale:
        if arch.T > DESK_MAX_PARAMS:
            print(
                f"warning: full-scale network has {arch.T} parameters; "
                "expect a long runtime",
                file=sys.stderr,
            )
        return NetworkShape(d_in=spec.d, hidden_widths=tuple([arch.W] * arch.L))
    widths = dz.desk_scale_widths(arch, max_depth=DESK_DEPTH, max_width=DESK_WIDTH)
    return NetworkShape(d_in=spec.d, hidden_widths=tuple(widths))


def _run_fit(spec, f0, n, args):
    """Shared generate -> train -> posterior_predictive pipeline."""
    arch = dz.design_architecture(spec, n, args.cB)
    mix = dz.mixture_hyperparams(arch, K0=args.K0, counting=args.counting)
    prior = priors.make_density("mixture", mixture_spec=mix)
    shape = _desk_shape(spec, arch, args.full_scale)
    data = testbed.generate_dataset(f0, n, args.noise_sd, args.seed)
    config = vi.TrainConfig(
        iterations=args.iterations,
        batch_size=min(n, args.batch_size) if args.batch_size else 0,
        learning_rate=args.learning_rate,
        seed=args.seed,
    )
    state, trace = vi.train(shape, data, prior, config, sigma=args.noise_sd)
    grid = np.linspace(0.0, 1.0, args.grid_points)
    summary = vi.posterior_predictive(
        state, shape, grid, args.draws, f0, data, alpha=args.alpha,
        seed=args.seed + 10_000,
    )
    return arch, shape, data, state, trace, summary


def cmd_fit(args) -> int:
    spec, f0 = _smoothness_from_args(args)
    if f0 is None:
        raise ArgumentError("fit requires a built-in --function (f1 or f2)")
    ns = _parse_n_list(args.n)
    if len(ns) != 1:
        raise ArgumentError("fit takes a single sample size")
    n = ns[0]
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "command": "fit",
        "function": args.function,
        "n": n,
        "seed": args.seed,
        "derived_seeds": {"dataset": args.seed, "train": args.seed,
                          "predictive": args.seed + 10_000},
        "config": {
            "iterations": args.iterations,
            "batch_size": args.batch_size,
            "learning_rate": args.learning_rate,
            "noise_sd": args.noise_sd,
            "draws": args.draws,
            "alpha": args.alpha,
            "grid_points": args.grid_points,
            "full_scale": args.full_scale,
            "cB": args.cB,
            "K0": args.K0,
            "counting": args.counting,
        },
        "status": "pending",
    }
    t0 = time.monotonic()
    try:
        arch, shape, data, state, trace, summary = _run_fit(spec, f0, n, args)
    except vi.TrainingDiverged as exc:
        manifest["status"] = f"diverged: {exc}"
        _write_json(out_dir / "manifest.json", manifest)
        print(f"training diverged: {exc}", file=sys.stderr)
        return 1
    elapsed = time.monotonic() - t0

    vi.save_checkpoint(out_dir / "checkpoint", state, shape)
    (out_dir / "predictive.csv").write_text(
        _csv_text(
            ["x", "mean", "lo", "hi"],
            list(zip(summary.grid.tolist(), summary.mean.tolist(),
                     summary.lower.tolist(), summary.upper.tolist())),
        )
    )
    (out_dir / "errors.csv").write_text(
        _csv_text(["empirical_error"], [[e] for e in summary.errors.tolist()])
    )
    (out_dir / "trace.csv").write_text(
        _csv_text(["iteration", "objective"],
                  [[i, v] for i, v in enumerate(trace.tolist())])
    )
    manifest["status"] = "ok"
    manifest["shape"] = shape.to_dict()
    manifest["median_error"] = summary.median_error()
    _write_json(out_dir / "manifest.json", manifest)
    # Wall-clock goes to a sidecar so result files stay byte-identical per seed.
    (out_dir / "timings.txt").write_text(f"fit_seconds={elapsed:.3f}\n")
    print(f"fit done: median empirical error {summary.median_error():.4f}")
    return 0


def cmd_predict(args) -> int:
    state, shape = vi.load_checkpoint(Path(args.checkpoint))
    spec, f0 = _smoothness_from_args(args)
    if f0 is None:
        raise ArgumentError("predict requires a built-in --function")
    ns = _parse_n_list(args.n)
    if len(ns) != 1:
        raise ArgumentError("predict takes a single sample size")
    data = testbed.generate_dataset(f0, ns[0], args.noise_sd, args.seed)
    grid = np.linspace(0.0, 1.0, args.grid_points)
    summary = vi.posterior_predictive(
        state, shape, grid, args.draws, f0, data, alpha=args.alpha,
        seed=args.seed + 10_000,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "predictive.csv").write_text(
        _csv_text(
            ["x", "mean", "lo", "hi"],
            list(zip(summary.grid.tolist(), summary.mean.tolist(),
                     summary.lower.tolist(), summary.upper.tolist())),
        )
    )
    print(f"predict done: median empirical error {summary.median_error():.4f}")
    return 0


def cmd_check_prior(args) -> int:
    spec, _ = _smoothness_from_args(args)
    ns = _parse_n_list(args.n)
    if args.density not in priors.DENSITY_NAMES:
        raise ArgumentError(
            f"unknown density {args.density!r}; known: {priors.DENSITY_NAMES}"
        )
    reports = []
    all_pass = True
    for n in ns:
        arch = dz.design_architecture(spec, n, args.cB)
        if args.density == "mixture":
            mix = dz.mixture_hyperparams(arch, K0=args.K0, counting=args.counting)
            g = priors.make_density("mixture", mixture_spec=mix)
        elif args.density == "uniform-slab":
            g = priors.make_density("uniform-slab", B=arch.B)
        else:
            g = priors.make_density(args.density)
        report = dz.check_shrinkage_conditions(
            g, arch, K=args.K0, K0=args.K0, counting=args.counting
        )
        reports.append({"n": n, **report.to_dict()})
        all_pass &= report.all_pass
    out = {"schema_version": SCHEMA_VERSION, "density": args.density,
           "reports": reports, "all_pass": all_pass}
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "condition_report.json", out)
    print(json.dumps(out, sort_keys=True, indent=2))
    return 0 if all_pass else 1


def fit_rate_slope(ns, errors) -> float:
    """Least-squares slope of log error against log n."""
    ns = np.asarray(ns, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if np.any(errors <= 0):
        raise ValueError("errors must be positive for the log-log fit")
    slope, _ = np.polyfit(np.log(ns), np.log(errors), 1)
    return float(slope)


def cmd_rate_study(args) -> int:
    spec, f0 = _smoothness_from_args(args)
    if f0 is None:
        raise ArgumentError("rate-study requires a built-in --function")
    ns = _parse_n_list(args.n, minimum=3)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    per_n = []
    failures = 0
    for n in ns:
        rep_errors = []
        for r in range(args.replicates):
            rep_args = argparse.Namespace(**vars(args))
            rep_args.seed = args.seed + 1000 * r + n
            try:
                _, shape, data, state, _, _ = _run_fit(spec, f0, n, rep_args)
            except vi.TrainingDiverged:
                failures += 1
                continue
            fx_true = np.asarray(f0(data.x[:, 0]), dtype=float)
            mean_fn = _posterior_mean_on(state, shape, data.x, args.draws,
                                         rep_args.seed + 20_000)
            rep_errors.append(float(testbed.empirical_norm(mean_fn - fx_true)))
        if not rep_errors:
            raise RuntimeError(f"all replicates diverged at n={n}")
        per_n.append({"n": n, "median_error": float(np.median(rep_errors)),
                      "replicates": len(rep_errors)})
    slope = fit_rate_slope([r["n"] for r in per_n],
                           [r["median_error"] for r in per_n])
    theoretical = -spec.s / (2 * spec.s + spec.d)
    result = {
        "schema_version": SCHEMA_VERSION,
        "per_n": per_n,
        "fitted_slope": slope,
        "theoretical_slope": theoretical,
        "diverged_replicates": failures,
    }
    _write_json(out_dir / "rate_study.json", result)
    (out_dir / "rate_study.csv").write_text(
        _csv_text(["n", "median_error"],
                  [[r["n"], r["median_error"]] for r in per_n])
    )
    print(f"fitted slope {slope:.4f} (theoretical {theoretical:.4f})")
    return 0


def _posterior_mean_on(state, shape, x, draws, seed):
    from .network import NetworkParams, forward

    rng = np.random.default_rng(seed)
    sq = state.sigma_q
    acc = np.zeros(x.shape[0])
    for _ in range(draws):
        theta = state.mu + sq * rng.standard_normal(state.T)
        acc += forward(NetworkParams.from_flat(shape, theta), x)
    return acc / draws


def cmd_covering(args) -> int:
    if args.function or args.s is not None:
        spec, _ = _smoothness_from_args(args)
        ns = _parse_n_list(args.n)
        if len(ns) != 1:
            raise ArgumentError("covering takes a single sample size")
        arch = dz.design_architecture(spec, ns[0], args.cB)
        L, W, S, B = arch.L, arch.W, arch.S, arch.B
        delta = args.delta if args.delta is not None else arch.eps / 36.0
        n_eps_sq = arch.n_eps_sq
    else:
        if None in (args.L, args.W, args.S, args.B, args.delta):
            raise ArgumentError("give --function/--n or all of --L --W --S --B --delta")
        L, W, S, B, delta = args.L, args.W, args.S, args.B, args.delta
        n_eps_sq = None
    if delta <= 0:
        raise ArgumentError("delta must be positive")
    bound = dz.covering_bound(L, W, S, B, delta)
    print(f"covering bound: {bound:.6g}")
    if n_eps_sq is not None:
        print(f"n eps^2: {n_eps_sq:.6g}  ratio bound/(n eps^2): {bound / n_eps_sq:.6g}")
    if args.a is not None:
        try:
            tb = dz.covering_bound_truncated(L, W, S, B, args.a, delta)
        except dz.TruncationThresholdError as exc:
            print(str(exc), file=sys.stderr)
            return 2
        print(f"truncated covering bound: {tb:.6g}")
    return 0


def _add_smoothness_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--function", choices=sorted(BUILTIN_FUNCTIONS), default=None)
    p.add_argument("--s", type=float, default=None)
    p.add_argument("--p", type=float, default=math.inf)
    p.add_argument("--q", type=float, default=math.inf)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--cB", type=float, default=10.0)
    p.add_argument("--K0", type=float, default=5.0)
    p.add_argument("--counting", choices=["canonical", "compat"], default="canonical")


def _add_fit_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--iterations", type=int, default=2000)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=0)
    p.add_argument("--learning-rate", dest="learning_rate", type=float, default=0.01)
    p.add_argument("--noise-sd", dest="noise_sd", type=float, default=0.1)
    p.add_argument("--draws", type=int, default=200)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--grid-points", dest="grid_points", type=int, default=101)
    p.add_argument("--full-scale", dest="full_scale", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="besovbnn",
        description="Bayesian ReLU-network regression on Besov targets",
    )
    parser.add_argument("--config", type=Path, default=None,
                        help="JSON file of flag defaults (flags override)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", help="emit architecture/prior tables")
    _add_smoothness_args(p)
    p.add_argument("--n", default="100,1000")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", dest="out_dir", default="out")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("fit", help="generate data, train VI, summarize")
    _add_smoothness_args(p)
    _add_fit_args(p)
    p.add_argument("--n", default="100")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", dest="out_dir", default="out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="posterior predictive from a checkpoint")
    _add_smoothness_args(p)
    _add_fit_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--n", default="100")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", dest="out_dir", default="out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("check-prior", help="shrinkage-condition report")
    _add_smoothness_args(p)
    p.add_argument("--density", default="mixture")
    p.add_argument("--n", default="100,1000")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", dest="out_dir", default="out")
    p.set_defaults(func=cmd_check_prior)

    p = sub.add_parser("rate-study", help="empirical contraction-rate slope")
    _add_smoothness_args(p)
    _add_fit_args(p)
    p.add_argument("--n", default="100,300,1000")
    p.add_argument("--replicates", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", dest="out_dir", default="out")
    p.set_defaults(func=cmd_rate_study)

    p = sub.add_parser("covering", help="covering-number bounds")
    _add_smoothness_args(p)
    p.add_argument("--n", default="100")
    p.add_argument("--L", type=int, default=None)
    p.add_argument("--W", type=int, default=None)
    p.add_argument("--S", type=int, default=None)
    p.add_argument("--B", type=float, default=None)
    p.add_argument("--a", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", dest="out_dir", default="out")
    p.set_defaults(func=cmd_covering)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config is not None:
        try:
            defaults = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            print(f"bad config file: {exc}", file=sys.stderr)
            return 2
        for key, value in defaults.items():
            attr = key.replace("-", "_")
            if hasattr(args, attr) and f"--{key}" not in (argv or sys.argv):
                setattr(args, attr, value)
    try:
        return args.func(args)
    except ArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
