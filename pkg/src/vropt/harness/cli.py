"""Command-line entry point: run, compare, verify-theory, gradcheck, info."""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .. import __version__, _kernels
from .config import ConfigError, load_config
from .runner import compare_report, load_records, run_experiment, thread_cap, write_records

USAGE_EXIT = 2


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vropt",
        description="Variance-regularized optimizer experiments and theory checks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a seeded experiment from a TOML config")
    p_run.add_argument("--config", required=True, help="path to the TOML config")
    p_run.add_argument("--seed", help="comma-separated seed list overriding the config")
    p_run.add_argument("--steps", type=int, help="step budget override")
    p_run.add_argument("--out", help="output directory override")
    p_run.add_argument("--mode", choices=["mean_normalized", "algorithm_literal"],
                       help="regularizer normalization override")
    p_run.add_argument("--s", type=float, help="impact factor override")
    p_run.add_argument("--optimizer", help="optimizer kind override")

    p_cmp = sub.add_parser("compare", help="paired comparison of two run directories")
    p_cmp.add_argument("--a", required=True, help="baseline run directory")
    p_cmp.add_argument("--b", required=True, help="candidate run directory")
    p_cmp.add_argument("--metric", default="train_loss")
    p_cmp.add_argument("--out", help="write the per-step comparison CSV here")

    p_ver = sub.add_parser("verify-theory", help="run bound/closed-form verification suites")
    p_ver.add_argument("--suite", default="all",
                       help="comma-separated suite names, or 'all'")
    p_ver.add_argument("--seeds", type=int, default=0,
                       help="Monte Carlo replica override for suites that sample")

    p_grad = sub.add_parser("gradcheck", help="finite-difference validation of all gradients")
    p_grad.add_argument("--points", type=int, default=100)

    sub.add_parser("info", help="print version and determinism flags")
    return parser


def _cmd_run(args) -> int:
    try:
        config = load_config(args.config)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    if args.seed:
        seeds = tuple(int(s) for s in args.seed.split(","))
        config = dataclasses.replace(config, run=dataclasses.replace(config.run, seeds=seeds))
    if args.steps:
        config = dataclasses.replace(config, run=dataclasses.replace(config.run, steps=args.steps))
    if args.out:
        config = dataclasses.replace(config, run=dataclasses.replace(config.run, out_dir=args.out))
    opt_overrides = {}
    if args.mode:
        opt_overrides["mode"] = args.mode
    if args.s is not None:
        opt_overrides["s"] = args.s
    if args.optimizer:
        opt_overrides["kind"] = args.optimizer
    if opt_overrides:
        config = dataclasses.replace(
            config, optimizer=dataclasses.replace(config.optimizer, **opt_overrides)
        )
    records = run_experiment(config)
    run_dir = write_records(records, config.run.out_dir)
    for rec in records:
        final = rec.rows[-1]
        print(f"seed {rec.seed}: status={rec.status} steps={final.step} "
              f"train_loss={final.train_loss:.6g} hash={rec.content_hash()[:12]}")
    print(f"wrote {len(records)} record(s) to {run_dir}")
    return 0


def _cmd_compare(args) -> int:
    summary = compare_report(load_records(args.a), load_records(args.b), args.metric)
    if args.out:
        Path(args.out).write_text(summary.csv_text)
    print(f"metric={summary.metric} pairs={summary.n_pairs} final_step={summary.final_step}")
    print(f"median {summary.metric}: a={summary.median_final_a:.6g} "
          f"b={summary.median_final_b:.6g} diff(b-a)={summary.median_final_diff:.6g}")
    print(f"win rate of b (ties half): {summary.win_rate_b:.3f}")
    return 0


def _cmd_verify(args) -> int:
    from .. import theory

    names = None if args.suite == "all" else [s.strip() for s in args.suite.split(",")]
    try:
        if names and args.seeds:
            results = []
            for name in names:
                fn = theory.ALL_SUITES[name]
                try:
                    results.extend(fn(n_seeds=args.seeds))
                except TypeError:
                    results.extend(fn())
        else:
            results = theory.run_suites(names)
    except KeyError as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return USAGE_EXIT
    width = max(len(f"{r.suite}/{r.name}") for r in results)
    failures = 0
    for r in results:
        mark = "PASS" if r.passed else "FAIL"
        failures += 0 if r.passed else 1
        print(f"{mark}  {f'{r.suite}/{r.name}':<{width}}  {r.detail}")
    print(f"{len(results) - failures}/{len(results)} checks passed")
    return 0 if failures == 0 else 1


def _cmd_gradcheck(args) -> int:
    import numpy as np

    from ..numerics import RngStream
    from ..problems import (
        QuadraticProblem, finite_difference_grad, gradient_check,
        linear_regression_problem, logistic_regression_problem, make_blobs, mlp_problem,
    )

    rng = RngStream(20260810)
    n_pts = args.points
    failures = 0

    def report(name: str, worst: float, tol: float) -> None:
        nonlocal failures
        ok = worst < tol
        failures += 0 if ok else 1
        print(f"{'PASS' if ok else 'FAIL'}  {name:<22} max rel err {worst:.3g} (tol {tol:g})")

    quad = QuadraticProblem(l=1.7, dim=4)
    worst = 0.0
    for _ in range(n_pts):
        x = rng.normals(4) * 2.0
        fd = finite_difference_grad(quad.full_loss, x)
        scale = max(float(np.linalg.norm(fd)), 1e-12)
        worst = max(worst, float(np.linalg.norm(quad.full_grad(x) - fd)) / scale)
    report("quadratic", worst, 1e-5)

    X, y_cls = make_blobs(60, 5, rng.spawn(11))
    y_real = X @ np.arange(1.0, 6.0) + 0.1 * rng.normals(60)
    lin = linear_regression_problem(X, y_real, ridge=0.3)
    logi = logistic_regression_problem(X, y_cls)
    for name, prob, tol in (("linear_regression", lin, 1e-5),
                            ("logistic_regression", logi, 1e-5)):
        worst = 0.0
        for k in range(n_pts):
            x = rng.normals(prob.dim)
            worst = max(worst, gradient_check(prob, x, [k % prob.n_samples]))
        report(name, worst, tol)

    mlp = mlp_problem([5, 8, 2], "tanh", X, y_cls, seed=5)
    worst = 0.0
    for k in range(n_pts):
        x = mlp.initial_point() + 0.3 * rng.normals(mlp.dim)
        worst = max(worst, gradient_check(mlp, x, [k % mlp.n_samples]))
    report("mlp (tanh)", worst, 1e-4)

    print(f"{4 - failures}/4 gradient checks passed")
    return 0 if failures == 0 else 1


def _cmd_info() -> int:
    import numpy as np

    print(f"vropt {__version__}")
    print(f"kernel backend: {_kernels.BACKEND}")
    print(f"numpy {np.__version__}")
    print("reductions: fixed left-to-right accumulation (bit-reproducible)")
    print("rng: counter-based, (seed, stream_id)-addressed")
    print(f"parallel seed cap: {thread_cap()} (env VR_OPTIM_THREADS)")
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "compare":
        return _cmd_compare(args)
    if args.command == "verify-theory":
        return _cmd_verify(args)
    if args.command == "gradcheck":
        return _cmd_gradcheck(args)
    return _cmd_info()


if __name__ == "__main__":
    sys.exit(main())
