"""Command-line harness: instance generation, runs, sweeps, and verification.

Subcommands
-----------
gen      write a synthetic instance (manifest + CSV blocks) and print its
         complexity measures
run      run seeded solve trials against a manifest and stream trial reports
verify   re-check the sampler's guarantees, inline or against trace dumps
sweep    grid experiments relating mean label queries to the instance measure

Exit codes: 0 success, 2 hard-check failure, 3 I/O failure, 4 invalid
configuration.  The base seed comes from ``--seed`` or the ``SSAR_SEED``
environment variable; every command starts by printing its resolved
configuration line, which is sufficient to reproduce the run.  A ``--config``
JSON file, when given, overrides the corresponding command-line flags.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .asura import AsuraConfig, check_well_balanced
from .baselines import LeverageConfig, UniformConfig
from .core import (
    effective_dimension,
    reduced_rank,
    statistical_dimension,
    thin_svd,
)
from .dataio import (
    lemma_report_to_dict,
    load_dataset,
    load_trace,
    save_dataset,
    solution_record,
    write_jsonl,
)
from .errors import (
    BarrierViolationError,
    InvalidInputError,
    NumericalBreakdownError,
    SsarError,
    WellBalancedEventFailedError,
)
from .instances import LowerBoundSpec, gen_lower_bound_instance, gen_random_instance
from .regression import LabelOracle, kernel_ridge_to_ssal, ridge_to_ssal, solve_active
from .rngutil import derive_seed, make_rng
from .verify import (
    HARD_LEMMA_IDS,
    check_hard_lemmas,
    check_statistical_lemmas,
    merge_hard_reports,
    run_sampler_batch,
)

EXIT_OK = 0
EXIT_HARD_FAIL = 2
EXIT_IO = 3
EXIT_CONFIG = 4

MIN_STATISTICAL_RUNS = 2000


@dataclass
class TrialReport:
    """One solve trial as reported by ``run`` and ``sweep``."""

    seed: int
    sampler: str
    m: int
    queries_billed: int
    queries_iteration_level: int
    ratio: float | None
    well_balanced: bool | None
    gamma: float | None
    runtime_ms: float


def _base_seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return int(args.seed)
    return int(os.environ.get("SSAR_SEED", "0"))


def _print_config(args) -> None:
    resolved = {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)}
    print("# config " + json.dumps(resolved, default=str))


def _apply_config_file(args) -> None:
    """Values from the JSON config file take precedence over parsed flags."""
    path = getattr(args, "config", None)
    if not path:
        return
    with open(path) as fh:
        overrides = json.load(fh)
    known = vars(args)
    for key, value in overrides.items():
        dest = key.replace("-", "_")
        if dest not in known:
            raise InvalidInputError(f"config file sets unknown option {key!r}")
        setattr(args, dest, value)


# ---------------------------------------------------------------- gen


def _cmd_gen(args) -> int:
    seed = _base_seed(args)
    out = args.out
    kind = args.instance
    if kind == "random":
        ds, full = gen_random_instance(args.n1, args.n2, args.d, args.noise_sigma, seed)
        manifest = save_dataset(out, ds, full_labels=full, stem="random")
        print(f"reduced_rank = {reduced_rank(ds):.17g}")
    elif kind == "lower-bound":
        spec = LowerBoundSpec(
            d=args.d, n_copies=args.n, epsilon=args.eps, lam=args.lam, rng_seed=seed
        )
        ds, full, beta_tilde = gen_lower_bound_instance(spec)
        manifest = save_dataset(out, ds, full_labels=full, stem="lower_bound")
        np.savetxt(os.path.join(out, "lower_bound_beta_tilde.csv"), beta_tilde, fmt="%.17g")
        sigma = np.linalg.svd(ds.x_unlabeled, compute_uv=False)
        print(f"sd_lambda = {statistical_dimension(sigma, args.lam):.17g}")
    elif kind == "ridge":
        base, full_plain = gen_random_instance(args.n1, 0, args.d, args.noise_sigma, seed)
        x1 = base.x_unlabeled
        ds = ridge_to_ssal(x1, args.lam)
        full = np.concatenate([full_plain, np.zeros(args.d)])
        manifest = save_dataset(out, ds, full_labels=full, stem="ridge")
        sigma = np.linalg.svd(x1, compute_uv=False)
        print(f"sd_lambda = {statistical_dimension(sigma, args.lam):.17g}")
    elif kind == "kernel":
        rng = make_rng(seed)
        if args.rank < 1 or not (0 < args.eig_min <= args.eig_max):
            raise InvalidInputError("kernel generator needs rank >= 1 and 0 < eig-min <= eig-max")
        rank = min(args.rank, args.n)
        eigs = np.geomspace(args.eig_min, args.eig_max, rank)
        q, _ = np.linalg.qr(rng.standard_normal((args.n, rank)))
        k = (q * eigs) @ q.T
        k = 0.5 * (k + k.T)
        ds = kernel_ridge_to_ssal(k, args.lam)
        beta = rng.standard_normal(args.n)
        y1 = k @ beta + args.noise_sigma * rng.standard_normal(args.n)
        full = np.concatenate([y1, np.zeros(args.n)])
        manifest = save_dataset(out, ds, full_labels=full, stem="kernel")
        print(f"d_lambda = {effective_dimension(eigs, args.lam):.17g}")
    else:  # pragma: no cover - argparse restricts choices
        raise InvalidInputError(f"unknown instance kind {kind!r}")
    print(f"manifest = {manifest}")
    return EXIT_OK


# ---------------------------------------------------------------- run


def _run_one_trial(payload: tuple) -> dict:
    """One solve trial; sampler-level failures come back as error records."""
    (manifest, sampler, epsilon, c0, oversample_c, uniform_m, seed, retry,
     assert_lemmas, no_ratio, check_balance, want_solution) = payload
    try:
        return _run_one_trial_inner(
            manifest, sampler, epsilon, c0, oversample_c, uniform_m, seed,
            retry, assert_lemmas, no_ratio, check_balance, want_solution,
        )
    except (BarrierViolationError, NumericalBreakdownError,
            WellBalancedEventFailedError) as exc:
        return {"seed": seed, "sampler": sampler, "error": str(exc)}


def _run_one_trial_inner(manifest, sampler, epsilon, c0, oversample_c,
                         uniform_m, seed, retry, assert_lemmas, no_ratio,
                         check_balance, want_solution) -> dict:
    ds, full = load_dataset(manifest)
    if full is None:
        raise InvalidInputError(
            "manifest has no hidden labels; sampled rows could not be labeled"
        )
    oracle = LabelOracle(full, ds.n1, allow_full_loss=not no_ratio)
    gamma = None
    if sampler == "asura":
        cfg = AsuraConfig(
            epsilon=epsilon, c0=c0, rng_seed=seed, assert_lemmas=assert_lemmas
        )
        gamma = cfg.gamma
    elif sampler == "leverage":
        cfg = LeverageConfig(epsilon=epsilon, oversample_c=oversample_c, rng_seed=seed)
    elif sampler == "uniform":
        cfg = UniformConfig(m=uniform_m, rng_seed=seed)
    else:
        raise InvalidInputError(f"unknown sampler {sampler!r}")

    t0 = time.perf_counter()
    sol = solve_active(ds, oracle, epsilon, sampler=sampler, cfg=cfg, retry=retry)
    runtime_ms = 1000.0 * (time.perf_counter() - t0)

    well_balanced = None
    if sampler == "asura" and (retry or check_balance):
        if retry:
            well_balanced = True
        elif sol.trace is not None and sol.trace.a_mats is not None:
            svd = thin_svd(ds.stacked())
            well_balanced = check_well_balanced(
                sol.sample, sol.trace, svd, epsilon
            ).well_balanced
    report = asdict(
        TrialReport(
            seed=seed,
            sampler=sampler,
            m=sol.iterations,
            queries_billed=sol.queries,
            queries_iteration_level=sol.queries_iteration_level,
            ratio=sol.ratio,
            well_balanced=well_balanced,
            gamma=gamma,
            runtime_ms=runtime_ms,
        )
    )
    if want_solution:
        report["solution"] = solution_record(sol, seed)
    return report


def _cmd_run(args) -> int:
    base_seed = _base_seed(args)
    payloads = [
        (
            args.manifest,
            args.sampler,
            args.epsilon,
            args.c0,
            args.oversample_c,
            args.uniform_m,
            derive_seed(base_seed, k),
            args.retry,
            args.assert_lemmas,
            args.no_ratio,
            args.check_balance,
            args.solutions_out is not None,
        )
        for k in range(args.trials)
    ]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            records = list(pool.map(_run_one_trial, payloads))
    else:
        records = [_run_one_trial(p) for p in payloads]

    solutions = [rec.pop("solution") for rec in records if "solution" in rec]
    if args.solutions_out:
        write_jsonl(args.solutions_out, solutions, append=args.append)
    for rec in records:
        print(json.dumps(rec))
    ok = [r for r in records if "error" not in r]
    queries = np.array([r["queries_iteration_level"] for r in ok], dtype=float)
    ratios = [r["ratio"] for r in ok if r["ratio"] is not None]
    summary = {
        "kind": "summary",
        "trials": len(records),
        "failed_trials": len(records) - len(ok),
        "mean_queries_billed": float(np.mean([r["queries_billed"] for r in ok])) if ok else None,
        "mean_queries_iteration_level": float(queries.mean()) if ok else None,
        "std_queries_iteration_level": float(queries.std(ddof=1)) if len(ok) > 1 else 0.0,
        "mean_ratio": float(np.mean(ratios)) if ratios else None,
        "std_ratio": float(np.std(ratios, ddof=1)) if len(ratios) > 1 else None,
    }
    print(json.dumps(summary))
    if args.out:
        write_jsonl(args.out, records + [summary], append=args.append)
    return EXIT_OK


# ---------------------------------------------------------------- verify


def _parse_grid(text: str, cast=float) -> list:
    items = [tok for tok in text.split(",") if tok.strip()]
    return [cast(tok) for tok in items]


def _cmd_verify(args) -> int:
    base_seed = _base_seed(args)
    reports = []
    if args.trace_file:
        for path in args.trace_file:
            trace = load_trace(path)
            reports.extend(
                check_hard_lemmas(trace, trace.gamma, trace.rank, scalar_only=True)
            )
        reports = merge_hard_reports([reports])
    else:
        d_grid = _parse_grid(args.d_grid, int)
        eps_grid = _parse_grid(args.eps_grid, float)
        per_run = []
        for d in d_grid:
            ds, _ = gen_random_instance(3 * d, d, d, 1.0, derive_seed(base_seed, d))
            svd = thin_svd(ds.stacked())
            for eps in eps_grid:
                cfg = AsuraConfig(
                    epsilon=eps, c0=args.c0,
                    rng_seed=derive_seed(base_seed, d, int(round(1000 * eps))),
                    assert_lemmas=True,
                )
                for _, trace in run_sampler_batch(svd, cfg, args.runs, n_unlabeled=ds.n1):
                    per_run.append(check_hard_lemmas(trace, cfg.gamma, svd.rank))
        reports = merge_hard_reports(per_run)

        if args.statistical_runs:
            if args.statistical_runs < MIN_STATISTICAL_RUNS:
                raise InvalidInputError(
                    f"statistical checks need at least {MIN_STATISTICAL_RUNS} runs"
                )
            d = d_grid[0] if d_grid else 8
            eps = eps_grid[0] if eps_grid else 0.25
            ds, _ = gen_random_instance(3 * d, d, d, 1.0, derive_seed(base_seed, 99, d))
            svd = thin_svd(ds.stacked())
            cfg = AsuraConfig(
                epsilon=eps, c0=args.c0, rng_seed=derive_seed(base_seed, 7),
                assert_lemmas=False,
            )
            batch = [
                t
                for _, t in run_sampler_batch(
                    svd, cfg, args.statistical_runs,
                    n_unlabeled=ds.n1, capture_matrices=False,
                )
            ]
            reports.extend(check_statistical_lemmas(batch, cfg.gamma, svd.rank))

    if args.lemma:
        matched = [r for r in reports if r.lemma_id == args.lemma]
        if not matched:
            known = sorted({r.lemma_id for r in reports})
            raise InvalidInputError(
                f"no check named {args.lemma!r}; available: {', '.join(known)}"
            )
        reports = matched

    records = [lemma_report_to_dict(r) for r in reports]
    for rec in records:
        print(json.dumps(rec))
    if args.out:
        write_jsonl(args.out, records)
    hard_failed = any(
        not r.verdict for r in reports if r.lemma_id in HARD_LEMMA_IDS
    )
    return EXIT_HARD_FAIL if hard_failed else EXIT_OK


# ---------------------------------------------------------------- sweep


def _sweep_points(args, base_seed):
    """Yield (label, dataset, epsilon) triples for the requested grid."""
    grid = _parse_grid(args.grid, float)
    if args.axis == "lambda":
        rng = make_rng(derive_seed(base_seed, 1))
        x1 = rng.standard_normal((args.n1, args.d)) / math.sqrt(args.n1)
        for lam in grid:
            yield f"lambda={lam:g}", ridge_to_ssal(x1, lam), args.epsilon
    elif args.axis == "epsilon":
        rng = make_rng(derive_seed(base_seed, 1))
        x1 = rng.standard_normal((args.n1, args.d)) / math.sqrt(args.n1)
        ds = ridge_to_ssal(x1, args.lam)
        for eps in grid:
            yield f"epsilon={eps:g}", ds, eps
    elif args.axis == "d":
        for d in grid:
            d = int(d)
            rng = make_rng(derive_seed(base_seed, 1, d))
            x1 = rng.standard_normal((args.n1, d)) / math.sqrt(args.n1)
            yield f"d={d}", ridge_to_ssal(x1, args.lam), args.epsilon
    else:  # pragma: no cover - argparse restricts choices
        raise InvalidInputError(f"unknown sweep axis {args.axis!r}")


def _cmd_sweep(args) -> int:
    base_seed = _base_seed(args)
    rows = []
    print("point\tr_x\tr_over_eps\tmean_queries\tse_queries\tbound")
    for point_index, (label, ds, eps) in enumerate(_sweep_points(args, base_seed)):
        svd = thin_svd(ds.stacked())
        cfg = AsuraConfig(
            epsilon=eps, c0=args.c0,
            rng_seed=derive_seed(base_seed, 2, point_index),
            assert_lemmas=False,
        )
        counts = []
        for _, trace in run_sampler_batch(
            svd, cfg, args.trials, n_unlabeled=ds.n1, capture_matrices=False
        ):
            counts.append(
                int(np.count_nonzero(trace.sampled_index < ds.n1))
            )
        counts = np.array(counts, dtype=float)
        r_x = reduced_rank(ds)
        mean = float(counts.mean()) if counts.size else 0.0
        se = float(counts.std(ddof=1) / math.sqrt(counts.size)) if counts.size > 1 else 0.0
        bound = 4.0 * r_x / cfg.gamma**2
        rows.append(
            {
                "point": label,
                "r_x": r_x,
                "r_over_eps": r_x / eps,
                "mean_queries": mean,
                "se_queries": se,
                "bound": bound,
            }
        )
        print(
            f"{label}\t{r_x:.6g}\t{r_x / eps:.6g}\t{mean:.6g}\t{se:.6g}\t{bound:.6g}"
        )

    if rows:
        xs = np.array([r["r_over_eps"] for r in rows])
        ys = np.array([r["mean_queries"] for r in rows])
        denom = float(xs @ xs)
        fitted = float(xs @ ys) / denom if denom > 0 else float("nan")
        means = [r["mean_queries"] for r in rows]
        monotone = all(a > b for a, b in zip(means, means[1:])) or all(
            a < b for a, b in zip(means, means[1:])
        )
        within = all(r["mean_queries"] <= r["bound"] for r in rows)
        print(f"# fitted queries-per-(r_x/epsilon) constant: {fitted:.6g}")
        print(f"# monotone trend: {monotone}")
        print(f"# all points within query bound: {within}")
        if args.out:
            write_jsonl(args.out, rows, append=args.append)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _add_common(sub):
    sub.add_argument("--seed", type=int, default=None,
                     help="base seed (default: SSAR_SEED env var, else 0)")
    sub.add_argument("--config", default=None,
                     help="JSON file whose entries override the flags")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ssar",
        description="semi-supervised active regression toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic instance")
    gen_sub = gen.add_subparsers(dest="instance", required=True)
    g_random = gen_sub.add_parser("random", help="Gaussian instance")
    g_random.add_argument("--n1", type=int, required=True)
    g_random.add_argument("--n2", type=int, required=True)
    g_random.add_argument("--d", type=int, required=True)
    g_random.add_argument("--noise-sigma", type=float, default=1.0)
    g_lb = gen_sub.add_parser("lower-bound", help="hard ridge instance")
    g_lb.add_argument("--d", type=int, required=True)
    g_lb.add_argument("--n", type=int, required=True, help="copies per basis direction")
    g_lb.add_argument("--eps", type=float, required=True)
    g_lb.add_argument("--lambda", dest="lam", type=float, required=True)
    g_ridge = gen_sub.add_parser("ridge", help="Gaussian ridge instance")
    g_ridge.add_argument("--n1", type=int, required=True)
    g_ridge.add_argument("--d", type=int, required=True)
    g_ridge.add_argument("--lambda", dest="lam", type=float, required=True)
    g_ridge.add_argument("--noise-sigma", type=float, default=1.0)
    g_kernel = gen_sub.add_parser("kernel", help="low-rank PSD kernel instance")
    g_kernel.add_argument("--n", type=int, required=True)
    g_kernel.add_argument("--rank", type=int, default=8)
    g_kernel.add_argument("--lambda", dest="lam", type=float, required=True)
    g_kernel.add_argument("--eig-min", type=float, default=0.25)
    g_kernel.add_argument("--eig-max", type=float, default=4.0)
    g_kernel.add_argument("--noise-sigma", type=float, default=1.0)
    for g in (g_random, g_lb, g_ridge, g_kernel):
        g.add_argument("--out", required=True, help="output directory")
        _add_common(g)
    gen.set_defaults(func=_cmd_gen)

    run = sub.add_parser("run", help="run solve trials against a manifest")
    run.add_argument("--manifest", required=True)
    run.add_argument("--sampler", choices=("asura", "leverage", "uniform"),
                     default="asura")
    run.add_argument("--epsilon", type=float, default=0.25)
    run.add_argument("--c0", type=float, default=2.0)
    run.add_argument("--oversample-c", type=float, default=15.0)
    run.add_argument("--uniform-m", type=int, default=100)
    run.add_argument("--trials", type=int, default=1)
    run.add_argument("--jobs", type=int, default=1)
    run.add_argument("--retry", action="store_true",
                     help="rerun the adaptive sampler until well balanced")
    run.add_argument("--assert-lemmas", action=argparse.BooleanOptionalAction,
                     default=None)
    run.add_argument("--check-balance", action="store_true",
                     help="attach the well-balancedness verdict to each trial")
    run.add_argument("--no-ratio", action="store_true",
                     help="deploy-style reporting: omit loss/ratio")
    run.add_argument("--out", default=None)
    run.add_argument("--solutions-out", default=None,
                     help="also write one solution record per trial")
    run.add_argument("--append", action="store_true")
    _add_common(run)
    run.set_defaults(func=_cmd_run)

    ver = sub.add_parser("verify", help="run the guarantee checks")
    ver.add_argument("--trace-file", nargs="*", default=None,
                     help="check scalar dumps instead of running inline")
    ver.add_argument("--runs", type=int, default=30, help="runs per grid cell")
    ver.add_argument("--d-grid", default="4,8,16")
    ver.add_argument("--eps-grid", default="0.25,0.1")
    ver.add_argument("--c0", type=float, default=2.0)
    ver.add_argument("--statistical-runs", type=int, default=0)
    ver.add_argument("--lemma", default=None, help="restrict to one check id")
    ver.add_argument("--out", default=None)
    _add_common(ver)
    ver.set_defaults(func=_cmd_verify)

    sweep = sub.add_parser("sweep", help="grid experiment over lambda, epsilon or d")
    sweep.add_argument("axis", choices=("lambda", "epsilon", "d"))
    sweep.add_argument("--grid", required=True, help="comma-separated values")
    sweep.add_argument("--n1", type=int, default=2000)
    sweep.add_argument("--d", type=int, default=10)
    sweep.add_argument("--lambda", dest="lam", type=float, default=1.0)
    sweep.add_argument("--epsilon", type=float, default=0.25)
    sweep.add_argument("--c0", type=float, default=2.0)
    sweep.add_argument("--trials", type=int, default=100)
    sweep.add_argument("--out", default=None)
    sweep.add_argument("--append", action="store_true")
    _add_common(sweep)
    sweep.set_defaults(func=_cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    try:
        _apply_config_file(args)
        _print_config(args)
        return args.func(args)
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SsarError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
