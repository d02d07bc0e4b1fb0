"""Command-line interface.

Subcommands: ``simulate``, ``init``, ``fit``, ``eval``, ``experiment``,
``ingest``. Common flags (``--seed``, ``--threads``, ``--out``) are accepted
by every subcommand; ``experiment`` and ``ingest`` also take a JSON config
file whose fields individual flags override.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .evaluation import g_error, procrustes
from .experiment import DEFAULT_LAMBDA_MULT, ExperimentSpec, fit_real, run_experiment
from .ingest import IngestConfig, ingest_csv
from .initialization import InitConfig, estimate_bounds, initialize
from .simulate import SimConfig, simulate_dataset
from .tensorio import (
    read_count_tensor,
    read_json,
    read_matrix_csv,
    write_count_tensor,
    write_json,
    write_matrix_csv,
)
from .types import ModelBounds

logger = logging.getLogger("poislsm")


def _common_parser():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=None, help="master random seed (default 0)")
    p.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
    p.add_argument("--out", default=".", help="output directory")
    return p


def _bounds_from_args(args) -> ModelBounds | None:
    if args.m_z1 is not None and args.m_alpha is not None:
        return ModelBounds(m_z1=args.m_z1, m_alpha=args.m_alpha)
    if args.m_z1 is not None or args.m_alpha is not None:
        raise SystemExit("--m-z1 and --m-alpha must be given together")
    return None


def _add_bounds_flags(p):
    p.add_argument("--m-z1", type=float, default=None, help="row-norm-squared bound")
    p.add_argument("--m-alpha", type=float, default=None, help="baseline magnitude bound")


def cmd_simulate(args):
    seed = args.seed if args.seed is not None else 0
    cfg = SimConfig(n=args.n, T=args.T, k=args.k, alpha_case=args.alpha_case, seed=seed)
    data = simulate_dataset(cfg)
    os.makedirs(args.out, exist_ok=True)
    manifest = write_count_tensor(data.counts, args.out)
    write_matrix_csv(os.path.join(args.out, "z_star.csv"), data.Z_star)
    write_matrix_csv(os.path.join(args.out, "alpha_star.csv"), data.alpha_star)
    cfg_dict = cfg.to_dict()
    cfg_dict["bounds"] = data.bounds.to_dict()
    write_json(os.path.join(args.out, "sim_config.json"), cfg_dict)
    print(f"wrote tensor manifest {manifest}")
    return 0


def cmd_init(args):
    tensor = read_count_tensor(args.tensor)
    bounds = _bounds_from_args(args) or estimate_bounds(tensor)
    cfg = InitConfig(bounds=bounds, pgd_max_iters=args.pgd_max_iters)
    result = initialize(tensor, args.k, cfg)
    os.makedirs(args.out, exist_ok=True)
    write_matrix_csv(os.path.join(args.out, "z_init.csv"), result.Z)
    write_matrix_csv(os.path.join(args.out, "alpha_init.csv"), result.alpha)
    write_json(
        os.path.join(args.out, "init_trace.json"),
        {"loglik_trace": result.trace, "bounds": bounds.to_dict()},
    )
    print(f"initializer converged in {len(result.trace) - 1} accepted steps")
    return 0


def cmd_fit(args):
    bounds = _bounds_from_args(args)
    if args.init_z is not None or args.init_alpha is not None:
        if args.init_z is None or args.init_alpha is None:
            raise SystemExit("--init-z and --init-alpha must be given together")
        # explicit initial estimates: bypass fit_real's internal init
        from .onestep import OneStepConfig, one_step

        if args.method != "onestep":
            raise SystemExit("explicit initial estimates only apply to --method onestep")
        tensor = read_count_tensor(args.tensor)
        z0 = read_matrix_csv(args.init_z)
        a0 = read_matrix_csv(args.init_alpha)
        z_hat, details = one_step(
            tensor, z0, a0, OneStepConfig(mode=args.mode, steps=args.steps), full_output=True
        )
        os.makedirs(args.out, exist_ok=True)
        write_matrix_csv(os.path.join(args.out, "z.csv"), z_hat)
        write_json(os.path.join(args.out, "report.json"), {"method": "onestep", **details})
        print("one-step update written")
        return 0
    report = fit_real(
        args.tensor,
        args.method,
        args.out,
        k=args.k,
        rank_eps=args.rank_eps,
        lambda_mult=args.lambda_mult,
        mode=args.mode,
        steps=args.steps,
        bounds=bounds,
    )
    print(f"fit {report.method}: n={report.n}, T={report.T}, k={report.k}")
    return 0


def cmd_eval(args):
    z_hat = read_matrix_csv(args.estimate)
    z_star = read_matrix_csv(args.truth)
    align = procrustes(z_hat, z_star)
    metrics = {
        "dist_sq": align.dist_sq,
        "max_row_dist": float(align.per_row.max()),
    }
    if args.g_hat and args.g_star:
        metrics["g_error"] = g_error(read_matrix_csv(args.g_hat), read_matrix_csv(args.g_star))
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "metrics.json")
    write_json(path, metrics)
    print(f"dist_sq = {align.dist_sq:.6g} (metrics in {path})")
    return 0


def cmd_experiment(args):
    base = read_json(args.config) if args.config else {}
    master = args.master_seed if args.master_seed is not None else args.seed
    overrides = {
        "reps": args.reps,
        "master_seed": master,
        "alpha_case": args.alpha_case,
        "lambda_mult": args.lambda_mult,
    }
    for key, val in overrides.items():
        if val is not None:
            base[key] = val
    spec = ExperimentSpec.from_dict(base)
    summary = run_experiment(spec, args.out, threads=args.threads)
    rate = summary["failure_rate"]
    print(f"experiment done: {len(summary['cells'])} summary cells, failure rate {rate:.1%}")
    if rate > 0.2:
        print("more than 20% of fits failed", file=sys.stderr)
        return 1
    return 0


def cmd_ingest(args):
    if args.config:
        cfg = IngestConfig.from_dict(read_json(args.config))
    else:
        if args.window_start is None or args.window_end is None:
            raise SystemExit("--window-start/--window-end (or --config) are required")
        cfg = IngestConfig(
            window=(args.window_start, args.window_end),
            min_duration=args.min_duration,
            max_duration=args.max_duration,
            bin_width=args.bin_width,
        )
    tensor, node_index, stats = ingest_csv(args.trips, cfg)
    os.makedirs(args.out, exist_ok=True)
    manifest = write_count_tensor(tensor, args.out)
    write_json(os.path.join(args.out, "node_index.json"), node_index)
    write_json(os.path.join(args.out, "ingest_stats.json"), {**stats, **cfg.to_dict()})
    print(
        f"ingested {stats['kept']} events over {tensor.T} bins across "
        f"{tensor.n} nodes -> {manifest}"
    )
    return 0


def build_parser():
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="poislsm",
        description="Longitudinal Poisson latent-space network estimation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--alpha-case", choices=("uniform", "two_block"), default="uniform")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("init", parents=[common], help="two-stage initial estimator")
    p.add_argument("--tensor", required=True, help="tensor manifest JSON")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--pgd-max-iters", type=int, default=500)
    _add_bounds_flags(p)
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("fit", parents=[common], help="fit an estimator to a tensor")
    p.add_argument("--tensor", required=True, help="tensor manifest JSON")
    p.add_argument("--method", choices=("onestep", "pmle"), required=True)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--mode", choices=("fisher", "observed"), default="fisher")
    p.add_argument("--steps", type=int, default=1, help="one-step update repetitions")
    p.add_argument("--lambda-mult", type=float, default=DEFAULT_LAMBDA_MULT)
    p.add_argument("--rank-eps", type=float, default=0.25)
    p.add_argument("--init-z", default=None, help="CSV of initial latent positions")
    p.add_argument("--init-alpha", default=None, help="CSV of initial baselines")
    _add_bounds_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", parents=[common], help="score an estimate against the truth")
    p.add_argument("--estimate", required=True, help="CSV of estimated latent positions")
    p.add_argument("--truth", required=True, help="CSV of true latent positions")
    p.add_argument("--g-hat", default=None)
    p.add_argument("--g-star", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("experiment", parents=[common], help="Monte Carlo sweep")
    p.add_argument("--config", default=None, help="JSON spec (fields overridable by flags)")
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--master-seed", type=int, default=None)
    p.add_argument("--alpha-case", choices=("uniform", "two_block"), default=None)
    p.add_argument("--lambda-mult", type=float, default=None)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("ingest", parents=[common], help="bin a trip log into a tensor")
    p.add_argument("--trips", required=True, help="CSV with start_id,end_id,start_time,duration_s")
    p.add_argument("--config", default=None, help="JSON IngestConfig")
    p.add_argument("--window-start", type=float, default=None)
    p.add_argument("--window-end", type=float, default=None)
    p.add_argument("--min-duration", type=float, default=60.0)
    p.add_argument("--max-duration", type=float, default=10800.0)
    p.add_argument("--bin-width", type=float, default=3600.0)
    p.set_defaults(func=cmd_ingest)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
