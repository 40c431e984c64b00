"""Command line interface: simulate, sweep, crb, oracle-check."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

import numpy as np

from . import bench, crb as crb_mod, solver
from .covariance import measure_snapshots
from .errors import (
    BoundUndefinedError,
    ConfigError,
    NumericalError,
    RankDeficiencyError,
)
from .scene import scenario_from_dict, synthesize

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2


def _load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", field=str(path)) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}",
            field=str(path),
        ) from exc


def _write_text(path, text):
    if path is None:
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _json_text(doc):
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _cmd_simulate(args):
    doc = _load_config(args.config)
    scenario_cfg = doc.get("scenario", doc)
    if args.seed is not None:
        scenario_cfg = dict(scenario_cfg, rng_seed=args.seed)
    scenario = scenario_from_dict(scenario_cfg)
    cfg = solver.SolverConfig.from_dict(doc.get("solver"))
    block = synthesize(scenario)
    measurement = measure_snapshots(block, scenario.noise_variance)
    result = solver.solve_off_grid(
        measurement,
        scenario.trajectory,
        cfg,
        scenario.carrier_frequency_hz,
        scenario.propagation_speed_mps,
    )
    text = _json_text(result.to_json_dict(include_history=args.verbose))
    _write_text(args.out, text)
    if args.out is not None or args.verbose:
        print(f"targets: {result.num_targets}")
        for pos, power in zip(result.positions_m, result.powers):
            print(
                f"  position ({pos[0]:.3f}, {pos[1]:.3f}, {pos[2]:.3f}) m, "
                f"power {power:.6g}"
            )
        print(
            f"iterations: {result.iterations}, converged: {result.converged}, "
            f"objective: {result.final_objective:.6g}"
        )
    return EXIT_OK


def _cmd_sweep(args):
    doc = _load_config(args.config)
    spec = bench.experiment_from_dict(doc)
    if args.trials is not None:
        spec = dataclasses.replace(spec, trials=args.trials)
    if args.seed is not None:
        spec = dataclasses.replace(spec, base_seed=args.seed)
    if args.verbose:
        print(
            f"sweep over {spec.sweep_axis}: {list(spec.sweep_values)}, "
            f"{spec.trials} trial(s) per point",
            file=sys.stderr,
        )
    table = bench.run_experiment(spec)
    if args.format == "json":
        text = _json_text(table.to_json_dict())
    else:
        text = table.to_csv()
    _write_text(args.out, text)
    if args.verbose:
        print(table.to_csv(), file=sys.stderr, end="")
    return EXIT_OK


def _cmd_crb(args):
    doc = _load_config(args.config)
    scenario_cfg = doc.get("scenario", doc)
    if args.seed is not None:
        scenario_cfg = dict(scenario_cfg, rng_seed=args.seed)
    scenario = scenario_from_dict(scenario_cfg)
    block = synthesize(scenario)
    bound = crb_mod.compute_crb(scenario, block.signals, coords_per_target=args.coords)
    if args.format == "json":
        doc_out = {
            "per_target_rmse_bound_m": bound.per_target_rmse_bound.tolist(),
            "combined_rmse_bound_m": bound.combined_rmse_bound(),
            "coords_per_target": bound.coords_per_target,
        }
        text = _json_text(doc_out)
    else:
        lines = ["target,crb_m"]
        for k, value in enumerate(bound.per_target_rmse_bound):
            lines.append(f"{k},{value:.6g}")
        lines.append(f"combined,{bound.combined_rmse_bound():.6g}")
        text = "\n".join(lines) + "\n"
    _write_text(args.out, text)
    return EXIT_OK


def _cmd_oracle_check(args):
    report = bench.run_oracle_check(num_instances=args.trials, seed=args.seed)
    lines = []
    for level, count in zip(report["levels"], report["matches"]):
        lines.append(
            f"delta = {level:g} * max|r|: {count}/{report['total']} support matches"
        )
    finest = report["matches"][-1]
    required = int(np.ceil(0.95 * report["total"]))
    passed = finest >= required
    lines.append(
        f"{'PASS' if passed else 'FAIL'}: {finest}/{report['total']} at the "
        f"finest scale (need >= {required})"
    )
    text = "\n".join(lines) + "\n"
    _write_text(args.out, text)
    if args.out is not None:
        sys.stdout.write(text)
    return EXIT_OK if passed else EXIT_NUMERICAL


def build_parser():
    parser = argparse.ArgumentParser(
        prog="covloc",
        description=(
            "Multi-emitter localization from a moving array by sparse "
            "recovery over stacked covariance vectors."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="solve one scenario, emit JSON result")
    sim.add_argument("--config", required=True)
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--out", default=None)
    sim.add_argument("--format", choices=["json"], default="json")
    sim.add_argument("--verbose", action="store_true")
    sim.set_defaults(func=_cmd_simulate)

    sweep = sub.add_parser("sweep", help="run a Monte-Carlo sweep, emit RMSE table")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--trials", type=int, default=None)
    sweep.add_argument("--seed", type=int, default=None)
    sweep.add_argument("--out", default=None)
    sweep.add_argument("--format", choices=["csv", "json"], default="csv")
    sweep.add_argument("--verbose", action="store_true")
    sweep.set_defaults(func=_cmd_sweep)

    crb_cmd = sub.add_parser("crb", help="lower-bound report for a scenario")
    crb_cmd.add_argument("--config", required=True)
    crb_cmd.add_argument("--seed", type=int, default=None)
    crb_cmd.add_argument("--out", default=None)
    crb_cmd.add_argument("--format", choices=["csv", "json"], default="csv")
    crb_cmd.add_argument("--coords", type=int, choices=[2, 3], default=2)
    crb_cmd.set_defaults(func=_cmd_crb)

    oracle = sub.add_parser(
        "oracle-check", help="support equivalence against the enumeration oracle"
    )
    oracle.add_argument("--trials", type=int, default=100)
    oracle.add_argument("--seed", type=int, default=0)
    oracle.add_argument("--out", default=None)
    oracle.add_argument("--verbose", action="store_true")
    oracle.set_defaults(func=_cmd_oracle_check)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (
        NumericalError,
        RankDeficiencyError,
        BoundUndefinedError,
        np.linalg.LinAlgError,
    ) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def entry_point():
    raise SystemExit(main())


if __name__ == "__main__":
    raise SystemExit(main())
