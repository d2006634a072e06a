"""Command-line entry point: ``rmabkit {index,check,simulate,fixtures}``.

Exit codes: 0 success, 1 domain failure (non-convergence, Whittle play on a
non-indexable arm), 2 usage or input errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import SolverConfig
from .errors import ConfigurationError, ConvergenceError, ModelError, RmabError
from .fixtures import ARM_FIXTURES, INSTANCE_FIXTURES, fixture_names, load_fixture
from .indexability import (
    INDEX_ABOVE_GRID,
    SubsidyGrid,
    check_structural_conditions,
    compute_whittle_indices,
)
from .modelio import ModelFile, arm_digest, fixture_text, fmt, parse_model, serialize_model, write_csv
from .policies import IndexTable, RmabInstance, RolloutConfig
from .sim import MyopicPolicy, RolloutPolicy, SimulationConfig, WhittlePolicy, simulate

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


class UsageError(RmabError):
    pass


def _add_source(p):
    p.add_argument("model", nargs="?", help="model file (JSON)")
    p.add_argument("--fixture", help="use a catalog fixture instead of a model file")
    p.add_argument("--arm", help="arm name, when the model file defines several")
    p.add_argument("--beta-override", type=float, help="replace every arm's discount factor")


def _add_solver(p):
    p.add_argument("--delta", type=float, default=1e-6, help="action tie threshold (default 1e-6)")
    p.add_argument("--tol", type=float, default=1e-9, help="value-iteration stopping tolerance (default 1e-9)")
    p.add_argument("--max-iters", type=int, default=100_000, help="value-iteration iteration cap (default 100000)")
    p.add_argument("--grid-min", type=float, help="lowest subsidy on the grid (default -1 when a grid flag is set)")
    p.add_argument("--grid-max", type=float, help="highest subsidy on the grid (default 1 when a grid flag is set)")
    p.add_argument("--grid-points", type=int, help="number of grid points (default 201)")
    p.add_argument("--refine", action="store_true", help="sharpen indices by bisection between grid points")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rmabkit",
        description="Indexability checks, Whittle indices and policy simulation for restless bandits.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="policy matrix, indexability verdict and Whittle indices for one arm")
    _add_source(p)
    _add_solver(p)
    p.add_argument("--out", help="output prefix; writes <out>.policy.csv and <out>.index.csv")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("check", help="structural (monotonicity / superadditivity) conditions for one arm")
    _add_source(p)
    p.add_argument("--out", help="also write the report as CSV")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("simulate", help="simulate an instance under one policy")
    _add_source(p)
    _add_solver(p)
    p.add_argument("--policy", choices=["myopic", "whittle", "rollout"], default="myopic")
    p.add_argument("--horizon", type=int, help="time steps T (default ceil(1/(1-beta))*5)")
    p.add_argument("--reps", type=int, default=100, help="replications R (default 100)")
    p.add_argument("--seed", type=int, default=0, help="64-bit seed (default 0)")
    p.add_argument("--rollout-h", type=int, default=4, help="rollout look-ahead H (default 4)")
    p.add_argument("--rollout-l", type=int, default=30, help="rollout trajectories L (default 30)")
    p.add_argument("--candidates", type=int, help="candidate arm sets |A| when M > 1 (default N)")
    p.add_argument("--initial-state", help="fixed joint start state, e.g. 1,3,2 (default uniform random)")
    p.add_argument("--index-cache", help="Whittle index sidecar file (default <out stem>.indices.json)")
    p.add_argument("--out", default="trace.csv", help="trace CSV path (default trace.csv)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fixtures", help="list or export catalog fixtures")
    fsub = p.add_subparsers(dest="action", required=True)
    q = fsub.add_parser("list", help="print fixture names")
    q.add_argument("--instances", action="store_true", help="list multi-arm instances instead of single arms")
    q = fsub.add_parser("export", help="write a fixture as a model file")
    q.add_argument("name")
    q.add_argument("path")
    p.set_defaults(func=cmd_fixtures)
    return parser


def _load_source(args) -> ModelFile:
    if (args.model is None) == (args.fixture is None):
        raise UsageError("give exactly one of a model file or --fixture")
    if args.fixture is not None:
        if args.fixture not in ARM_FIXTURES and args.fixture not in INSTANCE_FIXTURES:
            raise UsageError(f"unknown fixture {args.fixture!r}")
        mf = parse_model(fixture_text(args.fixture))
    else:
        try:
            data = Path(args.model).read_bytes()
        except OSError as exc:
            raise UsageError(f"cannot read {args.model}: {exc.strerror}") from None
        mf = parse_model(data)
    if args.beta_override is not None:
        mf = ModelFile(
            {name: arm.with_discount(args.beta_override) for name, arm in mf.arms.items()},
            mf.instance_arms,
            mf.plays_per_step,
        )
    return mf


def _solver(args) -> SolverConfig:
    return SolverConfig(max_iterations=args.max_iters, value_tolerance=args.tol, action_tolerance=args.delta)


def _grid(args) -> SubsidyGrid | None:
    if args.grid_min is None and args.grid_max is None and args.grid_points is None:
        return None
    lo = -1.0 if args.grid_min is None else args.grid_min
    hi = 1.0 if args.grid_max is None else args.grid_max
    num = 201 if args.grid_points is None else args.grid_points
    return SubsidyGrid.linspace(lo, hi, num)


def cmd_index(args) -> int:
    mf = _load_source(args)
    arm = mf.arm(args.arm)
    report = compute_whittle_indices(arm, _grid(args), _solver(args), refine=args.refine)
    prefix = args.out or (args.fixture or Path(args.model).stem)
    write_csv(report.policy_matrix, f"{prefix}.policy.csv")
    write_csv(report, f"{prefix}.index.csv")
    if report.indexable:
        print("INDEXABLE")
    else:
        w = report.witnesses[0]
        print(f"NON-INDEXABLE state={w.state} lambdas={','.join(fmt(v) for v in w.subsidies)}")
    return EXIT_OK


def cmd_check(args) -> int:
    mf = _load_source(args)
    report = check_structural_conditions(mf.arm(args.arm))
    for name, val in report.as_dict().items():
        print(f"{name}={'true' if val else 'false'}")
    if args.out:
        write_csv(report, args.out)
    return EXIT_OK


def _instance(mf: ModelFile) -> RmabInstance:
    if mf.instance_arms is not None:
        return mf.instance()
    if len(mf.arms) == 1:
        return RmabInstance((mf.arm(),), 1)
    raise UsageError("model file has several arms but no instance block")


def _cached_indices(mf: ModelFile, instance: RmabInstance, args, cache_path: Path) -> IndexTable:
    """Load indices from the sidecar when present, computing and storing missing ones."""
    config, grid = _solver(args), _grid(args)
    tables = {}
    if cache_path.exists():
        tables = dict(parse_model(cache_path.read_bytes()).index_tables)
    names = mf.instance_arms or tuple(mf.arms)
    per_arm = []
    changed = False
    for name, arm in zip(names, instance.arms):
        key = arm_digest(arm, config, grid, refine=True)
        if key not in tables:
            report = compute_whittle_indices(arm, grid, config, refine=True)
            if not report.indexable:
                w = report.witnesses[0]
                raise ConfigurationError(
                    f"arm {name!r} is not indexable (state {w.state}); the Whittle policy needs indices"
                )
            tables[key] = {
                "arm": name,
                "whittle_index": [float(v) if np.isfinite(v) else None for v in report.whittle_index],
                "flags": list(report.index_flags),
            }
            changed = True
        entry = tables[key]
        per_arm.append(np.array([np.inf if v is None else v for v in entry["whittle_index"]], dtype=float))
    if changed:
        arms = {name: arm for name, arm in zip(names, instance.arms)}
        cache_path.write_text(serialize_model(ModelFile(arms, index_tables=tables)))
    return IndexTable(tuple(per_arm))


def cmd_simulate(args) -> int:
    mf = _load_source(args)
    instance = _instance(mf)
    out = Path(args.out)
    if args.policy == "myopic":
        policy = MyopicPolicy()
    elif args.policy == "whittle":
        cache = Path(args.index_cache) if args.index_cache else out.with_name(out.stem + ".indices.json")
        policy = WhittlePolicy(_cached_indices(mf, instance, args, cache))
    else:
        policy = RolloutPolicy(RolloutConfig(args.rollout_h, args.rollout_l, args.candidates, args.seed))
    initial = None
    if args.initial_state:
        try:
            initial = tuple(int(v) for v in args.initial_state.split(","))
        except ValueError:
            raise UsageError(f"bad --initial-state {args.initial_state!r}") from None
    config = SimulationConfig(
        policy=policy,
        horizon_steps=args.horizon,
        replications=args.reps,
        seed=args.seed,
        initial_state=initial,
    )
    trace = simulate(instance, config)
    write_csv(trace, out)
    print(f"{trace.policy} final_mean={fmt(trace.final_mean)} stderr={fmt(trace.final_std_error)}")
    return EXIT_OK


def cmd_fixtures(args) -> int:
    if args.action == "list":
        for name in fixture_names(instances=args.instances):
            print(name)
        return EXIT_OK
    if args.name not in ARM_FIXTURES and args.name not in INSTANCE_FIXTURES:
        raise UsageError(f"unknown fixture {args.name!r}")
    Path(args.path).write_text(fixture_text(args.name))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConvergenceError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (UsageError, ModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
