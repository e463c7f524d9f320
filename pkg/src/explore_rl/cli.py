"""Command-line entry point: ``explore-rl <command> ...``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from explore_rl import env_zoo, harness
from explore_rl.errors import ConfigError, InvalidMdpError, UsageError
from explore_rl.mdp_core import Seed, save_mdp
from explore_rl.rate_schedule import derive_params


def _cmd_run(args) -> int:
    config = harness.parse_config(args.config)
    runs = config.grid()
    if args.seed is not None:
        runs = [r for r in runs if r.seed == args.seed]
    points = {(r.env.label, r.algo.label, r.epsilon) for r in runs}
    if len(points) != 1:
        raise ConfigError("<grid>", f"'run' needs a single env/algo/epsilon, config has {len(points)}; use 'sweep'")
    run = runs[0]
    out = args.output_dir or config.output_dir
    row = harness.execute_run(run, out)
    print(json.dumps(row, sort_keys=True))
    return 0 if row["status"] == "ok" else 1


def _cmd_sweep(args) -> int:
    config = harness.parse_config(args.config)
    if args.output_dir:
        config.output_dir = args.output_dir
    rows = harness.run_sweep(config, workers=args.workers)
    failed = [r for r in rows if r["status"] != "ok"]
    print(f"{len(rows)} runs, {len(failed)} failed; summary at {Path(config.output_dir) / 'summary.csv'}")
    return 0 if not failed else 1


def _cmd_plot_data(args) -> int:
    rows = harness.read_csv(args.csv)
    group_by = [g for g in (args.group_by or "").split(",") if g]
    tidy = harness.plot_data(rows, args.x, args.y, group_by)
    text = harness.rows_to_csv(tidy)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    if args.slopes:
        slopes = harness.loglog_slopes(tidy, args.x, group_by, invert_x=args.invert_x)
        Path(args.slopes).write_text(harness.rows_to_csv(slopes))
    return 0


def _parse_kv(items) -> dict:
    params = {}
    for item in items:
        if "=" not in item:
            raise UsageError(f"expected key=value, got {item!r}")
        key, value = item.split("=", 1)
        try:
            params[key] = json.loads(value)
        except json.JSONDecodeError:
            params[key] = value
    return params


def _cmd_gen_env(args) -> int:
    p = _parse_kv(args.params)
    gamma = p.get("gamma", 0.9)
    name = args.name
    if name == "hard":
        mdp = env_zoo.hard_instance(p.get("epsilon", 0.05), gamma)
    elif name == "random":
        mdp = env_zoo.random_mdp(p.get("S", 5), p.get("A", 2), gamma, p.get("branching", 3), Seed(p.get("seed", 0)))
    elif name == "chain":
        mdp = env_zoo.chain_mdp(p.get("n", 5), gamma)
    elif name == "lift":
        fh = env_zoo.random_finite_horizon(
            p.get("S", 3), p.get("A", 2), p.get("horizon", 3), Seed(p.get("seed", 0)), p.get("branching")
        )
        mdp = env_zoo.lift_finite_horizon(fh)
    else:
        raise UsageError(f"unknown environment {name!r}")
    save_mdp(mdp, args.output)
    return 0


def _cmd_derive_params(args) -> int:
    print(json.dumps(derive_params(args.epsilon, args.gamma, args.delta).to_dict(), indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="explore-rl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a single configuration")
    p.add_argument("config")
    p.add_argument("--seed", type=int)
    p.add_argument("--output-dir")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="run the full grid of a configuration")
    p.add_argument("config")
    p.add_argument("--workers", type=int)
    p.add_argument("--output-dir")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("plot-data", help="aggregate a summary CSV into medians and quartiles")
    p.add_argument("csv")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--group-by", default="", help="comma-separated columns")
    p.add_argument("-o", "--output")
    p.add_argument("--slopes", help="also write log-log slopes of median vs x per group to this file")
    p.add_argument("--invert-x", action="store_true", help="fit against log(1/x) instead of log(x)")
    p.set_defaults(func=_cmd_plot_data)

    p = sub.add_parser("gen-env", help="write a benchmark MDP as JSON")
    p.add_argument("name", choices=["hard", "random", "chain", "lift"])
    p.add_argument("params", nargs="*", help="key=value pairs, e.g. epsilon=0.05 gamma=0.9")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_gen_env)

    p = sub.add_parser("derive-params", help="print the derived UCB-Q parameters as JSON")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.set_defaults(func=_cmd_derive_params)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, UsageError, InvalidMdpError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
