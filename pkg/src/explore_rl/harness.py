"""Experiment configuration, sweeps and summary tables.

A config is a JSON object. ``env``, ``algo`` and ``epsilon`` may each be a
single value or a list; the sweep is their cartesian product times the seeds.

    {
      "env": {"name": "hard"},
      "algo": [{"name": "ucb_q"},
               {"name": "delayed_q", "overrides": {"m_scale": 4, "tie_break": [1, 0]}}],
      "epsilon": [0.08, 0.04],
      "gamma": 0.9,
      "delta": 0.1,
      "T": 100000,
      "seeds": 5,
      "thresholds": [0.1, 0.2]
    }
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from explore_rl import env_zoo
from explore_rl.auditor import run_experiment
from explore_rl.delayed_q import DelayedQState
from explore_rl.errors import ConfigError, UsageError
from explore_rl.exact_planner import value_iteration
from explore_rl.mdp_core import Seed, TabularMdp, load_mdp
from explore_rl.rate_schedule import derive_params
from explore_rl.ucb_q import UcbQState

ENV_NAMES = ("hard", "random", "chain", "lift", "file")
ALGO_NAMES = ("ucb_q", "delayed_q")
WORKERS_ENV = "EXPLORE_RL_WORKERS"

_ENV_PARAMS = {
    "hard": {"epsilon"},
    "random": {"S", "A", "branching", "seed"},
    "chain": {"n"},
    "lift": {"S", "A", "horizon", "seed", "branching", "path"},
    "file": {"path"},
}
_ALGO_OVERRIDES = {
    "ucb_q": {"h_override", "zero_bonus"},
    "delayed_q": {"m", "m_scale", "eps1", "tie_break"},
}
_TOP_KEYS = {
    "env",
    "algo",
    "epsilon",
    "gamma",
    "delta",
    "T",
    "seeds",
    "eval_cadence",
    "output_dir",
    "thresholds",
    "record_every",
    "workers",
}

SUMMARY_COLUMNS = [
    "run_id",
    "env",
    "algo",
    "S",
    "A",
    "gamma",
    "epsilon",
    "delta",
    "seed",
    "T",
    "total_mistakes",
]
TAIL_COLUMNS = [
    "final_max_qhat_minus_qstar",
    "wall_time_ms",
    "derived_H",
    "derived_R",
    "derived_M",
    "derived_eps1",
    "status",
]


@dataclass(frozen=True)
class EnvSpec:
    name: str
    params: dict = field(default_factory=dict)

    @property
    def label(self) -> str:
        if not self.params:
            return self.name
        inner = ",".join(f"{k}={self.params[k]}" for k in sorted(self.params))
        return f"{self.name}({inner})"


@dataclass(frozen=True)
class AlgoSpec:
    name: str
    overrides: dict = field(default_factory=dict)

    @property
    def label(self) -> str:
        if not self.overrides:
            return self.name
        inner = ",".join(f"{k}={self.overrides[k]}" for k in sorted(self.overrides))
        return f"{self.name}({inner})"


@dataclass
class ExperimentConfig:
    envs: list
    algos: list
    epsilons: list
    gamma: float
    delta: float = 0.1
    T: int = 1_000_000
    seeds: list = field(default_factory=lambda: list(range(10)))
    eval_cadence: int = 1000
    output_dir: str = "runs"
    thresholds: list = field(default_factory=list)
    record_every: int = 100
    workers: Optional[int] = None

    def grid(self) -> list["RunSpec"]:
        runs = []
        for env, algo, eps, seed in itertools.product(self.envs, self.algos, self.epsilons, self.seeds):
            runs.append(
                RunSpec(
                    env=env,
                    algo=algo,
                    epsilon=eps,
                    gamma=self.gamma,
                    delta=self.delta,
                    T=self.T,
                    seed=seed,
                    eval_cadence=self.eval_cadence,
                    thresholds=tuple(self.thresholds),
                    record_every=self.record_every,
                )
            )
        runs.sort(key=lambda r: (r.env.label, r.algo.label, r.epsilon, r.seed))
        return runs


@dataclass(frozen=True)
class RunSpec:
    env: EnvSpec
    algo: AlgoSpec
    epsilon: float
    gamma: float
    delta: float
    T: int
    seed: int
    eval_cadence: int
    thresholds: tuple
    record_every: int

    @property
    def run_id(self) -> str:
        return f"{self.env.label}__{self.algo.label}__eps={self.epsilon!r}__seed={self.seed}"

    @property
    def file_stem(self) -> str:
        safe = "".join(c if c.isalnum() or c in "-_.=" else "_" for c in self.run_id)
        return safe


# -- config parsing ---------------------------------------------------------


def _listify(value):
    return list(value) if isinstance(value, list) else [value]


def _number(data, key, default=None, *, integer=False):
    if key not in data:
        if default is None:
            raise ConfigError(key, "required field is missing")
        return default
    value = data[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(key, f"expected a number, got {value!r}")
    if integer:
        if float(value) != int(value):
            raise ConfigError(key, f"expected an integer, got {value!r}")
        return int(value)
    return float(value)


def _parse_env(raw, idx) -> EnvSpec:
    where = f"env[{idx}]"
    if isinstance(raw, str):
        raw = {"name": raw}
    if not isinstance(raw, dict):
        raise ConfigError(where, "expected an object with 'name' and optional 'params'")
    unknown = set(raw) - {"name", "params"}
    if unknown:
        raise ConfigError(f"{where}.{sorted(unknown)[0]}", "unknown key")
    name = raw.get("name")
    if name not in ENV_NAMES:
        raise ConfigError(f"{where}.name", f"unknown environment {name!r}; choose from {', '.join(ENV_NAMES)}")
    params = dict(raw.get("params", {}))
    unknown = set(params) - _ENV_PARAMS[name]
    if unknown:
        raise ConfigError(f"{where}.params.{sorted(unknown)[0]}", f"unknown parameter for env {name!r}")
    if name == "file" and "path" not in params:
        raise ConfigError(f"{where}.params.path", "required for env 'file'")
    return EnvSpec(name, params)


def _parse_algo(raw, idx) -> AlgoSpec:
    where = f"algo[{idx}]"
    if isinstance(raw, str):
        raw = {"name": raw}
    if not isinstance(raw, dict):
        raise ConfigError(where, "expected an object with 'name' and optional 'overrides'")
    unknown = set(raw) - {"name", "overrides"}
    if unknown:
        raise ConfigError(f"{where}.{sorted(unknown)[0]}", "unknown key")
    name = raw.get("name")
    if name not in ALGO_NAMES:
        raise ConfigError(f"{where}.name", f"unknown algorithm {name!r}; choose from {', '.join(ALGO_NAMES)}")
    overrides = dict(raw.get("overrides", {}))
    unknown = set(overrides) - _ALGO_OVERRIDES[name]
    if unknown:
        raise ConfigError(f"{where}.overrides.{sorted(unknown)[0]}", f"unknown override for {name!r}")
    if "tie_break" in overrides:
        overrides["tie_break"] = tuple(overrides["tie_break"])
    return AlgoSpec(name, overrides)


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    unknown = set(data) - _TOP_KEYS
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(key, "unknown key")
    for key in ("env", "algo", "epsilon", "gamma"):
        if key not in data:
            raise ConfigError(key, "required field is missing")

    envs = [_parse_env(e, i) for i, e in enumerate(_listify(data["env"]))]
    algos = [_parse_algo(a, i) for i, a in enumerate(_listify(data["algo"]))]
    epsilons = []
    for i, e in enumerate(_listify(data["epsilon"])):
        if isinstance(e, bool) or not isinstance(e, (int, float)) or not e > 0:
            raise ConfigError(f"epsilon[{i}]", f"must be a positive number, got {e!r}")
        epsilons.append(float(e))
    gamma = _number(data, "gamma")
    delta = _number(data, "delta", 0.1)
    if not 0 < delta < 1:
        raise ConfigError("delta", f"must lie in (0,1), got {delta}")
    if not 0 < gamma < 1:
        raise ConfigError("gamma", f"must lie in (0,1), got {gamma}")
    if any(a.name == "ucb_q" for a in algos) and not 0.5 < gamma < 1:
        raise ConfigError("gamma", f"ucb_q requires 1/2 < gamma < 1 (range of its sample-complexity guarantee), got {gamma}")
    T = _number(data, "T", 1_000_000, integer=True)
    if T < 1:
        raise ConfigError("T", "must be >= 1")
    eval_cadence = _number(data, "eval_cadence", 1000, integer=True)
    if eval_cadence < 1:
        raise ConfigError("eval_cadence", "must be >= 1")
    record_every = _number(data, "record_every", 100, integer=True)
    if record_every < 1:
        raise ConfigError("record_every", "must be >= 1")

    seeds_raw = data.get("seeds", 10)
    if isinstance(seeds_raw, list):
        if not all(isinstance(s, int) and not isinstance(s, bool) and s >= 0 for s in seeds_raw):
            raise ConfigError("seeds", "list entries must be nonnegative integers")
        seeds = list(seeds_raw)
    elif isinstance(seeds_raw, int) and not isinstance(seeds_raw, bool) and seeds_raw >= 1:
        seeds = list(range(seeds_raw))
    else:
        raise ConfigError("seeds", f"expected a positive count or a list of seeds, got {seeds_raw!r}")

    thresholds = data.get("thresholds", [])
    if not isinstance(thresholds, list) or not all(
        isinstance(x, (int, float)) and not isinstance(x, bool) and x >= 0 for x in thresholds
    ):
        raise ConfigError("thresholds", "expected a list of nonnegative numbers")

    workers = data.get("workers")
    if workers is not None and (not isinstance(workers, int) or workers < 1):
        raise ConfigError("workers", "must be a positive integer")
    output_dir = data.get("output_dir", "runs")
    if not isinstance(output_dir, str):
        raise ConfigError("output_dir", "must be a string")

    for env in envs:
        if env.name == "hard":
            for eps in ([env.params["epsilon"]] if "epsilon" in env.params else epsilons):
                if not 0 < eps < 0.1:
                    raise ConfigError("epsilon", f"hard instance needs 0 < epsilon < 1/10, got {eps}")
            if not 0.5 < gamma < 1:
                raise ConfigError("gamma", "hard instance needs 1/2 < gamma < 1")
            for algo in algos:
                if algo.name != "delayed_q":
                    continue
                for eps in epsilons:
                    if not math.log(1.0 / delta) < eps**-2:
                        raise ConfigError(
                            "delta",
                            f"delayed_q on the hard instance needs ln(1/delta) < epsilon^-2; fails at epsilon={eps}",
                        )

    return ExperimentConfig(
        envs=envs,
        algos=algos,
        epsilons=epsilons,
        gamma=gamma,
        delta=delta,
        T=T,
        seeds=seeds,
        eval_cadence=eval_cadence,
        output_dir=output_dir,
        thresholds=[float(x) for x in thresholds],
        record_every=record_every,
        workers=workers,
    )


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError("<path>", f"config file {path} does not exist")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("<root>", f"not valid JSON: {exc}") from exc
    return config_from_dict(data)


# -- building environments and learners --------------------------------------


def build_env(spec: EnvSpec, epsilon: float, gamma: float) -> TabularMdp:
    p = spec.params
    if spec.name == "hard":
        return env_zoo.hard_instance(p.get("epsilon", epsilon), gamma)
    if spec.name == "random":
        return env_zoo.random_mdp(p.get("S", 5), p.get("A", 2), gamma, p.get("branching", 3), Seed(p.get("seed", 0)))
    if spec.name == "chain":
        return env_zoo.chain_mdp(p.get("n", 5), gamma)
    if spec.name == "lift":
        if "path" in p:
            fh = env_zoo.load_finite_horizon(p["path"])
        else:
            fh = env_zoo.random_finite_horizon(
                p.get("S", 3), p.get("A", 2), p.get("horizon", 3), Seed(p.get("seed", 0)), p.get("branching")
            )
        return env_zoo.lift_finite_horizon(fh)
    if spec.name == "file":
        return load_mdp(p["path"])
    raise UsageError(f"unknown environment {spec.name!r}")


def build_learner(spec: AlgoSpec, mdp: TabularMdp, epsilon: float, gamma: float, delta: float):
    o = spec.overrides
    if spec.name == "ucb_q":
        return UcbQState(
            mdp.shape,
            derive_params(epsilon, mdp.discount, delta),
            h_override=o.get("h_override"),
            zero_bonus=bool(o.get("zero_bonus", False)),
        )
    if spec.name == "delayed_q":
        m = o.get("m")
        if m is None and "m_scale" in o:
            m = math.ceil(o["m_scale"] / epsilon**2)
        return DelayedQState(
            mdp.shape, mdp.discount, epsilon, delta, m, eps1=o.get("eps1"), tie_break=o.get("tie_break")
        )
    raise UsageError(f"unknown algorithm {spec.name!r}")


def _derived_columns(epsilon, gamma, delta) -> dict:
    try:
        dp = derive_params(epsilon, gamma, delta)
    except UsageError:
        return {"derived_H": "", "derived_R": "", "derived_M": "", "derived_eps1": ""}
    return {
        "derived_H": dp.h_rate,
        "derived_R": dp.r_horizon,
        "derived_M": dp.m_segments,
        "derived_eps1": dp.epsilon1,
    }


def threshold_column(th: float) -> str:
    return f"mistakes_gt_{th!r}"


def summary_columns(thresholds) -> list[str]:
    return SUMMARY_COLUMNS + [threshold_column(t) for t in thresholds] + TAIL_COLUMNS


def execute_run(run: RunSpec, output_dir: Optional[str] = None) -> dict:
    """Run one grid point; never raises, failures come back as a row with status='error: ...'."""
    row: dict[str, Any] = {
        "run_id": run.run_id,
        "env": run.env.label,
        "algo": run.algo.label,
        "S": "",
        "A": "",
        "gamma": run.gamma,
        "epsilon": run.epsilon,
        "delta": run.delta,
        "seed": run.seed,
        "T": run.T,
        "total_mistakes": "",
        "final_max_qhat_minus_qstar": "",
        "wall_time_ms": "",
        "status": "ok",
    }
    for th in run.thresholds:
        row[threshold_column(th)] = ""
    row.update(_derived_columns(run.epsilon, run.gamma, run.delta))
    start = time.perf_counter()
    try:
        mdp = build_env(run.env, run.epsilon, run.gamma)
        row["S"], row["A"] = mdp.num_states, mdp.num_actions
        learner = build_learner(run.algo, mdp, run.epsilon, mdp.discount, run.delta)
        header = {
            "run_id": run.run_id,
            "env": run.env.label,
            "algo": run.algo.label,
            "epsilon": run.epsilon,
            "gamma": mdp.discount,
            "delta": run.delta,
            "seed": run.seed,
            "T": run.T,
            "eval_cadence": run.eval_cadence,
            "derived": {k: row[k] for k in ("derived_H", "derived_R", "derived_M", "derived_eps1")},
        }
        if isinstance(learner, DelayedQState):
            header["delayed_q"] = {"m": learner.m if learner.m != math.inf else None, "eps1": learner.eps1}
        trace = run_experiment(
            mdp,
            learner,
            run.T,
            run.epsilon,
            Seed(run.seed).child(f"{run.env.label}|{run.algo.label}|{run.epsilon!r}"),
            run.eval_cadence,
            record_every=run.record_every,
            thresholds=run.thresholds,
            optimal=value_iteration(mdp),
            params=header,
        )
        row["total_mistakes"] = trace.total_mistakes
        for th in run.thresholds:
            row[threshold_column(th)] = trace.threshold_counts[float(th)]
        row["final_max_qhat_minus_qstar"] = trace.final_max_qhat_minus_qstar
        if output_dir is not None:
            _atomic_write(Path(output_dir) / "traces" / f"{run.file_stem}.jsonl", trace.to_jsonl())
    except Exception as exc:  # per-run failures must not abort the sweep
        row["status"] = f"error: {type(exc).__name__}: {exc}"
    row["wall_time_ms"] = round((time.perf_counter() - start) * 1000.0, 3)
    return row


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    tmp.write_text(text)
    os.replace(tmp, path)


def resolve_workers(config: ExperimentConfig, workers: Optional[int] = None) -> int:
    n = workers or config.workers or os.cpu_count() or 1
    cap = os.environ.get(WORKERS_ENV)
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def _execute_star(args):
    return execute_run(*args)


def run_sweep(config: ExperimentConfig, *, workers: Optional[int] = None, write: bool = True) -> list[dict]:
    """Run every grid point; writes ``summary.csv`` and per-run JSONL traces when ``write``."""
    runs = config.grid()
    out = config.output_dir if write else None
    n = min(resolve_workers(config, workers), len(runs))
    if n <= 1:
        rows = [execute_run(r, out) for r in runs]
    else:
        with ProcessPoolExecutor(max_workers=n) as pool:
            rows = list(pool.map(_execute_star, [(r, out) for r in runs]))
    if write:
        _atomic_write(Path(config.output_dir) / "summary.csv", summary_csv(rows, config.thresholds))
    return rows


def summary_csv(rows: list[dict], thresholds) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=summary_columns(thresholds), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(v) for k, v in row.items()})
    return buf.getvalue()


def _fmt(v):
    return repr(v) if isinstance(v, float) else v


# -- aggregation ---------------------------------------------------------------


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def plot_data(rows: list[dict], x: str, y: str, group_by) -> list[dict]:
    """Median and quartiles of ``y`` per (group_by..., x) group, as tidy rows."""
    if not rows:
        return []
    group_by = [g for g in group_by if g != x]
    for col in [x, y, *group_by]:
        if col not in rows[0]:
            raise UsageError(f"unknown column {col!r}; available: {', '.join(rows[0])}")
    groups: dict[tuple, list[float]] = {}
    for row in rows:
        if row.get("status", "ok") not in ("ok", ""):
            continue
        if row[y] in ("", None):
            continue
        key = tuple(row[g] for g in group_by) + (row[x],)
        groups.setdefault(key, []).append(float(row[y]))
    out = []
    for key in sorted(groups, key=lambda k: tuple(_sort_key(v) for v in k)):
        vals = np.asarray(groups[key])
        q25, med, q75 = np.percentile(vals, [25, 50, 75])
        rec = dict(zip(group_by, key[:-1]))
        rec[x] = key[-1]
        rec.update({"n": len(vals), "median": float(med), "q25": float(q25), "q75": float(q75)})
        out.append(rec)
    return out


def _sort_key(v):
    try:
        return (0, float(v), "")
    except (TypeError, ValueError):
        return (1, 0.0, str(v))


def loglog_slopes(tidy: list[dict], x: str, group_by, y: str = "median", invert_x: bool = False) -> list[dict]:
    """Least-squares slope of log(y) on log(x) (or log(1/x)) per group; nonpositive points are dropped."""
    group_by = [g for g in group_by if g != x]
    groups: dict[tuple, list[tuple[float, float]]] = {}
    for rec in tidy:
        groups.setdefault(tuple(rec[g] for g in group_by), []).append((float(rec[x]), float(rec[y])))
    out = []
    for key, pts in groups.items():
        pts = [(xv, yv) for xv, yv in pts if xv > 0 and yv > 0]
        slope = math.nan
        if len(pts) >= 2:
            lx = np.log([1.0 / xv if invert_x else xv for xv, _ in pts])
            ly = np.log([yv for _, yv in pts])
            if np.ptp(lx) > 0:
                slope = float(np.polyfit(lx, ly, 1)[0])
        rec = dict(zip(group_by, key))
        rec.update({"slope": slope, "points": len(pts)})
        out.append(rec)
    return out


def rows_to_csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(v) for k, v in row.items()})
    return buf.getvalue()
