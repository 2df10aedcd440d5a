"""Experiment recipes and report writers behind the command line.

Every task (case, sweep value, trial) is a pure function of the config and
seed, so tasks can fan out to worker processes and still produce
byte-identical CSV files once rows are sorted.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .fp_core import nats_to_bits
from .oracle import OracleBudget, evaluate_fixed_ris, exhaustive_ms
from .scenario import RNG_ALGORITHM, LinkParams, ScenarioSpec, build_channels, trial_rngs
from .solver import PenaltySchedule, solve
from .star_mode import InvalidGrid, StarConfig

SWEEP_PARAMETERS = ("p_bs_dbm", "m_elements", "levels")

RUN_HEADER = [
    "case", "config", "sweep_parameter", "sweep_value", "trial", "source",
    "sum_rate_bits", "sum_rate_raw_bits", "i_pen", "i_bcd", "converged", "final_residual",
]
AGG_HEADER = [
    "case", "config", "sweep_parameter", "sweep_value", "source", "n",
    "mean_sum_rate_bits", "std_sum_rate_bits",
]
TRACE_HEADER = [
    "case", "trial", "round", "bcd_pass", "gamma", "penalized_objective_nats", "sum_rate_bits", "residual",
]
ORACLE_HEADER = [
    "case", "config", "sweep_parameter", "sweep_value", "trial", "source", "sum_rate_bits", "relative_gap",
]


class ConfigError(ValueError):
    pass


@dataclass
class SweepSpec:
    parameter: str
    values: list


@dataclass
class ExperimentConfig:
    scenario: ScenarioSpec = field(default_factory=ScenarioSpec)
    cases: list = field(default_factory=lambda: list(range(1, 9)))
    levels: int = 2
    coupled_levels: int = 4
    schedule: PenaltySchedule = field(default_factory=PenaltySchedule)
    trials: int = 1
    seed: int = 0
    sweep: SweepSpec | None = None
    output_dir: str = "out"
    oracle: OracleBudget = field(default_factory=OracleBudget)

    def star_config(self, case: int, levels: int | None = None) -> StarConfig:
        L = self.levels if levels is None else levels
        CL = self.coupled_levels if levels is None else levels
        return StarConfig.from_case(case, L, CL)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario.to_dict(),
            "cases": list(self.cases),
            "levels": self.levels,
            "coupled_levels": self.coupled_levels,
            "schedule": asdict(self.schedule),
            "trials": self.trials,
            "seed": self.seed,
            "sweep": None if self.sweep is None else asdict(self.sweep),
            "output_dir": self.output_dir,
            "oracle": asdict(self.oracle),
        }


def _build(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{path}: unknown field(s) {', '.join(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def config_from_dict(data: dict) -> ExperimentConfig:
    """Validate a parsed JSON document into an :class:`ExperimentConfig`."""
    if not isinstance(data, dict):
        raise ConfigError("config: top level must be an object")
    data = dict(data)
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"config: unknown field(s) {', '.join(unknown)}")
    kw = {}
    if "scenario" in data:
        sc = dict(data["scenario"]) if isinstance(data["scenario"], dict) else data["scenario"]
        if isinstance(sc, dict):
            for key in ("exponents", "rician"):
                if key in sc:
                    sc[key] = _build(LinkParams, sc[key], f"scenario.{key}")
        kw["scenario"] = _build(ScenarioSpec, sc, "scenario")
    if "schedule" in data:
        kw["schedule"] = _build(PenaltySchedule, data["schedule"], "schedule")
    if "oracle" in data:
        kw["oracle"] = _build(OracleBudget, data["oracle"], "oracle")
    if data.get("sweep") is not None:
        sw = _build(SweepSpec, data["sweep"], "sweep")
        if sw.parameter not in SWEEP_PARAMETERS:
            raise ConfigError(f"sweep.parameter: must be one of {', '.join(SWEEP_PARAMETERS)}")
        if not isinstance(sw.values, list) or not sw.values:
            raise ConfigError("sweep.values: must be a nonempty list")
        kw["sweep"] = sw
    for key in ("cases", "levels", "coupled_levels", "trials", "seed", "output_dir"):
        if key in data:
            kw[key] = data[key]
    cfg = ExperimentConfig(**kw)
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig):
    if not isinstance(cfg.trials, int) or cfg.trials < 1:
        raise ConfigError("trials: must be an integer >= 1")
    if not isinstance(cfg.seed, int) or cfg.seed < 0:
        raise ConfigError("seed: must be a nonnegative integer")
    if not isinstance(cfg.cases, list) or not cfg.cases:
        raise ConfigError("cases: must be a nonempty list")
    for c in cfg.cases:
        if c not in range(1, 9) or isinstance(c, bool):
            raise ConfigError(f"cases: index {c!r} is not in 1..8")
    level_values = [None]
    if cfg.sweep is not None and cfg.sweep.parameter == "levels":
        level_values = cfg.sweep.values
    for L in level_values:
        for c in cfg.cases:
            try:
                cfg.star_config(c, L)
            except (InvalidGrid, ValueError) as exc:
                where = "sweep.values" if L is not None else "levels"
                raise ConfigError(f"{where}: case {c}: {exc}") from None
    if cfg.sweep is not None and cfg.sweep.parameter == "m_elements":
        if any(not isinstance(v, int) or v < 1 for v in cfg.sweep.values):
            raise ConfigError("sweep.values: m_elements must be integers >= 1")


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return config_from_dict(data)


# ---------------------------------------------------------------------------
# tasks


@dataclass(frozen=True)
class Task:
    case: int
    sweep_value: object
    trial: int


def _task_setup(cfg: ExperimentConfig, task: Task):
    spec = cfg.scenario
    levels = None
    if cfg.sweep is not None:
        if cfg.sweep.parameter == "p_bs_dbm":
            spec = dataclasses.replace(spec, p_bs_dbm=float(task.sweep_value))
        elif cfg.sweep.parameter == "m_elements":
            spec = dataclasses.replace(spec, m_elements=int(task.sweep_value))
        else:
            levels = int(task.sweep_value)
    star = cfg.star_config(task.case, levels)
    ch_rng, init_rng = trial_rngs(cfg.seed, task.trial)
    ch = build_channels(spec, ch_rng)
    return star, ch, init_rng


def run_task(cfg: ExperimentConfig, task: Task, keep_trace: bool = False) -> dict:
    star, ch, init_rng = _task_setup(cfg, task)
    rep = solve(ch, star, cfg.schedule, init_rng)
    out = {
        "task": task,
        "config": star.label(),
        "sum_rate_bits": rep.final_sum_rate_feasible,
        "sum_rate_raw_bits": rep.final_sum_rate_raw,
        "i_pen": rep.i_pen,
        "i_bcd": rep.i_bcd,
        "converged": rep.converged,
        "final_residual": rep.residual_trace[-1] if rep.residual_trace else float("nan"),
        "wall_time": rep.wall_time,
    }
    if keep_trace:
        out["trace"] = [asdict(r) for r in rep.trace]
        out["report"] = rep.to_dict()
    return out


def oracle_task(cfg: ExperimentConfig, task: Task) -> dict:
    star, ch, init_rng = _task_setup(cfg, task)
    t0 = time.perf_counter()
    rep = solve(ch, star, cfg.schedule, init_rng)
    t1 = time.perf_counter()
    _, best_bits, n_cand = exhaustive_ms(ch, star.phase.levels, cfg.oracle)
    t2 = time.perf_counter()
    # score the solver's setting with the oracle's own evaluator so both
    # numbers come from identical beamforming iterations
    feas = rep.final_feasible
    solver_bits = float(nats_to_bits(evaluate_fixed_ris(ch, feas.v_t[None], feas.v_r[None], cfg.oracle)[0]))
    gap = (best_bits - solver_bits) / best_bits if best_bits > 0 else 0.0
    return {
        "task": task,
        "config": star.label(),
        "solver_bits": solver_bits,
        "oracle_bits": best_bits,
        "gap": gap,
        "n_candidates": n_cand,
        "converged": rep.converged,
        "solver_time": t1 - t0,
        "oracle_time": t2 - t1,
    }


def _tasks(cfg: ExperimentConfig, cases=None):
    cases = cfg.cases if cases is None else cases
    values = [None] if cfg.sweep is None else cfg.sweep.values
    return [Task(c, v, t) for c in sorted(cases) for v in values for t in range(cfg.trials)]


def _sort_key(task: Task):
    v = task.sweep_value
    return (task.case, float("-inf") if v is None else float(v), task.trial)


def execute(fn, cfg, tasks, workers=1, **kw):
    """Run ``fn(cfg, task)`` over tasks, returning results in sorted order."""
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(fn, cfg, t, **kw) for t in tasks]
            results = [f.result() for f in futures]
    else:
        results = [fn(cfg, t, **kw) for t in tasks]
    return sorted(results, key=lambda r: _sort_key(r["task"]))


# ---------------------------------------------------------------------------
# writers


def fmt(x) -> str:
    """Shortest round-trip text for floats; plain text otherwise."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if x is None:
        return ""
    return str(x)


def write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([fmt(v) for v in row])


def _sweep_cols(cfg, task):
    return (cfg.sweep.parameter if cfg.sweep else "", task.sweep_value)


def run_rows(cfg, results):
    for r in results:
        t = r["task"]
        yield (t.case, r["config"], *_sweep_cols(cfg, t), t.trial, "solver",
               r["sum_rate_bits"], r["sum_rate_raw_bits"], r["i_pen"], r["i_bcd"],
               r["converged"], r["final_residual"])


def aggregate_rows(cfg, results, value_key="sum_rate_bits", source="solver"):
    cells = {}
    for r in results:
        t = r["task"]
        key = (t.case, r["config"], t.sweep_value)
        cells.setdefault(key, []).append(r[value_key])
    for (case, label, sv), vals in sorted(cells.items(), key=lambda kv: (kv[0][0], _sort_key(Task(0, kv[0][2], 0)))):
        arr = np.asarray(vals, dtype=float)
        yield (case, label, cfg.sweep.parameter if cfg.sweep else "", sv, source, arr.size,
               float(arr.mean()), float(arr.std()))


def write_manifest(out_dir: Path, cfg: ExperimentConfig, command: str, extra: dict):
    from . import __version__

    doc = {
        "command": command,
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "rng": RNG_ALGORITHM,
        "versions": {
            "starris": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }
    doc.update(extra)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "manifest.json").write_text(json.dumps(doc, indent=2, default=str) + "\n")


# ---------------------------------------------------------------------------
# recipes


def run_experiment(cfg: ExperimentConfig, out_dir: Path, command="run", cases=None, workers=1):
    """Solve every (case, sweep value, trial) cell and write runs.csv,
    aggregate.csv and manifest.json. Returns the result list."""
    t0 = time.perf_counter()
    results = execute(run_task, cfg, _tasks(cfg, cases), workers)
    write_csv(out_dir / "runs.csv", RUN_HEADER, run_rows(cfg, results))
    write_csv(out_dir / "aggregate.csv", AGG_HEADER, aggregate_rows(cfg, results))
    write_manifest(out_dir, cfg, command, {
        "n_tasks": len(results),
        "not_converged": sum(not r["converged"] for r in results),
        "wall_time_total": time.perf_counter() - t0,
        "wall_time_per_task": [
            {"case": r["task"].case, "sweep_value": r["task"].sweep_value, "trial": r["task"].trial,
             "seconds": r["wall_time"]} for r in results
        ],
    })
    return results


def trace_experiment(cfg: ExperimentConfig, out_dir: Path, case: int | None = None, trial: int = 0):
    """Per-pass convergence trace of one solve, written to trace.csv."""
    case = cfg.cases[0] if case is None else case
    sv = None if cfg.sweep is None else cfg.sweep.values[0]
    t0 = time.perf_counter()
    res = run_task(cfg, Task(case, sv, trial), keep_trace=True)
    rows = [(case, trial, r["round"], r["bcd_pass"], r["gamma"], r["penalized_objective_nats"],
             r["sum_rate_bits"], r["residual"]) for r in res["trace"]]
    write_csv(out_dir / "trace.csv", TRACE_HEADER, rows)
    write_manifest(out_dir, cfg, "trace", {
        "case": case,
        "trial": trial,
        "i_pen": res["i_pen"],
        "i_bcd": res["i_bcd"],
        "converged": res["converged"],
        "wall_time_total": time.perf_counter() - t0,
        "solve_wall_time": res["wall_time"],
    })
    return res


def oracle_experiment(cfg: ExperimentConfig, out_dir: Path, workers=1):
    """Solver versus exhaustive MS search on every configured cell.

    Only discrete MS (case 4) is meaningful; other cases are rejected.
    """
    if any(c != 4 for c in cfg.cases):
        raise ConfigError("cases: oracle-compare needs discrete MS, i.e. cases = [4]")
    t0 = time.perf_counter()
    results = execute(oracle_task, cfg, _tasks(cfg), workers)
    rows = []
    for r in results:
        t = r["task"]
        base = (t.case, r["config"], *_sweep_cols(cfg, t), t.trial)
        rows.append(base + ("solver", r["solver_bits"], r["gap"]))
        rows.append(base + ("oracle", r["oracle_bits"], 0.0))
    write_csv(out_dir / "oracle_runs.csv", ORACLE_HEADER, rows)
    agg = list(aggregate_rows(cfg, results, "solver_bits", "solver"))
    agg += list(aggregate_rows(cfg, results, "oracle_bits", "oracle"))
    agg += list(aggregate_rows(cfg, results, "gap", "relative_gap"))
    agg.sort(key=lambda r: (r[0], float("-inf") if r[3] is None else float(r[3]), r[4]))
    write_csv(out_dir / "aggregate.csv", AGG_HEADER, agg)
    write_manifest(out_dir, cfg, "oracle-compare", {
        "n_tasks": len(results),
        "mean_gap": float(np.mean([r["gap"] for r in results])),
        "max_solver_excess_bits": float(max(r["solver_bits"] - r["oracle_bits"] for r in results)),
        "wall_time_total": time.perf_counter() - t0,
        "wall_time_per_task": [
            {"case": r["task"].case, "sweep_value": r["task"].sweep_value, "trial": r["task"].trial,
             "solver_seconds": r["solver_time"], "oracle_seconds": r["oracle_time"]} for r in results
        ],
    })
    return results
