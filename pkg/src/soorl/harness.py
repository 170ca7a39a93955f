"""Seeded experiment orchestration and CSV output.

A run is one (mode, seed) pair: a fresh environment and agent played for up
to ``episodes`` episodes.  Rows are written in (mode, seed, episode) order
whatever order the runs finish in, so identical configs give identical
files.
"""

from __future__ import annotations

import copy
import csv
import io
import json
import logging
import math
import os
import re
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

from .agent import SoorlAgent, SoorlConfig
from .envs.kernel_paddle import KernelPaddle
from .envs.mini_pitfall import JUMP_LEFT, JUMP_RIGHT, MiniPitfall
from .envs.pong_prime import DOWN, UP, PongPrime
from .planning import Mode, PlannerConfig

logger = logging.getLogger(__name__)

ENVS = {"mini-pitfall": MiniPitfall, "pong-prime": PongPrime, "kernel-paddle": KernelPaddle}
DEFAULT_MACROS = {
    "mini-pitfall": {JUMP_LEFT: 8, JUMP_RIGHT: 8},
    "pong-prime": {UP: 2, DOWN: 2},
    "kernel-paddle": {},
}
CONSISTENT_RUN = 3

ROW_COLUMNS = [
    "run_id", "env", "mode", "seed", "episode", "return", "steps", "reached_goal",
    "model_backoffs", "selected_feature_sets", "episodes_to_consistent_goal",
]
SUMMARY_COLUMNS = [
    "env", "mode", "runs", "runs_consistent", "consistent_mean", "consistent_std",
    "return_mean", "return_std",
]


class ConfigError(ValueError):
    """Invalid experiment configuration."""


PLANNER_KEYS = {"depth", "ucb_c", "gamma", "r_max", "searches", "rollouts", "models", "expand_one"}
AGENT_KEYS = {"grid", "beta", "epsilon_ent", "alpha", "history_t", "model_class", "leaf_value"}
TOP_KEYS = {
    "env", "modes", "seeds", "episodes", "planner", "agent", "macros", "output_dir",
    "run_id", "stop_on_consistent", "workers", "trajectories", "trace",
}


@dataclass
class ExperimentConfig:
    env: str
    seeds: list
    modes: list = field(default_factory=lambda: ["optimism"])
    episodes: int = 30
    planner: dict = field(default_factory=dict)
    agent: dict = field(default_factory=dict)
    macros: Optional[dict] = None
    output_dir: str = "results"
    run_id: str = "run"
    stop_on_consistent: bool = False
    workers: int = 1
    trajectories: bool = False
    trace: bool = False

    def validate(self) -> "ExperimentConfig":
        if self.env not in ENVS:
            raise ConfigError(f"env: unknown environment {self.env!r} (known: {sorted(ENVS)})")
        if not self.seeds:
            raise ConfigError("seeds: at least one seed is required")
        if not all(isinstance(s, int) for s in self.seeds):
            raise ConfigError("seeds: must be integers")
        if not self.modes:
            raise ConfigError("modes: at least one mode is required")
        for m in self.modes:
            try:
                Mode(m)
            except ValueError:
                raise ConfigError(f"modes: unknown mode {m!r}") from None
        if self.episodes < 1:
            raise ConfigError("episodes: must be positive")
        if self.workers < 1:
            raise ConfigError("workers: must be positive")
        _check_keys(self.planner, PLANNER_KEYS, "planner")
        _check_keys(self.agent, AGENT_KEYS, "agent")
        for m in self.modes:
            try:
                self.planner_config(m)
            except ValueError as exc:
                raise ConfigError(f"planner: {exc}") from None
        try:
            self.soorl_config("optimism")
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"agent: {exc}") from None
        env_cls = ENVS[self.env]
        if self.agent.get("model_class") == "oracle" and not (
            hasattr(env_cls, "oracle_model_class") or self.env == "pong-prime"
        ):
            raise ConfigError(f"agent.model_class: {self.env} has no oracle model class")
        return self

    def resolved_macros(self) -> dict:
        env_cls = ENVS[self.env]
        table = DEFAULT_MACROS[self.env] if self.macros is None else self.macros
        names = list(env_cls.action_names)
        out = {}
        for k, v in table.items():
            if isinstance(k, str) and not k.isdigit():
                if k not in names:
                    raise ConfigError(f"macros.{k}: unknown action (known: {names})")
                k = names.index(k)
            k = int(k)
            if not 0 <= k < len(names) or not isinstance(v, int) or v < 0:
                raise ConfigError(f"macros.{k}: need a valid action and a non-negative no-op count")
            out[k] = v
        return out

    def planner_config(self, mode: str) -> PlannerConfig:
        p = self.planner
        env_cls = ENVS[self.env]
        kw = dict(
            depth_d=p.get("depth", 10),
            ucb_c=p.get("ucb_c", 1.0),
            gamma=p.get("gamma", 0.99),
            r_max=p.get("r_max", 10.0 * env_cls.max_reward),
            expand_one=bool(p.get("expand_one", False)),
        )
        mode = Mode(mode)
        if "rollouts" in p or "models" in p:
            L = p.get("rollouts", 1 if mode is Mode.BAMCP else 500)
            K = p.get("models", 1)
            return PlannerConfig(rollouts_L=L, models_K=K, mode=mode, **kw)
        return PlannerConfig.for_mode(mode, p.get("searches", 500), **kw)

    def soorl_config(self, mode: str) -> SoorlConfig:
        a = self.agent
        return SoorlConfig(
            planner=self.planner_config(mode),
            grid=tuple(a.get("grid", (10, 8))),
            beta=a.get("beta", 1.0),
            epsilon_ent=a.get("epsilon_ent", 0.05),
            alpha=a.get("alpha", 0.5),
            history_t=a.get("history_t", 1),
            model_class=a.get("model_class", "learned"),
            leaf_value=a.get("leaf_value", True),
            macros=self.resolved_macros(),
        )

    def to_json(self) -> dict:
        return asdict(self)


def _check_keys(d: dict, allowed: set, where: str) -> None:
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    for k in d:
        if k not in allowed:
            raise ConfigError(f"{where}.{k}: unknown key (allowed: {sorted(allowed)})")


def _line_of(text: str, key: str) -> Optional[int]:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    def no_duplicates(pairs):
        seen = {}
        for k, v in pairs:
            if k in seen:
                raise ConfigError(f"{source}: duplicate key {k!r} (line {_line_of(text, k)})")
            seen[k] = v
        return seen

    try:
        data = json.loads(text, object_pairs_hook=no_duplicates)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be an object")
    for section, allowed in (("", TOP_KEYS), ("planner", PLANNER_KEYS), ("agent", AGENT_KEYS)):
        d = data if not section else data.get(section, {})
        if not isinstance(d, dict):
            raise ConfigError(f"{source}: {section} must be an object")
        for k in d:
            if k not in allowed:
                path = f"{section}.{k}" if section else k
                raise ConfigError(
                    f"{source}: unknown key {path!r} at line {_line_of(text, k)} "
                    f"(allowed: {sorted(allowed)})"
                )
    for required in ("env", "seeds"):
        if required not in data:
            raise ConfigError(f"{source}: missing required key {required!r}")
    try:
        cfg = ExperimentConfig(**data)
    except TypeError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return cfg.validate()


def parse_config(path: str | os.PathLike, echo: bool = True) -> ExperimentConfig:
    """Strictly parse a JSON experiment config and echo the resolved version."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc}") from None
    cfg = parse_config_text(text, str(path))
    if os.environ.get("SOORL_OUT"):
        cfg.output_dir = os.environ["SOORL_OUT"]
    if echo:
        write_resolved_config(cfg)
    return cfg


def resolved_config(cfg: ExperimentConfig) -> dict:
    out = cfg.to_json()
    out["macros"] = {str(k): v for k, v in cfg.resolved_macros().items()}
    out["resolved"] = {
        m: {
            "planner": {**asdict(cfg.planner_config(m)), "mode": m},
            "agent": {
                k: v for k, v in asdict(cfg.soorl_config(m)).items() if k not in ("planner", "macros")
            },
        }
        for m in cfg.modes
    }
    return out


def write_resolved_config(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{cfg.run_id}.resolved.json"
    path.write_text(json.dumps(resolved_config(cfg), indent=2, sort_keys=True) + "\n")
    return path


# -- running -------------------------------------------------------------------


def episode_seed(seed: int, episode: int) -> int:
    return seed * 100_003 + episode


def consistent_goal_episode(goals: Sequence[bool], run: int = CONSISTENT_RUN) -> Optional[int]:
    """First 1-based episode e with goals at e, e+1, ..., e+run-1."""
    streak = 0
    for i, g in enumerate(goals):
        streak = streak + 1 if g else 0
        if streak == run:
            return i - run + 2
    return None


def run_single(cfg: ExperimentConfig, mode: str, seed: int) -> dict:
    """Play one (mode, seed) run; returns rows plus optional logs."""
    env = ENVS[cfg.env]()
    agent = SoorlAgent(env, cfg.soorl_config(mode), seed=seed)
    if cfg.trace:
        agent.trace_sink = []
    rows = []
    goals = []
    trajectories = []
    for e in range(cfg.episodes):
        stats = agent.run_episode(episode_seed(seed, e))
        goals.append(stats.reached_goal)
        rows.append({
            "run_id": cfg.run_id, "env": cfg.env, "mode": mode, "seed": seed,
            "episode": e + 1, "return": stats.ret, "steps": stats.steps,
            "reached_goal": int(stats.reached_goal), "model_backoffs": stats.model_backoffs,
            "selected_feature_sets": stats.selected_feature_sets,
        })
        if cfg.trajectories:
            for t, rec in enumerate(agent.buffer.episodes()[-1]):
                trajectories.append({
                    "mode": mode, "seed": seed, "episode": e + 1, "t": t,
                    "action": rec.action, "reward": rec.reward,
                    "state": rec.state.to_json(),
                })
        if cfg.stop_on_consistent and consistent_goal_episode(goals) is not None:
            break
    metric = consistent_goal_episode(goals)
    for r in rows:
        r["episodes_to_consistent_goal"] = "" if metric is None else metric
    traces = [{"mode": mode, "seed": seed, **t} for t in agent.trace_sink or []]
    return {"rows": rows, "trajectories": trajectories, "trace": traces}


def _run_job(args) -> dict:
    cfg, mode, seed = args
    return run_single(cfg, mode, seed)


def run_all(cfg: ExperimentConfig) -> list[dict]:
    jobs = [(cfg, m, s) for m in cfg.modes for s in cfg.seeds]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(_run_job, jobs))
    return [_run_job(j) for j in jobs]


def format_value(v: Any) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path: Path, columns: Sequence[str], rows: Sequence[dict], header: str) -> None:
    buf = io.StringIO()
    buf.write(f"# {header}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([format_value(r[c]) for c in columns])
    path.write_text(buf.getvalue())


def read_rows(path: str | os.PathLike) -> list[dict]:
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def summarize(rows: Sequence[dict], episodes_cap: int) -> list[dict]:
    """Per-mode mean and sample std of the consistent-goal episode and return.

    Runs that never reached the goal three times in a row count as
    ``episodes_cap + 1`` in the mean; ``runs_consistent`` says how many did.
    """
    by_run: dict = {}
    order: list = []
    for r in rows:
        key = (r["env"], r["mode"], str(r["seed"]))
        if key not in by_run:
            by_run[key] = []
            order.append(key)
        by_run[key].append(r)
    modes: dict = {}
    for key in order:
        env, mode, _ = key
        run_rows = by_run[key]
        metric = run_rows[0]["episodes_to_consistent_goal"]
        returns = [float(r["return"]) for r in run_rows]
        m = modes.setdefault((env, mode), {"metric": [], "ok": 0, "ret": []})
        if metric in ("", None):
            m["metric"].append(float(episodes_cap + 1))
        else:
            m["metric"].append(float(metric))
            m["ok"] += 1
        m["ret"].append(statistics.fmean(returns))
    out = []
    for (env, mode), m in modes.items():
        out.append({
            "env": env, "mode": mode, "runs": len(m["metric"]), "runs_consistent": m["ok"],
            "consistent_mean": statistics.fmean(m["metric"]),
            "consistent_std": _std(m["metric"]),
            "return_mean": statistics.fmean(m["ret"]),
            "return_std": _std(m["ret"]),
        })
    return out


def _std(xs: Sequence[float]) -> float:
    return statistics.stdev(xs) if len(xs) > 1 else 0.0


def run_experiment(cfg: ExperimentConfig) -> Path:
    """Run every (mode, seed) pair; write the row CSV and a summary CSV next to it."""
    cfg.validate()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = run_all(cfg)
    rows = [r for res in results for r in res["rows"]]
    rows_path = out / f"{cfg.run_id}.rows.csv"
    write_csv(
        rows_path, ROW_COLUMNS, rows,
        "one row per episode; episodes_to_consistent_goal is the first episode of the "
        "first three consecutive goal episodes in that run (empty if never)",
    )
    write_csv(
        out / f"{cfg.run_id}.summary.csv", SUMMARY_COLUMNS, summarize(rows, cfg.episodes),
        "per mode over runs: mean and sample std; runs never consistent count as episodes+1",
    )
    if cfg.trajectories:
        with open(out / f"{cfg.run_id}.trajectories.ndjson", "w") as fh:
            for res in results:
                for t in res["trajectories"]:
                    fh.write(json.dumps(t, separators=(",", ":")) + "\n")
    if cfg.trace:
        with open(out / f"{cfg.run_id}.trace.ndjson", "w") as fh:
            for res in results:
                for t in res["trace"]:
                    fh.write(json.dumps(t, separators=(",", ":")) + "\n")
    return rows_path


def compare_rollout_scaling(
    cfg: ExperimentConfig, rollouts: Sequence[int], seeds: Optional[Sequence[int]] = None
) -> Path:
    """Optimism-mode mean return at each rollout budget.

    Writes ``<run_id>.rollouts.csv`` (budget, mean return over seeds) and the
    raw per-seed returns in ``<run_id>.rollouts_raw.csv``.
    """
    seeds = list(cfg.seeds if seeds is None else seeds)
    if not seeds:
        raise ConfigError("seeds: at least one seed is required")
    if not rollouts:
        raise ConfigError("rollouts: at least one budget is required")
    if any(b <= a for a, b in zip(rollouts, rollouts[1:])) or rollouts[0] < 1:
        raise ConfigError("rollouts: budgets must be positive and strictly increasing")
    raw = []
    means = []
    for budget in rollouts:
        sub = copy.deepcopy(cfg)
        sub.seeds = seeds
        sub.modes = ["optimism"]
        sub.planner = {k: v for k, v in cfg.planner.items() if k not in ("rollouts", "models")}
        sub.planner["searches"] = int(budget)
        sub.validate()
        returns = []
        for seed in seeds:
            res = run_single(sub, "optimism", seed)
            ret = statistics.fmean(float(r["return"]) for r in res["rows"])
            returns.append(ret)
            raw.append({"rollouts": budget, "seed": seed, "return": ret})
        means.append({"rollouts": budget, "seeds": len(seeds), "mean_return": statistics.fmean(returns)})
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / f"{cfg.run_id}.rollouts_raw.csv", ["rollouts", "seed", "return"], raw,
              "per seed: mean episode return of the optimism agent at each rollout budget")
    path = out / f"{cfg.run_id}.rollouts.csv"
    write_csv(path, ["rollouts", "seeds", "mean_return"], means,
              "mean over seeds of the per-seed mean episode return")
    return path


def is_monotone_with_slack(values: Sequence[float], slack: float = 0.5, allowed: int = 1) -> bool:
    """Non-decreasing, except at most ``allowed`` adjacent drops no larger than ``slack``."""
    drops = [a - b for a, b in zip(values, values[1:]) if b < a]
    return len(drops) <= allowed and all(d <= slack for d in drops)


def isfinite(x: float) -> bool:
    return math.isfinite(x)
