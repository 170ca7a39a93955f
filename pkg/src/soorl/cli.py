"""Command-line entry point: ``soorl run|learn-macros|compare-rollouts|dump-models``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import harness
from .harness import ConfigError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

logger = logging.getLogger("soorl")


def _int_list(text: str) -> list[int]:
    """Parse ``"0,1,5"`` or a range ``"0-9"``."""
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1) if not part.startswith("-") else (part, part)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def _add_planner_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("planner overrides")
    g.add_argument("--mode", choices=["mle", "optimism", "ts", "bamcp"], action="append",
                   help="restrict to this mode (repeatable)")
    g.add_argument("--rollouts", type=int, help="rollouts per sampled model (L)")
    g.add_argument("--models", type=int, help="sampled models per decision (K)")
    g.add_argument("--searches", type=int, help="total tree searches per decision")
    g.add_argument("--depth", type=int)
    g.add_argument("--ucb-c", type=float, dest="ucb_c")
    g.add_argument("--gamma", type=float)
    g.add_argument("--rmax", type=float, dest="r_max")


def _apply_overrides(cfg: harness.ExperimentConfig, args: argparse.Namespace) -> None:
    if getattr(args, "mode", None):
        cfg.modes = list(args.mode)
    for key in ("rollouts", "models", "searches", "depth", "ucb_c", "gamma", "r_max"):
        v = getattr(args, key, None)
        if v is not None:
            cfg.planner[key] = v
    if getattr(args, "seeds", None):
        cfg.seeds = _int_list(args.seeds)
    if getattr(args, "episodes", None):
        cfg.episodes = args.episodes
    if getattr(args, "out", None):
        cfg.output_dir = args.out
    if os.environ.get("SOORL_OUT"):
        cfg.output_dir = os.environ["SOORL_OUT"]
    if getattr(args, "workers", None):
        cfg.workers = args.workers
    if getattr(args, "trace", False):
        cfg.trace = True


def _load(args: argparse.Namespace) -> harness.ExperimentConfig:
    if args.config:
        cfg = harness.parse_config(args.config, echo=False)
    elif getattr(args, "env", None):
        cfg = harness.ExperimentConfig(env=args.env, seeds=[0])
    else:
        raise ConfigError("need --config or --env")
    _apply_overrides(cfg, args)
    cfg.validate()
    harness.write_resolved_config(cfg)
    return cfg


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _load(args)
    rows = harness.run_experiment(cfg)
    summary = rows.with_name(f"{cfg.run_id}.summary.csv")
    print(f"rows: {rows}")
    print(f"summary: {summary}")
    for r in harness.read_rows(summary):
        print(
            f"{r['mode']:>9}: episodes to consistent goal {float(r['consistent_mean']):.2f} "
            f"± {float(r['consistent_std']):.2f} ({r['runs_consistent']}/{r['runs']} runs consistent)"
        )
    return EXIT_OK


def cmd_learn_macros(args: argparse.Namespace) -> int:
    from .macros import learn_macro_actions

    env_cls = harness.ENVS.get(args.env)
    if env_cls is None:
        raise ConfigError(f"env: unknown environment {args.env!r} (known: {sorted(harness.ENVS)})")
    out_dir = Path(os.environ.get("SOORL_OUT") or args.out_dir)
    results = []
    for seed in _int_list(args.seeds):
        env = env_cls()
        trace: list = []
        macros = learn_macro_actions(
            env, k_max=args.k_max, threshold=args.threshold,
            budget_per_eval=args.budget, rng_seed=seed, trace=trace,
        )
        row = {"seed": seed, "macros": {env.action_names[a]: m.noops for a, m in sorted(macros.items())}}
        results.append(row)
        print(json.dumps(row))
        out_dir.mkdir(parents=True, exist_ok=True)
        trace_path = out_dir / f"macros_{args.env}_seed{seed}.trace.csv"
        harness.write_csv(
            trace_path, ["iteration", "total_noops", "total_entropy"], trace,
            f"macro learning trace: env={args.env} seed={seed} k_max={args.k_max}",
        )
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps(results, indent=2) + "\n")
    return EXIT_OK


def cmd_compare_rollouts(args: argparse.Namespace) -> int:
    cfg = _load(args)
    budgets = _int_list(args.budgets)
    path = harness.compare_rollout_scaling(cfg, budgets)
    for r in harness.read_rows(path):
        print(f"rollouts {r['rollouts']:>5}: mean return {float(r['mean_return']):.3f}")
    print(f"written: {path}")
    return EXIT_OK


def cmd_dump_models(args: argparse.Namespace) -> int:
    from .agent import SoorlAgent

    cfg = _load(args)
    mode = cfg.modes[0]
    seed = cfg.seeds[0]
    agent = SoorlAgent(harness.ENVS[cfg.env](), cfg.soorl_config(mode), seed=seed)
    for e in range(cfg.episodes):
        agent.run_episode(harness.episode_seed(seed, e))
    doc = {"env": cfg.env, "mode": mode, "seed": seed, "episodes": cfg.episodes,
           "families": agent.model.to_json()}
    text = json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n"
    out = Path(cfg.output_dir) / f"{cfg.run_id}.models.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text)
    print(f"written: {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="soorl", description="Object-oriented model-based exploration experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, default_env=None):
        sp.add_argument("--config", help="JSON experiment config")
        sp.add_argument("--env", default=default_env, choices=sorted(harness.ENVS))
        sp.add_argument("--seeds", help="e.g. 0-19 or 0,3,5")
        sp.add_argument("--episodes", type=int)
        sp.add_argument("--out", help="output directory (SOORL_OUT wins)")
        sp.add_argument("--workers", type=int)
        _add_planner_flags(sp)

    r = sub.add_parser("run", help="run an experiment config")
    common(r)
    r.add_argument("--trace", action="store_true", help="log every rollout to <run_id>.trace.ndjson")
    r.set_defaults(func=cmd_run)

    m = sub.add_parser("learn-macros", help="learn no-op counts per action")
    m.add_argument("--env", required=True, choices=sorted(harness.ENVS))
    m.add_argument("--seeds", "--seed", default="0", dest="seeds")
    m.add_argument("--k-max", "--kmax", type=int, default=8, dest="k_max")
    m.add_argument("--threshold", type=float, default=0.05)
    m.add_argument("--budget", type=int, default=2000)
    m.add_argument("--out", help="write results as JSON")
    m.add_argument("--out-dir", default="results", dest="out_dir",
                   help="directory for per-seed entropy trace CSVs (SOORL_OUT wins)")
    m.set_defaults(func=cmd_learn_macros)

    c = sub.add_parser("compare-rollouts", help="optimism return across rollout budgets")
    common(c, default_env="pong-prime")
    c.add_argument("--budgets", default="50,200,800")
    c.set_defaults(func=cmd_compare_rollouts)

    d = sub.add_parser("dump-models", help="train an agent and dump its learned models as JSON")
    common(d)
    d.set_defaults(func=cmd_dump_models)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - surfaced as exit code 3
        logger.debug("runtime failure", exc_info=True)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
