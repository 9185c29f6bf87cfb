"""Command-line entry point: gen-demos, rank, train, eval, replay.

Every flag may also come from a JSON file passed with ``--config``; flags
given on the command line win over the file, the file wins over defaults.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from collections import defaultdict
from pathlib import Path
from typing import List, Optional

from . import ablation
from .agent import AGENT_KINDS, AgentConfig, make_agent
from .core import ConfigError, DatasetError, DemoSet, TrajectoryMode, load_episodes, save_episodes
from .envs import ENVS, min_reward
from .experiment import (
    TrainSettings,
    chronological,
    collect_demos,
    format_summary,
    read_timing,
    run_session,
    summarize,
    train,
    write_metrics,
    write_timing,
)
from .filters import StrategySpec
from .neural import Mlp
from .shield import Shield, ShieldConfig

log = logging.getLogger("dtwshield")

DEFAULTS = {
    "env": "cliff2d",
    "mode": "state",
    "safe_method": "MeanDemoW5",
    "unsafe_method": "MeanDemoW10",
    "demos": None,
    "episodes": None,
    "seed": "0",
    "normalize": False,
    "dtw_normalize": False,
    "out": None,
    "agent": None,
    "n_demos": 50,
    "max_episodes": 100_000,
    "noise": 0.1,
    "corpus": None,
    "top_k": 5,
    "workers": 1,
    "no_shield": False,
    "baseline_timing": None,
    "record": None,
    "actor": None,
    "hidden": 256,
    "batch_size": 256,
    "lr": 3e-4,
    "warmup": 1000,
    "dynamics_warmup": 1000,
    "capacity": 1_000_000,
}


def _seeds(text) -> List[int]:
    if isinstance(text, int):
        return [text]
    try:
        seeds = [int(s) for s in str(text).split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"--seed expects comma-separated integers, got {text!r}") from None
    if not seeds or any(s < 0 for s in seeds):
        raise ConfigError("--seed expects non-negative integers")
    return seeds


def _shared(p: argparse.ArgumentParser, *, demos_nargs=None) -> None:
    S = argparse.SUPPRESS
    p.add_argument("--config", help="JSON file with default values for any flag")
    p.add_argument("--env", choices=sorted(ENVS), default=S)
    p.add_argument("--mode", choices=[m.value for m in TrajectoryMode], default=S)
    p.add_argument("--safe-method", default=S, help="method id used against the safe demos, e.g. MeanDemoW5")
    p.add_argument("--unsafe-method", default=S, help="method id used against the unsafe demos, e.g. MeanDemoW10")
    if demos_nargs:
        p.add_argument("--demos", action="append", default=S, metavar="PATH", help="demo corpus (repeatable)")
    else:
        p.add_argument("--demos", default=S, metavar="PATH", help="demonstration corpus (JSONL)")
    p.add_argument("--episodes", type=int, default=S)
    p.add_argument("--seed", default=S, metavar="S[,S...]")
    p.add_argument("--normalize", action="store_true", default=S, help="z-score features with demo statistics")
    p.add_argument("--dtw-normalize", action="store_true", default=S, help="divide DTW cost by warping-path length")
    p.add_argument("--out", default=S, metavar="PATH")


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    parser = argparse.ArgumentParser(prog="dtwshield", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-demos", help="record episodes and keep the latest N safe and N crashed ones")
    _shared(p)
    p.add_argument("--agent", choices=AGENT_KINDS, default=S)
    p.add_argument("--n-demos", type=int, default=S, help="demonstrations per group (default 50)")
    p.add_argument("--max-episodes", type=int, default=S)
    p.add_argument("--noise", type=float, default=S, help="exploration noise of scripted/actor-critic agents")

    p = sub.add_parser("rank", help="score all 576 strategies on recorded episodes")
    _shared(p, demos_nargs=True)
    p.add_argument("--corpus", action="append", default=S, metavar="PATH", help="recorded episodes (repeatable)")
    p.add_argument("--top-k", type=int, default=S)
    p.add_argument("--workers", type=int, default=S)

    p = sub.add_parser("train", help="train an agent with or without the shield")
    _shared(p)
    p.add_argument("--agent", choices=AGENT_KINDS, default=S)
    p.add_argument("--no-shield", action="store_true", default=S)
    p.add_argument("--baseline-timing", default=S, metavar="PATH", help="timing.json of an unshielded run")
    p.add_argument("--hidden", type=int, default=S)
    p.add_argument("--batch-size", type=int, default=S)
    p.add_argument("--lr", type=float, default=S)
    p.add_argument("--warmup", type=int, default=S, help="replay size before agent updates start")
    p.add_argument("--dynamics-warmup", type=int, default=S)
    p.add_argument("--capacity", type=int, default=S)
    p.add_argument("--noise", type=float, default=S)

    p = sub.add_parser("eval", help="run a fixed policy and report metrics")
    _shared(p)
    p.add_argument("--agent", choices=AGENT_KINDS, default=S)
    p.add_argument("--actor", default=S, metavar="PATH", help="actor checkpoint for --agent actor-critic")
    p.add_argument("--no-shield", action="store_true", default=S)
    p.add_argument("--record", default=S, metavar="PATH", help="write the played episodes as JSONL")
    p.add_argument("--baseline-timing", default=S, metavar="PATH")
    p.add_argument("--noise", type=float, default=S)

    p = sub.add_parser("replay", help="replay recorded episodes through one strategy")
    _shared(p)
    p.add_argument("--corpus", default=S, metavar="PATH")
    return parser


def resolve(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    given = vars(args)
    if given.get("config"):
        path = Path(given["config"])
        if not path.exists():
            raise FileNotFoundError(f"no such config file: {path}")
        cfg.update({k.replace("-", "_"): v for k, v in json.loads(path.read_text()).items()})
    cfg.update({k: v for k, v in given.items() if k != "config"})
    return cfg


def _strategy(cfg) -> StrategySpec:
    return StrategySpec.parse(cfg["safe_method"], cfg["unsafe_method"])


def _require(cfg, key, flag):
    if cfg.get(key) in (None, []):
        raise ConfigError(f"{flag} is required for this command")
    return cfg[key]


def _paths(value) -> List[str]:
    return [value] if isinstance(value, str) else list(value)


def _load_demos(path, mode) -> DemoSet:
    recs = load_episodes(path)
    envs = {r.env_id for r in recs}
    if len(envs) > 1:
        raise DatasetError(f"{path}: demonstrations from several envs {sorted(envs)}")
    return DemoSet.from_records(recs, mode)


def _shield_cfg(cfg, env_id, enabled) -> ShieldConfig:
    return ShieldConfig(
        _strategy(cfg) if enabled else None,
        TrajectoryMode.parse(cfg["mode"]),
        min_reward(env_id),
        enabled=enabled,
        normalize_features=bool(cfg["normalize"]),
        normalize_dtw=bool(cfg["dtw_normalize"]),
    )


def cmd_gen_demos(cfg) -> int:
    out = _require(cfg, "out", "--out")
    n = int(cfg["n_demos"])
    if n < 1:
        raise ConfigError(f"--n-demos must be at least 1, got {n}")
    kind = cfg["agent"] or "random"
    agent_cfg = AgentConfig(kind=kind, noise=cfg["noise"], hidden=cfg["hidden"], batch_size=cfg["batch_size"],
                            lr=cfg["lr"], warmup=cfg["warmup"])
    seed = _seeds(cfg["seed"])[0]
    safe, unsafe = collect_demos(cfg["env"], n, kind, seed, cfg["max_episodes"], agent_cfg)
    save_episodes(out, chronological(safe, unsafe))
    print(f"wrote {len(safe)} safe and {len(unsafe)} unsafe demonstrations to {out}")
    return 0


def cmd_rank(cfg) -> int:
    mode = TrajectoryMode.parse(cfg["mode"])
    corpora = defaultdict(list)
    for path in _paths(_require(cfg, "corpus", "--corpus")):
        for rec in load_episodes(path):
            corpora[rec.env_id].append(rec)
    demos = {}
    for path in _paths(_require(cfg, "demos", "--demos")):
        ds = _load_demos(path, mode)
        demos[ds.safe[0].env_id] = ds
    ranked = ablation.rank_all(dict(corpora), demos, mode, None, int(cfg["workers"]),
                               bool(cfg["normalize"]), bool(cfg["dtw_normalize"]))
    if cfg["out"]:
        ablation.write_ranking(cfg["out"], ranked)
    top = ranked[: int(cfg["top_k"])]
    env_ids = sorted(corpora)
    print(f"{'rank':>4}  {'safe method':<14}{'unsafe method':<14}" + "".join(f"{e:>14}" for e in env_ids) + f"{'mean':>10}")
    for i, entry in enumerate(top, start=1):
        cols = "".join(f"{entry.per_env[e].score:>14.4f}" for e in env_ids)
        print(f"{i:>4}  {entry.strategy.safe_method.id:<14}{entry.strategy.unsafe_method.id:<14}{cols}"
              f"{entry.mean_score:>10.4f}")
    return 0


def _session_summary(cfg, results, enabled, out_dir: Optional[Path]) -> dict:
    baseline = read_timing(cfg["baseline_timing"]) if cfg["baseline_timing"] else None
    summary = summarize(results, baseline, shield_enabled=enabled)
    summary.update(env=cfg["env"], mode=cfg["mode"], shield=enabled,
                   strategy=_strategy(cfg).id if enabled else None)
    print(format_summary(summary))
    if out_dir is not None:
        (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
        write_timing(out_dir / "timing.json", results, enabled)
    return summary


def cmd_train(cfg) -> int:
    out_dir = Path(_require(cfg, "out", "--out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    enabled = not cfg["no_shield"]
    mode = TrajectoryMode.parse(cfg["mode"])
    demos = _load_demos(_require(cfg, "demos", "--demos"), mode) if enabled else None
    agent_cfg = AgentConfig(kind=cfg["agent"] or "actor-critic", noise=cfg["noise"], hidden=cfg["hidden"],
                            batch_size=cfg["batch_size"], lr=cfg["lr"], warmup=cfg["warmup"])
    results = []
    for seed in _seeds(cfg["seed"]):
        settings = TrainSettings(
            env_id=cfg["env"],
            episodes=int(cfg["episodes"] or 5000),
            seed=seed,
            agent=agent_cfg,
            shield=_shield_cfg(cfg, cfg["env"], enabled),
            dynamics_hidden=cfg["hidden"],
            dynamics_warmup=cfg["dynamics_warmup"],
            replay_capacity=cfg["capacity"],
        )
        res = train(settings, demos)
        results.append(res)
        write_metrics(out_dir / f"metrics_seed{seed}.csv", res.episodes)
        if hasattr(res.agent, "actor"):
            res.agent.actor.save(out_dir / f"actor_seed{seed}.json")
            res.agent.critics[0].save(out_dir / f"critic_seed{seed}.json")
        res.dynamics.net.save(out_dir / f"dynamics_seed{seed}.json")
        log.info("seed %d: crash rate %.3f", seed, res.crash_rate)
    _session_summary(cfg, results, enabled, out_dir)
    return 0


def cmd_eval(cfg) -> int:
    enabled = not cfg["no_shield"] and cfg["demos"] is not None
    mode = TrajectoryMode.parse(cfg["mode"])
    demos = _load_demos(cfg["demos"], mode) if enabled else None
    kind = cfg["agent"] or "random"
    records, results = [], []
    for seed in _seeds(cfg["seed"]):
        agent = make_agent(kind, cfg["env"], seed, AgentConfig(kind=kind, noise=cfg["noise"], hidden=cfg["hidden"]))
        if kind == "actor-critic":
            agent.actor = Mlp.load(_require(cfg, "actor", "--actor"))
        shield = Shield(_shield_cfg(cfg, cfg["env"], enabled), demos)
        res = run_session(cfg["env"], agent, int(cfg["episodes"] or 100), seed, shield, learn=False, explore=False)
        records += res.records
        results.append(res)
    out_dir = None
    if cfg["out"]:
        out_dir = Path(cfg["out"])
        out_dir.mkdir(parents=True, exist_ok=True)
        for seed, res in zip(_seeds(cfg["seed"]), results):
            write_metrics(out_dir / f"metrics_seed{seed}.csv", res.episodes)
    if cfg["record"]:
        save_episodes(cfg["record"], records)
        print(f"recorded {len(records)} episodes to {cfg['record']}")
    _session_summary(cfg, results, enabled, out_dir)
    return 0


def cmd_replay(cfg) -> int:
    mode = TrajectoryMode.parse(cfg["mode"])
    corpus = load_episodes(_require(cfg, "corpus", "--corpus"))
    demos = _load_demos(_require(cfg, "demos", "--demos"), mode)
    strategy = _strategy(cfg)
    rows = []
    for rec in corpus:
        ratio, safe = ablation.episode_outcome(strategy, rec, demos, mode, cfg["normalize"], cfg["dtw_normalize"])
        rows.append({"seed": rec.seed, "steps": len(rec), "crashed": int(rec.crashed),
                     "length_ratio": ratio, "safe": int(safe)})
    score = ablation.score_outcomes(strategy, [(r["length_ratio"], bool(r["safe"])) for r in rows])
    if cfg["out"]:
        with Path(cfg["out"]).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
    print(f"{strategy.id}: mean length ratio {score.mean_length_ratio:.4f}, "
          f"safe rate {score.safe_rate:.4f}, score {score.score:.4f}")
    return 0


COMMANDS = {
    "gen-demos": cmd_gen_demos,
    "rank": cmd_rank,
    "train": cmd_train,
    "eval": cmd_eval,
    "replay": cmd_replay,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    command = args.command
    try:
        cfg = resolve(args)
        return COMMANDS[command](cfg)
    except (ConfigError, DatasetError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"dtwshield {command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
