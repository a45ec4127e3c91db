"""Command-line entry points: validate, simulate, train, evaluate."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import subprocess
import sys
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from mcast_twin import __version__
from mcast_twin.bdqn import BdqnPolicy, BranchingDuelingNet, TrainConfig, train
from mcast_twin.core import QoeReport, ScenarioError
from mcast_twin.env import SCHEMES, HeuristicPolicy, InfeasibleDecision, MulticastEnv, RandomPolicy, run_episode
from mcast_twin.scenarios import load_scenario

log = logging.getLogger("mcast_twin")

EXIT_INVALID = 1
EXIT_CANNOT_WRITE = 2
EXIT_MISSING_CHECKPOINT = 3

POLICIES = ("proposed", "wdt", "heuristic", "random")
SUMMARY_COMPONENTS = ("mg_qoe", "rebuffering", "quality", "variation")


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def prepare_out(out: str | Path) -> Path:
    path = Path(out)
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write-probe"
        probe.write_text("", encoding="utf-8")
        probe.unlink()
    except OSError as exc:
        raise CliError(EXIT_CANNOT_WRITE, f"cannot write to {path}: {exc.strerror or exc}") from exc
    return path


def write_manifest(out: Path, args, outputs: Sequence[str], seed: int, **extra) -> dict:
    manifest = {
        "command": args.command,
        "scenario": str(args.config),
        "seed": seed,
        "build": {"version": __version__, "git_describe": git_describe()},
        "output_dir": str(out),
        "outputs": list(outputs),
        "started_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        **extra,
    }
    _dump_manifest(out, manifest)
    return manifest


def _dump_manifest(out: Path, manifest: dict) -> None:
    try:
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise CliError(EXIT_CANNOT_WRITE, f"cannot write manifest: {exc}") from exc


def finish_manifest(out: Path, manifest: dict, t0: float) -> None:
    manifest["wall_clock_s"] = time.perf_counter() - t0
    _dump_manifest(out, manifest)


def slot_record(t: int, report: QoeReport) -> dict:
    return {"slot": t, **report.to_dict()}


def component_series(records: Sequence[dict]) -> dict[str, list[float]]:
    """Per-slot MG values: the weighted total and the SMG sums of each component."""
    return {
        "mg_qoe": [r["mg_total"] for r in records],
        "rebuffering": [float(sum(r["rebuffering"])) for r in records],
        "quality": [float(sum(r["quality"])) for r in records],
        "variation": [float(sum(r["variation"])) for r in records],
    }


def summary_rows(records: Sequence[dict]) -> list[list]:
    rows = []
    for name, values in component_series(records).items():
        v = np.asarray(values, dtype=float)
        q1, med, q3 = np.percentile(v, [25, 50, 75])
        rows.append([name, float(v.mean()), float(med), float(q1), float(q3)])
    return rows


def write_results(out: Path, records: Sequence[dict]) -> None:
    try:
        with open(out / "reports.jsonl", "w", encoding="utf-8", newline="\n") as fh:
            for r in records:
                fh.write(json.dumps(r) + "\n")
        with open(out / "summary.csv", "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["component", "mean", "median", "q1", "q3"])
            for row in summary_rows(records):
                w.writerow([row[0]] + [repr(x) for x in row[1:]])
    except OSError as exc:
        raise CliError(EXIT_CANNOT_WRITE, f"cannot write results: {exc}") from exc


def load_checkpoint(path: str | None) -> BranchingDuelingNet:
    if not path or not Path(path).is_file():
        raise CliError(EXIT_MISSING_CHECKPOINT, f"missing checkpoint: {path or '(none given)'}")
    return BranchingDuelingNet.load(path)


def _scenario(args):
    try:
        return load_scenario(args.config)
    except ScenarioError as exc:
        raise CliError(EXIT_INVALID, "invalid config:\n  " + "\n  ".join(exc.violations)) from exc
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise CliError(EXIT_INVALID, f"invalid config: {exc}") from exc


def _run_policy(scenario, policy_name: str, seed: int, net: BranchingDuelingNet | None) -> list[dict]:
    scheme = "wdt" if policy_name == "wdt" else "proposed"
    env = MulticastEnv(scenario, scheme)
    if policy_name in SCHEMES:
        if (net.state_dim, net.n_branches, net.n_actions) != (env.state_dim, env.n_branches, env.L):
            raise CliError(
                EXIT_INVALID,
                f"checkpoint shape {(net.state_dim, net.n_branches, net.n_actions)} does not fit the scenario "
                f"{(env.state_dim, env.n_branches, env.L)}",
            )
        policy = BdqnPolicy(net)
    elif policy_name == "heuristic":
        policy = HeuristicPolicy()
    else:
        policy = RandomPolicy(seed)
    try:
        reports = run_episode(env, policy, seed)
    except InfeasibleDecision as exc:
        raise CliError(EXIT_INVALID, "policy produced an infeasible decision:\n  " + "\n  ".join(exc.violations)) from exc
    return [slot_record(t, r) for t, r in enumerate(reports)]


def cmd_validate(args) -> int:
    scenario = _scenario(args)
    print(
        f"ok: {scenario.n_smgs} SMGs, {len(scenario.users)} users, {len(scenario.catalog)} videos, "
        f"{scenario.catalog.n_layers} layers, horizon {scenario.horizon}"
    )
    return 0


def _simulate(args, policy_name: str) -> int:
    t0 = time.perf_counter()
    scenario = _scenario(args)
    seed = scenario.seed if args.seed is None else args.seed
    net = load_checkpoint(args.checkpoint) if policy_name in SCHEMES else None
    out = prepare_out(args.out)
    manifest = write_manifest(out, args, ["reports.jsonl", "summary.csv"], seed, policy=policy_name, checkpoint=args.checkpoint)
    records = _run_policy(scenario, policy_name, seed, net)
    write_results(out, records)
    finish_manifest(out, manifest, t0)
    mean = np.mean([r["mg_total"] for r in records])
    print(f"{policy_name}: {len(records)} slots, mean MG QoE {mean:.6f} -> {out}")
    return 0


def cmd_simulate(args) -> int:
    return _simulate(args, args.policy)


def cmd_evaluate(args) -> int:
    if args.policy not in SCHEMES:
        raise CliError(EXIT_INVALID, f"evaluate runs a checkpoint under one of {SCHEMES}, not {args.policy!r}")
    return _simulate(args, args.policy)


def _train_config(args, scenario, seed: int) -> TrainConfig:
    with open(args.config, encoding="utf-8") as fh:
        overrides = json.load(fh).get("train", {})
    cfg = TrainConfig(episode_length=scenario.horizon, **overrides)
    cfg.seed = seed
    if args.episodes is not None:
        cfg.episodes = args.episodes
    return cfg


def write_curve(path: Path, curve) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["episode", "mean_reward", "epsilon", "loss"])
        for row in curve:
            w.writerow([row.episode, repr(row.mean_reward), repr(row.epsilon), repr(row.loss)])


def write_envelope(path: Path, curves) -> None:
    """Across-trial statistics of the per-episode mean reward."""
    rewards = np.array([[row.mean_reward for row in c] for c in curves])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["episode", "mean", "min", "max", "q1", "q3"])
        for e in range(rewards.shape[1]):
            col = rewards[:, e]
            q1, q3 = np.percentile(col, [25, 75])
            w.writerow([e] + [repr(float(x)) for x in (col.mean(), col.min(), col.max(), q1, q3)])


def cmd_train(args) -> int:
    t0 = time.perf_counter()
    scenario = _scenario(args)
    seed = scenario.seed if args.seed is None else args.seed
    trials = max(1, args.trials)
    out = prepare_out(args.out)
    dirs = [out] if trials == 1 else [out / f"trial_{k}" for k in range(trials)]
    outputs = [str((d / name).relative_to(out)) for d in dirs for name in ("checkpoint.npz", "learning_curve.csv")]
    outputs.append("envelope.csv")
    cfg = _train_config(args, scenario, seed)
    manifest = write_manifest(out, args, outputs, seed, trials=trials, train_config=cfg.to_dict())
    curves = []
    for k, d in enumerate(dirs):
        prepare_out(d)
        cfg_k = TrainConfig(**{**cfg.to_dict(), "seed": seed + k})
        env = MulticastEnv(scenario, "proposed")
        agent, curve = train(env, cfg_k, progress=lambda row: log.info("trial %d episode %d reward %.4f", k, row.episode, row.mean_reward))
        try:
            agent.net.save(d / "checkpoint.npz")
            write_curve(d / "learning_curve.csv", curve)
        except OSError as exc:
            raise CliError(EXIT_CANNOT_WRITE, f"cannot write training output: {exc}") from exc
        curves.append(curve)
        print(f"trial {k}: final mean reward {curve[-1].mean_reward:.6f}")
    try:
        write_envelope(out / "envelope.csv", curves)
    except OSError as exc:
        raise CliError(EXIT_CANNOT_WRITE, f"cannot write envelope: {exc}") from exc
    finish_manifest(out, manifest, t0)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcast-twin", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--config", required=True, help="scenario JSON")
        p.add_argument("--seed", type=int, default=None, help="run seed (defaults to the scenario seed)")
        if out:
            p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("validate", help="check a scenario config")
    common(p, out=False)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("simulate", help="run one episode and write per-slot reports")
    common(p)
    p.add_argument("--policy", choices=POLICIES, default="random")
    p.add_argument("--checkpoint", default=None, help="trained network for proposed/wdt")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train the version-selection network")
    common(p)
    p.add_argument("--episodes", type=int, default=None)
    p.add_argument("--trials", type=int, default=1, help="independent seeds seed..seed+trials-1")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="run a trained checkpoint through the simulate pipeline")
    common(p)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--policy", choices=SCHEMES, default="proposed")
    p.set_defaults(func=cmd_evaluate)
    return parser


def configure_logging() -> None:
    level = os.environ.get("MCAST_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def main(argv: Sequence[str] | None = None) -> int:
    configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
