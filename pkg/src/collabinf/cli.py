"""Command-line entry point.

Exit codes::

    0  success
    1  runtime failure (including training divergence)
    2  usage error (argparse)
    3  invalid configuration
    4  checkpoint missing, unreadable or incompatible
    5  constraint violations during evaluation
    6  bad input data

Errors are printed to stderr as ``error[<code>]: <message>``.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .evalharness import AgentPolicy, LocalPolicy, evaluate, sweep_beta, sweep_ue_count, train_cell
from .mahppo import CheckpointError, MAHPPOAgent, TrainingDiverged
from .profiles import QuantizerConfig, QuantizerError, compression_rate, dequantize, quantize
from .simenv import CollabInferenceEnv

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_CHECKPOINT = 4
EXIT_VIOLATION = 5
EXIT_INPUT = 6

class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _config(args) -> RunConfig:
    try:
        return load_config(getattr(args, "config", None), getattr(args, "set", None) or (),
                           seed=getattr(args, "seed", None), steps=getattr(args, "steps", None),
                           out=getattr(args, "out", None))
    except ConfigError as exc:
        lines = "\n".join(f"  {path}: {msg}" for path, msg in exc.errors)
        raise CliError(EXIT_CONFIG, f"invalid configuration ({len(exc.errors)} problem(s))\n{lines}") from None


def _write_resolved(cfg: RunConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.yaml").write_text(cfg.to_yaml())


# ---------------------------------------------------------------------------
# subcommands


def cmd_validate_config(args) -> int:
    cfg = _config(args)
    if args.show:
        print(cfg.to_yaml(), end="")
    print(f"ok: N={cfg.env.ue_count} B={cfg.env.partition_count} C={cfg.env.channel.channel_count} "
          f"hash={cfg.fingerprint()}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    out = Path(cfg.output_dir)
    _write_resolved(cfg, out)
    multi = len(cfg.seeds) > 1
    for seed in cfg.seeds:
        run_dir = out / f"seed_{seed}" if multi else out
        try:
            ckpt = train_cell(cfg.env, cfg.train, seed, run_dir, cfg.checkpoint_every)
        except TrainingDiverged as exc:
            where = f"; last checkpoint {exc.checkpoint}" if exc.checkpoint else ""
            raise CliError(EXIT_RUNTIME, f"training diverged: {exc}{where}") from None
        print(f"seed {seed}: log {run_dir / 'log.csv'}, checkpoint {ckpt}")
    return EXIT_OK


def _load_agent(path: str, env: CollabInferenceEnv) -> MAHPPOAgent:
    try:
        agent = MAHPPOAgent.load(path)
        agent.check_compatible(env)
    except CheckpointError as exc:
        raise CliError(EXIT_CHECKPOINT, str(exc)) from None
    return agent


def cmd_eval(args) -> int:
    cfg = _config(args)
    if bool(args.local) == bool(args.checkpoint):
        raise CliError(EXIT_USAGE, "give exactly one of --checkpoint or --local")
    env_cfg = replace(cfg.env, eval_mode=True)
    if args.local:
        policy = LocalPolicy
    else:
        agent = _load_agent(args.checkpoint, CollabInferenceEnv(env_cfg))
        policy = lambda env: AgentPolicy(agent, env)  # noqa: E731
    report = evaluate(policy, env_cfg, cfg.eval_episodes, cfg.seeds)
    out = Path(cfg.output_dir)
    csv_path, json_path = report.write(out, args.stem)
    s = report.summary()
    print(f"{report.policy}: latency/task {s['latency_per_task_mean']:.6g} s, energy/task "
          f"{s['energy_per_task_mean']:.6g} J, truncated {s['truncated']}, violations {s['violations']}")
    print(f"wrote {csv_path} and {json_path}")
    if report.violations:
        for msg in report.violation_messages:
            print(msg, file=sys.stderr)
        raise CliError(EXIT_VIOLATION, f"{report.violations} constraint violation(s)")
    return EXIT_OK


def _print_table(rows: list[dict]) -> None:
    if not rows:
        return
    cols = list(rows[0])
    print("  ".join(cols))
    for r in rows:
        print("  ".join(f"{r[c]:.6g}" if isinstance(r[c], float) else str(r[c]) for c in cols))


def cmd_sweep_beta(args) -> int:
    cfg = _config(args)
    out = Path(cfg.output_dir)
    _write_resolved(cfg, out)
    res = sweep_beta(cfg.env, cfg.train, out, cfg.beta_values, cfg.seeds, cfg.eval_episodes,
                     train_missing=not args.no_train)
    paths = res.write(out, "sweep_beta")
    _print_table(res.table())
    for key, seed, path in res.absent():
        print(f"absent: beta={key} seed={seed} ({path})")
    print(f"wrote {', '.join(str(p) for p in paths.values())}")
    return EXIT_OK


def cmd_sweep_ue(args) -> int:
    cfg = _config(args)
    out = Path(cfg.output_dir)
    _write_resolved(cfg, out)
    res = sweep_ue_count(cfg.env, cfg.train, out, cfg.ue_counts, cfg.seeds, cfg.eval_episodes,
                         train_missing=not args.no_train)
    paths = res.write(out, "sweep_ue")
    _print_table(res.table())
    for key, seed, path in res.absent():
        print(f"absent: N={key} seed={seed} ({path})")
    print(f"wrote {', '.join(str(p) for p in paths.values())}")
    return EXIT_OK


def _read_vector(path: str) -> np.ndarray:
    p = Path(path)
    try:
        if p.suffix == ".npy":
            data = np.load(p)
        else:
            text = p.read_text()
            data = np.array(json.loads(text), dtype=np.float64) if p.suffix == ".json" else \
                np.array(text.replace(",", " ").split(), dtype=np.float64)
    except (OSError, ValueError) as exc:
        raise CliError(EXIT_INPUT, f"cannot read numeric input {path}: {exc}") from None
    data = np.asarray(data, dtype=np.float64).ravel()
    if data.size == 0:
        raise CliError(EXIT_INPUT, f"input {path} is empty")
    if not np.all(np.isfinite(data)):
        raise CliError(EXIT_INPUT, f"input {path} contains non-finite values")
    return data


def quantize_table(x: np.ndarray, bit_widths: Sequence[int], channels: int, reduced: int) -> list[dict]:
    lo, hi = float(x.min()), float(x.max())
    if hi == lo:
        hi = lo + 1.0
    rows = []
    for c in bit_widths:
        q = QuantizerConfig(c, lo, hi)
        err = np.abs(dequantize(quantize(x, q), q) - x)
        rows.append({"bits": c, "max_error": float(err.max()), "mean_error": float(err.mean()),
                     "bound": q.max_error, "R": compression_rate(channels, reduced, c)})
    return rows


def cmd_quantize_demo(args) -> int:
    x = _read_vector(args.input)
    try:
        rows = quantize_table(x, args.bits, args.channels, args.reduced_channels)
    except QuantizerError as exc:
        raise CliError(EXIT_INPUT, str(exc)) from None
    print(f"{'bits':>4}  {'max_error':>12}  {'mean_error':>12}  {'bound':>12}  {'R':>8}")
    for r in rows:
        print(f"{r['bits']:>4}  {r['max_error']:>12.6g}  {r['mean_error']:>12.6g}  {r['bound']:>12.6g}  {r['R']:>8.4g}")
    if args.csv:
        lines = ["bits,max_error,mean_error,bound,R"]
        lines += [f"{r['bits']},{r['max_error']!r},{r['mean_error']!r},{r['bound']!r},{r['R']!r}" for r in rows]
        Path(args.csv).write_text("\n".join(lines) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="collabinf", description=__doc__.split("\n")[0],
                                epilog="Exit codes: 0 ok, 1 runtime, 2 usage, 3 config, 4 checkpoint, "
                                       "5 constraint violation, 6 input.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp, seed=True, steps=True):
        sp.add_argument("-c", "--config", help="run configuration (YAML); defaults apply when omitted")
        sp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override one configuration value (repeatable)")
        sp.add_argument("--out", help="output directory (experiment.output_dir)")
        if seed:
            sp.add_argument("--seed", type=int, help="single root seed (replaces experiment.seeds)")
        if steps:
            sp.add_argument("--steps", type=int, help="training steps (agent.total_steps)")
        return sp

    sp = with_config(sub.add_parser("train", help="train MAHPPO and write log.csv, timing.csv, checkpoints"))
    sp.set_defaults(func=cmd_train)

    sp = with_config(sub.add_parser("eval", help="evaluate a checkpoint or the full-local baseline"), steps=False)
    sp.add_argument("--checkpoint", help="checkpoint JSON written by train")
    sp.add_argument("--local", action="store_true", help="evaluate the full-local baseline instead")
    sp.add_argument("--stem", default="eval", help="file stem for the CSV/JSON report")
    sp.set_defaults(func=cmd_eval)

    sp = with_config(sub.add_parser("sweep-beta", help="train/evaluate one agent per beta value and seed"))
    sp.add_argument("--no-train", action="store_true", help="only evaluate existing checkpoints")
    sp.set_defaults(func=cmd_sweep_beta)

    sp = with_config(sub.add_parser("sweep-ue", help="train/evaluate one agent per UE count and seed"))
    sp.add_argument("--no-train", action="store_true", help="only evaluate existing checkpoints")
    sp.set_defaults(func=cmd_sweep_ue)

    sp = sub.add_parser("quantize-demo", help="round-trip error and compression rate per bit width")
    sp.add_argument("input", help="numbers as text (whitespace/comma separated), .json list or .npy")
    sp.add_argument("--bits", type=int, nargs="+", default=[1, 2, 4, 8, 16, 32])
    sp.add_argument("--channels", type=int, default=64, help="feature channels before reduction")
    sp.add_argument("--reduced-channels", type=int, default=16, help="feature channels after reduction")
    sp.add_argument("--csv", help="also write the table to this CSV file")
    sp.set_defaults(func=cmd_quantize_demo)

    sp = with_config(sub.add_parser("validate-config", help="check a configuration and print its hash"),
                     seed=True, steps=True)
    sp.add_argument("--show", action="store_true", help="print the resolved configuration")
    sp.set_defaults(func=cmd_validate_config)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return exc.code
    except (OSError, RuntimeError, ValueError) as exc:
        print(f"error[{EXIT_RUNTIME}]: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
