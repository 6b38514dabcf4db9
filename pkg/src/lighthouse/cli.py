"""``lighthouse`` command line: check | selftest | bench | train.

Config files are flat ``key = value`` lines with ``#`` comments; unknown
keys are errors. Every run that writes outputs also writes a manifest in
the same format next to them. A manifest can be passed back through
``--config`` to repeat the run.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .checks import CHECKS, SELFTEST, run_checks
from .complexity import loglog_slope, scaling_sweep, top_decade
from .config import LighthouseConfig
from .errors import ConfigError
from .trainer import TrainConfig, train_dense_baseline, train_two_stage

BENCH_DEFAULTS = {
    "head_dim": 64,
    "d_model": 512,
    "pool_factor": 2,
    "budget": 64,
    "levels": "balanced",
    "chunk_size": 2048,
    "buffer_m": 128,
    "selection": "hierarchical-descent",
    "prefix_coverage": True,
}
DEFAULT_NS = (1024, 2048, 4096, 8192, 16384)


# ------------------------------------------------------------------ config files


def _parse_value(raw: str, like):
    if isinstance(like, bool):
        low = raw.lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ConfigError(f"expected a boolean, got {raw!r}")
        return low in ("true", "1", "yes")
    if isinstance(like, int):
        return int(raw)
    if isinstance(like, float):
        return float(raw)
    if isinstance(like, tuple):
        return tuple(int(t) for t in raw.replace(",", " ").split())
    return raw


def read_pairs(path) -> dict[str, str]:
    pairs: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in pairs:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        pairs[key] = value
    return pairs


def resolve(pairs: dict[str, str], defaults: dict, where: str = "config") -> dict:
    """Typed values for ``pairs``, defaults filled in, unknown keys rejected."""
    unknown = sorted(set(pairs) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown {where} key(s): {', '.join(unknown)}")
    out = dict(defaults)
    for key, raw in pairs.items():
        try:
            out[key] = _parse_value(raw, defaults[key])
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {raw!r} ({exc})") from None
    return out


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def train_defaults() -> dict:
    return {f.name: getattr(TrainConfig(), f.name) for f in dataclasses.fields(TrainConfig)}


def load_config(path, defaults: dict) -> tuple[dict, dict]:
    """Config values plus run settings when ``path`` is a manifest."""
    pairs = read_pairs(path)
    if "subcommand" in pairs:
        cfg_pairs = {k[len("config.") :]: v for k, v in pairs.items() if k.startswith("config.")}
        run = {k[len("run.") :]: v for k, v in pairs.items() if k.startswith("run.")}
        if "seed" in pairs:
            run["seed"] = pairs["seed"]
        return resolve(cfg_pairs, defaults), run
    return resolve(pairs, defaults), {}


def write_manifest(path, subcommand: str, seed: int, config: dict, run: dict, outputs: dict) -> None:
    lines = [
        "# lighthouse run manifest: pass back with --config to repeat this run",
        f"subcommand = {subcommand}",
        f"seed = {seed}",
    ]
    lines += [f"run.{k} = {_format(v)}" for k, v in run.items()]
    lines += [f"config.{k} = {_format(v)}" for k, v in config.items()]
    lines += [
        f"build.lighthouse = {__version__}",
        f"build.numpy = {np.__version__}",
        f"build.python = {platform.python_version()}",
    ]
    lines += [f"output.{k} = {v}" for k, v in outputs.items()]
    Path(path).write_text("\n".join(lines) + "\n")


# ------------------------------------------------------------------ subcommands


def cmd_check(args, names) -> int:
    lines: list[str] = []

    def emit(line):
        print(line)
        lines.append(line)

    ok = run_checks(names, args.seed, emit=emit)
    print(f"{'all checks passed' if ok else 'some checks FAILED'} ({len(names)} run, seed {args.seed})")
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text("\n".join(lines) + "\n")
        write_manifest(f"{out}.manifest", args.command, args.seed, {}, {}, {"report": out})
    return 0 if ok else 1


def cmd_bench(args) -> int:
    values, run = load_config(args.config, BENCH_DEFAULTS) if args.config else (dict(BENCH_DEFAULTS), {})
    ns = _ints(args.n or run.get("n") or ",".join(map(str, DEFAULT_NS)))
    reps = args.reps if args.reps is not None else int(run.get("reps", 10))
    seed = args.seed if args.seed_given else int(run.get("seed", 0))
    precision = args.precision if args.precision_given else int(run.get("precision", 64))
    balanced = values["levels"] == "balanced"
    template = LighthouseConfig(
        seq_len=ns[0] if balanced else max(ns),
        head_dim=values["head_dim"],
        pool_factor=values["pool_factor"],
        levels=1 if balanced else int(values["levels"]),
        budget=values["budget"],
        chunk_size=values["chunk_size"],
        buffer_m=values["buffer_m"],
        selection=values["selection"],
        prefix_coverage=values["prefix_coverage"],
    )
    out = Path(args.out or "sweep.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    rows = scaling_sweep(ns, template, reps, values["d_model"], seed, balanced, out=out, precision=precision)
    write_manifest(
        f"{out}.manifest", "bench", seed, values, {"n": ",".join(map(str, ns)), "reps": reps, "precision": precision}, {"sweep": out}
    )
    for r in rows:
        print(f"N={r.N:>7} {r.mode:<10} S={r.S:>7} fwd {r.time_fwd_ms_median:10.2f} ms  fwd+bwd {r.time_fwdbwd_ms_median:10.2f} ms")
    if len(ns) >= 2:
        dense = {r.N: r.time_fwd_ms_median for r in rows if r.mode == "dense"}
        lh = {r.N: r for r in rows if r.mode == "lighthouse"}
        top = top_decade(ns)
        if len(top) >= 2:
            print(f"dense layer time slope over {top}: {loglog_slope(top, [dense[n] for n in top]):.2f}")
        print(f"lighthouse flop slope: {loglog_slope(ns, [lh[n].flops_total for n in ns]):.2f}")
        print("dense/lighthouse time ratio: " + ", ".join(f"{dense[n] / lh[n].time_fwd_ms_median:.2f}" for n in ns))
    print(f"wrote {out}")
    return 0


def cmd_train(args) -> int:
    values, run = load_config(args.config, train_defaults()) if args.config else (train_defaults(), {})
    if args.seed_given:
        values["seed"] = args.seed
    elif "seed" in run:
        values["seed"] = int(run["seed"])
    values["precision"] = args.precision if args.precision_given else values["precision"]
    two_stage = args.two_stage or (run.get("two_stage") == "true")
    baseline = args.baseline or (run.get("baseline") == "true")
    if not (two_stage or baseline):
        two_stage = baseline = True
    cfg = TrainConfig(**values)
    out = Path(args.out or "train_out")
    out.mkdir(parents=True, exist_ok=True)
    outputs, reports = {}, {}
    if two_stage:
        reports["two_stage"] = train_two_stage(cfg)
    if baseline:
        reports["baseline"] = train_dense_baseline(cfg)
    for name, rep in reports.items():
        path = out / f"{name}.csv"
        rep.to_csv(path)
        outputs[name] = path
        print(
            f"{name}: final {rep.final_loss:.4f}  entropy floor {rep.entropy_rate:.4f}  "
            f"spike {_fmt(rep.spike)}  steps_to_recover {_fmt(rep.steps_to_recover)}  "
            f"wall clock {rep.wall_clock[0]:.1f}s + {rep.wall_clock[1]:.1f}s"
        )
    if len(reports) == 2:
        ratio = reports["two_stage"].final_loss / reports["baseline"].final_loss
        print(f"two-stage / baseline final loss: {ratio:.4f}")
    cfg_values = dataclasses.asdict(cfg)
    run_out = {"two_stage": two_stage, "baseline": baseline}
    write_manifest(out / "manifest.txt", "train", cfg.seed, cfg_values, run_out, outputs)
    print(f"wrote {', '.join(str(p) for p in outputs.values())}")
    return 0


def _fmt(x) -> str:
    return "-" if x is None else (f"{x:.4f}" if isinstance(x, float) else str(x))


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"--n expects a comma-separated list of integers, got {text!r}") from None


# ------------------------------------------------------------------ entry


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key = value config file or a run manifest")
    common.add_argument("--seed", type=int, metavar="U64", help="top-level seed (default 0; train: from config)")
    common.add_argument("--out", metavar="PATH", help="output file (check, bench) or directory (train)")
    common.add_argument("--precision", type=int, choices=(64, 32), help="float width (default 64)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")

    parser = argparse.ArgumentParser(prog="lighthouse", description="Lighthouse attention reference suite")
    parser.add_argument("--version", action="version", version=f"lighthouse {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="{check,selftest,bench,train}")
    sub.add_parser("check", parents=[common], help="run every named invariant")
    sub.add_parser("selftest", parents=[common], help="single-level equivalence and gradient checks only")
    bench = sub.add_parser("bench", parents=[common], help="dense vs Lighthouse scaling sweep to CSV")
    bench.add_argument("--n", metavar="CSV-list", help=f"sequence lengths (default {','.join(map(str, DEFAULT_NS))})")
    bench.add_argument("--reps", type=int, metavar="COUNT", help="timed repetitions per point (default 10)")
    train = sub.add_parser("train", parents=[common], help="toy two-stage and/or dense-baseline training")
    train.add_argument("--two-stage", action="store_true", help="run Lighthouse then dense resume")
    train.add_argument("--baseline", action="store_true", help="run dense from scratch")
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    args.seed_given = args.seed is not None
    args.precision_given = args.precision is not None
    args.seed = 0 if args.seed is None else args.seed
    args.precision = 64 if args.precision is None else args.precision
    if args.seed < 0 or args.seed >= 2**64:
        print("lighthouse: --seed must fit in an unsigned 64-bit integer", file=sys.stderr)
        return 2
    try:
        if args.command == "check":
            return cmd_check(args, list(CHECKS))
        if args.command == "selftest":
            return cmd_check(args, list(SELFTEST))
        if args.command == "bench":
            return cmd_bench(args)
        return cmd_train(args)
    except (ConfigError, OSError) as exc:
        print(f"lighthouse: error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
