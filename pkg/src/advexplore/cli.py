"""Command line entry: ``run`` one trial, ``sweep`` collectors x seeds, ``kde`` loss densities.

A ``--config`` JSON file may hold any flag under its long name (dashes or
underscores); flags given on the command line win. Relative output paths are
resolved under ``$ADVEXPLORE_OUT`` when that variable is set.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import experiment as ex

OUT_ENV = "ADVEXPLORE_OUT"


def parse_seeds(text: str) -> list[int]:
    """``"0..4"`` (inclusive) or ``"0,2,5"``."""
    text = str(text).strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        lo, hi = int(lo), int(hi)
        if hi < lo:
            raise ValueError(f"empty seed range {text!r}")
        return list(range(lo, hi + 1))
    return [int(s) for s in text.split(",") if s.strip()]


def resolve_out(path) -> Path:
    p = Path(path)
    root = os.environ.get(OUT_ENV)
    if root and not p.is_absolute():
        return Path(root) / p
    return p


def _trial_args(p: argparse.ArgumentParser):
    p.add_argument("--env", dest="env_id")
    p.add_argument("--preset", choices=sorted(ex.PRESETS))
    p.add_argument("--delta", type=float)
    p.add_argument("--warmup-samples", type=int)
    p.add_argument("--no-stab", action="store_const", const=True, default=None,
                   help="reward is the raw inverse loss")
    p.add_argument("--n-iter", type=int)
    p.add_argument("--config", help="JSON file with flag values")
    p.add_argument("--out")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="advexplore", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one trial")
    run.add_argument("--collector")
    run.add_argument("--seed", type=int)
    _trial_args(run)

    sweep = sub.add_parser("sweep", help="run collectors x seeds and aggregate")
    sweep.add_argument("--collectors", help="comma separated")
    sweep.add_argument("--seeds", help="e.g. 0..4 or 0,1,2")
    _trial_args(sweep)

    kde = sub.add_parser("kde", help="loss densities from saved trial logs")
    kde.add_argument("--in", dest="in_dir")
    kde.add_argument("--out")
    kde.add_argument("--config", help="JSON file with flag values")
    return parser


def merge_config(args: argparse.Namespace) -> dict:
    """Flag values over config-file values; unset flags are dropped."""
    values = {}
    if getattr(args, "config", None):
        raw = json.loads(Path(args.config).read_text())
        values.update({k.replace("-", "_"): v for k, v in raw.items()})
        if "env" in values:
            values["env_id"] = values.pop("env")
        if "in" in values:
            values["in_dir"] = values.pop("in")
    values.update({k: v for k, v in vars(args).items() if v is not None and k != "config"})
    return values


def trial_config(values: dict, **fixed) -> ex.TrialConfig:
    overrides = {k: values[k] for k in ("env_id", "delta", "warmup_samples", "n_iter", "collector", "seed")
                 if k in values}
    if values.get("no_stab"):
        overrides["stabilize"] = False
    overrides.update(fixed)
    return ex.make_config(values.get("preset", "paper"), **overrides)


def _require(values, *names):
    missing = [n for n in names if n not in values]
    if missing:
        raise SystemExit("missing required option(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))


def cmd_run(values: dict) -> Path:
    _require(values, "env_id", "collector", "seed", "out")
    cfg = trial_config(values)
    out = resolve_out(values["out"])
    out.mkdir(parents=True, exist_ok=True)
    try:
        log = ex.run_trial(cfg, progress=_progress)
    except Exception as exc:
        partial = getattr(exc, "partial_log", None)
        if partial is not None:
            partial.save(out / "trial_partial.json")
        raise
    log.save(out / f"trial_seed{cfg.seed}.json")
    ex.emit([log], out)
    print(f"final success {log.final_success:.3f} after {log.env_samples} samples -> {out}")
    return out


def cmd_sweep(values: dict) -> Path:
    _require(values, "env_id", "collectors", "seeds", "out")
    collectors = [c.strip() for c in str(values["collectors"]).split(",") if c.strip()]
    seeds = parse_seeds(values["seeds"])
    base = trial_config(values, collector=collectors[0], seed=seeds[0])
    out = resolve_out(values["out"])
    results = ex.run_sweep(base, collectors, seeds, out,
                           progress=lambda name, seed, log: print(
                               f"{name} seed {seed}: final success {log.final_success:.3f}", flush=True))
    ex.write_loss_pdf(out / "loss_pdf.csv", results)
    return out


def cmd_kde(values: dict) -> Path:
    _require(values, "in_dir", "out")
    root = resolve_out(values["in_dir"])
    groups: dict[str, list[ex.TrialLog]] = {}
    for path in sorted(root.rglob("trial_seed*.json")):
        log = ex.TrialLog.load(path)
        groups.setdefault(log.config["collector"], []).append(log)
    if not groups:
        raise SystemExit(f"no trial logs under {root}")
    out = resolve_out(values["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    ex.write_loss_pdf(out, groups)
    print(f"{sum(map(len, groups.values()))} trials, {len(groups)} collectors -> {out}")
    return out


def _progress(i, log):
    if log.eval_samples and i % 10 == 0:
        print(f"iter {i}: samples {log.eval_samples[-1]} success {log.eval_success[-1]:.3f}", flush=True)


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "kde": cmd_kde}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    COMMANDS[args.command](merge_config(args))
    return 0


if __name__ == "__main__":
    sys.exit(main())
