"""Command-line entry point: ``hybridnav run`` and ``hybridnav replay``."""

from __future__ import annotations

import argparse
import csv
import logging
import os
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .config import ConfigError, StackConfig, apply_overrides
from .logs import LogError, build_log, read_log, recompute_metrics, write_log
from .plotting import write_svg
from .scenarios import PLANNERS, SUMMARY_FIELDS, ConfigInvalid, aggregate, format_table, load_scenario, run_episode

EXIT_OK, EXIT_INTERNAL, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("hybridnav")


@dataclass
class RunSpec:
    scenario: str
    planners: list[str]
    seeds: list[int]
    out: Path
    overrides: dict[str, str] = field(default_factory=dict)


def parse_seeds(text: str) -> list[int]:
    """``3``, ``0..9`` (inclusive) or a comma list of either."""
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        m = re.fullmatch(r"(-?\d+)\.\.(-?\d+)", part)
        if m:
            a, b = int(m.group(1)), int(m.group(2))
            if b < a:
                raise ConfigError(f"seeds: empty range {part!r}")
            seeds.extend(range(a, b + 1))
        elif re.fullmatch(r"-?\d+", part):
            seeds.append(int(part))
        else:
            raise ConfigError(f"seeds: cannot parse {part!r}")
    return seeds


def parse_overrides(items: list[str]) -> dict[str, str]:
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_summary_csv(rows: list[dict], path: Path) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_FIELDS)
        for r in rows:
            w.writerow([_fmt(r[k]) for k in SUMMARY_FIELDS])
    return path


def cmd_run(spec: RunSpec) -> int:
    cfg = apply_overrides(StackConfig(), spec.overrides)
    scn = load_scenario(spec.scenario)
    spec.out.mkdir(parents=True, exist_ok=True)
    results = []
    for planner in spec.planners:
        for seed in spec.seeds:
            res = run_episode(scn, planner, seed, cfg)
            ep = build_log(res, scn, cfg)
            write_log(ep, spec.out / f"{ep.name}.jsonl")
            write_svg(ep, spec.out / f"{ep.name}.svg")
            log.info("%s: %s in %.1f s", ep.name, res.outcome.value, res.nav_time)
            results.append(res)
    rows = aggregate(results)
    write_summary_csv(rows, spec.out / f"summary_{scn.id}.csv")
    print(format_table(rows))
    return EXIT_OK


def cmd_replay(path: Path, out: Path | None = None) -> int:
    ep = read_log(path)
    metrics = recompute_metrics(ep)
    target = (out or path.parent) / f"{ep.name}.svg"
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    write_svg(ep, target)
    for k, v in metrics.items():
        print(f"{k}: {_fmt(v)}")
    stored = ep.footer.get("metrics")
    if stored is not None and stored != metrics:
        log.warning("replayed metrics differ from the stored summary")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hybridnav", description="Run and replay local-planner scenarios.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="simulate scenario episodes")
    r.add_argument("--scenario", required=True, help="C1..C4 or a scenario YAML path")
    r.add_argument("--planner", default="all", choices=[*PLANNERS, "all"])
    r.add_argument("--seeds", default="0..9", help="e.g. 0..9 or 1,4,7")
    r.add_argument("--out", default="out", type=Path)
    r.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    rp = sub.add_parser("replay", help="re-render a stored episode log")
    rp.add_argument("log", type=Path)
    rp.add_argument("--out", type=Path, default=None, help="directory for the SVG (default: next to the log)")
    return p


def _setup_logging() -> None:
    level = os.environ.get("HYBRIDNAV_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            planners = list(PLANNERS) if args.planner == "all" else [args.planner]
            spec = RunSpec(args.scenario, planners, parse_seeds(args.seeds), args.out, parse_overrides(args.overrides))
            return cmd_run(spec)
        return cmd_replay(args.log, args.out)
    except (ConfigError, ConfigInvalid) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LogError as exc:
        print(f"log error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
