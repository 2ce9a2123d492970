"""Command line: ``scenario gen``, ``run``, ``sweep`` and ``report``."""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from contextlib import ExitStack
from pathlib import Path

from .config import ConfigError, ScenarioConfig, apply_overrides, dump, load, save, scenario_gen, template
from .dsr import InvariantViolation
from .network import Network
from .report import ReportError, build_report, read_batch, summary_table, write_rows
from .sim import derive_seed
from .traffic import RunResult

log = logging.getLogger("repdsr")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3

OUT_ENV = "REPDSR_OUT"

SWEEP_DIMENSIONS = ("malicious_pct", "window_size", "pause_time")
# the window only exists when the monitor runs, so there is no plain-DSR arm
IDS_ONLY = {"window_size"}


def default_out() -> Path:
    return Path(os.environ.get(OUT_ENV, "out"))


def _parse_sets(pairs: list[str] | None) -> dict[str, str]:
    out = {}
    for item in pairs or ():
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"malformed override {item!r}; expected key=value")
        out[key.strip()] = value.strip()
    return out


def _base_config(args) -> ScenarioConfig:
    cfg = load(args.config) if args.config else template(args.template)
    overrides = _parse_sets(args.set)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "ids", None) is not None:
        overrides["ids"] = args.ids == "on"
    return apply_overrides(cfg, overrides) if overrides else cfg


# -- verbs ---------------------------------------------------------------------

def cmd_scenario_gen(args) -> int:
    overrides = _parse_sets(args.set)
    if args.ids is not None:
        overrides["ids"] = args.ids == "on"
    cfg = scenario_gen(args.template, overrides, args.seed)
    if args.out is None or str(args.out) == "-":
        sys.stdout.write(dump(cfg))
    else:
        save(cfg, args.out)
        log.info("wrote %s", args.out)
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _base_config(args)
    out = Path(args.out) if args.out else default_out()
    out.mkdir(parents=True, exist_ok=True)
    with ExitStack() as stack:
        traces = {}
        for kind in args.trace or ():
            traces[f"{'packet' if kind == 'packets' else 'reputation'}_trace"] = stack.enter_context(
                open(out / f"{cfg.scenario_id}-{cfg.seed}-{kind}.trace", "w"))
        result = Network(cfg, **traces).run()
    write_rows(out / "result.csv", [result])
    save(cfg, out / "effective-config.yaml")
    print(",".join(result.row().values()))
    return EXIT_OK


def sweep_seed(base_seed: int, value: str, repeat: int) -> int:
    """Seed for one sweep cell.

    The value is deliberately unused so that every point of a sweep sees the
    same placements, movements and flows (common random numbers); the cell
    stays a pure function of its coordinates either way.
    """
    del value
    return derive_seed(base_seed, "sweep", repeat) % (2 ** 31)


def _sweep_value(dimension: str, raw: str) -> float:
    v = float(raw)
    if dimension == "malicious_pct" and v > 1.0:
        v /= 100.0
    return v


def _run_cell(job: tuple[dict, str, str, int]) -> RunResult:
    from .config import from_dict
    data, dimension, value, repeat = job
    result = Network(from_dict(data)).run()
    result.sweep_dimension = dimension
    result.sweep_value = value
    result.repeat = repeat
    return result


def sweep_jobs(base: ScenarioConfig, dimension: str, values: list[str], repeats: int):
    from .config import to_dict
    if dimension not in SWEEP_DIMENSIONS:
        raise ConfigError(f"unknown sweep dimension {dimension!r}; choose from {', '.join(SWEEP_DIMENSIONS)}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    if repeats < 1:
        raise ConfigError("repeats must be >= 1")
    arms = ("on",) if dimension in IDS_ONLY else ("on", "off")
    for value in values:
        x = _sweep_value(dimension, value)
        for repeat in range(repeats):
            for arm in arms:
                cfg = apply_overrides(base, {
                    dimension: x, "ids": arm == "on", "seed": sweep_seed(base.seed, value, repeat),
                    # explicit nodes and flows would pin every cell to one scenario
                    "adversary.nodes": None, "traffic.flows": None})
                yield (value, repeat, arm), (to_dict(cfg), dimension, value, repeat)


def _done_cells(path: Path) -> set[tuple[str, int, str]]:
    if not path.exists() or path.stat().st_size == 0:
        return set()
    with open(path, newline="") as fh:
        return {(r["sweep_value"], int(r["repeat"]), r["ids"]) for r in csv.DictReader(fh)}


def cmd_sweep(args) -> int:
    base = _base_config(args)
    out = Path(args.out) if args.out else default_out()
    out.mkdir(parents=True, exist_ok=True)
    batch = out / f"sweep-{args.dimension}.csv"
    done = _done_cells(batch)
    jobs = [job for key, job in sweep_jobs(base, args.dimension, args.values, args.repeats)
            if key not in done]
    log.info("%d cells to run, %d already present", len(jobs), len(done))
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            # results come back in submission order and are appended from this process only
            for result in pool.map(_run_cell, jobs):
                write_rows(batch, [result], append=True)
    else:
        for job in jobs:
            write_rows(batch, [_run_cell(job)], append=True)
    rows = read_batch(batch)
    (out / f"sweep-{args.dimension}-summary.txt").write_text(summary_table(rows))
    print(batch)
    return EXIT_OK


def cmd_report(args) -> int:
    out = Path(args.out) if args.out else default_out() / "report"
    for path in build_report(Path(args.batch), out):
        print(path)
    return EXIT_OK


# -- parser --------------------------------------------------------------------

def _common(p: argparse.ArgumentParser, config: bool = True) -> None:
    if config:
        p.add_argument("--config", type=Path, help="scenario file (YAML)")
    p.add_argument("--template", default="baseline-20", help="built-in template: baseline-10 or baseline-20")
    p.add_argument("--seed", type=int)
    p.add_argument("--ids", choices=("on", "off"))
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config value, e.g. adversary.fraction=0.3 (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="repdsr", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    scen = sub.add_parser("scenario", help="scenario files")
    scen_sub = scen.add_subparsers(dest="action", required=True)
    gen = scen_sub.add_parser("gen", help="write a fully resolved scenario")
    _common(gen, config=False)
    gen.add_argument("--out", help="destination file; stdout when omitted")
    gen.set_defaults(func=cmd_scenario_gen)

    run = sub.add_parser("run", help="run one simulation")
    _common(run)
    run.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./out)")
    run.add_argument("--trace", action="append", choices=("packets", "reputation"))
    run.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", help="parameter sweep into a batch CSV")
    _common(sw)
    sw.add_argument("--dimension", required=True, choices=SWEEP_DIMENSIONS)
    sw.add_argument("--values", required=True, type=lambda s: [v for v in s.split(",") if v],
                    help="comma-separated values")
    sw.add_argument("--repeats", type=int, default=10)
    sw.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    sw.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./out)")
    sw.set_defaults(func=cmd_sweep)

    rep = sub.add_parser("report", help="summary table and SVG charts from a batch CSV")
    rep.add_argument("batch", help="batch CSV written by sweep")
    rep.add_argument("--out", help="directory for the report files")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ReportError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
