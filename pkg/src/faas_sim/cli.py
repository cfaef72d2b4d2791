"""Command line entry point: ``faas-sim run`` and ``faas-sim compare``.

Output directory precedence: ``--out`` > ``$FAAS_SIM_OUT`` > ``output_dir`` in
the scenario file > ``./out``. Without an explicit ``--out`` each scenario
writes into a subdirectory named after it.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import config as cfgmod
from .controller import run_config
from .errors import ConfigError, ParseError, SimError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

ENV_OUT = "FAAS_SIM_OUT"

COMPARE_COLUMNS = ("scenario", "arrt_s", "avg_vm_util_allocated", "avg_vm_util_busy",
                   "cold_start_fraction", "vm_seconds", "rejected_count", "completed_count")

# scalar fields echoed by ``run --format csv``
SUMMARY_FIELDS = ("arrt_s", "avg_vm_util_allocated", "avg_vm_util_busy", "cold_start_fraction",
                  "rejected_count", "completed_count", "arrived_count", "unfinished_count",
                  "throughput_rps", "vm_seconds", "makespan_s", "containers_created")


def _parse_set(text: str) -> tuple[str, object]:
    key, sep, raw = text.partition("=")
    if not sep or not key.strip():
        raise ConfigError(text, "expected --set key=value")
    try:
        value = cfgmod.tomllib.loads(f"v = {raw.strip()}")["v"]
    except cfgmod.tomllib.TOMLDecodeError:
        value = raw.strip()
    return key.strip(), value


def _load(scenario: str, seed=None, end_time=None, sets=()) -> cfgmod.ScenarioConfig:
    cfg = cfgmod.load(cfgmod.find_scenario(scenario))
    overrides = dict(_parse_set(s) for s in sets)
    if seed is None and end_time is None and not overrides:
        return cfg
    return cfgmod.apply_overrides(cfg, seed=seed, end_time_s=end_time, sets=overrides)


def _out_dir(cfg: cfgmod.ScenarioConfig, explicit: str | None) -> Path:
    if explicit:
        return Path(explicit)
    base = os.environ.get(ENV_OUT)
    if base:
        return Path(base) / cfg.name
    if cfg.output_dir:
        return cfgmod.resolve_path(cfg, cfg.output_dir)
    return Path("out") / cfg.name


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _echo_summary(summary, fmt: str) -> None:
    if fmt == "json":
        print(summary.to_json())
        return
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("metric", "value"))
    d = summary.to_dict()
    for k in SUMMARY_FIELDS:
        w.writerow((k, "" if d[k] is None else repr(d[k])))
    sys.stdout.write(buf.getvalue())


def cmd_run(args) -> int:
    cfg = _load(args.scenario, args.seed, args.end_time, args.set)
    out = _out_dir(cfg, args.out)
    result = run_config(cfg, out_dir=out, log_events=args.log_events)
    _echo_summary(result.summary, args.format)
    print(f"outputs written to {out}", file=sys.stderr)
    return EXIT_OK


def _compare_one(job) -> tuple[str, dict | None, str | None, int]:
    scenario, seed, end_time, sets, out = job
    try:
        cfg = _load(scenario, seed, end_time, sets)
        summary = run_config(cfg, out_dir=Path(out) / cfg.name).summary
        row = {k: v for k, v in summary.to_dict().items() if k in COMPARE_COLUMNS}
        return cfg.name, row, None, EXIT_OK
    except (ConfigError, ParseError) as exc:
        return scenario, None, str(exc), EXIT_CONFIG
    except (SimError, OSError) as exc:
        return scenario, None, f"{type(exc).__name__}: {exc}", EXIT_RUNTIME


def format_table(rows: list[dict]) -> str:
    """Aligned text: text columns left-justified, numbers right-justified."""
    cells = [list(COMPARE_COLUMNS)] + [[_fmt(r.get(c)) for c in COMPARE_COLUMNS] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(COMPARE_COLUMNS))]
    lines = []
    for row in cells:
        parts = [row[0].ljust(widths[0])] + [v.rjust(w) for v, w in zip(row[1:], widths[1:])]
        lines.append("  ".join(parts).rstrip())
    return "\n".join(lines) + "\n"


def cmd_compare(args, parser) -> int:
    if len(args.scenarios) < 2:
        parser.error("compare needs at least two scenarios")
    out = Path(args.out or os.environ.get(ENV_OUT) or "out")
    jobs = [(s, args.seed, args.end_time, tuple(args.set), str(out)) for s in args.scenarios]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as ex:
            results = list(ex.map(_compare_one, jobs))
    else:
        results = [_compare_one(j) for j in jobs]

    rows, status = [], EXIT_OK
    for name, row, err, code in results:
        if err is not None:
            print(f"{name}: failed: {err}", file=sys.stderr)
            status = max(status, code)
        else:
            rows.append({"scenario": name, **row})

    out.mkdir(parents=True, exist_ok=True)
    with open(out / "comparison.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COMPARE_COLUMNS)
        for r in rows:
            w.writerow(["" if r.get(c) is None else (repr(r[c]) if isinstance(r[c], float) else r[c])
                        for c in COMPARE_COLUMNS])
    table = format_table(rows)
    (out / "comparison.txt").write_text(table, encoding="utf-8")
    sys.stdout.write(table)
    return status


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="faas-sim", description="Discrete-event serverless platform simulator.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, help="override the scenario seed")
        sp.add_argument("--end-time", type=float, help="stop the simulation at this time (s)")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a dotted config key, e.g. scaling.interval_s=5 (repeatable)")
        sp.add_argument("--out", help=f"output directory (default ${ENV_OUT} or ./out)")

    r = sub.add_parser("run", help="run one scenario")
    r.add_argument("scenario", help="scenario file or shipped scenario name")
    common(r)
    r.add_argument("--format", choices=("csv", "json"), default="json", help="summary format on stdout")
    r.add_argument("--log-events", action="store_true", help="also write events.log")

    c = sub.add_parser("compare", help="run several scenarios and tabulate their metrics")
    c.add_argument("scenarios", nargs="+")
    common(c)
    c.add_argument("--jobs", type=int, default=1, help="worker processes")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return cmd_run(args)
        return cmd_compare(args, parser)
    except (ConfigError, ParseError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SimError, OSError) as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
