"""Command-line front end: generate synthetic traces, run one simulation, or
compare all methods on a trace.

Exit codes: 0 success, 1 usage/config error, 2 simulation completed but some
tasks failed permanently. Log level comes from the SIZELY_LOG environment
variable (default WARNING).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from .plots import save_comparison_figures, save_report_figure
from .raq import GatingConfig
from .sim import (
    METHOD_NAMES,
    SIZEY,
    MetricRow,
    SimulationConfig,
    WastageReport,
    run_simulation,
    write_report_csv,
    write_report_json,
)
from .sizer import OFFSET_MODES
from .trace import (
    DEFAULT_CAPACITY,
    SyntheticSpec,
    TaskTypeSpec,
    TraceParseError,
    filter_dataset,
    generate_synthetic,
    parse_trace,
    validate,
    write_machines,
    write_trace,
)

log = logging.getLogger("sizely")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PERMANENT_FAILURES = 2

MATRIX_HEADER = "method,wasted_gbh,failures,runtime_hours,rel_reduction_vs_best_baseline"
PLOTDATA_HEADER = "method,metric,value"


@dataclass(frozen=True)
class CompareMatrix:
    """Per-method totals plus the relative wastage reduction of the RAQ
    ensemble against the best-performing baseline."""

    rows: dict[str, MetricRow]
    rel_reduction: float | None

    @classmethod
    def from_reports(cls, reports: dict[str, WastageReport]) -> "CompareMatrix":
        rows = {name: rep.total for name, rep in reports.items()}
        rel = None
        baselines = [rows[m].wasted_gbh for m in rows if m != SIZEY]
        if SIZEY in rows and baselines:
            best = min(baselines)
            if best > 0:
                rel = (best - rows[SIZEY].wasted_gbh) / best
        return cls(rows=rows, rel_reduction=rel)

    def to_csv(self) -> str:
        lines = [MATRIX_HEADER]
        for name, row in self.rows.items():
            rel = ""
            if name == SIZEY and self.rel_reduction is not None:
                rel = repr(self.rel_reduction)
            lines.append(
                f"{name},{row.wasted_gbh!r},{row.failures},{row.runtime_hours!r},{rel}"
            )
        return "\n".join(lines) + "\n"

    def to_plot_data(self) -> str:
        lines = [PLOTDATA_HEADER]
        for name, row in self.rows.items():
            lines.append(f"{name},wasted_gbh,{row.wasted_gbh!r}")
            lines.append(f"{name},failures,{row.failures}")
            lines.append(f"{name},runtime_hours,{row.runtime_hours!r}")
        return "\n".join(lines) + "\n"


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _ttf(value: str) -> float:
    v = float(value)
    if not 0.0 < v <= 1.0:
        raise argparse.ArgumentTypeError("ttf must be in (0, 1]")
    return v


def _add_sim_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--trace", required=True, help="trace CSV path")
    p.add_argument("--machines", help="machine CSV path (machine,mem_capacity_bytes)")
    p.add_argument("--capacity", type=float, default=DEFAULT_CAPACITY,
                   help="capacity in bytes for machines without a sidecar file")
    p.add_argument("--alpha", type=float, default=0.0,
                   help="quality score weight: 0 = accuracy only, 1 = efficiency only")
    p.add_argument("--beta", type=float, default=4.0, help="interpolation sharpness")
    p.add_argument("--gating", choices=["argmax", "interpolation"], default="interpolation")
    p.add_argument("--offset", choices=list(OFFSET_MODES), default="dynamic")
    p.add_argument("--ttf", type=_ttf, default=1.0,
                   help="fraction of the runtime after which an under-allocated task fails")
    p.add_argument("--update", choices=["full", "incremental"], default="full")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--min-runtime", type=float, default=0.0,
                   help="drop records with runtime below this many seconds")
    p.add_argument("--min-instances", type=int, default=0,
                   help="drop task types with fewer instances than this")
    p.add_argument("--out", default="out", help="output directory")


def build_parser() -> _Parser:
    parser = _Parser(prog="sizely", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", parents=[], help="generate a synthetic trace")
    gen.add_argument("--spec", required=True, help="JSON generator spec")
    gen.add_argument("--out", required=True, help="trace CSV output path")

    simp = sub.add_parser("simulate", help="replay a trace with one method")
    simp.add_argument("--method", choices=list(METHOD_NAMES), default=SIZEY)
    _add_sim_flags(simp)

    comp = sub.add_parser("compare", help="replay a trace with every method")
    _add_sim_flags(comp)
    return parser


def load_spec(path: str | Path) -> SyntheticSpec:
    with open(path) as fh:
        raw = json.load(fh)
    types = []
    for t in raw.get("task_types", []):
        types.append(
            TaskTypeSpec(
                name=t["name"],
                relation=t["relation"],
                base_mem=float(t["base_mem"]),
                slope=float(t.get("slope", 0.0)),
                noise_sigma=float(t.get("noise_sigma", 0.0)),
                instance_count=int(t.get("instance_count", 1)),
                input_range=tuple(t.get("input_range", (0, 0))),
                runtime_range=tuple(t.get("runtime_range", (60, 60))),
                preset_multiplier=float(t.get("preset_multiplier", 2.0)),
            )
        )
    return SyntheticSpec(task_types=tuple(types), seed=int(raw.get("seed", 0)))


def machines_path_for(trace_path: Path) -> Path:
    return trace_path.with_suffix("").with_suffix(".machines.csv") \
        if trace_path.suffix else trace_path.with_name(trace_path.name + ".machines.csv")


def cmd_generate(args) -> int:
    try:
        spec = load_spec(args.spec)
        ds = generate_synthetic(spec)
    except (OSError, ValueError, KeyError) as exc:
        log.error("invalid generator spec: %s", exc)
        print(f"sizely: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_trace(ds, out)
    write_machines(ds, machines_path_for(out))
    print(f"wrote {len(ds.records)} records to {out}")
    return EXIT_OK


def _load_dataset(args):
    ds = parse_trace(args.trace, machines_path=args.machines,
                     default_capacity=args.capacity)
    ds = filter_dataset(ds, args.min_runtime, args.min_instances)
    if not ds.records:
        raise TraceParseError("no records left after filtering")
    problems = validate(ds)
    # capacity overflows are survivable: they surface as permanent failures
    hard = [p for p in problems if "exceeds capacity" not in p]
    if hard:
        raise TraceParseError("; ".join(hard[:5]))
    for p in problems:
        log.warning("%s", p)
    return ds


def _config(args, method: str) -> SimulationConfig:
    return SimulationConfig(
        method=method,
        ttf=args.ttf,
        gating=GatingConfig(alpha=args.alpha, strategy=args.gating, beta=args.beta),
        update_mode=args.update,
        offset_mode=args.offset,
        seed=args.seed,
    )


def cmd_simulate(args) -> int:
    try:
        ds = _load_dataset(args)
        cfg = _config(args, args.method)
    except (OSError, ValueError) as exc:
        print(f"sizely: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    report = run_simulation(ds, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_report_json(report, out / f"report_{cfg.method}.json")
    write_report_csv(report, out / f"report_{cfg.method}.csv")
    save_report_figure(report, out / f"report_{cfg.method}.png")
    print(
        f"{cfg.method}: wasted {report.total.wasted_gbh:.3f} GBh, "
        f"{report.total.failures} failed attempts, "
        f"{report.total.permanent_failures} permanent failures"
    )
    if report.total.permanent_failures:
        return EXIT_PERMANENT_FAILURES
    return EXIT_OK


def cmd_compare(args) -> int:
    try:
        ds = _load_dataset(args)
        configs = {name: _config(args, name) for name in METHOD_NAMES}
    except (OSError, ValueError) as exc:
        print(f"sizely: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    reports = {}
    for name, cfg in configs.items():
        log.info("running %s", name)
        reports[name] = run_simulation(ds, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, report in reports.items():
        write_report_json(report, out / f"report_{name}.json")
        write_report_csv(report, out / f"report_{name}.csv")
    matrix = CompareMatrix.from_reports(reports)
    (out / "compare_matrix.csv").write_text(matrix.to_csv())
    (out / "compare_plotdata.csv").write_text(matrix.to_plot_data())
    save_comparison_figures(reports, out)
    for name, row in matrix.rows.items():
        print(f"{name:16s} wasted {row.wasted_gbh:12.3f} GBh  "
              f"failures {row.failures:5d}  runtime {row.runtime_hours:10.2f} h")
    if matrix.rel_reduction is not None:
        print(f"reduction vs best baseline: {100 * matrix.rel_reduction:.2f}%")
    if any(r.total.permanent_failures for r in reports.values()):
        return EXIT_PERMANENT_FAILURES
    return EXIT_OK


def main(argv=None) -> int:
    try:
        logging.basicConfig(level=os.environ.get("SIZELY_LOG", "WARNING").upper())
    except ValueError:
        logging.basicConfig(level=logging.WARNING)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "generate":
        return cmd_generate(args)
    if args.command == "simulate":
        return cmd_simulate(args)
    return cmd_compare(args)


if __name__ == "__main__":
    sys.exit(main())
