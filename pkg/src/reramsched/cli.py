"""Command-line front end: simulate a variant, compare variants, and analyze
weight-reuse potential. Reports are machine-parsable key=value text."""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import io
import os
import sys

from . import reuse as reuse_mod
from .model import (AcceleratorConfig, NetworkModel, load_config,
                    load_network, validate_config)
from .scheduler import (Schedule, ScheduleOptions, optimized_schedule,
                        export_trace, naive_schedule, schedule_for_variant)
from .simulator import (Metrics, export_timed_trace, lifespan_estimate,
                        simulate)

CONFIG_ENV_VAR = "RERAMSCHED_CONFIG"
VARIANTS = ("naive", "base", "b", "br", "brw")

DEFAULT_ENDURANCE = 1.0e8


class CliError(Exception):
    pass


def _load_inputs(args) -> tuple[NetworkModel, AcceleratorConfig]:
    config_path = args.config or os.environ.get(CONFIG_ENV_VAR)
    if config_path is not None:
        if not os.path.exists(config_path):
            raise CliError(f"config file not found: {config_path}")
        try:
            config = load_config(config_path)
        except Exception as exc:
            raise CliError(f"{config_path}: {exc}") from exc
    else:
        config = validate_config(AcceleratorConfig())
    if not os.path.exists(args.network):
        raise CliError(f"network file not found: {args.network}")
    try:
        network = load_network(args.network)
    except Exception as exc:
        raise CliError(f"{args.network}: {exc}") from exc
    if getattr(args, "seed", None) is not None:
        _reseed_network(network, args.seed)
    return network, config


def _reseed_network(network: NetworkModel, seed: int) -> None:
    """Offset every generator-backed layer seed; inline weights are kept."""
    for rec in network.layers:
        gen = rec.weights._generator
        if gen is not None and rec.weights._values is None:
            gen["seed"] = int(gen.get("seed", 0)) + seed


def _options_from_args(args, variant: str) -> ScheduleOptions:
    options = ScheduleOptions.for_variant(variant)
    if getattr(args, "clip_threshold", None) is not None:
        options.clip_threshold = args.clip_threshold
    if getattr(args, "centers", None):
        options.centers = tuple(args.centers)
    return options


def _run_variant(network: NetworkModel, config: AcceleratorConfig,
                 variant: str, args) -> tuple[Schedule, Metrics]:
    if variant == "naive":
        schedule = naive_schedule(network, config)
    else:
        schedule = optimized_schedule(
            network, config, _options_from_args(args, variant),
            label=variant)
    return schedule, simulate(schedule, network, config)


def overlap_cycles(metrics: Metrics, schedule: Schedule) -> int:
    """Cycles during which a crossbar write and a compute run concurrently."""
    from .scheduler import InstrKind

    def merged(kind):
        spans = sorted((ti.start, ti.end) for ti in metrics.timeline
                       if schedule.instructions[ti.instruction].kind is kind
                       and ti.end > ti.start)
        out = []
        for s, e in spans:
            if out and s <= out[-1][1]:
                out[-1][1] = max(out[-1][1], e)
            else:
                out.append([s, e])
        return out

    writes = merged(InstrKind.WRITE_CROSSBAR)
    computes = merged(InstrKind.COMPUTE_LAYER_SEGMENT)
    total = 0
    i = j = 0
    while i < len(writes) and j < len(computes):
        lo = max(writes[i][0], computes[j][0])
        hi = min(writes[i][1], computes[j][1])
        if hi > lo:
            total += hi - lo
        if writes[i][1] <= computes[j][1]:
            i += 1
        else:
            j += 1
    return total


def _report_pairs(label: str, schedule: Schedule, metrics: Metrics,
                  config: AcceleratorConfig) -> list[tuple[str, object]]:
    inf_per_s = config.frequency / max(metrics.makespan, 1)
    pairs = [
        ("label", label),
        ("makespan_cycles", metrics.makespan),
        ("energy_write_j", metrics.energy_write),
        ("energy_compute_j", metrics.energy_compute),
        ("energy_static_j", metrics.energy_static),
        ("energy_total_j", metrics.energy_total),
        ("total_pulses", metrics.total_pulses),
        ("max_cell_writes", metrics.max_cell_writes),
        ("overlap_cycles", overlap_cycles(metrics, schedule)),
        ("lifespan_years", lifespan_estimate(metrics, config, inf_per_s,
                                             DEFAULT_ENDURANCE)),
    ]
    if schedule.shift_plan is not None:
        pairs.append(("shift_center", schedule.shift_plan.center))
        pairs.append(("shift_fallback", schedule.shift_plan.fallback))
    for lid, r in schedule.replication_factors.items():
        if r > 1:
            pairs.append((f"replication_layer_{lid}", r))
    return pairs


def format_report(sections: list[list[tuple[str, object]]]) -> str:
    """One `key=value` line per entry, blank line between sections."""
    blocks = []
    for pairs in sections:
        blocks.append("\n".join(f"{k}={_fmt(v)}" for k, v in pairs))
    return "\n\n".join(blocks) + "\n"


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_report(text: str) -> list[dict[str, str]]:
    """Inverse of format_report (values stay as strings)."""
    sections = []
    current: dict[str, str] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line:
            if current:
                sections.append(current)
                current = {}
            continue
        if "=" not in line:
            raise ValueError(f"unparsable report line: {line!r}")
        key, _, value = line.partition("=")
        current[key] = value
    if current:
        sections.append(current)
    return sections


def _write(path: str, text: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        fh.write(text)


def cmd_simulate(args) -> int:
    network, config = _load_inputs(args)
    schedule, metrics = _run_variant(network, config, args.variant, args)
    report = format_report([_report_pairs(args.variant, schedule, metrics,
                                          config)])
    out = os.path.join(args.out, args.variant)
    _write(os.path.join(out, "report.txt"), report)
    _write(os.path.join(out, "trace.txt"), export_trace(schedule))
    _write(os.path.join(out, "timed_trace.txt"),
           export_timed_trace(metrics, schedule))
    sys.stdout.write(report)
    return 0


def cmd_compare(args) -> int:
    if len(args.variants) < 2:
        raise CliError("compare needs at least 2 variants")
    network, config = _load_inputs(args)

    def run(variant):
        return _run_variant(network, config, variant, args)

    if args.jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(args.jobs) as pool:
            results = list(pool.map(run, args.variants))
    else:
        results = [run(v) for v in args.variants]

    base_sched, base_metrics = results[0]
    rows = []
    for variant, (schedule, metrics) in zip(args.variants, results):
        rows.append({
            "label": variant,
            "makespan_cycles": metrics.makespan,
            "energy_write_j": metrics.energy_write,
            "energy_compute_j": metrics.energy_compute,
            "energy_static_j": metrics.energy_static,
            "energy_total_j": metrics.energy_total,
            "total_pulses": metrics.total_pulses,
            "speedup": base_metrics.makespan / max(metrics.makespan, 1),
            "energy_ratio": (metrics.energy_total
                             / base_metrics.energy_total
                             if base_metrics.energy_total else 1.0),
            "pulse_ratio": (metrics.total_pulses
                            / base_metrics.total_pulses
                            if base_metrics.total_pulses else 1.0),
        })

    sections = [[("baseline", args.variants[0])]]
    sections += [[(k, row[k]) for k in row] for row in rows]
    report = format_report(sections)
    _write(os.path.join(args.out, "compare.txt"), report)
    if args.csv:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()),
                                lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(v) for k, v in row.items()})
        _write(os.path.join(args.out, "compare.csv"), buf.getvalue())
    sys.stdout.write(report)
    return 0


def cmd_analyze_reuse(args) -> int:
    network, config = _load_inputs(args)
    out_path = os.path.join(args.out, "reuse.txt")
    if len(network) < 2:
        report = format_report([[("note", "no overwrite pairs"),
                                 ("layers", len(network))]])
        _write(out_path, report)
        sys.stdout.write(report)
        return 0

    centers = tuple(args.centers) if args.centers \
        else reuse_mod.DEFAULT_CENTERS
    plan = reuse_mod.select_center(network, config, args.clip_threshold,
                                   centers)

    import dataclasses

    base_opts = ScheduleOptions(bank_select=False, replication=False,
                                weight_reuse=False)
    shift_opts = dataclasses.replace(
        base_opts, weight_reuse=True, clip_threshold=args.clip_threshold,
        centers=centers)
    sched_plain = optimized_schedule(network, config, base_opts, label="no-shift")
    sched_shift = optimized_schedule(network, config, shift_opts, label="shift")
    pulses_plain = sum(i.pulses for i in sched_plain.instructions)
    pulses_shift = sum(i.pulses for i in sched_shift.instructions)

    head = [("chosen_center", plan.center), ("fallback", plan.fallback),
            ("pulses_without_shift", pulses_plain),
            ("pulses_with_shift", pulses_shift)]
    scores = [(f"pair_score_center_{c}", plan.pair_scores[c])
              for c in sorted(plan.pair_scores)]
    per_layer = []
    for lid, (off, frac) in enumerate(zip(plan.offsets,
                                          plan.clip_fractions)):
        per_layer.append((f"layer_{lid}_offset", off))
        per_layer.append((f"layer_{lid}_clip_fraction", frac))
    report = format_report([head, scores, per_layer])
    _write(out_path, report)
    sys.stdout.write(report)
    return 0


def _centers_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad centers list {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reramsched",
        description="Scheduling and simulation for a crossbar-based "
                    "in-memory DNN accelerator with limited cell capacity.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, variants=False):
        p.add_argument("--network", required=True,
                       help="network description JSON")
        p.add_argument("--config", default=None,
                       help=f"accelerator config JSON (default: "
                            f"${CONFIG_ENV_VAR} or built-in defaults)")
        p.add_argument("--out", default="runs", help="output directory")
        p.add_argument("--centers", type=_centers_list, default=None,
                       help="comma-separated alignment center candidates")
        p.add_argument("--clip-threshold", type=float, default=0.001,
                       help="max tolerated clipped weight fraction per layer")
        p.add_argument("--seed", type=int, default=None,
                       help="offset added to generator-backed weight seeds")
        p.add_argument("--jobs", type=int, default=1,
                       help="run independent variants concurrently")

    p_sim = sub.add_parser("simulate", help="run one variant end to end")
    common(p_sim)
    p_sim.add_argument("--variant", choices=VARIANTS, default="base")
    p_sim.set_defaults(func=cmd_simulate)

    p_cmp = sub.add_parser("compare", help="run several variants and "
                                           "tabulate normalized metrics")
    common(p_cmp)
    p_cmp.add_argument("--variants", nargs="+", choices=VARIANTS,
                       default=["naive", "brw"])
    p_cmp.add_argument("--csv", action="store_true",
                       help="also write compare.csv")
    p_cmp.set_defaults(func=cmd_compare)

    p_reuse = sub.add_parser("analyze-reuse",
                             help="center selection and pulse impact report")
    common(p_reuse)
    p_reuse.set_defaults(func=cmd_analyze_reuse)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # propagate module errors with context
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
