"""Event-driven execution of a schedule against the timing/energy model."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional

import numpy as np

from .model import AcceleratorConfig, NetworkModel

if TYPE_CHECKING:  # pragma: no cover
    from .scheduler import Schedule


class ScheduleGraphError(ValueError):
    """Raised for cyclic dependencies or dangling instruction references."""


@dataclass(frozen=True)
class Event:
    timestamp: int
    instruction: int
    phase: str  # "START" or "END"


@dataclass
class TimedInstruction:
    instruction: int
    start: int
    end: int


@dataclass
class LayerMetrics:
    pulses: int = 0
    energy_write: float = 0.0
    energy_compute: float = 0.0
    write_cycles: int = 0
    compute_cycles: int = 0


@dataclass
class Metrics:
    makespan: int
    energy_write: float
    energy_compute: float
    energy_static: float
    total_pulses: int
    per_layer: dict[int, LayerMetrics]
    pulse_writes_per_cell: dict[int, int]
    max_cell_writes: int
    timeline: list[TimedInstruction] = field(default_factory=list)
    fetch_order: list[int] = field(default_factory=list)

    @property
    def energy_total(self) -> float:
        return self.energy_write + self.energy_compute + self.energy_static


def row_write_latency(deltas, row: int, config: AcceleratorConfig) -> int:
    """Cycles to write one crossbar row: the slowest cell of each polarity
    phase bounds the row, one pulse_latency per pulse."""
    if not 0 <= row < deltas.deltas.shape[0]:
        raise IndexError(f"row {row} out of range")
    return int((int(deltas.max_increase[row]) + int(deltas.max_decrease[row]))
               * config.pulse_latency)


def crossbar_write_latency(deltas, config: AcceleratorConfig) -> int:
    """Rows are written sequentially; all-zero rows are skipped."""
    inc = deltas.max_increase.astype(np.int64)
    dec = deltas.max_decrease.astype(np.int64)
    return int((inc + dec).sum() * config.pulse_latency)


def instruction_duration(instr, config: AcceleratorConfig) -> int:
    if instr.uses_channel():
        return math.ceil(instr.fetch_bytes / config.mm_bandwidth)
    return instr.duration


def simulate(schedule: "Schedule", network: NetworkModel,
             config: AcceleratorConfig) -> Metrics:
    """Run the discrete-event loop over a schedule's instruction DAG.

    Main-memory traffic (fetches and transfers) shares a single channel and
    is serviced in ready order, so concurrent demand never exceeds
    mm_bandwidth. Everything else runs as soon as its dependencies finish;
    PE-row exclusivity is encoded in the dependency edges themselves.
    """
    instrs = schedule.instructions
    n = len(instrs)
    indeg = [0] * n
    succ: list[list[int]] = [[] for _ in range(n)]
    for ins in instrs:
        for d in ins.deps:
            if not 0 <= d < n:
                raise ScheduleGraphError(
                    f"instruction {ins.id} depends on unknown id {d}")
            succ[d].append(ins.id)
            indeg[ins.id] += 1

    ready = [0] * n
    start = [0] * n
    end = [0] * n
    done = [False] * n
    heap = [(0, i) for i in range(n) if indeg[i] == 0]
    heapq.heapify(heap)
    channel_free = 0
    fetch_order: list[int] = []
    timeline: list[TimedInstruction] = []
    processed = 0
    while heap:
        _, i = heapq.heappop(heap)
        ins = instrs[i]
        dur = instruction_duration(ins, config)
        if ins.uses_channel():
            start[i] = max(ready[i], channel_free)
            channel_free = start[i] + dur
            fetch_order.append(i)
        else:
            start[i] = ready[i]
        end[i] = start[i] + dur
        done[i] = True
        processed += 1
        timeline.append(TimedInstruction(i, start[i], end[i]))
        for s in succ[i]:
            ready[s] = max(ready[s], end[i])
            indeg[s] -= 1
            if indeg[s] == 0:
                heapq.heappush(heap, (ready[s], s))
    if processed != n:
        raise ScheduleGraphError("dependency graph has a cycle")

    makespan = max(end) if n else 0

    energy = config.energy_params
    per_layer: dict[int, LayerMetrics] = {}
    total_pulses = 0
    energy_compute = 0.0
    from .scheduler import InstrKind  # runtime import, no cycle at load
    for ins in instrs:
        lid = ins.layer if ins.layer is not None else -1
        lm = per_layer.setdefault(lid, LayerMetrics())
        if ins.kind is InstrKind.WRITE_CROSSBAR:
            total_pulses += ins.pulses
            lm.pulses += ins.pulses
            lm.energy_write += ins.pulses * energy.energy_per_pulse
            lm.write_cycles += instruction_duration(ins, config)
        elif ins.kind is InstrKind.COMPUTE_LAYER_SEGMENT:
            e = ins.read_ops * energy.energy_per_crossbar_read
            lm.energy_compute += e
            energy_compute += e
            lm.compute_cycles += instruction_duration(ins, config)
    energy_write = total_pulses * energy.energy_per_pulse

    # Static energy: integrate the enabled-bank leakage over the makespan.
    switches = sorted(
        ((start[ins.id], ins.id, ins.leakage_rate) for ins in instrs
         if ins.kind is InstrKind.BANK_ENABLE),
        key=lambda t: (t[0], t[1]))
    energy_static = energy.base_leakage * makespan
    rate = 0.0
    t_prev = 0
    for t, _, new_rate in switches:
        energy_static += rate * (t - t_prev)
        rate = new_rate
        t_prev = t
    energy_static += rate * (makespan - t_prev)

    return Metrics(
        makespan=makespan,
        energy_write=energy_write,
        energy_compute=energy_compute,
        energy_static=energy_static,
        total_pulses=total_pulses,
        per_layer=dict(sorted(per_layer.items())),
        pulse_writes_per_cell=dict(schedule.cell_write_histogram),
        max_cell_writes=schedule.max_cell_writes,
        timeline=timeline,
        fetch_order=fetch_order,
    )


SECONDS_PER_YEAR = 365 * 24 * 3600


def lifespan_estimate(metrics: Metrics, config: AcceleratorConfig,
                      inferences_per_second: float,
                      endurance_cycles: float) -> float:
    """Years until the most-written cell exhausts its endurance."""
    if inferences_per_second <= 0:
        raise ValueError("inferences_per_second must be positive")
    if endurance_cycles <= 0:
        raise ValueError("endurance_cycles must be positive")
    writes = max(metrics.max_cell_writes, 1)
    return endurance_cycles / (writes * inferences_per_second
                               * SECONDS_PER_YEAR)


def export_timed_trace(metrics: Metrics, schedule: "Schedule") -> str:
    """Timestamped event trace, one START and END line per instruction."""
    events = []
    for ti in metrics.timeline:
        ins = schedule.instructions[ti.instruction]
        events.append((ti.start, ti.instruction, "START", ins))
        events.append((ti.end, ti.instruction, "END", ins))
    events.sort(key=lambda e: (e[0], e[1], e[2] == "END"))
    lines = [f"t={t} {phase} id={i} kind={ins.kind.value} layer={ins.layer}"
             for t, i, phase, ins in events]
    return "\n".join(lines) + "\n"
