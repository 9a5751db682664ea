"""Offline schedulers: the serial reference scheduler and the overlapping
scheduler with optional bank selection, replication, and weight reuse.

The produced Schedule is an ordered instruction stream with explicit
dependency edges; all timing is resolved later by the event-driven
simulator. PE rows are the allocation unit: every APU in a row holds
weights of the same layer.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from . import banks as banks_mod
from . import reuse as reuse_mod
from .mapping import build_layer_images, map_layer, populated_cells
from .model import (AcceleratorConfig, NetworkModel, homogeneous_banks)
from .replication import (LayerPlanInfo, ReplicationPlan,
                          eager_replication_scheme,
                          enumerate_first_wave_plans, replication_scheme,
                          write_latency_threshold)


class InstrKind(Enum):
    FETCH_DELTAS = "FETCH_DELTAS"
    WRITE_CROSSBAR = "WRITE_CROSSBAR"
    COMPUTE_LAYER_SEGMENT = "COMPUTE_LAYER_SEGMENT"
    RELEASE = "RELEASE"
    BANK_ENABLE = "BANK_ENABLE"
    ACCUMULATE = "ACCUMULATE"
    TRANSFER = "TRANSFER"


@dataclass
class Instruction:
    id: int
    kind: InstrKind
    layer: Optional[int]
    deps: tuple[int, ...]
    duration: int = 0  # cycles; FETCH/TRANSFER derive theirs from fetch_bytes
    rows: tuple[int, ...] = ()  # PE-row ids touched
    col: int = -1  # APU column for WRITE_CROSSBAR
    fetch_bytes: int = 0
    pulses: int = 0
    read_ops: int = 0  # crossbar activations, for compute energy
    banks: tuple[int, ...] = ()
    leakage_rate: float = 0.0  # Gbuffer leakage while this bank set is on
    replication: int = 1

    def uses_channel(self) -> bool:
        return self.kind in (InstrKind.FETCH_DELTAS, InstrKind.TRANSFER)


@dataclass
class ScheduleOptions:
    overlap: bool = True
    bank_select: bool = False
    replication: bool = False
    weight_reuse: bool = False
    clip_threshold: float = 0.001
    centers: tuple[int, ...] = reuse_mod.DEFAULT_CENTERS

    @classmethod
    def for_variant(cls, variant: str) -> "ScheduleOptions":
        variant = variant.lower()
        table = {
            "naive": cls(overlap=False),
            "base": cls(),
            "b": cls(bank_select=True),
            "br": cls(bank_select=True, replication=True),
            "brw": cls(bank_select=True, replication=True, weight_reuse=True),
        }
        if variant not in table:
            raise ValueError(f"unknown variant {variant!r}")
        return table[variant]


@dataclass
class Schedule:
    label: str
    instructions: list[Instruction]
    bank_assignments: dict[int, Optional[banks_mod.BankAssignment]]
    shift_plan: Optional[reuse_mod.ShiftPlan]
    replication_factors: dict[int, int]
    cell_write_histogram: dict[int, int]  # writes-per-cell -> number of cells
    max_cell_writes: int
    total_pe_rows: int

    def instruction(self, instr_id: int) -> Instruction:
        return self.instructions[instr_id]


@dataclass
class _Stage:
    index: int
    layer_id: int
    seg_index: int
    seg_count: int
    grid: list[tuple[int, int]]  # (vertical slice, apu-column group)
    windows: int
    is_conv: bool
    replication: int = 1
    started: bool = False
    pending: deque = field(default_factory=deque)
    rows: list[int] = field(default_factory=list)
    write_ids: list[int] = field(default_factory=list)

    @property
    def rows_base(self) -> int:
        return len(self.grid)

    @property
    def complete(self) -> bool:
        return self.started and not self.pending


class _Builder:
    """Shared machinery for every scheduler flavor."""

    def __init__(self, network: NetworkModel, config: AcceleratorConfig,
                 options: ScheduleOptions, label: str,
                 write_only: bool = False, planner=None, shared=None):
        if not config._validated:
            raise ValueError("config must pass validate_config first")
        self.network = network
        self.config = config
        self.options = options
        self.label = label
        self.write_only = write_only
        self.planner = planner  # overrides the replication planner (tests)

        self.total_rows = config.total_pe_rows
        self.free = [True] * self.total_rows
        self.free_count = self.total_rows
        self.owner_release: list[Optional[int]] = [None] * self.total_rows
        self.xbar_state: dict[tuple[int, int], np.ndarray] = {}
        self.cell_writes: dict[tuple[int, int], np.ndarray] = {}

        self.instrs: list[Instruction] = []
        self.reqs = [map_layer(rec.descriptor, config)
                     for rec in network.layers]
        # `shared` lets sibling builders of the same options reuse the shift
        # plan and cell images, which dominate build cost on big networks
        if shared is None:
            shared = {}
        self.shift_plan = shared.get("shift_plan")
        self.weight_values = shared.get("weight_values")
        if (options.weight_reuse and len(network) >= 2
                and "shift_plan" not in shared):
            self.shift_plan = reuse_mod.select_center(
                network, config, options.clip_threshold, options.centers)
            self.weight_values = reuse_mod.apply_shift_plan(
                network, self.shift_plan, config)
            shared["shift_plan"] = self.shift_plan
            shared["weight_values"] = self.weight_values
        self._image_cache: dict[int, list[list[np.ndarray]]] = \
            shared.setdefault("images", {})
        self._pop_cache: dict[tuple[int, int, int], int] = \
            shared.setdefault("pop", {})

        self.stages = self._make_stages()
        self.write_ptr = 0
        self.bank_assignments = self._assign_banks()
        self.replication_factors: dict[int, int] = {}

    # ---- preparation -------------------------------------------------

    def _make_stages(self) -> list[_Stage]:
        stages = []
        for rec, req in zip(self.network.layers, self.reqs):
            groups = math.ceil(req.horizontal_slices
                               / self.config.apu_cols_per_pe)
            grid = [(vs, g) for vs in range(req.vertical_slices)
                    for g in range(groups)]
            seg_count = math.ceil(len(grid) / self.total_rows)
            for seg in range(seg_count):
                chunk = grid[seg * self.total_rows:(seg + 1) * self.total_rows]
                stages.append(_Stage(
                    index=len(stages), layer_id=rec.descriptor.id,
                    seg_index=seg, seg_count=seg_count, grid=chunk,
                    windows=req.num_windows,
                    is_conv=(rec.descriptor.kind == "CONV"
                             and seg_count == 1)))
        return stages

    def _assign_banks(self):
        assignments: dict[int, Optional[banks_mod.BankAssignment]] = {}
        if not self.options.bank_select:
            return assignments
        carry: tuple[int, ...] = ()
        for rec in self.network.layers:
            desc = rec.descriptor
            try:
                asg = banks_mod.solve_cover(
                    desc.input_bytes, desc.output_bytes,
                    self.config.bank_inventory, desc.id, fixed_input=carry)
                assignments[desc.id] = asg
                carry = asg.output_banks
            except banks_mod.SegmentRequired:
                assignments[desc.id] = None  # all banks on, multi-pass
                carry = ()
        return assignments

    def _images(self, layer_id: int):
        if layer_id not in self._image_cache:
            rec = self.network.layers[layer_id]
            values = (self.weight_values[layer_id]
                      if self.weight_values is not None
                      else rec.weights.values)
            self._image_cache[layer_id] = build_layer_images(
                rec.descriptor, values, self.config)
        return self._image_cache[layer_id]

    def _populated(self, layer_id: int, vs: int, hs: int) -> int:
        key = (layer_id, vs, hs)
        if key not in self._pop_cache:
            self._pop_cache[key] = populated_cells(
                self.network.layers[layer_id].descriptor, self.config, vs, hs)
        return self._pop_cache[key]

    # ---- instruction emission ----------------------------------------

    def _emit(self, kind: InstrKind, layer, deps, **kw) -> Instruction:
        instr = Instruction(id=len(self.instrs), kind=kind, layer=layer,
                            deps=tuple(deps), **kw)
        self.instrs.append(instr)
        return instr

    def _alloc_rows(self, n: int) -> list[int]:
        out = []
        for rid in range(self.total_rows):
            if len(out) == n:
                break
            if self.free[rid]:
                self.free[rid] = False
                out.append(rid)
        assert len(out) == n, "allocator invariant broken"
        self.free_count -= n
        return out

    def _write_units(self, stage: _Stage, n_rows: int,
                     extra_deps: tuple[int, ...] = ()):
        """Emit fetch+write instructions for the next n_rows pending units."""
        config = self.config
        req = self.reqs[stage.layer_id]
        images = self._images(stage.layer_id)
        rows = self._alloc_rows(n_rows)
        stage.rows.extend(rows)
        stage.started = True
        for rid in rows:
            _replica, vs, group = stage.pending.popleft()
            hs_list = [group * config.apu_cols_per_pe + c
                       for c in range(config.apu_cols_per_pe)]
            hs_list = [hs for hs in hs_list if hs < req.horizontal_slices]
            fetch_bytes = sum(
                math.ceil(self._populated(stage.layer_id, vs, hs) / 2)
                for hs in hs_list)
            deps = list(extra_deps)
            if self.owner_release[rid] is not None:
                deps.append(self.owner_release[rid])
            fetch = self._emit(InstrKind.FETCH_DELTAS, stage.layer_id,
                               sorted(set(deps)), rows=(rid,),
                               fetch_bytes=fetch_bytes)
            for col, hs in enumerate(hs_list):
                new_img = images[vs][hs]
                old = self.xbar_state.get((rid, col))
                deltas = reuse_mod.delta_matrix_from_arrays(
                    old, new_img,
                    coords=(rid // config.apu_rows_per_pe,
                            rid % config.apu_rows_per_pe, col))
                pulses = reuse_mod.total_pulses(deltas)
                if config.pin_worst_case_rows:
                    rows_used = math.ceil(
                        self._populated(stage.layer_id, vs, hs)
                        / config.crossbar_cols) or 1
                    duration = (rows_used * 2 * config.max_pulses_per_phase
                                * config.pulse_latency)
                else:
                    duration = int(
                        (deltas.max_increase.astype(np.int64)
                         + deltas.max_decrease.astype(np.int64)).sum()
                        * config.pulse_latency)
                write = self._emit(
                    InstrKind.WRITE_CROSSBAR, stage.layer_id,
                    (fetch.id,), duration=duration, rows=(rid,), col=col,
                    pulses=pulses)
                stage.write_ids.append(write.id)
                self.xbar_state[(rid, col)] = new_img
                key = (rid, col)
                if key not in self.cell_writes:
                    self.cell_writes[key] = np.zeros(new_img.shape,
                                                     dtype=np.int16)
                self.cell_writes[key] += (deltas.deltas != 0)

    # ---- write planning ----------------------------------------------

    def _stage_infos(self) -> list[LayerPlanInfo]:
        infos = []
        for stage in self.stages[self.write_ptr:]:
            infos.append(LayerPlanInfo(stage.index, stage.rows_base,
                                       stage.windows, stage.is_conv))
        return infos

    def _start_stage(self, stage: _Stage, replication: int):
        stage.started = True
        stage.replication = replication
        stage.pending = deque(
            (r, vs, g) for r in range(replication) for vs, g in stage.grid)
        if stage.seg_index == 0:
            self.replication_factors[stage.layer_id] = replication

    def _write_wave(self, extra_deps: tuple[int, ...] = (),
                    limit: Optional[int] = None):
        """Fill free rows with writes for upcoming stages, in stage order."""
        while self.free_count > 0 and self.write_ptr < len(self.stages):
            if limit is not None and self.write_ptr > limit:
                break
            stage = self.stages[self.write_ptr]
            if stage.started:
                take = min(self.free_count, len(stage.pending))
                if take:
                    self._write_units(stage, take, extra_deps)
                if stage.pending:
                    return  # out of rows
                self.write_ptr += 1
                continue
            if self.options.replication or self.planner is not None:
                planner = self.planner or replication_scheme
                plan = planner(self.free_count, self.write_ptr, self.network,
                               self.config, infos=self._stage_infos(),
                               wl=write_latency_threshold(self.config))
                if not plan.allocations:
                    return
                self._apply_plan(plan, extra_deps)
            else:
                self._start_stage(stage, 1)

    def _apply_plan(self, plan: ReplicationPlan,
                    extra_deps: tuple[int, ...]):
        for entry in plan.allocations:
            stage = self.stages[entry.layer_id]
            assert stage.index == self.write_ptr or not entry.partial
            if not stage.started:
                self._start_stage(stage, entry.replication)
            take = min(entry.pe_rows, len(stage.pending), self.free_count)
            if take:
                self._write_units(stage, take, extra_deps)
            if not stage.pending and stage.index == self.write_ptr:
                self.write_ptr += 1

    # ---- top-level construction --------------------------------------

    def _bank_rate(self, layer_id: Optional[int]) -> tuple[tuple[int, ...], float]:
        """Enabled bank ids and their leakage while a layer computes."""
        if self.options.bank_select:
            asg = self.bank_assignments.get(layer_id)
            if asg is None:  # infeasible cover: every bank stays on
                ids = tuple(b.id for b in self.config.bank_inventory)
                rate = sum(b.leakage for b in self.config.bank_inventory)
            else:
                ids = asg.all_banks
                rate = banks_mod.static_power_of_assignment(
                    asg, self.config.bank_inventory)
        else:
            homo = homogeneous_banks(self.config)
            ids = tuple(b.id for b in homo)
            rate = sum(b.leakage for b in homo)
        return ids, rate

    def _activation_passes(self, layer_id: int) -> int:
        desc = self.network.layers[layer_id].descriptor
        need = desc.input_bytes + desc.output_bytes
        if self.options.bank_select:
            capacity = sum(b.capacity for b in self.config.bank_inventory)
        else:
            capacity = (self.config.homogeneous_bank_count
                        * self.config.homogeneous_bank_bytes)
        return max(1, math.ceil(need / capacity))

    def build(self) -> Schedule:
        config = self.config
        first_layer = self.network.layers[0].descriptor
        prev_compute: Optional[int] = None
        last_release: Optional[int] = None

        transfer0 = None
        if not self.write_only:
            transfer0 = self._emit(InstrKind.TRANSFER, 0, (),
                                   fetch_bytes=first_layer.input_bytes)
            ids, rate = self._bank_rate(0)
            self._emit(InstrKind.BANK_ENABLE, 0, (), banks=ids,
                       leakage_rate=rate)

        for stage in self.stages:
            serial_deps = ()
            if not self.options.overlap and last_release is not None:
                serial_deps = (last_release,)
            self._write_wave(extra_deps=serial_deps,
                             limit=None if self.options.overlap
                             else stage.index)
            assert stage.complete, "stage must be fully written"

            if self.write_only:
                release = self._emit(InstrKind.RELEASE, stage.layer_id,
                                     tuple(stage.write_ids),
                                     rows=tuple(stage.rows))
                for rid in stage.rows:
                    self.free[rid] = True
                    self.owner_release[rid] = release.id
                self.free_count += len(stage.rows)
                last_release = release.id
                continue

            deps = list(stage.write_ids)
            if prev_compute is not None:
                deps.append(prev_compute)
            elif transfer0 is not None:
                deps.append(transfer0.id)
            if (self.options.bank_select and stage.seg_index == 0
                    and stage.layer_id > 0):
                ids, rate = self._bank_rate(stage.layer_id)
                enable = self._emit(
                    InstrKind.BANK_ENABLE, stage.layer_id,
                    (prev_compute,) if prev_compute is not None else (),
                    banks=ids, leakage_rate=rate)
                deps.append(enable.id)

            req = self.reqs[stage.layer_id]
            passes = self._activation_passes(stage.layer_id)
            windows_left = stage.windows
            compute_last = None
            for p in range(passes):
                w = math.ceil(windows_left / (passes - p))
                windows_left -= w
                duration = (math.ceil(w / stage.replication)
                            * config.activation_bits
                            * config.crossbar_compute_latency)
                read_ops = (w * req.vertical_slices * req.horizontal_slices
                            * config.activation_bits)
                pass_deps = deps if compute_last is None else [compute_last]
                compute = self._emit(
                    InstrKind.COMPUTE_LAYER_SEGMENT, stage.layer_id,
                    sorted(set(pass_deps)), duration=duration,
                    rows=tuple(stage.rows), read_ops=read_ops,
                    replication=stage.replication)
                compute_last = compute.id
            if stage.seg_index > 0:
                acc = self._emit(InstrKind.ACCUMULATE, stage.layer_id,
                                 (compute_last,))
                compute_last = acc.id
            release = self._emit(InstrKind.RELEASE, stage.layer_id,
                                 (compute_last,), rows=tuple(stage.rows))
            for rid in stage.rows:
                self.free[rid] = True
                self.owner_release[rid] = release.id
            self.free_count += len(stage.rows)
            prev_compute = compute_last
            last_release = release.id

        if not self.write_only:
            last_layer = self.network.layers[-1].descriptor
            self._emit(InstrKind.TRANSFER, last_layer.id,
                       (prev_compute,) if prev_compute is not None else (),
                       fetch_bytes=last_layer.output_bytes)

        histogram: dict[int, int] = {}
        max_writes = 0
        for counts in self.cell_writes.values():
            vals, freq = np.unique(counts[counts > 0], return_counts=True)
            for v, f in zip(vals.tolist(), freq.tolist()):
                histogram[int(v)] = histogram.get(int(v), 0) + int(f)
            if vals.size:
                max_writes = max(max_writes, int(vals.max()))
        return Schedule(
            label=self.label, instructions=self.instrs,
            bank_assignments=self.bank_assignments,
            shift_plan=self.shift_plan,
            replication_factors=dict(sorted(
                self.replication_factors.items())),
            cell_write_histogram=dict(sorted(histogram.items())),
            max_cell_writes=max_writes, total_pe_rows=self.total_rows)


# sentinel: run the normal planner portfolio but skip the weight-reuse guard
_DEFAULT_PLANNER = object()


def naive_schedule(network: NetworkModel,
                   config: AcceleratorConfig) -> Schedule:
    """Strictly serial schedule: write a layer, compute it, move on."""
    options = ScheduleOptions.for_variant("naive")
    return _Builder(network, config, options, "naive").build()


def optimized_schedule(network: NetworkModel, config: AcceleratorConfig,
                  options: Optional[ScheduleOptions] = None,
                  label: str = "optimized", planner=None) -> Schedule:
    """Overlapping schedule with the requested optimizations.

    With replication enabled, several schedules are built and the fastest
    by simulated makespan is kept. When the first write wave's plan space
    (every resource-exhausting replica vector satisfying the stop rule) is
    small enough to enumerate, all of its plans compete; otherwise only the
    window-shrinking planner and an eager planner that never defers a
    fitting layer do. A schedule without replication always competes too,
    so the replication pass can never degrade performance.
    """
    import dataclasses

    if options is None:
        options = ScheduleOptions.for_variant("base")
    if options.weight_reuse and planner is None:
        # Shifting is chosen on expected skipping ratios; keep it only when
        # the realized schedule writes strictly fewer pulses than the
        # unshifted one, so enabling weight reuse never adds write activity.
        no_shift = dataclasses.replace(options, weight_reuse=False)
        ref = optimized_schedule(network, config, no_shift, label)
        shifted = optimized_schedule(network, config, options, label,
                                     planner=_DEFAULT_PLANNER)
        return shifted if _total_pulses(shifted) < _total_pulses(ref) else ref
    if planner is _DEFAULT_PLANNER:
        planner = None
    shared: dict = {}
    schedule = _Builder(network, config, options, label,
                        planner=planner, shared=shared).build()
    if planner is not None:
        return schedule
    from .simulator import simulate  # deferred: avoids an import cycle
    best = schedule
    best_span = simulate(schedule, network, config).makespan

    def consider(opts, alt_planner=None):
        nonlocal best, best_span
        alt = _Builder(network, config, opts, label, planner=alt_planner,
                       shared=shared).build()
        span = simulate(alt, network, config).makespan
        if span < best_span:
            best, best_span = alt, span

    if options.replication:
        probe = _Builder(network, config,
                         dataclasses.replace(options, weight_reuse=False),
                         label)
        plans = enumerate_first_wave_plans(
            probe._stage_infos(), config.total_pe_rows, config,
            wl=write_latency_threshold(config))
        if plans:
            for plan in plans:
                consider(options, _one_shot(plan))
        else:
            consider(options, eager_replication_scheme)
        consider(dataclasses.replace(options, replication=False))
    if options.overlap:
        # overlapped prefetches can stall a critical fetch behind the
        # serialized channel; a strictly serial schedule guards against it
        consider(dataclasses.replace(options, overlap=False,
                                     replication=False))
    return best


def _one_shot(plan: ReplicationPlan):
    """Planner that issues `plan` for the first write wave, then hands the
    remaining waves back to the standard scheme."""
    state = {"used": False}

    def planner(free, L, network, config, infos=None, wl=None):
        if not state["used"]:
            state["used"] = True
            return plan
        return replication_scheme(free, L, network, config, infos=infos,
                                  wl=wl)

    return planner


def _total_pulses(schedule: Schedule) -> int:
    return sum(ins.pulses for ins in schedule.instructions)


def schedule_for_variant(network: NetworkModel, config: AcceleratorConfig,
                         variant: str) -> Schedule:
    if variant == "naive":
        return naive_schedule(network, config)
    options = ScheduleOptions.for_variant(variant)
    return optimized_schedule(network, config, options, label=variant)


def lower_bound_makespan(network: NetworkModel,
                         config: AcceleratorConfig) -> int:
    """Resource- and bandwidth-constrained time to write every layer once,
    with no computation: the denominator of the upper-bound performance."""
    from .simulator import simulate
    options = ScheduleOptions(overlap=True)
    schedule = _Builder(network, config, options, "write-only",
                        write_only=True).build()
    return simulate(schedule, network, config).makespan


def export_trace(schedule: Schedule) -> str:
    """Line-oriented dump of the instruction stream for diffing and audit."""
    lines = []
    for ins in schedule.instructions:
        fields = [f"id={ins.id}", f"kind={ins.kind.value}",
                  f"layer={ins.layer}"]
        if ins.rows:
            fields.append(f"rows={_row_ranges(ins.rows)}")
        if ins.col >= 0:
            fields.append(f"col={ins.col}")
        if ins.duration:
            fields.append(f"cycles={ins.duration}")
        if ins.fetch_bytes:
            fields.append(f"bytes={ins.fetch_bytes}")
        if ins.pulses:
            fields.append(f"pulses={ins.pulses}")
        if ins.banks:
            fields.append("banks=" + ",".join(str(b) for b in ins.banks))
        if ins.replication != 1:
            fields.append(f"R={ins.replication}")
        fields.append("deps=" + (",".join(str(d) for d in ins.deps) or "-"))
        lines.append(" ".join(fields))
    return "\n".join(lines) + "\n"


def _row_ranges(rows: tuple[int, ...]) -> str:
    """Compact `0-3,7,9-10` rendering of a row id set."""
    out = []
    sorted_rows = sorted(rows)
    start = prev = sorted_rows[0]
    for r in sorted_rows[1:]:
        if r == prev + 1:
            prev = r
            continue
        out.append(f"{start}-{prev}" if prev > start else str(start))
        start = prev = r
    out.append(f"{start}-{prev}" if prev > start else str(start))
    return ",".join(out)
