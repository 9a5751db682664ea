"""Adaptive weight replication: choose how many upcoming layers to write
concurrently and how many replicas each CONV layer receives."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .mapping import map_layer
from .model import AcceleratorConfig, NetworkModel


@dataclass(frozen=True)
class LayerPlanInfo:
    """Planning view of one layer: its row cost and compute volume."""
    layer_id: int
    pe_rows: int
    num_windows: int
    is_conv: bool


@dataclass
class PlanEntry:
    layer_id: int
    replication: int
    pe_rows: int  # rows allocated now (replication * base rows, or a partial)
    partial: bool = False


@dataclass
class ReplicationPlan:
    allocations: list[PlanEntry]
    deferred: tuple[int, ...] = ()

    @property
    def total_rows(self) -> int:
        return sum(e.pe_rows for e in self.allocations)

    def factor(self, layer_id: int) -> int:
        for e in self.allocations:
            if e.layer_id == layer_id:
                return e.replication
        return 1


def layer_plan_info(network: NetworkModel, layer_id: int,
                    config: AcceleratorConfig) -> LayerPlanInfo:
    desc = network.descriptor(layer_id)
    req = map_layer(desc, config)
    return LayerPlanInfo(layer_id, req.pe_rows_needed, req.num_windows,
                         desc.kind == "CONV")


def _compute_latency(info: LayerPlanInfo, replication: int,
                     config: AcceleratorConfig) -> int:
    return (math.ceil(info.num_windows / replication)
            * config.activation_bits * config.crossbar_compute_latency)


def get_number_of_layers(free_resources: int, L: int, network: NetworkModel,
                         config: AcceleratorConfig,
                         infos: list[LayerPlanInfo] | None = None) -> int:
    """Largest K such that layers L .. L+K-1 fit without replication."""
    if infos is None:
        infos = [layer_plan_info(network, i, config)
                 for i in range(L, len(network))]
    used = 0
    k = 0
    for info in infos:
        if used + info.pe_rows > free_resources:
            break
        used += info.pe_rows
        k += 1
    return k


def replicate_longest_layers(free_resources: int,
                             candidates: list[LayerPlanInfo],
                             config: AcceleratorConfig) -> dict[int, int]:
    """Greedily grant whole extra replicas to the slowest CONV candidate.

    After each grant the candidate's compute latency is recomputed; the loop
    stops when no replica fits in the remaining rows. Ties break toward the
    lower layer id. Returns layer_id -> extra replicas.
    """
    grants = {c.layer_id: 0 for c in candidates}
    eligible = [c for c in candidates if c.is_conv and c.pe_rows > 0]
    free = free_resources
    while True:
        best = None
        best_latency = -1
        for c in eligible:
            replicas = 1 + grants[c.layer_id]
            if c.pe_rows > free:
                continue
            if replicas >= c.num_windows:
                continue  # more copies than windows gains nothing
            latency = _compute_latency(c, replicas, config)
            if latency > best_latency:
                best_latency = latency
                best = c
        if best is None:
            break
        grants[best.layer_id] += 1
        free -= best.pe_rows
    return grants


def replication_scheme(free_resources: int, L: int, network: NetworkModel,
                       config: AcceleratorConfig,
                       infos: list[LayerPlanInfo] | None = None,
                       wl: float | None = None) -> ReplicationPlan:
    """Decide which layers to write into `free_resources` rows, and with how
    many replicas each.

    Three regimes: (a) the next layer alone does not fit, so only a portion
    of it is written without replication; (b) only the next layer fits
    entirely, so it is replicated into all free rows; (c) two or more layers
    fit, so the window is shrunk iteratively, reallocating the tail layer's
    rows to the slowest layers until the interior compute latency drops
    below the write-latency threshold of the following layers.
    """
    if infos is None:
        if not 0 <= L < len(network):
            raise IndexError(f"layer {L} out of range")
        infos = [layer_plan_info(network, i, config)
                 for i in range(L, len(network))]
    if not infos:
        return ReplicationPlan([])
    if free_resources < 0:
        raise ValueError("free_resources must be >= 0")

    head = infos[0]
    if free_resources < head.pe_rows:
        rows = min(free_resources, head.pe_rows)
        if rows == 0:
            return ReplicationPlan([], deferred=tuple(i.layer_id for i in infos))
        return ReplicationPlan(
            [PlanEntry(head.layer_id, 1, rows, partial=True)],
            deferred=tuple(i.layer_id for i in infos[1:]))

    two_layer_cost = head.pe_rows + (infos[1].pe_rows if len(infos) > 1
                                     else float("inf"))
    if free_resources < two_layer_cost:
        if head.is_conv:
            replicas = min(free_resources // head.pe_rows,
                           max(1, head.num_windows))
        else:
            replicas = 1
        return ReplicationPlan(
            [PlanEntry(head.layer_id, replicas, replicas * head.pe_rows)],
            deferred=tuple(i.layer_id for i in infos[1:]))

    # regime (c): shrink the window from K0 down, replicating the survivors
    if wl is None:
        wl = write_latency_threshold(config)
    k0 = get_number_of_layers(free_resources, L, network, config, infos)
    k = k0
    while True:
        window = infos[: k - 1]  # layer L+k-1 is deferred this iteration
        available = free_resources - sum(i.pe_rows for i in window)
        grants = replicate_longest_layers(available, window, config)
        interior = window[1:]  # stop rule looks at layers L+1 .. L+k-2
        interior_latency = sum(
            _compute_latency(i, 1 + grants[i.layer_id], config)
            for i in interior)
        if interior_latency <= wl or k <= 2:
            allocations = [
                PlanEntry(i.layer_id, 1 + grants[i.layer_id],
                          (1 + grants[i.layer_id]) * i.pe_rows)
                for i in window]
            deferred = tuple(i.layer_id for i in infos[k - 1:])
            return ReplicationPlan(allocations, deferred=deferred)
        k -= 1


def eager_replication_scheme(free_resources: int, L: int,
                             network: NetworkModel,
                             config: AcceleratorConfig,
                             infos: list[LayerPlanInfo] | None = None,
                             wl: float | None = None) -> ReplicationPlan:
    """Variant of `replication_scheme` that never defers a layer that fits.

    Every layer of the widest fitting window is written at least once and
    only leftover rows fund extra replicas. Deferring the tail layer can
    stall its write behind the first release; on write-heavy networks this
    variant often finishes sooner. The scheduler builds with both planners
    and keeps the faster schedule.
    """
    if infos is None:
        if not 0 <= L < len(network):
            raise IndexError(f"layer {L} out of range")
        infos = [layer_plan_info(network, i, config)
                 for i in range(L, len(network))]
    if not infos:
        return ReplicationPlan([])
    if free_resources < infos[0].pe_rows:
        return replication_scheme(free_resources, L, network, config,
                                  infos=infos, wl=wl)
    k0 = get_number_of_layers(free_resources, L, network, config, infos)
    window = infos[:k0]
    available = free_resources - sum(i.pe_rows for i in window)
    grants = replicate_longest_layers(available, window, config)
    allocations = [
        PlanEntry(i.layer_id, 1 + grants[i.layer_id],
                  (1 + grants[i.layer_id]) * i.pe_rows)
        for i in window]
    return ReplicationPlan(allocations,
                           deferred=tuple(i.layer_id for i in infos[k0:]))


def enumerate_first_wave_plans(infos: list[LayerPlanInfo],
                               free_resources: int,
                               config: AcceleratorConfig,
                               wl: float | None = None,
                               plan_limit: int = 512,
                               work_limit: int = 100000):
    """Every resource-exhausting (K, replica-vector) plan for one write wave.

    A plan writes the first K layers concurrently with the given replica
    vector, deferring the rest. Vectors must exhaust the free rows (no
    window layer could take one more replica) and the window interior must
    satisfy the ComL <= WL stop rule. Returns None when the space exceeds
    `plan_limit` plans or `work_limit` raw vectors, so callers can fall
    back to the greedy planners on large configurations.
    """
    import itertools

    if wl is None:
        wl = write_latency_threshold(config)
    rows = free_resources
    per_k_caps = []
    raw = 0
    for k in range(1, len(infos) + 1):
        window = infos[:k]
        base = sum(i.pe_rows for i in window)
        if base > rows:
            break
        caps = []
        size = 1
        for i in window:
            if not i.is_conv or i.pe_rows == 0:
                caps.append((1,))
                continue
            rmax = min(max(1, i.num_windows),
                       1 + (rows - base) // i.pe_rows)
            caps.append(tuple(range(1, max(1, rmax) + 1)))
            size *= len(caps[-1])
        raw += size
        if raw > work_limit:
            return None
        per_k_caps.append((window, caps))

    plans = []
    for window, caps in per_k_caps:
        k = len(window)
        deferred = tuple(i.layer_id for i in infos[k:])
        for vec in itertools.product(*caps):
            used = sum(r * i.pe_rows for r, i in zip(vec, window))
            if used > rows:
                continue
            leftover = rows - used
            augment = [i.pe_rows for r, i in zip(vec, window)
                       if i.is_conv and r < i.num_windows]
            if augment and leftover >= min(augment):
                continue  # not resource-exhausting
            interior = sum(_compute_latency(i, r, config)
                           for r, i in list(zip(vec, window))[1:])
            if k > 1 and interior > wl:
                continue
            plans.append(ReplicationPlan(
                [PlanEntry(i.layer_id, r, r * i.pe_rows)
                 for r, i in zip(vec, window)], deferred=deferred))
            if len(plans) > plan_limit:
                return None
    return plans


def write_latency_threshold(config: AcceleratorConfig) -> int:
    """Write time of the layers that follow a window: crossbars are written
    concurrently row by row, so one full crossbar write is the yardstick."""
    return config.full_crossbar_write_latency
