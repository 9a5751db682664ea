"""Leakage-minimal selection of heterogeneous Gbuffer banks for the input
and output activations of each layer (exact branch-and-bound search)."""

from __future__ import annotations

from dataclasses import dataclass

from .model import BankSpec, LayerDescriptor


class SegmentRequired(Exception):
    """Inventory cannot cover the requested bytes; the layer's activations
    must be processed in multiple passes."""

    def __init__(self, shortfall: int):
        super().__init__(f"segment required: inventory short by "
                         f"{shortfall} bytes")
        self.shortfall = shortfall


@dataclass
class BankAssignment:
    layer_id: int
    input_banks: tuple[int, ...]
    output_banks: tuple[int, ...]
    total_leakage: float

    @property
    def all_banks(self) -> tuple[int, ...]:
        return tuple(sorted(self.input_banks + self.output_banks))


def static_power_of_assignment(assignment: BankAssignment,
                               inventory: list[BankSpec]) -> float:
    """Leakage of all enabled banks, joules per cycle."""
    by_id = {b.id: b for b in inventory}
    total = 0.0
    for bank_id in assignment.input_banks + assignment.output_banks:
        if bank_id not in by_id:
            raise KeyError(f"unknown bank id {bank_id}")
        total += by_id[bank_id].leakage
    return total


def solve_cover(in_bytes: int, out_bytes: int, inventory: list[BankSpec],
                layer_id: int = -1,
                fixed_input: tuple[int, ...] = ()) -> BankAssignment:
    """Exact minimum-leakage disjoint cover of input and output bytes.

    Each bank is assigned to one of {unused, input, output}. `fixed_input`
    pins banks to the input role (activations carried over from the previous
    layer); extra input banks are added only if the pinned capacity falls
    short. Ties break toward the lexicographically smallest selected-id set.
    """
    by_id = {b.id: b for b in inventory}
    fixed = tuple(sorted(fixed_input))
    for bank_id in fixed:
        if bank_id not in by_id:
            raise KeyError(f"unknown bank id {bank_id}")
    fixed_cap = sum(by_id[i].capacity for i in fixed)
    fixed_leak = sum(by_id[i].leakage for i in fixed)
    free = [b for b in inventory if b.id not in fixed]

    need_in = max(0, in_bytes - fixed_cap)
    need_out = out_bytes
    total_free = sum(b.capacity for b in free)
    if need_in + need_out > total_free:
        raise SegmentRequired(need_in + need_out - total_free)

    # Largest banks first gives tight capacity feasibility pruning.
    free.sort(key=lambda b: (-b.capacity, b.id))
    suffix_cap = [0] * (len(free) + 1)
    for i in range(len(free) - 1, -1, -1):
        suffix_cap[i] = suffix_cap[i + 1] + free[i].capacity

    best = {"leak": float("inf"), "ids": None, "in": None, "out": None}

    def tol():
        return 1e-9 * max(abs(best["leak"]), 1e-30) \
            if best["leak"] != float("inf") else 0.0

    def consider(leak, sel_in, sel_out):
        ids = tuple(sorted(fixed + sel_in + sel_out))
        if (leak < best["leak"] - tol()
                or (abs(leak - best["leak"]) <= tol()
                    and (best["ids"] is None or ids < best["ids"]))):
            best["leak"] = leak
            best["ids"] = ids
            best["in"] = tuple(sorted(fixed + sel_in))
            best["out"] = tuple(sorted(sel_out))

    def search(i, cap_in, cap_out, leak, sel_in, sel_out):
        if leak > best["leak"] + tol():
            return
        if cap_in >= need_in and cap_out >= need_out:
            consider(leak, sel_in, sel_out)
            return
        if i == len(free):
            return
        missing = max(0, need_in - cap_in) + max(0, need_out - cap_out)
        if missing > suffix_cap[i]:
            return
        bank = free[i]
        # unused first so equal-leakage solutions prefer fewer banks
        search(i + 1, cap_in, cap_out, leak, sel_in, sel_out)
        if cap_in < need_in:
            search(i + 1, cap_in + bank.capacity, cap_out,
                   leak + bank.leakage, sel_in + (bank.id,), sel_out)
        if cap_out < need_out:
            search(i + 1, cap_in, cap_out + bank.capacity,
                   leak + bank.leakage, sel_in, sel_out + (bank.id,))

    search(0, 0, 0, 0.0, (), ())
    if best["ids"] is None:
        # enough total capacity, but no disjoint split covers both roles
        raise SegmentRequired(_partition_shortfall(need_in, need_out, free))
    return BankAssignment(layer_id, best["in"], best["out"],
                          best["leak"] + fixed_leak)


def _partition_shortfall(need_in: int, need_out: int,
                         banks: list[BankSpec]) -> int:
    """Smallest number of uncovered bytes over every input/output split."""
    total = sum(b.capacity for b in banks)
    best = need_in + need_out
    sums = {0}
    for b in banks:
        sums |= {s + b.capacity for s in sums}
    for cap_in in sums:
        deficit = (max(0, need_in - cap_in)
                   + max(0, need_out - (total - cap_in)))
        best = min(best, deficit)
    return max(best, 1)


def solve_bank_selection(layer: LayerDescriptor,
                         inventory: list[BankSpec]) -> BankAssignment:
    """Optimal bank cover for one layer's input and output activations."""
    return solve_cover(layer.input_bytes, layer.output_bytes, inventory,
                       layer_id=layer.id)


def assign_banks_for_network(layers: list[LayerDescriptor],
                             inventory: list[BankSpec]) -> list[BankAssignment]:
    """Per-layer assignments with output banks carried over as the next
    layer's input banks (activations are produced in place)."""
    assignments = []
    carry: tuple[int, ...] = ()
    for i, layer in enumerate(layers):
        if i == 0:
            asg = solve_cover(layer.input_bytes, layer.output_bytes,
                              inventory, layer.id)
        else:
            asg = solve_cover(layer.input_bytes, layer.output_bytes,
                              inventory, layer.id, fixed_input=carry)
        assignments.append(asg)
        carry = asg.output_banks
    return assignments
