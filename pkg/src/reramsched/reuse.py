"""Partial weight reuse: cell-value distributions, skipping ratios, weight
shifting toward a common center, cell deltas, and dot-product compensation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mapping import decompose_array
from .model import AcceleratorConfig, NetworkModel, QuantParams, QuantizedWeights

# Candidate alignment centers for the top two cell positions. Centers close
# to the range limits are excluded up front because they clip too much mass.
DEFAULT_CENTERS = (88, 104, 96, 160, 152, 168)


@dataclass
class CellDistribution:
    """Empirical value distribution of each cell position (LSB first)."""
    probs: np.ndarray  # (cells_per_weight, 2^bits_per_cell)

    @property
    def num_cells(self) -> int:
        return self.probs.shape[0]


@dataclass
class ShiftPlan:
    center: int
    offsets: list[int]  # per layer, offsets[0] == 0
    clip_fractions: list[float]
    adjusted_zero_points: list[int]
    mean_abs_clip_error: list[float]
    fallback: bool = False  # no candidate survived the clip threshold
    pair_scores: dict = field(default_factory=dict)  # center -> mean score


@dataclass
class CellDeltaMatrix:
    pe: int
    apu_row: int
    apu_col: int
    deltas: np.ndarray  # signed, crossbar_rows x crossbar_cols
    max_increase: np.ndarray  # per row
    max_decrease: np.ndarray  # per row


def cell_distribution(weights: QuantizedWeights,
                      config: AcceleratorConfig) -> CellDistribution:
    values = weights.values
    if values.size == 0:
        raise ValueError("empty weight tensor")
    return distribution_of_values(values.reshape(-1), config.weight_bits,
                                  config.bits_per_cell)


def distribution_of_values(values: np.ndarray, weight_bits: int,
                           bits_per_cell: int) -> CellDistribution:
    digits = decompose_array(values, weight_bits, bits_per_cell)
    levels = 1 << bits_per_cell
    cpw = weight_bits // bits_per_cell
    probs = np.empty((cpw, levels), dtype=np.float64)
    for i in range(cpw):
        counts = np.bincount(digits[..., i].reshape(-1), minlength=levels)
        probs[i] = counts / counts.sum()
    return CellDistribution(probs)


def skipping_ratio(px: CellDistribution, py: CellDistribution, i: int) -> float:
    """Probability that cell position i (1-based) keeps its value when the
    weights of Y overwrite the weights of X."""
    if not 1 <= i <= px.num_cells:
        raise ValueError(f"cell position {i} out of [1, {px.num_cells}]")
    if px.probs.shape != py.probs.shape:
        raise ValueError("distributions have mismatched alphabets")
    return float(np.dot(px.probs[i - 1], py.probs[i - 1]))


def shift_weights(weights: QuantizedWeights, center: int,
                  n: int) -> tuple[np.ndarray, int, float]:
    """Shift a layer's weights toward `center`, clipping to [0, 2^n - 1].

    Returns (shifted values, offset, clipped fraction).
    """
    top = (1 << n) - 1
    if not 0 <= center <= top:
        raise ValueError(f"center {center} out of [0, {top}]")
    values = weights.values
    offset = int(np.rint(center - float(values.mean())))
    shifted = values + offset
    clipped = (shifted < 0) | (shifted > top)
    clip_fraction = float(clipped.mean()) if values.size else 0.0
    return np.clip(shifted, 0, top), offset, clip_fraction


def _shifted_values(values: np.ndarray, offset: int, top: int):
    shifted = values + offset
    clipped = (shifted < 0) | (shifted > top)
    out = np.clip(shifted, 0, top)
    err = float(np.abs(shifted - out).mean()) if values.size else 0.0
    return out, float(clipped.mean()), err


def select_center(network: NetworkModel, config: AcceleratorConfig,
                  clip_threshold: float = 0.001,
                  centers=DEFAULT_CENTERS) -> ShiftPlan:
    """Pick the alignment center maximizing reuse between overwrite pairs.

    The first layer is never shifted. Candidates whose worst-layer clipped
    fraction exceeds the threshold are dropped; survivors are ranked by the
    mean combined skipping ratio of the top two cell positions over
    consecutive layer pairs, then lower total clipped fraction, then lower
    numeric center.
    """
    if len(network) < 2:
        raise ValueError("center selection needs at least 2 layers")
    n = config.weight_bits
    top = (1 << n) - 1
    cpw = config.cells_per_weight
    hi_cells = (cpw - 1, cpw) if cpw >= 2 else (cpw,)

    candidates = []
    pair_scores = {}
    for center in centers:
        offsets, clip_fracs, clip_errs, dists = [], [], [], []
        for li, rec in enumerate(network.layers):
            values = rec.weights.values
            if li == 0:
                offset = 0
            else:
                offset = int(np.rint(center - float(values.mean())))
            shifted, frac, err = _shifted_values(values.reshape(-1), offset, top)
            offsets.append(offset)
            clip_fracs.append(frac)
            clip_errs.append(err)
            dists.append(distribution_of_values(shifted, n,
                                                config.bits_per_cell))
        score = np.mean([
            sum(skipping_ratio(dists[i], dists[i + 1], c) for c in hi_cells)
            for i in range(len(dists) - 1)])
        pair_scores[center] = float(score)
        if max(clip_fracs) <= clip_threshold:
            candidates.append((-score, sum(clip_fracs), center,
                               offsets, clip_fracs, clip_errs))

    if not candidates:
        zero = [0] * len(network)
        return ShiftPlan(
            center=0, offsets=zero,
            clip_fractions=[0.0] * len(network),
            adjusted_zero_points=[rec.quant.zero_point_w
                                  for rec in network.layers],
            mean_abs_clip_error=[0.0] * len(network),
            fallback=True, pair_scores=pair_scores)

    candidates.sort(key=lambda c: (c[0], c[1], c[2]))
    _, _, center, offsets, clip_fracs, clip_errs = candidates[0]
    return ShiftPlan(
        center=center, offsets=offsets, clip_fractions=clip_fracs,
        adjusted_zero_points=[rec.quant.zero_point_w - off
                              for rec, off in zip(network.layers, offsets)],
        mean_abs_clip_error=clip_errs, pair_scores=pair_scores)


def apply_shift_plan(network: NetworkModel, plan: ShiftPlan,
                     config: AcceleratorConfig) -> list[np.ndarray]:
    """Shifted weight tensors for every layer under a plan."""
    top = (1 << config.weight_bits) - 1
    out = []
    for rec, offset in zip(network.layers, plan.offsets):
        shifted, _, _ = _shifted_values(rec.weights.values, offset, top)
        out.append(shifted)
    return out


def compute_cell_deltas(old, new) -> CellDeltaMatrix:
    """Signed per-cell difference between two occupants of one crossbar.

    `old` may be None (erased crossbar, all cells 0).
    """
    if old is None:
        old_vals = np.zeros_like(np.asarray(new.values))
        coords = (new.pe, new.apu_row, new.apu_col)
    else:
        if np.asarray(old.values).shape != np.asarray(new.values).shape:
            raise ValueError("crossbar geometry mismatch")
        old_vals = np.asarray(old.values)
        coords = (old.pe, old.apu_row, old.apu_col)
    deltas = np.asarray(new.values, dtype=np.int16) - old_vals.astype(np.int16)
    return CellDeltaMatrix(
        coords[0], coords[1], coords[2], deltas,
        max_increase=np.maximum(deltas, 0).max(axis=1),
        max_decrease=np.maximum(-deltas, 0).max(axis=1))


def delta_matrix_from_arrays(old: np.ndarray | None, new: np.ndarray,
                             coords=(0, 0, 0)) -> CellDeltaMatrix:
    deltas = new.astype(np.int16) - (0 if old is None else old.astype(np.int16))
    return CellDeltaMatrix(
        coords[0], coords[1], coords[2], deltas,
        max_increase=np.maximum(deltas, 0).max(axis=1),
        max_decrease=np.maximum(-deltas, 0).max(axis=1))


def total_pulses(deltas: CellDeltaMatrix) -> int:
    """Programming pulses needed to realize a delta matrix."""
    return int(np.abs(deltas.deltas, dtype=np.int64).sum())


def quantized_accumulation(x_q: np.ndarray, w: np.ndarray,
                           zp_x: int, zp_w: int) -> int:
    """Integer part of the dot product: sum (x + zp_x) * (w + zp_w)."""
    x = np.asarray(x_q, dtype=np.int64)
    w = np.asarray(w, dtype=np.int64)
    if x.shape != w.shape:
        raise ValueError("vector length mismatch")
    return int(np.dot(x + zp_x, w + zp_w))


def compensated_dot_product(x_q: np.ndarray, w_shifted: np.ndarray,
                            offset: int, qp: QuantParams,
                            bias: float = 0.0) -> float:
    """De-quantized dot product using shifted weights and the adjusted zero
    point zp_w - offset; exactly cancels the shift when nothing clipped."""
    acc = quantized_accumulation(x_q, w_shifted, qp.zero_point_x,
                                 qp.zero_point_w - offset)
    return acc / (qp.scale_x * qp.scale_w) + bias


def uncompensated_dot_product(x_q: np.ndarray, w_q: np.ndarray,
                              qp: QuantParams, bias: float = 0.0) -> float:
    acc = quantized_accumulation(x_q, w_q, qp.zero_point_x, qp.zero_point_w)
    return acc / (qp.scale_x * qp.scale_w) + bias
