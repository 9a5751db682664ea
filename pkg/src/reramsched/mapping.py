"""Conventional CONV/FC mapping onto crossbars: weight-to-cell encoding,
per-layer resource requirements, and compute latency."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import AcceleratorConfig, LayerDescriptor, QuantizedWeights


@dataclass(frozen=True)
class ResourceRequirement:
    layer_id: int
    vertical_slices: int
    horizontal_slices: int
    pe_rows_needed: int
    num_windows: int


@dataclass
class CellImage:
    """Cell state of one crossbar: values in [0, 2^bits_per_cell - 1]."""
    pe: int
    apu_row: int
    apu_col: int
    values: np.ndarray  # crossbar_rows x crossbar_cols, int
    occupant: int | None = None  # layer id, None means erased (all zero)


def decompose_weight_to_cells(w: int, n: int, b: int) -> list[int]:
    """Split an n-bit weight into n/b cell values, LSB slice first."""
    if n % b != 0:
        raise ValueError(f"bits_per_cell {b} does not divide weight bits {n}")
    if not 0 <= w < (1 << n):
        raise ValueError(f"weight {w} out of [0, {(1 << n) - 1}]")
    mask = (1 << b) - 1
    return [(w >> (b * i)) & mask for i in range(n // b)]


def compose_cells_to_weight(cells, b: int = 2) -> int:
    """Inverse of decompose_weight_to_cells."""
    w = 0
    for i, c in enumerate(cells):
        if not 0 <= c < (1 << b):
            raise ValueError(f"cell value {c} out of [0, {(1 << b) - 1}]")
        w |= int(c) << (b * i)
    return w


def decompose_array(values: np.ndarray, n: int, b: int) -> np.ndarray:
    """Vectorized decomposition; appends a trailing axis of n/b cell digits."""
    if n % b != 0:
        raise ValueError(f"bits_per_cell {b} does not divide weight bits {n}")
    values = np.asarray(values, dtype=np.int64)
    if values.size and (values.min() < 0 or values.max() >= (1 << n)):
        raise ValueError("weight value out of range")
    shifts = np.arange(n // b) * b
    return (values[..., None] >> shifts) & ((1 << b) - 1)


def map_layer(layer: LayerDescriptor,
              config: AcceleratorConfig) -> ResourceRequirement:
    """Resource requirement of the conventional kernel-per-column mapping."""
    unrolled = layer.kernel_h * layer.kernel_w * layer.in_channels
    vertical = math.ceil(unrolled / config.crossbar_rows)
    horizontal = math.ceil(layer.out_channels * config.cells_per_weight
                           / config.crossbar_cols)
    pe_rows = vertical * math.ceil(horizontal / config.apu_cols_per_pe)
    windows = 1 if layer.kind == "FC" else layer.num_windows
    return ResourceRequirement(layer.id, vertical, horizontal, pe_rows, windows)


def layer_compute_latency(req: ResourceRequirement, replication: int,
                          config: AcceleratorConfig) -> int:
    """Cycles to compute one layer with replication factor R.

    Each replica processes a distinct share of the activation windows and all
    replicas run in lockstep, so the window count divides by R (ceil).
    """
    if replication < 1:
        raise ValueError("replication factor must be >= 1")
    return (math.ceil(req.num_windows / replication)
            * config.activation_bits * config.crossbar_compute_latency)


def kernels_per_crossbar(config: AcceleratorConfig) -> int:
    return config.crossbar_cols // config.cells_per_weight


def build_layer_images(layer: LayerDescriptor, values: np.ndarray,
                       config: AcceleratorConfig) -> list[list[np.ndarray]]:
    """Cell matrices for every (vertical, horizontal) slice of a layer.

    Kernel k occupies cells_per_weight consecutive columns of its horizontal
    slice; the kernel is unrolled channel-major (channel, then kernel row,
    then kernel column) down the rows. Unused cells stay 0.
    """
    req = map_layer(layer, config)
    cpw = config.cells_per_weight
    kpx = kernels_per_crossbar(config)
    rows, cols = config.crossbar_rows, config.crossbar_cols
    # (out_channels, unrolled) in channel-major order, then cell digits
    flat = np.asarray(values).reshape(layer.out_channels, -1)
    unrolled = flat.shape[1]
    images = [[np.zeros((rows, cols), dtype=np.int8)
               for _ in range(req.horizontal_slices)]
              for _ in range(req.vertical_slices)]
    for hs in range(req.horizontal_slices):
        k_lo = hs * kpx
        k_hi = min(k_lo + kpx, layer.out_channels)
        # decompose one kernel block at a time to bound peak memory
        digits = decompose_array(flat[k_lo:k_hi], config.weight_bits,
                                 config.bits_per_cell)
        for vs in range(req.vertical_slices):
            r_lo = vs * rows
            r_hi = min(r_lo + rows, unrolled)
            # digits slice: (kernels, rows_used, cpw) -> columns per kernel
            block = digits[:, r_lo:r_hi, :]
            img = images[vs][hs]
            width = (k_hi - k_lo) * cpw
            img[: r_hi - r_lo, :width] = (
                block.transpose(1, 0, 2).reshape(r_hi - r_lo, width))
    return images


def populated_cells(layer: LayerDescriptor, config: AcceleratorConfig,
                    vs: int, hs: int) -> int:
    """Number of weight-bearing cells in slice (vs, hs) of a layer."""
    req = map_layer(layer, config)
    rows, cols = config.crossbar_rows, config.crossbar_cols
    unrolled = layer.kernel_h * layer.kernel_w * layer.in_channels
    kpx = kernels_per_crossbar(config)
    rows_used = min(rows, unrolled - vs * rows)
    kernels = min(kpx, layer.out_channels - hs * kpx)
    if rows_used <= 0 or kernels <= 0:
        return 0
    return rows_used * kernels * config.cells_per_weight


def build_cell_images(layer: LayerDescriptor, weights: QuantizedWeights,
                      assignment: list[tuple[int, int, int]],
                      config: AcceleratorConfig) -> list[CellImage]:
    """Place a layer's weights onto the crossbars named by `assignment`.

    The assignment lists (pe, apu_row, apu_col) coordinates in vertical-slice
    major order and must cover vertical_slices x horizontal_slices crossbars.
    """
    req = map_layer(layer, config)
    needed = req.vertical_slices * req.horizontal_slices
    if len(assignment) < needed:
        raise ValueError(
            f"assignment covers {len(assignment)} crossbars, "
            f"layer {layer.id} needs {needed}")
    matrices = build_layer_images(layer, weights.values, config)
    out = []
    it = iter(assignment)
    for vs in range(req.vertical_slices):
        for hs in range(req.horizontal_slices):
            pe, arow, acol = next(it)
            out.append(CellImage(pe, arow, acol, matrices[vs][hs],
                                 occupant=layer.id))
    return out


def recompose_layer(images: list[list[np.ndarray]],
                    layer: LayerDescriptor,
                    config: AcceleratorConfig) -> np.ndarray:
    """Reassemble the weight tensor from slice images (placement inverse)."""
    cpw = config.cells_per_weight
    kpx = kernels_per_crossbar(config)
    rows = config.crossbar_rows
    unrolled = layer.kernel_h * layer.kernel_w * layer.in_channels
    flat = np.zeros((layer.out_channels, unrolled), dtype=np.int64)
    shifts = np.arange(cpw) * config.bits_per_cell
    for vs, row_imgs in enumerate(images):
        r_lo = vs * rows
        r_hi = min(r_lo + rows, unrolled)
        for hs, img in enumerate(row_imgs):
            k_lo = hs * kpx
            k_hi = min(k_lo + kpx, layer.out_channels)
            width = (k_hi - k_lo) * cpw
            block = img[: r_hi - r_lo, :width].astype(np.int64)
            digits = block.reshape(r_hi - r_lo, k_hi - k_lo, cpw)
            flat[k_lo:k_hi, r_lo:r_hi] = (
                (digits << shifts).sum(axis=2).transpose(1, 0))
    return flat.reshape(layer.out_channels, layer.in_channels,
                        layer.kernel_h, layer.kernel_w)
