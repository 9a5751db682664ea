"""Network and accelerator data model: layer descriptors, quantized weights,
hardware configuration, and file loaders."""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class NetworkFormatError(ValueError):
    """Raised when a network file is malformed or inconsistent."""


class ConfigError(ValueError):
    """Raised when an accelerator configuration violates an invariant."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field_name = field_name


@dataclass
class LayerDescriptor:
    id: int
    kind: str  # "CONV" or "FC"
    kernel_h: int
    kernel_w: int
    in_channels: int
    out_channels: int
    input_h: int
    input_w: int
    stride: int = 1
    padding: int = 0
    input_bytes: int = 0
    output_bytes: int = 0

    def __post_init__(self):
        if self.kind not in ("CONV", "FC"):
            raise NetworkFormatError(f"layer {self.id}: unknown kind {self.kind!r}")
        if self.kind == "FC":
            if self.kernel_h != 1 or self.kernel_w != 1:
                raise NetworkFormatError(f"layer {self.id}: FC kernel must be 1x1")
            if self.input_h != 1 or self.input_w != 1:
                raise NetworkFormatError(f"layer {self.id}: FC input must be 1x1")
        oh, ow = self.output_shape()
        if oh < 1 or ow < 1:
            raise NetworkFormatError(
                f"layer {self.id}: non-positive output shape {oh}x{ow}"
            )
        if self.input_bytes == 0:
            self.input_bytes = self.input_h * self.input_w * self.in_channels
        if self.output_bytes == 0:
            self.output_bytes = oh * ow * self.out_channels

    def output_shape(self) -> tuple[int, int]:
        oh = (self.input_h + 2 * self.padding - self.kernel_h) // self.stride + 1
        ow = (self.input_w + 2 * self.padding - self.kernel_w) // self.stride + 1
        if (self.input_h + 2 * self.padding - self.kernel_h) % self.stride != 0:
            raise NetworkFormatError(
                f"layer {self.id}: output height is not an integer"
            )
        if (self.input_w + 2 * self.padding - self.kernel_w) % self.stride != 0:
            raise NetworkFormatError(
                f"layer {self.id}: output width is not an integer"
            )
        return oh, ow

    @property
    def num_windows(self) -> int:
        oh, ow = self.output_shape()
        return oh * ow

    @property
    def weight_count(self) -> int:
        return self.out_channels * self.in_channels * self.kernel_h * self.kernel_w


@dataclass
class QuantParams:
    scale_w: float = 1.0
    zero_point_w: int = 0
    scale_x: float = 1.0
    zero_point_x: int = 0
    bias: Optional[np.ndarray] = None  # per output channel, float
    bits: int = 8

    def __post_init__(self):
        if self.scale_w <= 0:
            raise NetworkFormatError("quant scale_w must be positive")
        if self.scale_x <= 0:
            raise NetworkFormatError("quant scale_x must be positive")
        if self.bias is not None:
            self.bias = np.asarray(self.bias, dtype=np.float64)


class QuantizedWeights:
    """Unsigned integer weight tensor for one layer.

    Values are materialized lazily when a generator spec is used, so large
    descriptor-only networks can be inspected without allocating tensors.
    """

    def __init__(self, layer_id: int, shape: tuple[int, int, int, int],
                 bits: int, values: Optional[np.ndarray] = None,
                 generator: Optional[dict] = None):
        self.layer_id = layer_id
        self.shape = tuple(shape)
        self.bits = bits
        self._values = None
        self._generator = generator
        if values is not None:
            self._values = self._check(np.asarray(values))
        elif generator is None:
            raise NetworkFormatError(
                f"layer {layer_id}: weights need values or a generator"
            )

    def _check(self, arr: np.ndarray) -> np.ndarray:
        if tuple(arr.shape) != self.shape:
            raise NetworkFormatError(
                f"layer {self.layer_id}: weight shape {arr.shape} does not "
                f"match descriptor shape {self.shape}"
            )
        lo, hi = int(arr.min(initial=0)), int(arr.max(initial=0))
        if lo < 0 or hi > (1 << self.bits) - 1:
            raise NetworkFormatError(
                f"layer {self.layer_id}: weight value out of "
                f"[0, {(1 << self.bits) - 1}]"
            )
        # int16 keeps headroom for shift/delta arithmetic at a quarter of
        # the footprint of int64, which matters on VGG-scale tensors
        return arr.astype(np.int16 if self.bits < 16 else np.int64)

    @property
    def values(self) -> np.ndarray:
        if self._values is None:
            self._values = self._check(_generate_weights(self.shape, self.bits,
                                                         self._generator))
        return self._values


def _generate_weights(shape, bits, spec) -> np.ndarray:
    mode = spec.get("mode", "gaussian")
    rng = np.random.default_rng(int(spec.get("seed", 0)))
    top = (1 << bits) - 1
    dtype = np.int16 if bits < 16 else np.int64
    if mode == "gaussian":
        vals = rng.normal(float(spec.get("mean", top / 2)),
                          float(spec.get("std", top / 8)), size=shape)
        return np.clip(np.rint(vals), 0, top).astype(dtype)
    if mode == "uniform":
        return rng.integers(0, top + 1, size=shape, dtype=dtype)
    raise NetworkFormatError(f"unknown weight generator mode {mode!r}")


@dataclass
class LayerRecord:
    descriptor: LayerDescriptor
    quant: QuantParams
    weights: QuantizedWeights


@dataclass
class NetworkModel:
    name: str
    layers: list[LayerRecord]

    def __len__(self) -> int:
        return len(self.layers)

    def descriptor(self, layer_id: int) -> LayerDescriptor:
        return self.layers[layer_id].descriptor


@dataclass
class BankSpec:
    id: int
    capacity: int  # bytes
    leakage: float  # joules per cycle when enabled

    def __post_init__(self):
        if self.capacity <= 0:
            raise ConfigError("bank_inventory", f"bank {self.id} capacity <= 0")
        if self.leakage <= 0:
            raise ConfigError("bank_inventory", f"bank {self.id} leakage <= 0")


@dataclass
class EnergyParams:
    energy_per_pulse: float = 1.0e-12
    energy_per_crossbar_read: float = 1.0e-11
    bank_leakage_base: float = 1.0e-13  # per-bank constant term, J/cycle
    bank_leakage_per_byte: float = 1.0e-18  # capacity-proportional term
    base_leakage: float = 1.0e-12  # non-Gbuffer static power, J/cycle

    def bank_leakage(self, capacity_bytes: int) -> float:
        return self.bank_leakage_base + capacity_bytes * self.bank_leakage_per_byte

    def __post_init__(self):
        for name in ("energy_per_pulse", "energy_per_crossbar_read",
                     "bank_leakage_base", "bank_leakage_per_byte",
                     "base_leakage"):
            if getattr(self, name) < 0:
                raise ConfigError(name, "must be nonnegative")


_DEFAULT_BANK_SIZES_KB = (1, 1, 2, 4, 64, 128, 256, 512, 1024, 2048)


def default_bank_inventory(energy: EnergyParams) -> list[BankSpec]:
    return [BankSpec(i, kb * 1024, energy.bank_leakage(kb * 1024))
            for i, kb in enumerate(_DEFAULT_BANK_SIZES_KB)]


@dataclass
class AcceleratorConfig:
    num_pes: int = 96
    apu_rows_per_pe: int = 6
    apu_cols_per_pe: int = 4
    crossbar_rows: int = 128
    crossbar_cols: int = 128
    bits_per_cell: int = 2
    weight_bits: int = 8
    activation_bits: int = 8
    crossbar_compute_latency: int = 96
    pulse_latency: int = 1000
    frequency: float = 1.0e9
    mm_bandwidth: float = 19.2  # bytes per cycle
    homogeneous_bank_count: int = 15
    homogeneous_bank_bytes: int = 256 * 1024
    pin_worst_case_rows: bool = False
    energy_params: EnergyParams = field(default_factory=EnergyParams)
    bank_inventory: Optional[list[BankSpec]] = None

    # derived, filled by validate_config
    cells_per_weight: int = 0
    max_pulses_per_phase: int = 0
    full_crossbar_write_latency: int = 0
    total_pe_rows: int = 0
    _validated: bool = False


def validate_config(config: AcceleratorConfig) -> AcceleratorConfig:
    """Check all structural invariants and cache derived constants."""
    positive = ("num_pes", "apu_rows_per_pe", "apu_cols_per_pe",
                "crossbar_rows", "crossbar_cols", "bits_per_cell",
                "weight_bits", "activation_bits", "crossbar_compute_latency",
                "pulse_latency")
    for name in positive:
        if getattr(config, name) < 1:
            raise ConfigError(name, "must be >= 1")
    if config.frequency <= 0:
        raise ConfigError("frequency", "must be positive")
    if config.mm_bandwidth <= 0:
        raise ConfigError("mm_bandwidth", "must be positive")
    if config.weight_bits % config.bits_per_cell != 0:
        raise ConfigError(
            "bits_per_cell",
            f"weight_bits={config.weight_bits} not divisible by "
            f"bits_per_cell={config.bits_per_cell}")
    if config.bank_inventory is None:
        config.bank_inventory = default_bank_inventory(config.energy_params)
    prev = None
    for bank in sorted(config.bank_inventory, key=lambda b: b.capacity):
        if prev is not None and bank.leakage < prev.leakage - 1e-30:
            import warnings
            warnings.warn("bank inventory leakage is not nondecreasing "
                          "in capacity", stacklevel=2)
            break
        prev = bank
    config.cells_per_weight = config.weight_bits // config.bits_per_cell
    config.max_pulses_per_phase = (1 << config.bits_per_cell) - 1
    config.full_crossbar_write_latency = (
        config.crossbar_rows * 2 * config.max_pulses_per_phase
        * config.pulse_latency)
    config.total_pe_rows = config.num_pes * config.apu_rows_per_pe
    config._validated = True
    return config


def homogeneous_banks(config: AcceleratorConfig) -> list[BankSpec]:
    """The uniform-bank Gbuffer used by the unoptimized configurations."""
    leak = config.energy_params.bank_leakage(config.homogeneous_bank_bytes)
    return [BankSpec(i, config.homogeneous_bank_bytes, leak)
            for i in range(config.homogeneous_bank_count)]


def load_config(path: str) -> AcceleratorConfig:
    """Load an accelerator configuration, overriding defaults per field."""
    with open(path) as fh:
        raw = json.load(fh)
    energy_raw = raw.pop("energy_params", {})
    energy = EnergyParams(**energy_raw)
    banks_raw = raw.pop("bank_inventory", None)
    config = AcceleratorConfig(energy_params=energy, **raw)
    if banks_raw is not None:
        banks = []
        for i, spec in enumerate(banks_raw):
            capacity = int(spec["capacity"])
            leak = float(spec.get("leakage", energy.bank_leakage(capacity)))
            banks.append(BankSpec(i, capacity, leak))
        config.bank_inventory = banks
    return validate_config(config)


def _parse_layer(entry: dict, index: int) -> LayerRecord:
    try:
        kind = entry["kind"]
        desc = LayerDescriptor(
            id=int(entry.get("id", index)),
            kind=kind,
            kernel_h=int(entry.get("kernel_h", 1)),
            kernel_w=int(entry.get("kernel_w", 1)),
            in_channels=int(entry["in_channels"]),
            out_channels=int(entry["out_channels"]),
            input_h=int(entry.get("input_h", 1)),
            input_w=int(entry.get("input_w", 1)),
            stride=int(entry.get("stride", 1)),
            padding=int(entry.get("padding", 0)),
            input_bytes=int(entry.get("input_bytes", 0)),
            output_bytes=int(entry.get("output_bytes", 0)),
        )
    except KeyError as exc:
        raise NetworkFormatError(f"layer {index}: missing field {exc}") from exc
    quant_raw = dict(entry.get("quant", {}))
    quant = QuantParams(
        scale_w=float(quant_raw.get("scale_w", 1.0)),
        zero_point_w=int(quant_raw.get("zero_point_w", 0)),
        scale_x=float(quant_raw.get("scale_x", 1.0)),
        zero_point_x=int(quant_raw.get("zero_point_x", 0)),
        bias=quant_raw.get("bias"),
        bits=int(quant_raw.get("bits", 8)),
    )
    shape = (desc.out_channels, desc.in_channels, desc.kernel_h, desc.kernel_w)
    wspec = entry.get("weights")
    if wspec is None:
        raise NetworkFormatError(f"layer {desc.id}: missing weights")
    if wspec.get("mode", "base64") == "base64":
        blob = base64.b64decode(wspec["data"])
        dtype = np.dtype(wspec.get("dtype", "uint8"))
        flat = np.frombuffer(blob, dtype=dtype)
        if flat.size != math.prod(shape):
            raise NetworkFormatError(
                f"layer {desc.id}: weight blob has {flat.size} values, "
                f"descriptor implies {math.prod(shape)}")
        weights = QuantizedWeights(desc.id, shape, quant.bits,
                                   values=flat.reshape(shape))
    else:
        weights = QuantizedWeights(desc.id, shape, quant.bits, generator=wspec)
    return LayerRecord(desc, quant, weights)


def load_network(path: str) -> NetworkModel:
    """Load a network description (descriptors, quant params, weights)."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise NetworkFormatError(f"{path}: parse failure: {exc}") from exc
    layers_raw = raw.get("layers")
    if not layers_raw:
        raise NetworkFormatError(f"{path}: empty network")
    records = [_parse_layer(entry, i) for i, entry in enumerate(layers_raw)]
    ids = [rec.descriptor.id for rec in records]
    if ids != list(range(len(records))):
        raise NetworkFormatError(
            f"{path}: layer ids must be a contiguous ordered sequence, "
            f"got {ids}")
    return NetworkModel(name=raw.get("name", path), layers=records)


def save_network(network: NetworkModel, path: str,
                 inline_weights: bool = True) -> None:
    """Serialize a network back to the JSON file format."""
    layers = []
    for rec in network.layers:
        d = rec.descriptor
        entry = {
            "id": d.id, "kind": d.kind,
            "kernel_h": d.kernel_h, "kernel_w": d.kernel_w,
            "in_channels": d.in_channels, "out_channels": d.out_channels,
            "input_h": d.input_h, "input_w": d.input_w,
            "stride": d.stride, "padding": d.padding,
            "input_bytes": d.input_bytes, "output_bytes": d.output_bytes,
            "quant": {
                "scale_w": rec.quant.scale_w,
                "zero_point_w": rec.quant.zero_point_w,
                "scale_x": rec.quant.scale_x,
                "zero_point_x": rec.quant.zero_point_x,
                "bias": None if rec.quant.bias is None
                else [float(b) for b in rec.quant.bias],
                "bits": rec.quant.bits,
            },
        }
        w = rec.weights
        if inline_weights or w._generator is None:
            data = w.values.astype(np.uint8).tobytes()
            entry["weights"] = {"mode": "base64", "dtype": "uint8",
                                "data": base64.b64encode(data).decode("ascii")}
        else:
            entry["weights"] = dict(w._generator)
        layers.append(entry)
    with open(path, "w") as fh:
        json.dump({"name": network.name, "layers": layers}, fh, indent=1)
        fh.write("\n")
