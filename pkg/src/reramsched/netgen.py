"""Synthetic network builders used by the sample files and the test suite."""

from __future__ import annotations

import numpy as np

from .model import (LayerDescriptor, LayerRecord, NetworkModel, QuantParams,
                    QuantizedWeights)


def _record(idx: int, kind: str, in_ch: int, out_ch: int, kh: int = 1,
            kw: int = 1, ih: int = 1, iw: int = 1, stride: int = 1,
            padding: int = 0, mean: float | None = None,
            std: float | None = None, seed: int = 0,
            mode: str = "gaussian") -> LayerRecord:
    desc = LayerDescriptor(id=idx, kind=kind, kernel_h=kh, kernel_w=kw,
                           in_channels=in_ch, out_channels=out_ch,
                           input_h=ih, input_w=iw, stride=stride,
                           padding=padding)
    gen = {"mode": mode, "seed": seed}
    if mode == "gaussian":
        gen["mean"] = 127.5 if mean is None else mean
        gen["std"] = 24.0 if std is None else std
    quant = QuantParams(scale_w=0.05, zero_point_w=-128,
                        scale_x=0.1, zero_point_x=-10)
    shape = (out_ch, in_ch, kh, kw)
    return LayerRecord(desc, quant, QuantizedWeights(idx, shape, 8,
                                                     generator=gen))


def vgg16_network() -> NetworkModel:
    """The classic 16-layer ImageNet topology. Weights are generator-backed
    so planning-level analyses never materialize the large FC tensors."""
    convs = [
        (3, 64, 224), (64, 64, 224),
        (64, 128, 112), (128, 128, 112),
        (128, 256, 56), (256, 256, 56), (256, 256, 56),
        (256, 512, 28), (512, 512, 28), (512, 512, 28),
        (512, 512, 14), (512, 512, 14), (512, 512, 14),
    ]
    layers = []
    for i, (cin, cout, hw) in enumerate(convs):
        layers.append(_record(i, "CONV", cin, cout, 3, 3, hw, hw,
                              padding=1, mean=110.0 + 7 * (i % 5), seed=i))
    n = len(layers)
    for j, (cin, cout) in enumerate([(512 * 7 * 7, 4096), (4096, 4096),
                                     (4096, 1000)]):
        layers.append(_record(n + j, "FC", cin, cout,
                              mean=120.0 + 9 * j, seed=n + j))
    return NetworkModel("vgg16", layers)


def vgg_small_network(seed: int = 7) -> NetworkModel:
    """Scaled-down conv stack on a 32x32 input; small enough to schedule and
    simulate quickly, with writing clearly dominating computation."""
    convs = [
        (3, 16, 32), (16, 16, 32),
        (16, 32, 16), (32, 32, 16),
        (32, 64, 8), (64, 64, 8),
    ]
    layers = []
    for i, (cin, cout, hw) in enumerate(convs):
        layers.append(_record(i, "CONV", cin, cout, 3, 3, hw, hw,
                              padding=1, mean=105.0 + 11 * (i % 4),
                              seed=seed + i))
    n = len(layers)
    layers.append(_record(n, "FC", 64 * 8 * 8, 64, mean=132.0, seed=seed + n))
    layers.append(_record(n + 1, "FC", 64, 10, mean=118.0, seed=seed + n + 1))
    return NetworkModel("vgg_small", layers)


def resnet_small_network(seed: int = 11) -> NetworkModel:
    """Plain residual-style column (the skip additions do not change the
    weight footprint, so they are not modeled)."""
    # downsampling steps use 2x2 stride-2 kernels so output shapes stay exact
    convs = [
        (3, 16, 32, 3, 1, 1),
        (16, 16, 32, 3, 1, 1), (16, 16, 32, 3, 1, 1),
        (16, 32, 32, 2, 2, 0), (32, 32, 16, 3, 1, 1),
        (32, 64, 16, 2, 2, 0), (64, 64, 8, 3, 1, 1),
    ]
    layers = []
    for i, (cin, cout, hw, k, stride, pad) in enumerate(convs):
        layers.append(_record(i, "CONV", cin, cout, k, k, hw, hw,
                              stride=stride, padding=pad,
                              mean=100.0 + 13 * (i % 3), seed=seed + i))
    layers.append(_record(len(convs), "FC", 64 * 8 * 8, 10, mean=126.0,
                          seed=seed + len(convs)))
    return NetworkModel("resnet_small", layers)


def fc_network(seed: int = 3, widths=(256, 128, 64, 10)) -> NetworkModel:
    layers = []
    prev = widths[0]
    for i, w in enumerate(widths[1:]):
        layers.append(_record(i, "FC", prev, w, mean=112.0 + 10 * i,
                              seed=seed + i))
        prev = w
    return NetworkModel("fc_small", layers)


def random_network(seed: int, min_layers: int = 2,
                   max_layers: int = 6) -> NetworkModel:
    """Random small conv/FC chain for property tests. Shapes stay modest so
    schedules build in milliseconds."""
    rng = np.random.default_rng(seed)
    n_layers = int(rng.integers(min_layers, max_layers + 1))
    layers = []
    hw = int(rng.choice([8, 12, 16]))
    ch = int(rng.choice([3, 4, 8]))
    fc_started = False
    for i in range(n_layers):
        if fc_started or (i == n_layers - 1 and rng.random() < 0.5):
            out = int(rng.integers(4, 40))
            in_ch = ch if fc_started else ch * hw * hw
            layers.append(_record(i, "FC", in_ch, out,
                                  mean=float(rng.uniform(90, 165)),
                                  seed=seed * 101 + i))
            ch = out
            fc_started = True
        else:
            out = int(rng.choice([4, 8, 16, 24]))
            k = int(rng.choice([1, 3]))
            pad = k // 2
            layers.append(_record(i, "CONV", ch, out, k, k, hw, hw,
                                  padding=pad,
                                  mean=float(rng.uniform(90, 165)),
                                  seed=seed * 101 + i))
            ch = out
    return NetworkModel(f"random_{seed}", layers)


SAMPLE_BUILDERS = {
    "vgg16": vgg16_network,
    "vgg_small": vgg_small_network,
    "resnet_small": resnet_small_network,
    "fc_small": fc_network,
}


def write_sample_networks(directory: str) -> list[str]:
    """Write every sample network as JSON; generator specs stay symbolic."""
    import os

    from .model import save_network
    paths = []
    for name, builder in SAMPLE_BUILDERS.items():
        path = os.path.join(directory, f"{name}.json")
        save_network(builder(), path, inline_weights=False)
        paths.append(path)
    return paths
