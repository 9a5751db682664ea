import numpy as np
import pytest

from reramsched.model import (AcceleratorConfig, LayerDescriptor, LayerRecord,
                              NetworkModel, QuantParams, QuantizedWeights,
                              validate_config)


@pytest.fixture(scope="session")
def config():
    return validate_config(AcceleratorConfig())


@pytest.fixture
def tiny_config():
    """4 PE rows total, so multi-wave behavior shows up on small networks."""
    return validate_config(AcceleratorConfig(num_pes=2, apu_rows_per_pe=2))


def make_layer(idx, kind="CONV", in_ch=3, out_ch=4, k=3, hw=8, stride=1,
               padding=1, weights=None, seed=0, mean=None, std=None,
               quant=None):
    if kind == "FC":
        desc = LayerDescriptor(id=idx, kind="FC", kernel_h=1, kernel_w=1,
                               in_channels=in_ch, out_channels=out_ch,
                               input_h=1, input_w=1)
        shape = (out_ch, in_ch, 1, 1)
    else:
        desc = LayerDescriptor(id=idx, kind="CONV", kernel_h=k, kernel_w=k,
                               in_channels=in_ch, out_channels=out_ch,
                               input_h=hw, input_w=hw, stride=stride,
                               padding=padding)
        shape = (out_ch, in_ch, k, k)
    if quant is None:
        quant = QuantParams(scale_w=0.05, zero_point_w=-128,
                            scale_x=0.1, zero_point_x=-10)
    if weights is not None:
        qw = QuantizedWeights(idx, shape, 8, values=np.asarray(weights))
    else:
        gen = {"mode": "gaussian", "seed": seed}
        if mean is not None:
            gen["mean"] = mean
        if std is not None:
            gen["std"] = std
        qw = QuantizedWeights(idx, shape, 8, generator=gen)
    return LayerRecord(desc, quant, qw)


def make_network(specs, name="test"):
    """specs: list of dicts passed to make_layer (idx filled in)."""
    return NetworkModel(name, [make_layer(i, **spec)
                               for i, spec in enumerate(specs)])
