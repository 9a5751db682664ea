import json

import numpy as np
import pytest

from reramsched.model import (AcceleratorConfig, ConfigError, EnergyParams,
                              LayerDescriptor, NetworkFormatError,
                              default_bank_inventory, homogeneous_banks,
                              load_config, load_network, save_network,
                              validate_config)
from conftest import make_network


def test_default_derived_constants(config):
    # Worst case: 128 rows, two phases, 3 pulses per phase, 1000 cycles each.
    assert config.full_crossbar_write_latency == 768000
    assert config.cells_per_weight == 4
    assert config.max_pulses_per_phase == 3
    assert config.total_pe_rows == 576
    assert config.crossbar_compute_latency == 96


def test_one_bit_cells_write_latency():
    cfg = validate_config(AcceleratorConfig(bits_per_cell=1))
    assert cfg.max_pulses_per_phase == 1
    assert cfg.full_crossbar_write_latency == 256 * cfg.pulse_latency


def test_indivisible_cell_bits_rejected():
    with pytest.raises(ConfigError) as exc:
        validate_config(AcceleratorConfig(bits_per_cell=3))
    assert exc.value.field_name == "bits_per_cell"


@pytest.mark.parametrize("field,value", [
    ("num_pes", 0), ("crossbar_rows", -1), ("pulse_latency", 0),
    ("frequency", 0.0), ("mm_bandwidth", -2.0),
])
def test_invalid_fields_named(field, value):
    with pytest.raises(ConfigError) as exc:
        validate_config(AcceleratorConfig(**{field: value}))
    assert exc.value.field_name == field


def test_layer_descriptor_shapes():
    d = LayerDescriptor(id=0, kind="CONV", kernel_h=3, kernel_w=3,
                        in_channels=3, out_channels=64,
                        input_h=224, input_w=224, padding=1)
    assert d.output_shape() == (224, 224)
    assert d.num_windows == 50176
    assert d.input_bytes == 224 * 224 * 3


def test_fc_shape_constraints():
    with pytest.raises(NetworkFormatError):
        LayerDescriptor(id=0, kind="FC", kernel_h=3, kernel_w=3,
                        in_channels=8, out_channels=4, input_h=1, input_w=1)


def test_non_integer_output_shape_rejected():
    with pytest.raises(NetworkFormatError):
        LayerDescriptor(id=0, kind="CONV", kernel_h=3, kernel_w=3,
                        in_channels=3, out_channels=4,
                        input_h=32, input_w=32, stride=2, padding=1)


def test_load_network_two_layers(tmp_path):
    doc = {"name": "two", "layers": [
        {"id": 0, "kind": "CONV", "kernel_h": 3, "kernel_w": 3,
         "in_channels": 3, "out_channels": 8, "input_h": 8, "input_w": 8,
         "padding": 1, "weights": {"mode": "gaussian", "seed": 1}},
        {"id": 1, "kind": "FC", "in_channels": 8, "out_channels": 4,
         "weights": {"mode": "uniform", "seed": 2}},
    ]}
    path = tmp_path / "net.json"
    path.write_text(json.dumps(doc))
    net = load_network(str(path))
    assert len(net) == 2
    assert net.layers[0].descriptor.weight_count == 216
    assert net.layers[1].descriptor.weight_count == 32
    assert net.layers[0].weights.values.shape == (8, 3, 3, 3)


def test_load_network_empty_rejected(tmp_path):
    path = tmp_path / "net.json"
    path.write_text(json.dumps({"layers": []}))
    with pytest.raises(NetworkFormatError, match="empty network"):
        load_network(str(path))


def test_load_network_noncontiguous_ids(tmp_path):
    doc = {"layers": [
        {"id": 0, "kind": "FC", "in_channels": 4, "out_channels": 4,
         "weights": {"mode": "uniform", "seed": 0}},
        {"id": 5, "kind": "FC", "in_channels": 4, "out_channels": 4,
         "weights": {"mode": "uniform", "seed": 0}},
    ]}
    path = tmp_path / "net.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(NetworkFormatError, match="contiguous"):
        load_network(str(path))


def test_load_network_parse_failure(tmp_path):
    path = tmp_path / "net.json"
    path.write_text("{not json")
    with pytest.raises(NetworkFormatError, match="parse failure"):
        load_network(str(path))


def test_weight_range_enforced():
    net = make_network([{"kind": "FC", "in_ch": 2, "out_ch": 2}])
    bad = np.array([[[[256]], [[0]]], [[[1]], [[2]]]])
    with pytest.raises(NetworkFormatError, match="out of"):
        make_network([{"kind": "FC", "in_ch": 2, "out_ch": 2,
                       "weights": bad}])
    assert len(net) == 1  # the valid one built fine


def test_save_load_roundtrip(tmp_path):
    net = make_network([
        {"kind": "CONV", "in_ch": 3, "out_ch": 4, "hw": 8, "seed": 5},
        {"kind": "FC", "in_ch": 4 * 8 * 8, "out_ch": 10, "seed": 6},
    ])
    path = tmp_path / "round.json"
    save_network(net, str(path))
    back = load_network(str(path))
    for a, b in zip(net.layers, back.layers):
        assert np.array_equal(a.weights.values, b.weights.values)
        assert a.descriptor == b.descriptor


def test_load_config_overrides(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({
        "num_pes": 4, "pulse_latency": 500,
        "energy_params": {"energy_per_pulse": 2e-12},
        "bank_inventory": [{"capacity": 1024}, {"capacity": 2048,
                                                "leakage": 3e-13}],
    }))
    cfg = load_config(str(path))
    assert cfg.num_pes == 4
    assert cfg.full_crossbar_write_latency == 128 * 2 * 3 * 500
    assert cfg.energy_params.energy_per_pulse == 2e-12
    assert [b.capacity for b in cfg.bank_inventory] == [1024, 2048]
    assert cfg.bank_inventory[1].leakage == 3e-13


def test_default_inventory_and_homogeneous(config):
    inv = default_bank_inventory(EnergyParams())
    assert [b.capacity // 1024 for b in inv] == [1, 1, 2, 4, 64, 128, 256,
                                                 512, 1024, 2048]
    homo = homogeneous_banks(config)
    assert len(homo) == 15
    assert all(b.capacity == 256 * 1024 for b in homo)
    # the heterogeneous inventory, even fully enabled, leaks no more than
    # the always-on homogeneous buffer
    assert sum(b.leakage for b in inv) <= sum(b.leakage for b in homo)


def test_generator_modes():
    g = make_network([{"kind": "FC", "in_ch": 64, "out_ch": 64,
                       "mean": 100.0, "std": 5.0}])
    vals = g.layers[0].weights.values
    assert 90 < vals.mean() < 110
    assert vals.min() >= 0 and vals.max() <= 255
