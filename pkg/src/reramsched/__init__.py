"""Offline scheduling and event-driven simulation for a DNN accelerator
whose crossbar arrays cannot hold every layer's weights at once."""

from .banks import (BankAssignment, SegmentRequired, assign_banks_for_network,
                    solve_bank_selection, solve_cover,
                    static_power_of_assignment)
from .mapping import (CellImage, ResourceRequirement, build_cell_images,
                      build_layer_images, compose_cells_to_weight,
                      decompose_weight_to_cells, kernels_per_crossbar,
                      layer_compute_latency, map_layer, populated_cells)
from .model import (AcceleratorConfig, BankSpec, ConfigError, EnergyParams,
                    LayerDescriptor, LayerRecord, NetworkFormatError,
                    NetworkModel, QuantParams, QuantizedWeights,
                    default_bank_inventory, homogeneous_banks, load_config,
                    load_network, save_network, validate_config)
from .replication import (LayerPlanInfo, PlanEntry, ReplicationPlan,
                          get_number_of_layers, layer_plan_info,
                          replicate_longest_layers, replication_scheme,
                          write_latency_threshold)
from .reuse import (DEFAULT_CENTERS, CellDeltaMatrix, CellDistribution,
                    ShiftPlan, apply_shift_plan, cell_distribution,
                    compensated_dot_product, compute_cell_deltas,
                    select_center, shift_weights, skipping_ratio,
                    total_pulses, uncompensated_dot_product)
from .scheduler import (Instruction, InstrKind, Schedule, ScheduleOptions,
                        optimized_schedule, export_trace, lower_bound_makespan,
                        naive_schedule, schedule_for_variant)
from .simulator import (LayerMetrics, Metrics, ScheduleGraphError,
                        crossbar_write_latency, export_timed_trace,
                        lifespan_estimate, row_write_latency, simulate)

__version__ = "0.1.0"
