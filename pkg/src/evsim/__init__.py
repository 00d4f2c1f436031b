"""Frame-to-event camera simulation with flow-based interpolation."""

from .core import (
    METHOD_DEFAULTS,
    METHODS,
    ConfigError,
    DifferenceFrame,
    Event,
    EventStream,
    Frame,
    IncompatibleFramesError,
    SimulatorConfig,
    SimulatorError,
    difference_frame,
    threshold_events,
)
from .flow import (
    HIGH_QUALITY,
    LOW_QUALITY,
    FlowField,
    FlowPreset,
    SparseFlow,
    estimate_dense_flow,
    estimate_sparse_flow,
)
from .metrics import AccumulatedFrame, EventRateStats, accumulate, events_per_pixel_second
from .simulate import (
    Simulator,
    interpolate_frames,
    simulate_dense,
    simulate_difference,
    simulate_difference_only,
    simulate_sparse,
)

__version__ = "0.1.0"

__all__ = [
    "METHOD_DEFAULTS",
    "METHODS",
    "ConfigError",
    "DifferenceFrame",
    "Event",
    "EventStream",
    "Frame",
    "IncompatibleFramesError",
    "SimulatorConfig",
    "SimulatorError",
    "difference_frame",
    "threshold_events",
    "HIGH_QUALITY",
    "LOW_QUALITY",
    "FlowField",
    "FlowPreset",
    "SparseFlow",
    "estimate_dense_flow",
    "estimate_sparse_flow",
    "AccumulatedFrame",
    "EventRateStats",
    "accumulate",
    "events_per_pixel_second",
    "Simulator",
    "interpolate_frames",
    "simulate_dense",
    "simulate_difference",
    "simulate_difference_only",
    "simulate_sparse",
]
