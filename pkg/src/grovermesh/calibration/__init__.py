"""Calibration of imperfect meshes: sequential heater tuning and clear-box fitting."""
from .clearbox import (
    ClearBoxCalibrator,
    TrainingSet,
    clearbox_invert,
    clearbox_train,
    compile_program,
    gauge_directions,
    generate_training_set,
    phase_rmse,
    refine_phases,
)
from .metrics import sampling_floor, tvd, tvd_sigma
from .sequential import (
    HardwareEvaluator,
    OptimisationTrace,
    SequentialOptimiser,
    TraceStep,
    sequential_optimise,
)

__all__ = [
    "ClearBoxCalibrator",
    "HardwareEvaluator",
    "OptimisationTrace",
    "SequentialOptimiser",
    "TraceStep",
    "TrainingSet",
    "clearbox_invert",
    "clearbox_train",
    "compile_program",
    "gauge_directions",
    "generate_training_set",
    "phase_rmse",
    "refine_phases",
    "sampling_floor",
    "sequential_optimise",
    "tvd",
    "tvd_sigma",
]
