"""Grover search on simulated, imperfect photonic meshes.

Single photons in unary encoding, rectangular Mach-Zehnder meshes with
coupler imbalance, thermal cross-talk and loss, and the two calibration
strategies that bring such devices close to the ideal circuit.
"""
from .core import Distribution, haar_unitary, is_unitary
from .grover import (
    GroverSpec,
    Schedule,
    bloch_trajectory,
    deterministic_phase_solve,
    grover_unitary,
    optimal_iterations,
    original_success_probability,
    schedule_for,
    success_probability,
)
from .hardware import HardwareModel, ImperfectionConfig, mesh_transfer, sample_hardware
from .mesh import MeshProgram, clements_decompose, engaged_heaters, recompose

__version__ = "0.1.0"

__all__ = [
    "Distribution",
    "GroverSpec",
    "HardwareModel",
    "ImperfectionConfig",
    "MeshProgram",
    "Schedule",
    "bloch_trajectory",
    "clements_decompose",
    "deterministic_phase_solve",
    "engaged_heaters",
    "grover_unitary",
    "haar_unitary",
    "is_unitary",
    "mesh_transfer",
    "optimal_iterations",
    "original_success_probability",
    "recompose",
    "sample_hardware",
    "schedule_for",
    "success_probability",
]
