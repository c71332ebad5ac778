"""Nonlinear Craig-Bampton reduced-order models of von Karman beams."""

from .basis import ReductionBasis, fixed_interface_modes, principal_angles, static_modes, virtual_node_interface
from .estimator import NLCBReducer
from .fe import Material, Model, Section, assemble_global, clamped_beam, internal_force, tangent_stiffness
from .manifold import Manifold, compute_manifold
from .partition import Partition, Substructure, partition_model, primal_assemble
from .rom import (
    ReducedModel,
    assemble_rom,
    build_rom,
    classic_cb,
    energies,
    project_substructure,
    reduced_force,
    reduced_jacobian,
    reduced_potential,
)
from .tint import FullOrderSystem, IntegratorConfig, NewtonDivergence, ReducedSystem, TimeHistory, integrate

__version__ = "0.1.0"

__all__ = [
    "FullOrderSystem",
    "IntegratorConfig",
    "Manifold",
    "Material",
    "Model",
    "NLCBReducer",
    "NewtonDivergence",
    "Partition",
    "ReducedModel",
    "ReducedSystem",
    "ReductionBasis",
    "Section",
    "Substructure",
    "TimeHistory",
    "assemble_global",
    "assemble_rom",
    "build_rom",
    "clamped_beam",
    "classic_cb",
    "compute_manifold",
    "energies",
    "fixed_interface_modes",
    "integrate",
    "internal_force",
    "partition_model",
    "primal_assemble",
    "principal_angles",
    "project_substructure",
    "reduced_force",
    "reduced_jacobian",
    "reduced_potential",
    "static_modes",
    "tangent_stiffness",
    "virtual_node_interface",
]
