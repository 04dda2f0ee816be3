"""Small-strain elasticity and J2 plasticity."""
from .constitutive import (KME, PLANE_STRAIN, PLANE_STRESS, ElasticModel, HardeningLaw,
                           MaterialPointState, PowerLaw, ReturnMapResult, SingularMaterialError,
                           continuum_tangent, continuum_tangent_batch, deviatoric,
                           elastic_matrix, elastic_update, hardening, hydrostatic_stress,
                           out_of_plane, return_map, return_map_batch, strain4, von_mises)
from .solver import (GaussState, IncrementReport, MechanicsFailure, MechanicsProblem, StepResult,
                     assemble_internal_force, assemble_stiffness, assemble_traction,
                     newton_solve, strain_at_gauss)

__all__ = [
    "KME", "PLANE_STRAIN", "PLANE_STRESS", "ElasticModel", "HardeningLaw", "MaterialPointState",
    "PowerLaw", "ReturnMapResult", "SingularMaterialError", "continuum_tangent",
    "continuum_tangent_batch", "deviatoric", "elastic_matrix", "elastic_update", "hardening",
    "hydrostatic_stress", "out_of_plane", "return_map", "return_map_batch", "strain4",
    "von_mises", "GaussState", "IncrementReport", "MechanicsFailure", "MechanicsProblem",
    "StepResult", "assemble_internal_force", "assemble_stiffness", "assemble_traction",
    "newton_solve", "strain_at_gauss",
]
