"""Numerical toolkit for localizing radiating electromagnetic current sources.

Three stages, usable separately or as a pipeline:

- ``forward``: synthesize boundary measurements of the electric field
  radiated by a compactly supported current density;
- ``imaging``: phase-conjugation back-propagation of the conjugated
  measurements, per frequency or over a broadband sweep;
- ``inverse``: l1-regularized refinement of the per-frequency images by
  accelerated proximal-gradient iteration with backtracking.

``emsrc.cli`` exposes the same stages as the ``emsrc`` command-line tool.
"""

from .geometry import (GeometryError, Medium, FrequencySet, VoxelGrid,
                       VectorField, SurfaceMesh, make_sphere_mesh,
                       make_ball_source)
from .greens import (scalar_green, dyadic_green_ee, dyadic_green_ee_many,
                     re_green_ee, re_green_ee_many, real_kernel_sign,
                     hk_identity_residual)
from .forward import BoundaryData, radiate, simulate_boundary_data, add_noise
from .imaging import (ImageStack, adjoint_field, phase_conj_single,
                      phase_conj_stack, phase_conj_full,
                      delta_identity_residual)
from .inverse import (DivergenceError, FistaConfig, FistaTrace, FistaIterate,
                      FidelityProblem, apply_fidelity_operator, fidelity,
                      grad_fidelity, prox_l1, prox_l1_group, l1_penalty,
                      majorizer, prox_step, lipschitz_estimate,
                      fista_backtracking, ista_baseline)
from .scenario import (Scenario, ScenarioError, SourceSpec, load_scenario,
                       save_scenario, scenario_from_dict, scenario_to_dict)

__version__ = "0.1.0"

__all__ = [
    "GeometryError", "Medium", "FrequencySet", "VoxelGrid", "VectorField",
    "SurfaceMesh", "make_sphere_mesh", "make_ball_source",
    "scalar_green", "dyadic_green_ee", "dyadic_green_ee_many", "re_green_ee",
    "re_green_ee_many", "real_kernel_sign", "hk_identity_residual",
    "BoundaryData", "radiate", "simulate_boundary_data", "add_noise",
    "ImageStack", "adjoint_field", "phase_conj_single", "phase_conj_stack",
    "phase_conj_full", "delta_identity_residual",
    "DivergenceError", "FistaConfig", "FistaTrace", "FistaIterate",
    "FidelityProblem", "apply_fidelity_operator", "fidelity", "grad_fidelity",
    "prox_l1", "prox_l1_group", "l1_penalty", "majorizer", "prox_step",
    "lipschitz_estimate", "fista_backtracking", "ista_baseline",
    "Scenario", "ScenarioError", "SourceSpec", "load_scenario",
    "save_scenario", "scenario_from_dict", "scenario_to_dict",
    "__version__",
]
