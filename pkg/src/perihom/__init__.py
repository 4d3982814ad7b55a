"""Periodic homogenization of 2D linear elasticity.

Correctors and homogenized tensors on the unit cell, mixed and pure-Neumann
finite element solves, the smoothed two-scale expansion, and a harness that
measures the convergence rates of the remainder in L2, H1, weighted, and
interior norms.
"""

from .cell import (CellGrid, CorrectorSet, FluxCorrectorSet, FluxDiscrepancy,
                   HomogenizedTensor, cell_pipeline, flux_discrepancy,
                   homogenized_tensor, solve_correctors, solve_flux_correctors,
                   verify_cell_identities)
from .fem import (ConstantCoefficient, DiscreteSolution, MixedProblemSpec,
                  OscillatoryCoefficient, RigidBodyBasis, assemble,
                  compatibility_check, korn_probe, rigid_body_basis,
                  solve_mixed, solve_neumann)
from .harness import (ExperimentConfig, RateFit, StudyResult, emit_report,
                      fit_rate, run_rate_study)
from .mesh import (BoundaryPartition, DistanceField, DomainSpec, Mesh,
                   build_mesh, distance_field, layer_elements)
from .tensors import (CoefficientField, ElasticityTensor, EllipticityBounds,
                      checkerboard_field, constant_field, ellipticity_probe,
                      field_from_name, isotropic_tensor, laminate_field,
                      scalar_laminate_field, smooth_trig_field,
                      validate_symmetries)
from .twoscale import (CutoffFamily, Mollifier, SmoothingOperator,
                       TwoScaleReport, build_cutoff, build_smoothing_operator,
                       bump_mollifier, extend, mollify, oscillatory_term,
                       two_scale_report)

__version__ = "0.1.0"
