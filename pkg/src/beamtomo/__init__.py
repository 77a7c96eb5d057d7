"""Gaussian-beam synthesis and phaseless tomography on planar domains."""

from .beams import (BeamConfig, BeamField, BeamState, default_M0, eval_field,
                    propagate_beam, propagate_fan, riccati_rhs)
from .errors import (BeamBreakdownError, BeamtomoError, ConfigError,
                     ContractViolation, ExtractionError, ExtrapolationError,
                     GeometryError, IntegrationError, OutOfDomainError,
                     SolverError, SynthesisError, TrappedRayError)
from .fields import Medium, MetricSpec, ScalarField
from .fields import eval_field as eval_scalar_field
from .geometry import DomainSpec, SourceDirection, sample_inward_sphere
from .invert import (ExtractionResult, Reconstruction, extract_ray_integrals,
                     l2_error, solve_linear)
from .measure import (Dataset, PhaselessRecord, add_noise, boundary_trace,
                      read_dataset, sup_difference, synthesize, write_dataset)
from .rays import (RayPath, TraceOptions, exit_time_table, hamiltonian,
                   hamiltonian_rhs, trace, trace_fan)
from .transform import (EnergyConvention, PixelGrid, ReparamCurve, Sinogram,
                        backproject, build_system, flow_transform,
                        maupertuis_reparametrize, quadrature_weights,
                        unit_speed_error, weighted_equivalence_check)

__version__ = "0.1.0"

__all__ = [
    "BeamBreakdownError", "BeamConfig", "BeamField", "BeamState",
    "BeamtomoError", "ConfigError", "ContractViolation", "Dataset",
    "DomainSpec", "EnergyConvention", "ExtractionError", "ExtractionResult",
    "ExtrapolationError", "GeometryError", "IntegrationError", "Medium",
    "MetricSpec", "OutOfDomainError", "PhaselessRecord", "PixelGrid",
    "RayPath", "Reconstruction", "ReparamCurve", "ScalarField", "Sinogram",
    "SolverError", "SourceDirection", "SynthesisError", "TraceOptions",
    "TrappedRayError", "add_noise", "backproject", "boundary_trace",
    "build_system", "default_M0", "eval_field", "eval_scalar_field",
    "exit_time_table", "extract_ray_integrals", "flow_transform",
    "hamiltonian", "hamiltonian_rhs", "l2_error",
    "maupertuis_reparametrize", "propagate_beam", "propagate_fan",
    "quadrature_weights", "read_dataset", "riccati_rhs",
    "sample_inward_sphere", "solve_linear", "sup_difference", "synthesize",
    "trace", "trace_fan", "unit_speed_error", "weighted_equivalence_check",
    "write_dataset",
]
