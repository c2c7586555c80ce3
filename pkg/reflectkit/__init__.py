"""
reflectkit - Reflected diffusions in domains cut out by smooth constraints

Simulates reflected SDEs with oblique reflection, checks that constraint sets
are compatible, samples their Gibbs measures and runs the planet clustering
model of soft particles.
"""

__version__ = "0.1.0"

from .errors import (ConfigError, ConstraintValidityError, DimensionError, HullInputError,
                     IntegrabilityError, InvarianceError, ModelError, ReflectKitError,
                     SamplingError, SimulationError, SingularObliquityError, StepFailure)
from .geometry import Constraint, ConstraintSet, active_set, min_norm_in_hull
from .compat import check_compatibility, transform_set, project_set
from .gibbs import GibbsSpec, Potential, sample_mcmc, sample_rejection
from .reflect import (DynamicsSpec, PathRecord, reversibility_test, simulate,
                      simulate_ensemble, step)
from .planet import PlanetModel, build_constraints, clustering_curve, in_A_eps

__all__ = [
    "ConfigError", "Constraint", "ConstraintSet", "ConstraintValidityError", "DimensionError",
    "DynamicsSpec", "GibbsSpec", "HullInputError", "IntegrabilityError", "InvarianceError",
    "ModelError", "PathRecord", "PlanetModel", "Potential", "ReflectKitError", "SamplingError",
    "SimulationError", "SingularObliquityError", "StepFailure", "active_set",
    "build_constraints", "check_compatibility", "clustering_curve", "in_A_eps",
    "min_norm_in_hull", "project_set", "reversibility_test", "sample_mcmc",
    "sample_rejection", "simulate", "simulate_ensemble", "step", "transform_set",
]
