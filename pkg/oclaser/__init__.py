from .model import (
    LaserParams, DerivedCoeffs, FockGrid, PhotonDistribution, ObservableReport,
    derive_coeffs, validate_params, solve_steady,
    RecurrenceSteadySolver, LiouvillianSteadySolver, IntegrationSteadySolver
)
from .utils.helpers import LaserPipeline
from .utils.errors import OclaserError, ConfigError, ParameterError, SolverError, PhysicsWarning

__all__ = [
    "LaserParams", "DerivedCoeffs", "FockGrid", "PhotonDistribution", "ObservableReport",
    "derive_coeffs", "validate_params", "solve_steady",
    "RecurrenceSteadySolver", "LiouvillianSteadySolver", "IntegrationSteadySolver",
    "LaserPipeline", "OclaserError", "ConfigError", "ParameterError", "SolverError", "PhysicsWarning",
]
