from . import config

from .params import LaserParams, DerivedCoeffs, ModeTransform, derive_coeffs, validate_params
from .fock import FockGrid, DiagonalState, CoherenceBlock, PhotonDistribution

from .steady import RecurrenceSteadySolver, LiouvillianSteadySolver, SteadyResult, solve_steady
from .dynamics import IntegrationSteadySolver, build_diag_generator, build_coherence_generator, integrate

from .observables import ObservableReport, make_report
