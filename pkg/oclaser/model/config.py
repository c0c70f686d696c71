import os
import enum
import logging


class BoundaryMode(enum.Enum):
    REFLECTING = "reflecting"
    ABSORBING = "absorbing"


class Config:
    # largest generator handled with a dense SVD in the degeneracy check
    dense_limit: int = 2000
    quad_min_order: int = 64
    quad_max_order: int = 4096
    quad_rtol: float = 1e-8
    boundary: BoundaryMode = BoundaryMode.REFLECTING
    log_level: int = logging.WARNING


DENSE_LIMIT = os.environ.get("OCLASER_DENSE_LIMIT", None)
if DENSE_LIMIT is not None:
    Config.dense_limit = int(DENSE_LIMIT)

QUAD_MAX_ORDER = os.environ.get("OCLASER_QUAD_MAX_ORDER", None)
if QUAD_MAX_ORDER is not None:
    Config.quad_max_order = int(QUAD_MAX_ORDER)

BOUNDARY = os.environ.get("OCLASER_BOUNDARY", None)
if BOUNDARY is not None:
    assert BOUNDARY in ["reflecting", "absorbing"], f"unknown boundary mode {BOUNDARY}"
    Config.boundary = BoundaryMode(BOUNDARY)

LOG_LEVEL = os.environ.get("OCLASER_LOG_LEVEL", None)
if LOG_LEVEL is not None:
    Config.log_level = getattr(logging, LOG_LEVEL.upper(), logging.WARNING)
