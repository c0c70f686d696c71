from dataclasses import dataclass, replace
from typing import Any, Dict, List, Optional
import os

from omegaconf import OmegaConf, DictConfig, MISSING
from omegaconf.errors import OmegaConfBaseException, ConfigKeyError

from ..model.params import LaserParams, derive_coeffs, validate_params, with_pump_ratio
from ..model.fock import FockGrid, suggest_grid
from ..utils.common import instantiate_from_config, get_logger
from ..utils.errors import ConfigError
from ..utils.helpers import LaserPipeline

logger = get_logger(__name__)

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
STEADY_CONFIG_DIR = os.path.join(REPO_ROOT, "configs", "steady")

# scenario controls forwarded to the steady solver when its constructor takes them
SOLVER_OVERRIDES = {
    "tol_steady": "tol",
    "max_iter": "max_iter",
    "relaxation": "relaxation",
    "rtol_integrate": "rtol",
    "atol_integrate": "atol",
}


@dataclass
class ScenarioConfig:
    g1: float = MISSING
    g2: float = MISSING
    delta: float = 0.0
    gamma11: float = MISSING
    gamma22: float = MISSING
    gamma12: float = 0.0
    pump_rate: Optional[float] = None
    pump_ratio: Optional[float] = None
    n_max_alpha: Optional[int] = None
    n_max_beta: Optional[int] = None
    tol_steady: float = 1e-8
    max_iter: int = 200
    relaxation: float = 0.5
    rtol_integrate: float = 1e-8
    atol_integrate: float = 1e-12
    saturation: bool = True
    use_analytic_nbar: bool = False
    steady_solver: str = "recurrence"
    out: str = "results"


def find_file(file_name: str, root_dir: str = REPO_ROOT) -> Optional[str]:
    for root, _, files in os.walk(root_dir):
        if file_name in files:
            return os.path.join(root, file_name)
    return None


def _describe(e: OmegaConfBaseException) -> str:
    key = getattr(e, "full_key", None) or getattr(e, "key", None)
    msg = getattr(e, "msg", None) or str(e).splitlines()[0]
    if isinstance(e, ConfigKeyError):
        return f"unknown key '{key}'"
    return f"invalid value for '{key}': {msg}" if key else msg


def load_scenario(path: Optional[str], overrides: Optional[List[str]] = None) -> DictConfig:
    """Scenario file merged into the schema; `overrides` are dotlist entries such as `gamma12=4`."""
    schema = OmegaConf.structured(ScenarioConfig)
    OmegaConf.set_struct(schema, True)
    layers = []
    if path is not None:
        if not os.path.isfile(path):
            raise ConfigError(f"config file not found: {path}")
        try:
            layers.append(OmegaConf.load(path))
        except Exception as e:
            raise ConfigError(f"cannot parse {path}: {e}") from e
    if overrides:
        layers.append(OmegaConf.from_dotlist(list(overrides)))
    try:
        cfg = OmegaConf.merge(schema, *layers)
        missing = sorted(OmegaConf.missing_keys(cfg))
    except OmegaConfBaseException as e:
        raise ConfigError(_describe(e)) from e
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(missing)}")
    check_scenario(cfg)
    return cfg


def check_scenario(cfg: DictConfig) -> None:
    if (cfg.pump_rate is None) == (cfg.pump_ratio is None):
        raise ConfigError("exactly one of pump_rate and pump_ratio must be given")
    for name in ("tol_steady", "rtol_integrate", "atol_integrate", "relaxation"):
        if not cfg[name] > 0:
            raise ConfigError(f"{name} must be positive, got {cfg[name]}")
    if cfg.relaxation > 1:
        raise ConfigError(f"relaxation must lie in (0, 1], got {cfg.relaxation}")
    if cfg.max_iter < 1:
        raise ConfigError(f"max_iter must be >= 1, got {cfg.max_iter}")


def build_params(cfg: DictConfig) -> LaserParams:
    """LaserParams with the absolute pump resolved from pump_ratio when that is what was given."""
    base = LaserParams(
        g1=cfg.g1, g2=cfg.g2, delta=cfg.delta,
        gamma11=cfg.gamma11, gamma22=cfg.gamma22, gamma12=cfg.gamma12
    )
    if cfg.pump_ratio is not None:
        params = with_pump_ratio(base, cfg.pump_ratio)
    else:
        params = replace(base, pump_rate=cfg.pump_rate)
    return validate_params(params)


def steady_solver_config(name: str) -> DictConfig:
    path = name if name.endswith(".yaml") else os.path.join(STEADY_CONFIG_DIR, f"{name}.yaml")
    if not os.path.isfile(path):
        found = find_file(os.path.basename(path), STEADY_CONFIG_DIR)
        if found is None:
            raise ConfigError(f"unknown steady solver '{name}' (no {path})")
        path = found
    return OmegaConf.load(path)


def build_solver(cfg: DictConfig) -> Any:
    solver_cfg = OmegaConf.to_container(steady_solver_config(cfg.steady_solver), resolve=True)
    params: Dict[str, Any] = dict(solver_cfg.get("params") or {})
    for key, name in SOLVER_OVERRIDES.items():
        if name in params:
            params[name] = cfg[key]
    solver_cfg["params"] = params
    logger.debug(f"steady solver {solver_cfg['target']} with {params}")
    return instantiate_from_config(solver_cfg)


def build_grid(cfg: DictConfig, params: LaserParams) -> FockGrid:
    coeffs = derive_coeffs(params)
    if not cfg.saturation:
        coeffs = coeffs.without_saturation()
    grid = suggest_grid(coeffs)
    return FockGrid(
        cfg.n_max_alpha if cfg.n_max_alpha is not None else grid.n_max_alpha,
        cfg.n_max_beta if cfg.n_max_beta is not None else grid.n_max_beta,
    )


def build_pipeline(cfg: DictConfig, params: Optional[LaserParams] = None, with_petermann: bool = True) -> LaserPipeline:
    params = params or build_params(cfg)
    return LaserPipeline(
        params, solver=build_solver(cfg), grid=build_grid(cfg, params),
        saturation=cfg.saturation, use_analytic_nbar=cfg.use_analytic_nbar, with_petermann=with_petermann
    )
