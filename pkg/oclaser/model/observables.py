from dataclasses import dataclass, asdict, replace
from typing import Dict, Iterable, Literal, Optional, Tuple
import math

import numpy as np
import pandas as pd
from scipy.special import gammaln
from scipy.stats import poisson

from .params import LaserParams, DerivedCoeffs, derive_coeffs, threshold_pump_rate, validate_params
from .fock import PhotonDistribution, moments, distribution_from_log_weights
from .steady import SteadyControls, SteadyResult, solve_steady
from ..utils.common import get_logger
from ..utils.errors import NotApplicableError

logger = get_logger(__name__)

NAN = float("nan")


def mandel_q(dist: PhotonDistribution) -> float:
    mean, second = moments(dist)
    if not mean > 0:
        raise NotApplicableError(f"Mandel Q undefined for mean photon number {mean}")
    return (second - mean * mean) / mean - 1.0


def g2_zero(dist: PhotonDistribution) -> float:
    mean = moments(dist)[0]
    return mandel_q(dist) / mean + 1.0


def _geometric(x: float, n_max: int) -> PhotonDistribution:
    n = np.arange(n_max + 1, dtype=np.float64)
    if x == 0:
        return PhotonDistribution(np.where(n == 0, 1.0, 0.0))
    p = (1.0 - x) * np.exp(n * math.log(x))
    return PhotonDistribution(p / p.sum())


def thermal_distribution(nbar: float, n_max: int) -> PhotonDistribution:
    return _geometric(nbar / (1.0 + nbar), n_max)


def poisson_distribution(nbar: float, n_max: int) -> PhotonDistribution:
    p = poisson.pmf(np.arange(n_max + 1), nbar)
    return PhotonDistribution(p / p.sum())


def analytic_weak_pump(coeffs: DerivedCoeffs, n_max: int) -> PhotonDistribution:
    x = coeffs.A / coeffs.C1_tilde
    if x >= 1.0:
        raise NotApplicableError(f"weak-pump law needs A < C1_tilde, got A/C1_tilde = {x:.6g}")
    return _geometric(x, n_max)


def effective_temperature(coeffs: DerivedCoeffs) -> Tuple[float, float]:
    """(exp(-hbar omega / kT), hbar omega / kT) of the thermal-like alpha mode below threshold."""
    x = coeffs.A / coeffs.C1_tilde
    if x >= 1.0:
        raise NotApplicableError(f"no effective temperature above threshold (A/C1_tilde = {x:.6g})")
    return x, (math.inf if x == 0 else -math.log(x))


def analytic_strong_pump(coeffs: DerivedCoeffs, n_max: int) -> PhotonDistribution:
    c = coeffs
    if not (c.A > c.C1_tilde and c.B > 0):
        raise NotApplicableError(
            f"strong-pump law needs A > C1_tilde and B > 0, got A = {c.A:.6g}, C1_tilde = {c.C1_tilde:.6g}, B = {c.B:.6g}"
        )
    n = np.arange(n_max + 1, dtype=np.float64)
    log_w = n * math.log(c.A ** 2 / (c.B * c.C1)) - gammaln(n + c.A_tilde / c.B + 1.0)
    return distribution_from_log_weights(log_w)


def analytic_nbar(coeffs: DerivedCoeffs) -> float:
    c = coeffs
    if c.A < c.C1_tilde:
        raise NotApplicableError(f"below threshold: A/C1_tilde = {c.pump_ratio:.6g}")
    if c.B == 0:
        raise NotApplicableError("mean photon number diverges without saturation")
    return c.A_tilde / c.B * (c.A / c.C1_tilde - 1.0)


def analytic_mandel_q(coeffs: DerivedCoeffs) -> float:
    c = coeffs
    if c.A < c.C1_tilde:
        return c.A / (c.C1_tilde - c.A)
    if c.A > c.C1_tilde:
        return c.C1_tilde / (c.A - c.C1_tilde)
    raise NotApplicableError("Mandel Q limits do not apply at threshold")


def decay_constant(coeffs: DerivedCoeffs, nbar_alpha: float, nbar_beta: float, k1: int, k2: int) -> complex:
    """Decay constant mu of the (k1, k2) coherence block, lowest order in the offsets."""
    c = coeffs
    if k1 != 0 and not nbar_alpha > 0:
        raise NotApplicableError(f"decay constant needs nbar_alpha > 0, got {nbar_alpha}")
    ratio = c.b_over_a
    den = 1.0 + c.delta_bar ** 2 + ratio * (nbar_alpha + 1.0 + 0.5 * k1) + (0.25 * ratio) ** 2 * k1 * k1
    real = 0.0
    if k1 != 0:
        real = k1 * k1 / 8.0 * ((c.A / (nbar_alpha + 1.0) + 2.0 * c.B) / den + c.C1 / nbar_alpha)
    if k2 != 0 and nbar_beta > 0:
        real += k2 * k2 * c.C2 / (8.0 * nbar_beta)
    imag = -0.5 * c.A * c.delta_bar * k1 / den
    return complex(real, imag)


def linewidth(coeffs: DerivedCoeffs, nbar_alpha: float) -> float:
    """Emission linewidth 2 D_alpha."""
    return 2.0 * decay_constant(coeffs, nbar_alpha, 0.0, 1, 0).real


def linewidth_reduced(coeffs: DerivedCoeffs, nbar_alpha: float) -> float:
    """Limit of the linewidth for B/A << 1 and zero detuning."""
    if not nbar_alpha > 0:
        raise NotApplicableError(f"linewidth needs nbar_alpha > 0, got {nbar_alpha}")
    return (coeffs.A + coeffs.C1) / (4.0 * nbar_alpha)


def freq_shift(coeffs: DerivedCoeffs, nbar_alpha: float) -> float:
    c = coeffs
    ratio = c.b_over_a
    den = 1.0 + c.delta_bar ** 2 + ratio * (nbar_alpha + 1.5) + (0.25 * ratio) ** 2
    return -0.5 * c.A * c.delta_bar / den


def _lasing_mean(coeffs: DerivedCoeffs, controls: Optional[SteadyControls], use_analytic_nbar: bool) -> float:
    if not coeffs.A > coeffs.C1_tilde:
        raise NotApplicableError(f"configuration below threshold (A/C1_tilde = {coeffs.pump_ratio:.6g})")
    if use_analytic_nbar:
        return analytic_nbar(coeffs)
    return solve_steady(coeffs, controls=controls).nbar_alpha


def petermann(
    params: LaserParams, pump_rate: float, mode: Literal["numeric", "asymptotic"] = "numeric",
    controls: Optional[SteadyControls] = None, use_analytic_nbar: bool = False
) -> float:
    """Linewidth enhancement of the open cavity relative to gamma12 = 0 at the same pump."""
    open_coeffs = derive_coeffs(replace(params, pump_rate=pump_rate))
    closed_coeffs = derive_coeffs(replace(params, pump_rate=pump_rate, gamma12=0.0))
    for name, c in (("open", open_coeffs), ("closed", closed_coeffs)):
        if not c.A > c.C1_tilde:
            raise NotApplicableError(
                f"{name} configuration below threshold at pump {pump_rate:.6g} (A/C1_tilde = {c.pump_ratio:.6g})"
            )
    if mode == "asymptotic":
        A, c1g, c10 = open_coeffs.A, open_coeffs.C1, closed_coeffs.C1
        return c1g * (A + c1g) * (A - c10) / (c10 * (A - c1g) * (A + c10))
    if mode != "numeric":
        raise ValueError(f"petermann mode '{mode}' unknown.")
    if params.gamma12 == 0:
        return 1.0
    controls = controls or SteadyControls(beta_mode="auto")
    width_open = linewidth(open_coeffs, _lasing_mean(open_coeffs, controls, use_analytic_nbar))
    width_closed = linewidth(closed_coeffs, _lasing_mean(closed_coeffs, controls, use_analytic_nbar))
    return width_open / width_closed


def threshold_curve(params: LaserParams, gamma12_grid: Iterable[float]) -> pd.DataFrame:
    rows = [
        {"gamma12": float(gamma12), "threshold_rate": threshold_pump_rate(replace(params, gamma12=float(gamma12)))}
        for gamma12 in gamma12_grid
    ]
    return pd.DataFrame(rows, columns=["gamma12", "threshold_rate"])


@dataclass
class ObservableReport:
    pump_rate: float
    pump_ratio: float
    threshold_rate: float
    nbar_alpha: float
    nbar_beta: float
    mandel_q_alpha: float
    g2_alpha: float
    analytic_nbar: float
    analytic_mandel_q: float
    linewidth_2D: float
    freq_shift: float
    petermann_K: float
    A: float
    B: float
    C1: float
    C2: float
    C3: float
    delta_bar: float
    g: float
    solver: str = "recurrence"
    iterations: int = 0
    converged: bool = True

    def to_row(self) -> Dict[str, object]:
        return asdict(self)


def _or_nan(fn, *args) -> float:
    try:
        return fn(*args)
    except NotApplicableError:
        return NAN


def make_report(
    coeffs: DerivedCoeffs, result: SteadyResult, petermann_K: float = NAN,
    use_analytic_nbar: bool = False
) -> ObservableReport:
    nbar = result.nbar_alpha
    q = _or_nan(mandel_q, result.p_alpha)
    g2 = q / nbar + 1.0 if nbar > 0 else NAN
    lasing = coeffs.A > coeffs.C1_tilde
    nbar_for_width = _or_nan(analytic_nbar, coeffs) if use_analytic_nbar else nbar
    width = _or_nan(linewidth, coeffs, nbar_for_width) if lasing else NAN
    shift = freq_shift(coeffs, nbar_for_width) if lasing else NAN
    return ObservableReport(
        pump_rate=coeffs.pump_rate,
        pump_ratio=coeffs.pump_ratio,
        threshold_rate=coeffs.C1_tilde / (2.0 * coeffs.g ** 2),
        nbar_alpha=nbar,
        nbar_beta=result.nbar_beta,
        mandel_q_alpha=q,
        g2_alpha=g2,
        analytic_nbar=_or_nan(analytic_nbar, coeffs),
        analytic_mandel_q=_or_nan(analytic_mandel_q, coeffs),
        linewidth_2D=width,
        freq_shift=shift,
        petermann_K=petermann_K,
        solver=result.solver,
        iterations=result.iterations,
        converged=result.converged,
        **coeffs.to_dict()
    )
