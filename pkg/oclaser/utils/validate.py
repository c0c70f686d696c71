"""
Acceptance suite run by `oclaser validate`. Every check reports the quantity
it measured, the tolerance it was held to and a verdict.
"""
from dataclasses import dataclass, asdict, replace
from typing import Callable, List, Optional
import math
import time

import numpy as np
import pandas as pd
from tqdm import tqdm

from ..model.params import LaserParams, derive_coeffs, threshold_pump_rate, with_pump_ratio, scale_coupling
from ..model.fock import FockGrid, new_vacuum, marginal
from ..model.superop import gain_kernel_closed_form, gain_kernel_quadrature
from ..model.steady import (
    SteadyControls, solve_steady, liouvillian_null_vector, liouvillian_steady_oracle, RecurrenceSteadySolver
)
from ..model.dynamics import (
    IntegrationControls, build_diag_generator, steady_by_integration, integrate
)
from ..model.observables import (
    mandel_q, g2_zero, analytic_weak_pump, analytic_mandel_q, linewidth, linewidth_reduced,
    petermann, threshold_curve
)
from .helpers import LaserPipeline
from .io import distribution_frame, FLOAT_FORMAT
from .common import get_logger, progress_enabled
from .errors import OclaserError

logger = get_logger(__name__)

REFERENCE_PARAMS = LaserParams(g1=0.05, g2=0.07, delta=3.0, gamma11=6.0, gamma22=5.0, gamma12=5.5)
# equal diagonal damping and no cross damping decouple beta from alpha (C3 = 0)
SYMMETRIC_DAMPING = replace(REFERENCE_PARAMS, gamma11=6.0, gamma22=6.0, gamma12=0.0)
LINEWIDTH_PARAMS = LaserParams(
    g1=math.sqrt(1.25e-5), g2=math.sqrt(1.25e-5), delta=0.0, gamma11=6.0, gamma22=6.0, gamma12=0.0
)
FREQUENCY_PARAMS = LaserParams(
    g1=math.sqrt(0.05), g2=math.sqrt(0.05), delta=3.0, gamma11=6.0, gamma22=6.0, gamma12=0.0
)
PETERMANN_PARAMS = LaserParams(
    g1=math.sqrt(1.25e-4), g2=math.sqrt(1.25e-4), delta=0.0, gamma11=6.0, gamma22=6.0, gamma12=16.0
)
REFERENCE_NBAR = 337.84
REFERENCE_THRESHOLD = 14243.96
GAMMA12_GRID = (0.0, 2.0, 4.0, 8.0, 16.0)


@dataclass
class CheckResult:
    check: str
    measured: float
    tolerance: float
    passed: bool
    detail: str = ""
    runtime_s: float = 0.0


def _rel(a: float, b: float) -> float:
    return abs(a - b) / abs(b)


def _within(name: str, measured: float, tolerance: float, detail: str = "") -> CheckResult:
    return CheckResult(name, float(measured), float(tolerance), bool(measured <= tolerance), detail)


def _steady(params: LaserParams, ratio: float, saturation: bool = True, beta_mode: str = "auto"):
    pipeline = LaserPipeline(
        with_pump_ratio(params, ratio), solver=RecurrenceSteadySolver(beta_mode=beta_mode),
        saturation=saturation, with_petermann=False
    )
    return pipeline.coeffs, pipeline.run_steady()


def check_thermal_limit() -> List[CheckResult]:
    out = []
    coeffs, res = _steady(SYMMETRIC_DAMPING, 0.5, saturation=False)
    ref = analytic_weak_pump(coeffs, res.p_alpha.n_max)
    out.append(_within("thermal_limit_unsaturated_tv", res.p_alpha.total_variation(ref), 1e-3))
    coeffs, res = _steady(SYMMETRIC_DAMPING, 0.5)
    ref = analytic_weak_pump(coeffs, res.p_alpha.n_max)
    out.append(_within("thermal_limit_saturated_tv", res.p_alpha.total_variation(ref), 0.05))
    coeffs, res = _steady(REFERENCE_PARAMS, 0.5, saturation=False, beta_mode="recurrence")
    ref = analytic_weak_pump(coeffs, res.p_alpha.n_max)
    out.append(_within("thermal_limit_cross_damping_tv", res.p_alpha.total_variation(ref), 0.05))
    out.append(_within(
        "thermal_limit_cross_damping_mean", _rel(res.nbar_alpha, 1.0), 0.15,
        f"nbar_alpha = {res.nbar_alpha:.6g}"
    ))
    return out


def check_above_threshold_mean() -> List[CheckResult]:
    _, res = _steady(REFERENCE_PARAMS, 2.0, beta_mode="recurrence")
    return [_within(
        "above_threshold_mean", _rel(res.nbar_alpha, REFERENCE_NBAR), 0.02, f"nbar_alpha = {res.nbar_alpha:.8g}"
    )]


def check_fluctuations() -> List[CheckResult]:
    out = []
    coeffs, res = _steady(SYMMETRIC_DAMPING, 0.5)
    q = mandel_q(res.p_alpha)
    out.append(_within("mandel_q_below_threshold", _rel(q, analytic_mandel_q(coeffs)), 0.05, f"Q = {q:.6g}"))

    _, res = _steady(SYMMETRIC_DAMPING, 0.1)
    g2 = g2_zero(res.p_alpha)
    out.append(CheckResult("g2_well_below", g2, 0.0, bool(1.9 <= g2 <= 2.0), "expected in [1.9, 2.0]"))
    _, res = _steady(REFERENCE_PARAMS, 2.0)
    g2 = g2_zero(res.p_alpha)
    out.append(CheckResult("g2_well_above", g2, 0.0, bool(1.0 <= g2 <= 1.1), "expected in [1.0, 1.1]"))

    values = np.array([g2_zero(_steady(REFERENCE_PARAMS, r)[1].p_alpha) for r in np.linspace(0.1, 3.0, 20)])
    rise = float(np.diff(values).max())
    out.append(_within("g2_monotone_in_pump", rise, 0.0, "largest increase between consecutive pumps"))
    return out


def check_beta_suppression() -> List[CheckResult]:
    _, res = _steady(REFERENCE_PARAMS, 2.0, beta_mode="recurrence")
    ratio = res.nbar_beta / res.nbar_alpha
    _, sym = _steady(SYMMETRIC_DAMPING, 2.0, beta_mode="recurrence")
    p0 = float(sym.p_beta.probabilities[0])
    return [
        _within("beta_suppression_ratio", ratio, 1e-2),
        CheckResult("beta_vacuum_without_cross_damping", p0, 0.0, p0 == 1.0, "p(n_beta = 0) must be exactly 1"),
    ]


def check_oracle() -> List[CheckResult]:
    params = with_pump_ratio(scale_coupling(REFERENCE_PARAMS, 0.1), 1.2)
    coeffs = derive_coeffs(params)
    grid = FockGrid(60, 15)
    exact = liouvillian_steady_oracle(coeffs, grid)
    rec = solve_steady(coeffs, grid, SteadyControls(beta_mode="auto"))
    tv = marginal(exact, "alpha").total_variation(rec.p_alpha)
    integrated = steady_by_integration(build_diag_generator(grid, coeffs), grid)
    l1 = float(np.abs(integrated.values - exact.values).sum())
    return [
        _within("oracle_recurrence_tv", tv, 0.05, f"nbar_alpha = {rec.nbar_alpha:.6g}"),
        _within("oracle_integration_l1", l1, 1e-6),
    ]


def check_derivation_chain() -> List[CheckResult]:
    out = []
    for delta in (0.0, 3.0):
        params = with_pump_ratio(replace(REFERENCE_PARAMS, delta=delta), 1.0)
        coeffs = derive_coeffs(params)
        worst = 0.0
        for k1 in range(4):
            closed = gain_kernel_closed_form(coeffs, k1, 10 - k1)
            quad = gain_kernel_quadrature(coeffs, k1, 10 - k1)
            worst = max(
                worst,
                float((np.abs(quad.feed - closed.feed)[1:] / np.abs(closed.feed[1:])).max()),
                float((np.abs(quad.self_term - closed.self_term) / np.abs(closed.self_term)).max()),
            )
        out.append(_within(f"gain_quadrature_vs_closed_form_delta_{delta:g}", worst, 1e-6))

    params = with_pump_ratio(replace(REFERENCE_PARAMS, delta=0.0), 1.0)
    coeffs = derive_coeffs(params)
    vacuum = gain_kernel_quadrature(coeffs, 0, 2).feed[1]
    g2 = params.g_squared
    expected = params.pump_rate * 2.0 * g2 / (1.0 + 4.0 * g2)
    out.append(_within("vacuum_gain_rate", _rel(vacuum, expected), 1e-8))
    return out


def check_linewidth() -> List[CheckResult]:
    out = []
    pipeline = LaserPipeline(with_pump_ratio(LINEWIDTH_PARAMS, 1.1), with_petermann=False)
    fit = pipeline.run_linewidth()
    out.append(_within(
        "linewidth_fit", _rel(fit.fitted_linewidth, fit.linewidth_2D), 0.10,
        f"fitted {fit.fitted_linewidth:.6g}, closed form {fit.linewidth_2D:.6g}"
    ))

    pipeline = LaserPipeline(with_pump_ratio(FREQUENCY_PARAMS, 2.0), with_petermann=False)
    fit = pipeline.run_linewidth(n_samples=2000)
    out.append(_within(
        "frequency_fit", _rel(fit.fitted_frequency, fit.freq_shift), 0.10,
        f"fitted {fit.fitted_frequency:.6g}, closed form {fit.freq_shift:.6g}"
    ))

    coeffs = derive_coeffs(with_pump_ratio(LINEWIDTH_PARAMS, 2.0)).without_saturation()
    nbar = 1000.0
    out.append(_within(
        "linewidth_reduced_form", _rel(linewidth(coeffs, nbar), linewidth_reduced(coeffs, nbar)), 1.0 / nbar,
        "reduced form drops terms of order 1/nbar"
    ))
    return out


def check_petermann() -> List[CheckResult]:
    out = []
    pump = 4.0 * threshold_pump_rate(replace(REFERENCE_PARAMS, gamma12=max(GAMMA12_GRID)))
    controls = SteadyControls(beta_mode="auto")
    k = [petermann(replace(REFERENCE_PARAMS, gamma12=g12), pump, controls=controls) for g12 in GAMMA12_GRID]
    out.append(CheckResult("petermann_unity_without_cross_damping", k[0], 0.0, k[0] == 1.0))
    step = float(np.diff(k).min())
    out.append(CheckResult("petermann_increasing", step, 0.0, step > 0, f"K = {np.round(k, 6).tolist()}"))

    params = PETERMANN_PARAMS
    pump = 1056.0 / (2.0 * params.g_squared)
    numeric = petermann(params, pump, "numeric", controls=controls)
    asymptotic = petermann(params, pump, "asymptotic")
    out.append(_within(
        "petermann_vs_asymptotic", _rel(numeric, asymptotic), 0.05,
        f"numeric {numeric:.6g}, asymptotic {asymptotic:.6g}"
    ))
    return out


def check_threshold_curve() -> List[CheckResult]:
    curve = threshold_curve(REFERENCE_PARAMS, GAMMA12_GRID)
    slopes = np.diff(curve["threshold_rate"]) / np.diff(curve["gamma12"])
    spread = float((slopes.max() - slopes.min()) / abs(slopes.mean()))
    r_th = threshold_pump_rate(REFERENCE_PARAMS)
    return [
        _within("threshold_affine", spread, 1e-9),
        CheckResult("threshold_increasing", float(slopes.min()), 0.0, bool(slopes.min() > 0)),
        _within("threshold_reference_value", _rel(r_th, REFERENCE_THRESHOLD), 5e-5, f"r_th = {r_th:.8g}"),
    ]


def check_structural() -> List[CheckResult]:
    params = with_pump_ratio(scale_coupling(REFERENCE_PARAMS, 0.1), 1.2)
    coeffs = derive_coeffs(params)
    grid = FockGrid(60, 15)
    generator = build_diag_generator(grid, coeffs)
    column_sums = float(np.abs(np.asarray(generator.matrix.sum(axis=0))).max())

    _, final = integrate(generator, new_vacuum(grid), 5.0, IntegrationControls(n_samples=11))
    drift = abs(final.trace - 1.0)
    lowest = float(liouvillian_null_vector(coeffs, grid).min())

    _, res = _steady(REFERENCE_PARAMS, 2.0)
    first = distribution_frame(res.p_alpha).to_csv(index=False, float_format=FLOAT_FORMAT)
    _, res = _steady(REFERENCE_PARAMS, 2.0)
    second = distribution_frame(res.p_alpha).to_csv(index=False, float_format=FLOAT_FORMAT)
    return [
        _within("generator_column_sums", column_sums, 1e-10),
        _within("trace_conservation", drift, 1e-9),
        CheckResult("positivity", lowest, -1e-10, lowest >= -1e-10),
        CheckResult("csv_determinism", float(first != second), 0.0, first == second),
    ]


CHECKS: List[Callable[[], List[CheckResult]]] = [
    check_thermal_limit,
    check_above_threshold_mean,
    check_fluctuations,
    check_beta_suppression,
    check_oracle,
    check_derivation_chain,
    check_linewidth,
    check_petermann,
    check_threshold_curve,
    check_structural,
]


def run_validation(checks: Optional[List[Callable]] = None, progress: bool = True) -> pd.DataFrame:
    rows = []
    iterator = tqdm(checks or CHECKS, unit="check", leave=False, disable=not progress_enabled(progress))
    for check in iterator:
        name = check.__name__[len("check_"):]
        iterator.set_description(name)
        start = time.perf_counter()
        try:
            results = check()
        except OclaserError as e:
            results = [CheckResult(name, math.nan, math.nan, False, f"{type(e).__name__}: {e}")]
        elapsed = time.perf_counter() - start
        for r in results:
            r.runtime_s = elapsed
            level = "passed" if r.passed else "FAILED"
            logger.info(f"{r.check}: measured {r.measured:.6g}, tolerance {r.tolerance:g}, {level}")
        rows.extend(asdict(r) for r in results)
    return pd.DataFrame(rows, columns=[f for f in CheckResult.__dataclass_fields__])
