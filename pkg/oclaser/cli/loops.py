from argparse import Namespace
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import replace, fields
from typing import Dict, List, Optional, Tuple
import math
import os

import numpy as np
import pandas as pd
from tqdm import tqdm

from ..model.params import LaserParams, threshold_pump_rate, with_pump_ratio
from ..model.dynamics import IntegrationControls
from ..model.observables import ObservableReport, petermann, threshold_curve
from ..model.steady import SteadyControls
from ..utils.common import get_logger, progress_enabled
from ..utils.errors import OclaserError, ConfigError
from ..utils.helpers import LaserPipeline
from ..utils.io import write_table, write_distribution, write_line_plot
from ..utils.schedule import SweepSpec
from ..utils.validate import run_validation
from .load import load_scenario, build_params, build_pipeline

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_SOLVER = 2
EXIT_PARTIAL = 3
EXIT_VALIDATION = 4

REPORT_COLUMNS = [f.name for f in fields(ObservableReport)]


class ScenarioLoop:

    def __init__(self, args: Namespace) -> "ScenarioLoop":
        self.args = args
        self.cfg = load_scenario(args.config, getattr(args, "set", None))
        self.output_dir = args.out or self.cfg.out
        self.pipeline: LaserPipeline = None
        self.init_pipeline()

    def init_pipeline(self) -> None:
        self.params = build_params(self.cfg)
        self.pipeline = build_pipeline(self.cfg, self.params)

    def setup(self) -> None:
        os.makedirs(self.output_dir, exist_ok=True)

    def path(self, file_name: str) -> str:
        return os.path.join(self.output_dir, file_name)

    def run(self) -> int:
        raise NotImplementedError


class SteadyLoop(ScenarioLoop):

    def run(self) -> int:
        self.setup()
        report, result = self.pipeline.run()
        self.save(report, result)
        return EXIT_OK

    def save(self, report, result) -> None:
        write_table(pd.DataFrame([report.to_row()], columns=REPORT_COLUMNS), self.path("report.csv"))
        write_distribution(result.p_alpha, self.path("dist_alpha.csv"), self.pipeline.references(result.p_alpha))
        write_distribution(result.p_beta, self.path("dist_beta.csv"))
        print(
            f"nbar_alpha={report.nbar_alpha:.10g} nbar_beta={report.nbar_beta:.6g} "
            f"pump_ratio={report.pump_ratio:.6g} -> {self.output_dir}"
        )


class EvolveLoop(ScenarioLoop):

    def run(self) -> int:
        self.setup()
        controls = IntegrationControls(
            rtol=self.cfg.rtol_integrate, atol=self.cfg.atol_integrate,
            method=self.args.method, n_samples=self.args.samples
        )
        trajectory, _ = self.pipeline.run_evolve(self.args.t_end, self.args.initial_n, controls)
        df = pd.DataFrame({"time": trajectory.times, **trajectory.columns})
        write_table(df, self.path("trajectory.csv"))
        print(f"nbar_alpha(t_end)={df['nbar_alpha'].iloc[-1]:.10g} -> {self.output_dir}")
        return EXIT_OK


class LinewidthLoop(ScenarioLoop):

    def init_pipeline(self) -> None:
        self.params = build_params(self.cfg)
        self.pipeline = build_pipeline(self.cfg, self.params, with_petermann=False)

    def run(self) -> int:
        self.setup()
        fit = self.pipeline.run_linewidth(n_samples=self.args.samples, method=self.args.method)
        write_table(pd.DataFrame([fit.to_row()]), self.path("linewidth.csv"))
        print(
            f"fitted_linewidth={fit.fitted_linewidth:.6g} linewidth_2D={fit.linewidth_2D:.6g} "
            f"fitted_frequency={fit.fitted_frequency:.6g} freq_shift={fit.freq_shift:.6g}"
        )
        return EXIT_OK


def point_params(base: LaserParams, param: str, value: float) -> LaserParams:
    """Scenario params at one sweep value; a gamma12 sweep keeps the absolute pump of the base scenario."""
    if param == "pump_rate":
        return replace(base, pump_rate=value)
    if param == "pump_ratio":
        return with_pump_ratio(base, value)
    if param == "gamma12":
        return replace(base, gamma12=value)
    raise ConfigError(f"cannot sweep '{param}'")


class SweepLoop(ScenarioLoop):

    def init_pipeline(self) -> None:
        self.params = build_params(self.cfg)
        self.spec = SweepSpec(
            param=self.args.param, start=self.args.start, stop=self.args.stop,
            steps=self.args.steps, scale=self.args.scale
        )
        if self.args.column not in REPORT_COLUMNS:
            raise ConfigError(f"unknown plot column '{self.args.column}'")

    def solve_point(self, index: int, value: float) -> Tuple[int, Dict[str, object]]:
        row: Dict[str, object] = {"index": index, self.spec.param: value}
        try:
            pipeline = build_pipeline(self.cfg, point_params(self.params, self.spec.param, value))
            report, _ = pipeline.run()
            row.update(report.to_row())
            row[self.spec.param] = value
            row["status"], row["error"] = "ok", ""
        except OclaserError as e:
            logger.warning(f"sweep point {index} ({self.spec.param}={value:.6g}) failed: {e}")
            row.update({name: math.nan for name in REPORT_COLUMNS if name != self.spec.param})
            row["status"], row["error"] = "failed", f"{type(e).__name__}: {e}"
        return index, row

    def run(self) -> int:
        self.setup()
        values = self.spec.values()
        rows: List[Optional[Dict[str, object]]] = [None] * len(values)
        with ThreadPoolExecutor(max_workers=self.args.threads) as pool:
            futures = [pool.submit(self.solve_point, i, float(v)) for i, v in enumerate(values)]
            iterator = tqdm(
                as_completed(futures), total=len(futures), unit="point", leave=False,
                disable=not progress_enabled()
            )
            for future in iterator:
                index, row = future.result()
                rows[index] = row
        df = pd.DataFrame(rows)
        ordered = ["index", self.spec.param] + [c for c in REPORT_COLUMNS if c != self.spec.param] + ["status", "error"]
        df = df[ordered]
        self.save(df)
        failed = int((df["status"] == "failed").sum())
        print(f"{len(df) - failed}/{len(df)} points solved -> {self.output_dir}")
        return EXIT_PARTIAL if failed else EXIT_OK

    def save(self, df: pd.DataFrame) -> None:
        write_table(df, self.path("sweep.csv"))
        write_line_plot(
            self.path("sweep.svg"), df[self.spec.param], {self.args.column: df[self.args.column]},
            xlabel=self.spec.param, ylabel=self.args.column, logx=self.spec.scale == "log", markers=True
        )


class ValidateLoop(ScenarioLoop):
    """Runs the acceptance suite, which carries its own scenarios."""

    def __init__(self, args: Namespace) -> "ValidateLoop":
        self.args = args
        self.cfg = None
        self.output_dir = args.out or "results"

    def run(self) -> int:
        self.setup()
        df = run_validation(progress=True)
        write_table(df, self.path("validate.csv"))
        for row in df.itertuples():
            verdict = "PASS" if row.passed else "FAIL"
            print(f"{verdict} {row.check}: measured={row.measured:.6g} tolerance={row.tolerance:g} {row.detail}")
        failed = int((~df["passed"].astype(bool)).sum())
        print(f"{len(df) - failed}/{len(df)} checks passed")
        return EXIT_VALIDATION if failed else EXIT_OK


class FiguresLoop(ScenarioLoop):
    """Data and plots of the five standard figures, built around the scenario's parameters."""

    def init_pipeline(self) -> None:
        self.params = build_params(self.cfg)
        self.controls = SteadyControls(beta_mode="auto")

    def _report(self, params: LaserParams) -> ObservableReport:
        return build_pipeline(self.cfg, params, with_petermann=False).run()[0]

    def _safe(self, params: LaserParams, column: str) -> float:
        try:
            return float(getattr(self._report(params), column))
        except OclaserError as e:
            logger.warning(f"figure point at pump {params.pump_rate:.6g}, gamma12 {params.gamma12:g} failed: {e}")
            return math.nan

    def distributions(self) -> None:
        curves, size = {}, 0
        for ratio in (0.5, 1.0, 2.0):
            pipeline = build_pipeline(self.cfg, with_pump_ratio(self.params, ratio), with_petermann=False)
            result = pipeline.run_steady()
            write_distribution(
                result.p_alpha, self.path(f"dist_alpha_{ratio:g}.csv"), pipeline.references(result.p_alpha)
            )
            curves[f"A/C1_tilde = {ratio:g}"] = result.p_alpha.probabilities
            size = max(size, len(result.p_alpha.probabilities))
        padded = {k: np.pad(v, (0, size - len(v))) for k, v in curves.items()}
        write_line_plot(self.path("distributions.svg"), np.arange(size), padded, "n_alpha", "p(n_alpha)")

    def mean_vs_pump(self) -> None:
        gammas = (0.0, 4.0, 8.0, 16.0)
        r_low = 0.25 * threshold_pump_rate(replace(self.params, gamma12=0.0))
        r_high = 2.0 * threshold_pump_rate(replace(self.params, gamma12=max(gammas)))
        pumps = np.linspace(r_low, r_high, 25)
        data = {"pump_rate": pumps}
        for g12 in tqdm(gammas, unit="curve", leave=False, disable=not progress_enabled()):
            data[f"nbar_gamma12_{g12:g}"] = [
                self._safe(replace(self.params, gamma12=g12, pump_rate=r), "nbar_alpha") for r in pumps
            ]
        df = pd.DataFrame(data)
        write_table(df, self.path("nbar_vs_pump.csv"))
        curve = threshold_curve(self.params, np.linspace(0.0, 16.0, 17))
        write_table(curve, self.path("threshold_vs_gamma12.csv"))
        write_line_plot(
            self.path("nbar_vs_pump.svg"), pumps, {k: v for k, v in data.items() if k != "pump_rate"},
            "pump rate", "nbar_alpha",
            inset={"x": curve["gamma12"], "curves": {"r_th": curve["threshold_rate"]},
                   "xlabel": "gamma12", "ylabel": "r_th"}
        )

    def g2_vs_pump(self) -> None:
        ratios = np.linspace(0.1, 3.0, 30)
        pumps = [with_pump_ratio(self.params, r) for r in ratios]
        df = pd.DataFrame({
            "pump_ratio": ratios,
            "pump_rate": [p.pump_rate for p in pumps],
            "g2_alpha": [self._safe(p, "g2_alpha") for p in pumps],
        })
        write_table(df, self.path("g2_vs_pump.csv"))
        write_line_plot(self.path("g2_vs_pump.svg"), df["pump_ratio"], {"g2(0)": df["g2_alpha"]}, "A/C1_tilde", "g2(0)")

    def linewidth_vs_pump(self) -> None:
        ratios = np.linspace(1.25, 5.0, 16)
        df = pd.DataFrame({
            "pump_ratio": ratios,
            "linewidth_2D": [self._safe(with_pump_ratio(self.params, r), "linewidth_2D") for r in ratios],
        })
        write_table(df, self.path("linewidth_vs_pump.csv"))
        gammas = np.linspace(0.0, 16.0, 9)
        pump = 2.0 * threshold_pump_rate(replace(self.params, gamma12=gammas.max()))
        inset = pd.DataFrame({
            "gamma12": gammas,
            "linewidth_2D": [self._safe(replace(self.params, gamma12=g, pump_rate=pump), "linewidth_2D") for g in gammas],
        })
        write_table(inset, self.path("linewidth_vs_gamma12.csv"))
        write_line_plot(
            self.path("linewidth_vs_pump.svg"), df["pump_ratio"], {"2D_alpha": df["linewidth_2D"]}, "A/C1_tilde", "2D_alpha",
            inset={"x": inset["gamma12"], "curves": {"2D_alpha": inset["linewidth_2D"]},
                   "xlabel": "gamma12", "ylabel": "2D_alpha"}
        )

    def petermann_vs_gamma12(self) -> None:
        gammas = np.linspace(0.0, 16.0, 9)
        pump = 4.0 * threshold_pump_rate(replace(self.params, gamma12=gammas.max()))
        numeric, asymptotic = [], []
        for g in gammas:
            params = replace(self.params, gamma12=float(g))
            try:
                numeric.append(petermann(params, pump, "numeric", controls=self.controls))
                asymptotic.append(petermann(params, pump, "asymptotic"))
            except OclaserError as e:
                logger.warning(f"Petermann factor at gamma12 = {g:g} failed: {e}")
                numeric.append(math.nan)
                asymptotic.append(math.nan)
        df = pd.DataFrame({"gamma12": gammas, "petermann_K": numeric, "petermann_K_asymptotic": asymptotic})
        write_table(df, self.path("petermann_vs_gamma12.csv"))
        write_line_plot(
            self.path("petermann_vs_gamma12.svg"), gammas, {"numeric": numeric, "asymptotic": asymptotic}, "gamma12", "K", markers=True
        )

    def run(self) -> int:
        self.setup()
        steps = [
            self.distributions, self.mean_vs_pump, self.g2_vs_pump,
            self.linewidth_vs_pump, self.petermann_vs_gamma12,
        ]
        for step in tqdm(steps, unit="figure", disable=not progress_enabled()):
            step()
        print(f"figures written to {self.output_dir}")
        return EXIT_OK


LOOPS = {
    "steady": SteadyLoop,
    "evolve": EvolveLoop,
    "sweep": SweepLoop,
    "linewidth": LinewidthLoop,
    "validate": ValidateLoop,
    "figures": FiguresLoop,
}
