import numpy as np
import pandas as pd
import pytest

from oclaser.model.fock import PhotonDistribution
from oclaser.model.observables import poisson_distribution, thermal_distribution
from oclaser.utils.errors import ConfigError
from oclaser.utils.io import (
    write_table, read_table, distribution_frame, write_distribution, read_distribution, write_line_plot
)
from oclaser.utils.schedule import make_sweep_schedule, SweepSpec
from oclaser.utils.validate import run_validation, check_threshold_curve, check_derivation_chain


def test_linear_schedule():
    values = make_sweep_schedule("linear", 1.0, 2.0, 5)
    np.testing.assert_allclose(values, [1.0, 1.25, 1.5, 1.75, 2.0])


def test_log_schedule():
    values = make_sweep_schedule("log", 1.0, 1000.0, 4)
    np.testing.assert_allclose(values, [1.0, 10.0, 100.0, 1000.0])


@pytest.mark.parametrize("scale, start, stop, steps", [
    ("linear", 1.0, 2.0, 1),
    ("linear", 2.0, 1.0, 3),
    ("log", 0.0, 1.0, 3),
    ("cosine", 1.0, 2.0, 3),
])
def test_bad_schedules(scale, start, stop, steps):
    with pytest.raises(ConfigError):
        make_sweep_schedule(scale, start, stop, steps)


def test_sweep_spec():
    spec = SweepSpec("gamma12", 0.0, 16.0, 5)
    np.testing.assert_allclose(spec.values(), [0.0, 4.0, 8.0, 12.0, 16.0])
    with pytest.raises(ConfigError, match="cannot sweep"):
        SweepSpec("delta", 0.0, 1.0, 3)


def test_distribution_csv_keeps_every_digit(tmp_path):
    dist = thermal_distribution(2.0 / 3.0, 60)
    path = tmp_path / "dist.csv"
    write_distribution(dist, path, {"poisson": poisson_distribution(dist.mean, 200)})
    back = read_distribution(path)
    np.testing.assert_array_equal(back.probabilities, dist.probabilities)
    assert back.mean == pytest.approx(dist.mean, abs=1e-12)
    assert len(read_table(path)["poisson"]) == 61


def test_distribution_frame_pads_short_references():
    dist = PhotonDistribution(np.full(5, 0.2))
    df = distribution_frame(dist, {"ref": PhotonDistribution([0.5, 0.5])})
    assert list(df.columns) == ["n", "p", "ref"]
    np.testing.assert_array_equal(df["ref"], [0.5, 0.5, 0.0, 0.0, 0.0])


def test_write_table_creates_directories(tmp_path):
    path = tmp_path / "deep" / "dir" / "t.csv"
    write_table(pd.DataFrame({"x": [0.1, 1.0 / 3.0]}), path)
    assert read_table(path)["x"][1] == 1.0 / 3.0


def test_line_plot_is_reproducible(tmp_path):
    x = np.linspace(0.0, 1.0, 11)
    curves = {"a": x ** 2, "b": np.sqrt(x)}
    inset = {"x": x, "curves": {"c": x}, "xlabel": "x", "ylabel": "c"}
    for name in ("one.svg", "two.svg"):
        write_line_plot(tmp_path / name, x, curves, "x", "y", title="t", markers=True, inset=inset)
    first = (tmp_path / "one.svg").read_bytes()
    assert first.startswith(b"<?xml")
    assert first == (tmp_path / "two.svg").read_bytes()


def test_run_validation_subset():
    df = run_validation([check_threshold_curve, check_derivation_chain], progress=False)
    assert set(df.columns) >= {"check", "measured", "tolerance", "passed", "detail", "runtime_s"}
    assert df["passed"].all(), df[~df["passed"]].to_string()
