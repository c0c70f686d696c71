from typing import Dict, Mapping, Optional, Sequence, Union
import os

import numpy as np
import pandas as pd
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from ..model.fock import PhotonDistribution
from .common import get_logger

logger = get_logger(__name__)

PathLike = Union[str, os.PathLike]

# 17 significant digits round-trip every double
FLOAT_FORMAT = "%.17g"

# fixed ids and no timestamp keep the svg output byte-stable across runs
plt.rcParams["svg.hashsalt"] = "oclaser"


def write_table(df: pd.DataFrame, path: PathLike) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.info(f"wrote {len(df)} rows to {path}")


def read_table(path: PathLike) -> pd.DataFrame:
    return pd.read_csv(path)


def distribution_frame(
    dist: PhotonDistribution, references: Optional[Mapping[str, PhotonDistribution]] = None
) -> pd.DataFrame:
    """Columns n, p and one column per reference curve, truncated to the same n."""
    df = pd.DataFrame({"n": np.arange(dist.n_max + 1), "p": dist.probabilities})
    for name, ref in (references or {}).items():
        col = np.zeros(dist.n_max + 1)
        size = min(len(col), len(ref.probabilities))
        col[:size] = ref.probabilities[:size]
        df[name] = col
    return df


def write_distribution(
    dist: PhotonDistribution, path: PathLike, references: Optional[Mapping[str, PhotonDistribution]] = None
) -> None:
    write_table(distribution_frame(dist, references), path)


def read_distribution(path: PathLike) -> PhotonDistribution:
    df = read_table(path).sort_values("n")
    return PhotonDistribution(df["p"].to_numpy(dtype=np.float64))


def write_line_plot(
    path: PathLike, x: Sequence[float], curves: Dict[str, Sequence[float]], xlabel: str, ylabel: str,
    title: str = "", logx: bool = False, logy: bool = False, markers: bool = False,
    inset: Optional[Dict[str, object]] = None
) -> None:
    """
    Simple SVG line plot of one or more curves sharing the x axis.
    inset, if given, holds x, curves, xlabel and ylabel of a small plot drawn in the upper left corner.
    """
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    style = "o-" if markers else "-"
    for label, y in curves.items():
        ax.plot(np.asarray(x), np.asarray(y, dtype=np.float64), style, label=label, markersize=3)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if len(curves) > 1:
        ax.legend()
    if inset is not None:
        sub = ax.inset_axes([0.12, 0.55, 0.35, 0.35])
        for label, y in inset["curves"].items():
            sub.plot(np.asarray(inset["x"]), np.asarray(y, dtype=np.float64), "-", label=label)
        sub.set_xlabel(inset.get("xlabel", ""), fontsize=8)
        sub.set_ylabel(inset.get("ylabel", ""), fontsize=8)
        sub.tick_params(labelsize=7)
    fig.tight_layout()
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    logger.info(f"wrote plot {path}")
