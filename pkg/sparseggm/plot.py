"""SVG figures for the test log-likelihood comparison."""
from pathlib import Path
from typing import Dict, Tuple, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from .const import SVG_HASH_SALT  # noqa: E402

PathLike = Union[str, Path]


def _save(figure, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with matplotlib.rc_context({"svg.hashsalt": SVG_HASH_SALT}):
        figure.savefig(path, format="svg", metadata={"Date": None})
    plt.close(figure)
    return path


def plot_expected_loglik(
    path: PathLike,
    curves: Dict[str, pd.DataFrame],
    points: Dict[str, Tuple[float, float]],
) -> Path:
    """Plot running expected test log likelihood against wall-clock seconds.

    ``curves`` map a label to a frame with ``seconds`` and ``expected_loglik``
    columns; ``points`` map a label to a single (seconds, loglik) result.
    """
    figure, axes = plt.subplots(figsize=(7, 4.5))
    for label, frame in curves.items():
        axes.plot(frame["seconds"], frame["expected_loglik"], label=label)
    for label, (seconds, value) in points.items():
        axes.plot([seconds], [value], marker="o", linestyle="none", label=label)

    axes.set_xlabel("Wall-clock time (s)")
    axes.set_ylabel("Expected test log likelihood")
    axes.grid(True, alpha=0.3)
    axes.legend()
    figure.tight_layout()
    return _save(figure, path)


def plot_loglik_difference(path: PathLike, difference: np.ndarray) -> Path:
    """Plot the per-point log-likelihood difference of two models."""
    figure, axes = plt.subplots(figsize=(7, 4.5))
    axes.plot(np.arange(len(difference)), difference, linewidth=0.8)
    axes.axhline(0.0, color="black", linewidth=0.6)
    axes.set_xlabel("Test point")
    axes.set_ylabel("Log likelihood difference")
    axes.grid(True, alpha=0.3)
    figure.tight_layout()
    return _save(figure, path)
