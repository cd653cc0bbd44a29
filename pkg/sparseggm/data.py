"""Synthetic test cases, price ingestion and CSV persistence."""
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .const import CASE_GIBBS_STEPS, CASE_PRIOR_B, CSV_FLOAT_FORMAT
from .diagnostics import mean_std
from .exceptions import (
    ColumnCountMismatch,
    DataError,
    InsufficientRows,
    NonPositivePrice,
    NotPositiveDefinite,
    SingularInput,
)
from .ggm import JointTrace
from .graph import FreeIndexSet, Graph, heuristic_clique_cover, random_graph
from .gwishart import GWishartParams, PrecisionState, block_gibbs_step
from .models import SyntheticCase
from .numkernel import cholesky, inv_pd, sample_mvn_precision
from .utils import round_half_away

_LOGGER = logging.getLogger(__name__)

PathLike = Union[str, Path]


def generate_case(
    case: SyntheticCase, rng: np.random.Generator, graph: Optional[Graph] = None
) -> Tuple[Graph, PrecisionState, np.ndarray]:
    """Draw a graph, a precision from W_G(1, pI) and ``n`` rows of data.

    A given ``graph`` is used instead of a random one and must have ``case.p`` vertices.
    """
    if graph is None:
        graph = random_graph(rng, case.p, case.s)
    elif graph.p != case.p:
        raise DataError(f"Graph has {graph.p} vertices, case needs {case.p}")
    params = GWishartParams(b=CASE_PRIOR_B, D=case.p * np.eye(case.p), graph=graph)
    cover = heuristic_clique_cover(rng, graph)

    state = PrecisionState.identity(case.p)
    for _ in range(CASE_GIBBS_STEPS):
        state = block_gibbs_step(state, params, cover, rng)

    data = sample_mvn_precision(rng, state.chol, size=case.n)
    _LOGGER.debug(
        "Case p=%d s=%.2f: %d edges, %d rows", case.p, case.s, graph.n_edges, case.n
    )
    return graph, state, data


def _read_prices(path: PathLike) -> pd.DataFrame:
    try:
        prices = pd.read_csv(path, encoding="utf-8")
    except pd.errors.ParserError as exception:
        raise ColumnCountMismatch(f"Row width differs from the header in {path}") from exception

    if prices.isna().any().any():
        raise ColumnCountMismatch(f"Missing cells in {path}")

    try:
        prices = prices.astype(float)
    except ValueError as exception:
        raise DataError(f"Non-numeric price in {path}") from exception

    if (prices.to_numpy() <= 0).any():
        raise NonPositivePrice(f"Zero or negative price in {path}")

    return prices


def standardize(
    train: np.ndarray, test: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Center on the training mean and scale to a unit-diagonal training precision."""
    mean = train.mean(axis=0)
    train, test = train - mean, test - mean

    covariance = train.T @ train / train.shape[0]
    if np.any(np.diag(covariance) <= 0):
        raise SingularInput("Training returns have a zero-variance column")

    try:
        scale = np.sqrt(np.diag(inv_pd(cholesky(covariance))))
    except NotPositiveDefinite as exception:
        raise SingularInput("Training covariance is singular") from exception

    return train * scale, test * scale


def ingest_returns(path: PathLike, train_fraction: float) -> Tuple[np.ndarray, np.ndarray]:
    """Read closing prices and return standardized training and test returns.

    Returns are price ratios of consecutive rows. The first
    ``round(train_fraction * rows)`` prices feed the training returns, so 1000
    rows at 0.5 give 499 training and 500 test returns.
    """
    prices = _read_prices(path).to_numpy()
    rows = prices.shape[0]
    returns = prices[1:] / prices[:-1]

    boundary = round_half_away(train_fraction * rows) - 1
    if boundary < 2 or boundary >= returns.shape[0]:
        raise InsufficientRows(f"{rows} price rows cannot be split at {train_fraction}")

    train, test = standardize(returns[:boundary], returns[boundary:])
    _LOGGER.info(
        "Ingested %d assets: %d train, %d test returns", prices.shape[1], len(train), len(test)
    )
    return train, test


def write_table(frame: pd.DataFrame, path: PathLike) -> Path:
    """Write a result table with fixed float formatting."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    return path


def write_trace(path: PathLike, trace: np.ndarray, index: FreeIndexSet) -> Path:
    """Write a sampler trace with one ``i_j`` column per free coordinate."""
    return write_table(pd.DataFrame(trace, columns=index.labels()), path)


def joint_trace_frame(trace: JointTrace) -> pd.DataFrame:
    """Return the joint trace as iter, timestamp_ms, s, edges and Λ over all pairs."""
    frame = pd.DataFrame(trace.precisions, columns=trace.index.labels())
    frame.insert(0, "edges", [trace.graph(k).edge_mask() for k in range(len(trace))])
    frame.insert(0, "s", trace.s)
    frame.insert(0, "timestamp_ms", np.round(trace.timestamps * 1000.0).astype(np.int64))
    frame.insert(0, "iter", np.arange(len(trace)))
    return frame


def write_joint_trace(path: PathLike, trace: JointTrace) -> Path:
    """Write the joint trace CSV."""
    return write_table(joint_trace_frame(trace), path)


def write_matrix(path: PathLike, matrix: np.ndarray) -> Path:
    """Write a dense square matrix with vertex column labels."""
    columns = [str(vertex) for vertex in range(matrix.shape[1])]
    return write_table(pd.DataFrame(matrix, columns=columns), path)


def write_edge_probabilities(path: PathLike, probabilities: np.ndarray) -> Path:
    """Write the dense inclusion-probability matrix."""
    return write_matrix(path, probabilities)


def read_graph(path: PathLike) -> Graph:
    """Read a graph in the edge-list format of ``Graph.to_text``."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exception:
        raise DataError(f"Cannot read graph file {path}") from exception

    try:
        return Graph.from_text(text)
    except (ValueError, IndexError) as exception:
        raise DataError(f"Malformed graph file {path}") from exception


def write_graph(path: PathLike, graph: Graph) -> Path:
    """Write a graph in the edge-list format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(graph.to_text(), encoding="utf-8")
    return path


def summarize_runs(
    runs: pd.DataFrame, keys: Sequence[str], metrics: Sequence[str]
) -> pd.DataFrame:
    """Return mean and std of each metric over the runs of every key group."""
    records: List[dict] = []
    for group, frame in runs.groupby(list(keys), sort=False):
        group = group if isinstance(group, tuple) else (group,)
        record = dict(zip(keys, group))
        record["runs"] = len(frame)
        if "status" in frame:
            record["failed"] = int((frame["status"] != "ok").sum())
        for metric in metrics:
            mean, std = mean_std(frame[metric].to_numpy(dtype=float))
            record[f"{metric}_mean"] = mean
            record[f"{metric}_std"] = std
        records.append(record)

    return pd.DataFrame.from_records(records)
