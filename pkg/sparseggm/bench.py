"""Asynchronous experiment harness for sparseggm."""
import asyncio
import logging
import threading
import time
from concurrent.futures import Executor, ThreadPoolExecutor
from functools import partial
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import async_timeout
import numpy as np
import pandas as pd

from .const import CASE_PRIOR_B, DEFAULT_ALPHA, DEFAULT_BETA
from .data import (
    generate_case,
    ingest_returns,
    summarize_runs,
    write_edge_probabilities,
    write_graph,
    write_joint_trace,
    write_matrix,
    write_table,
    write_trace,
)
from .diagnostics import ess_report
from .exceptions import BenchmarkTimeout, SparseGGMError
from .ggm import (
    expected_test_loglik,
    gaussian_loglik,
    gaussian_loglik_rows,
    predictive_loglik_rows,
    run_joint_sampler,
)
from .glasso import cv_select_gamma, empirical_covariance, glasso_fit
from .graph import Graph, build_cover, maximal_cliques
from .gwishart import (
    GWishartParams,
    MassFactor,
    PrecisionState,
    laplace_mode,
    mass_from_trace,
    mass_identity,
    mass_laplace,
    mass_wishart_conditioned,
    posterior_params,
    sample_block_gibbs,
)
from .hmc import GWishartTarget, HmcConfig, sample_hmc, tune_step_scale
from .models import DataSummary, ExperimentConfig, GgmConfig, GlassoConfig, SyntheticCase
from .numkernel import cholesky, inv_pd, split_rng
from .plot import plot_expected_loglik, plot_loglik_difference
from .utils import stop_signal

_LOGGER = logging.getLogger(__name__)

PathLike = Union[str, Path]
Row = Dict[str, Any]

CASE_KEYS = ["p", "s", "n_over_q", "run"]


def _case_row(case: SyntheticCase, run: int) -> Row:
    return {"p": case.p, "s": case.s, "n_over_q": case.n_over_q, "run": run}


def _posterior(graph: Graph, data: np.ndarray) -> GWishartParams:
    """Return the posterior of a synthetic case under its W_G(1, pI) prior."""
    prior = GWishartParams(b=CASE_PRIOR_B, D=graph.p * np.eye(graph.p), graph=graph)
    summary = DataSummary.from_data(data)
    return posterior_params(prior, summary.gram, summary.n)


def _step_config(
    config: ExperimentConfig,
    index: int,
    params: GWishartParams,
    mass: MassFactor,
    rng: np.random.Generator,
) -> Tuple[HmcConfig, float, np.ndarray]:
    """Return configured (α, β), or tune them from the defaults; tuning time is not counted.

    The returned position is where sampling starts: the identity for configured
    steps and the last tuning position otherwise.
    """
    init = params.free.vectorize(np.eye(params.graph.p))
    alpha, beta = config.step_parameters(index)
    if alpha is not None and beta is not None:
        return HmcConfig(alpha=alpha, beta=beta, mass=mass), float("nan"), init

    start = HmcConfig(alpha=alpha or DEFAULT_ALPHA, beta=beta or DEFAULT_BETA, mass=mass)
    return tune_step_scale(GWishartTarget(params), start, init, rng, steps=config.tune_steps)


def _sampling_row(trace: np.ndarray, seconds: float) -> Tuple[Row, Row]:
    report = ess_report(trace, seconds)
    return {"ess": report.aggregate}, {"seconds": seconds, "ess_per_sec": report.ess_per_sec}


def _table1_run(
    config: ExperimentConfig,
    case: SyntheticCase,
    index: int,
    run: int,
    rngs: List[np.random.Generator],
) -> Tuple[List[Row], List[Row]]:
    """Generate one test run and sample its posterior with every configured sampler."""
    graph, _, data = generate_case(case, rngs[0])
    params = _posterior(graph, data)
    init = PrecisionState.identity(case.p)
    results: List[Row] = []
    timings: List[Row] = []

    for sampler, rng in zip(config.samplers, rngs[1:]):
        keys = {**_case_row(case, run), "sampler": sampler}
        result: Row = {"ess": float("nan"), "acceptance": float("nan"), "status": "ok"}
        timing: Row = {"setup_seconds": float("nan"), "seconds": float("nan")}
        timing["ess_per_sec"] = float("nan")
        try:
            started = time.perf_counter()
            if sampler == "hmc":
                mass = mass_wishart_conditioned(params, config.n_prelim, rng)
                timing["setup_seconds"] = time.perf_counter() - started
                hmc_config, _, start = _step_config(config, index, params, mass, rng)
                started = time.perf_counter()
                trace, rate = sample_hmc(
                    GWishartTarget(params),
                    hmc_config,
                    start,
                    config.samples,
                    config.burn_in,
                    rng,
                )
                result["acceptance"] = rate
            else:
                if sampler == "bg-mc":
                    cover = maximal_cliques(graph)
                    if len(cover) > config.max_cliques:
                        _LOGGER.warning(
                            "Skipping BG-MC at p=%d: %d maximal cliques", case.p, len(cover)
                        )
                        result["status"] = "skipped"
                        results.append({**keys, **result})
                        timings.append({**keys, **timing})
                        continue
                else:
                    cover = build_cover("heuristic", graph, rng)
                timing["setup_seconds"] = time.perf_counter() - started
                started = time.perf_counter()
                trace = sample_block_gibbs(
                    params, cover, init, config.samples, config.burn_in, rng
                )

            deterministic, clocked = _sampling_row(trace, time.perf_counter() - started)
            result.update(deterministic)
            timing.update(clocked)
        except SparseGGMError as exception:
            _LOGGER.warning("%s failed on p=%d run %d: %s", sampler, case.p, run, exception)
            result["status"] = type(exception).__name__

        results.append({**keys, **result})
        timings.append({**keys, **timing})

    return results, timings


def _build_mass(
    method: str,
    params: GWishartParams,
    config: ExperimentConfig,
    rng: np.random.Generator,
) -> MassFactor:
    """Construct a mass matrix by name."""
    if method == "identity":
        return mass_identity(len(params.free))
    if method == "gwishart":
        cover = build_cover("heuristic", params.graph, rng)
        trace = sample_block_gibbs(
            params, cover, PrecisionState.identity(params.graph.p), config.n_prelim, 0, rng
        )
        return mass_from_trace(trace)
    if method == "laplace":
        return mass_laplace(params, laplace_mode(params))

    return mass_wishart_conditioned(params, config.n_prelim, rng)


def _table2_run(
    config: ExperimentConfig,
    case: SyntheticCase,
    run: int,
    rngs: List[np.random.Generator],
    graph: Optional[Graph] = None,
    trace_dir: Optional[Path] = None,
) -> Tuple[List[Row], List[Row]]:
    """Sample one test run with HMC under every configured mass method.

    ``graph`` replaces the random graph of the case. With ``trace_dir`` set,
    each method's trace is written there.
    """
    graph, _, data = generate_case(case, rngs[0], graph)
    params = _posterior(graph, data)
    if trace_dir is not None:
        write_graph(trace_dir / f"table2_graph_run{run}.txt", graph)
    results: List[Row] = []
    timings: List[Row] = []

    for method, rng in zip(config.mass_method, rngs[1:]):
        keys = {**_case_row(case, run), "mass_method": method}
        result: Row = {"ess": float("nan"), "acceptance": float("nan"), "status": "ok"}
        result.update(alpha=float("nan"), beta=float("nan"))
        timing: Row = {"mass_seconds": float("nan"), "seconds": float("nan")}
        timing["ess_per_sec"] = float("nan")
        try:
            started = time.perf_counter()
            mass = _build_mass(method, params, config, rng)
            timing["mass_seconds"] = time.perf_counter() - started
            _LOGGER.info("Mass %s built in %.3fs", method, timing["mass_seconds"])

            hmc_config, _, start = _step_config(config, 0, params, mass, rng)
            result.update(alpha=hmc_config.alpha, beta=hmc_config.beta)
            started = time.perf_counter()
            trace, rate = sample_hmc(
                GWishartTarget(params), hmc_config, start, config.samples, config.burn_in, rng
            )
            deterministic, clocked = _sampling_row(trace, time.perf_counter() - started)
            result.update(deterministic, acceptance=rate)
            timing.update(clocked)
            if trace_dir is not None:
                path = trace_dir / f"table2_trace_{method}_run{run}.csv"
                write_trace(path, trace, params.free)
        except SparseGGMError as exception:
            _LOGGER.warning("Mass %s failed on run %d: %s", method, run, exception)
            result["status"] = type(exception).__name__

        results.append({**keys, **result})
        timings.append({**keys, **timing})

    return results, timings


def _tune_case(
    config: ExperimentConfig,
    case: SyntheticCase,
    rngs: List[np.random.Generator],
) -> List[Row]:
    """Tune (α, β) for every mass method on one generated test run."""
    graph, _, data = generate_case(case, rngs[0])
    params = _posterior(graph, data)
    rows: List[Row] = []

    for method, rng in zip(config.mass_method, rngs[1:]):
        row: Row = {"p": case.p, "s": case.s, "n_over_q": case.n_over_q, "mass_method": method}
        try:
            mass = _build_mass(method, params, config, rng)
            start = HmcConfig(alpha=DEFAULT_ALPHA, beta=DEFAULT_BETA, mass=mass)
            init = params.free.vectorize(np.eye(case.p))
            tuned, rate, _ = tune_step_scale(
                GWishartTarget(params), start, init, rng, steps=config.tune_steps
            )
            row.update(alpha=tuned.alpha, beta=tuned.beta, acceptance=rate, status="ok")
        except SparseGGMError as exception:
            _LOGGER.warning("Tuning %s failed at p=%d: %s", method, case.p, exception)
            row.update(
                alpha=float("nan"),
                beta=float("nan"),
                acceptance=float("nan"),
                status=type(exception).__name__,
            )
        rows.append(row)

    return rows


def _call_with_stop(stop: threading.Event, function: Callable[..., Any], *args: Any) -> Any:
    """Run ``function`` in a worker thread that honours ``stop``."""
    with stop_signal(stop):
        return function(*args)


class Benchmark:
    """Main class for running sparseggm experiments.

    Jobs run one at a time unless ``workers`` is set above 1. Concurrent
    samplers share the interpreter lock, which inflates their wall-clock
    timings.
    """

    def __init__(
        self,
        config: ExperimentConfig,
        out_dir: PathLike = ".",
        executor: Optional[Executor] = None,
    ) -> None:
        """Initialize the harness with a config and an output directory."""
        self._executor = executor
        self._close_executor = False
        self._slots: Optional[asyncio.Semaphore] = None

        self.config = config
        self.out_dir = Path(out_dir)

    @property
    def workers(self) -> int:
        """Return how many jobs may run at the same time."""
        return self.config.workers or 1

    async def _run(self, function: Callable[..., Any], *args: Any) -> Any:
        """Run blocking work on the executor within the time budget.

        The budget starts once the job holds a worker slot. A job that is
        abandoned, by timeout or cancellation, is told to stop and its
        sampler loop exits at the next check.
        """
        if self._executor is None:
            self._executor = ThreadPoolExecutor(max_workers=self.workers)
            self._close_executor = True
            if self.workers > 1:
                _LOGGER.warning(
                    "Running %d jobs at once; timings include lock contention", self.workers
                )
        if self._slots is None:
            self._slots = asyncio.Semaphore(self.workers)

        loop = asyncio.get_running_loop()
        stop = threading.Event()
        async with self._slots:
            try:
                async with async_timeout.timeout(self.config.budget_seconds):
                    return await loop.run_in_executor(
                        self._executor, partial(_call_with_stop, stop, function, *args)
                    )
            except asyncio.TimeoutError as exception:
                raise BenchmarkTimeout(
                    f"Job exceeded its budget of {self.config.budget_seconds} seconds"
                ) from exception
            finally:
                stop.set()

    def _rngs(self, cells: int, per_cell: int) -> List[List[np.random.Generator]]:
        """Return ``per_cell`` independent streams for each cell."""
        streams = split_rng(self.config.seed, cells * per_cell)
        return [streams[cell * per_cell : (cell + 1) * per_cell] for cell in range(cells)]

    def _write(self, name: str, frame: pd.DataFrame) -> Path:
        path = write_table(frame, self.out_dir / name)
        _LOGGER.info("Wrote %s", path)
        return path

    async def _gather_runs(
        self, jobs: List[Tuple[Callable[..., Any], Tuple[Any, ...], Row]], labels: List[str]
    ) -> Tuple[List[Row], List[Row]]:
        """Run jobs concurrently; a failed job yields one failure row per label."""
        outcomes = await asyncio.gather(
            *[self._run(function, *args) for function, args, _ in jobs], return_exceptions=True
        )

        results: List[Row] = []
        timings: List[Row] = []
        for outcome, (_, _, keys) in zip(outcomes, jobs):
            if isinstance(outcome, SparseGGMError):
                _LOGGER.warning("Run %s failed: %s", keys, outcome)
                status = type(outcome).__name__
                results.extend({**keys, **label, "status": status} for label in labels)
                timings.extend({**keys, **label} for label in labels)
                continue
            if isinstance(outcome, BaseException):
                raise outcome
            results.extend(outcome[0])
            timings.extend(outcome[1])

        return results, timings

    async def table1(self) -> Dict[str, Path]:
        """Compare ESS and ESS/sec of block Gibbs and HMC on synthetic cases."""
        config = self.config
        cases = config.cases()
        rngs = self._rngs(len(cases) * config.runs, 1 + len(config.samplers))

        jobs = []
        for index, case in enumerate(cases):
            _LOGGER.info("Table 1 case p=%d s=%.2f n=%d", case.p, case.s, case.n)
            for run in range(config.runs):
                cell = index * config.runs + run
                args = (config, case, index, run, rngs[cell])
                jobs.append((_table1_run, args, _case_row(case, run)))

        labels = [{"sampler": sampler} for sampler in config.samplers]
        results, timings = await self._gather_runs(jobs, labels)
        return self._write_tables("table1", results, timings, "sampler", ["ess"])

    async def table2(
        self, graph: Optional[Graph] = None, traces: bool = False
    ) -> Dict[str, Path]:
        """Compare HMC mass matrix constructions on one synthetic case.

        A given ``graph`` is used in every run instead of a random one. With
        ``traces`` set, each run's graph and every method's trace are written too.
        """
        config = self.config
        case = config.cases()[0]
        if graph is not None:
            case = SyntheticCase(p=graph.p, s=case.s, n_over_q=case.n_over_q)
        trace_dir = self.out_dir if traces else None
        rngs = self._rngs(config.runs, 1 + len(config.mass_method))
        _LOGGER.info("Table 2 case p=%d s=%.2f n=%d", case.p, case.s, case.n)

        jobs = [
            (_table2_run, (config, case, run, rngs[run], graph, trace_dir), _case_row(case, run))
            for run in range(config.runs)
        ]
        labels = [{"mass_method": method} for method in config.mass_method]
        results, timings = await self._gather_runs(jobs, labels)
        return self._write_tables("table2", results, timings, "mass_method", ["ess", "acceptance"])

    def _write_tables(
        self, name: str, results: List[Row], timings: List[Row], group: str, metrics: List[str]
    ) -> Dict[str, Path]:
        runs = pd.DataFrame.from_records(results)
        timing = pd.DataFrame.from_records(timings)
        keys = ["p", "s", "n_over_q", group]
        clocked = [column for column in timing.columns if column not in CASE_KEYS + [group]]

        return {
            "runs": self._write(f"{name}_runs.csv", runs),
            "summary": self._write(f"{name}_summary.csv", summarize_runs(runs, keys, metrics)),
            "timing": self._write(f"{name}_timing.csv", timing),
            "timing_summary": self._write(
                f"{name}_timing_summary.csv", summarize_runs(timing, keys, clocked)
            ),
        }

    async def tune_hmc(self) -> Dict[str, Path]:
        """Tune (α, β) per case and mass method towards the target acceptance."""
        config = self.config
        cases = config.cases()
        rngs = self._rngs(len(cases), 1 + len(config.mass_method))
        outcomes = await asyncio.gather(
            *[self._run(_tune_case, config, case, rngs[index]) for index, case in enumerate(cases)]
        )
        rows = [row for outcome in outcomes for row in outcome]
        return {"tuning": self._write("tune_hmc.csv", pd.DataFrame.from_records(rows))}

    def _dataset(
        self, dataset: Optional[PathLike], rng: np.random.Generator
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Return (train, test) from a price CSV, or split a synthetic case in half."""
        if dataset is not None:
            return ingest_returns(dataset, self.config.train_fraction)

        case = self.config.cases()[0]
        _, _, data = generate_case(case, rng)
        boundary = max(1, int(self.config.train_fraction * data.shape[0]))
        return data[:boundary], data[boundary:]

    def _ggm_config(self, inner: str) -> GgmConfig:
        """Return the joint sampler config; inner HMC steps are tuned unless α is set."""
        alpha, beta = self.config.step_parameters(0)
        defaults = GgmConfig()
        return self.config.ggm_config(
            inner,
            alpha if alpha is not None else defaults.alpha,
            beta or defaults.beta,
            tune_steps=0 if alpha is not None else None,
        )

    async def glasso_fit(self, dataset: Optional[PathLike] = None) -> Dict[str, Path]:
        """Cross-validate γ on training data and fit the graphical lasso."""
        config = self.config
        data_rng, cv_rng = split_rng(config.seed, 2)
        train, test = self._dataset(dataset, data_rng)

        cv = await self._run(cv_select_gamma, train, config.folds, config.grid_size, cv_rng)
        fit = await self._run(
            glasso_fit, empirical_covariance(train), GlassoConfig(gamma=cv.gamma)
        )
        summary = {
            "gamma": cv.gamma,
            "objective": fit.objective,
            "kkt_violation": fit.kkt_violation,
            "sweeps": fit.sweeps,
            "converged": fit.converged,
            "test_loglik": gaussian_loglik(PrecisionState.from_matrix(fit.precision), test),
        }
        return {
            "cv": self._write(
                "glasso_cv.csv", pd.DataFrame({"gamma": cv.grid, "score": cv.scores})
            ),
            "precision": write_matrix(self.out_dir / "glasso_precision.csv", fit.precision),
            "summary": self._write("glasso_fit.csv", pd.DataFrame.from_records([summary])),
        }

    async def ggm_fit(
        self, dataset: Optional[PathLike] = None, inner: str = "hmc"
    ) -> Dict[str, Path]:
        """Run the joint sampler and write its trace and edge probabilities."""
        config = self.config
        data_rng, chain_rng = split_rng(config.seed, 2)
        train, test = self._dataset(dataset, data_rng)

        trace = await self._run(
            run_joint_sampler,
            DataSummary.from_data(train),
            self._ggm_config(inner),
            config.iterations,
            config.burn_in,
            chain_rng,
        )
        series = expected_test_loglik(trace, test)
        median = Graph(p=trace.p, adjacency=trace.edge_probabilities() > 0.5)
        return {
            "graph": write_graph(self.out_dir / "ggm_median_graph.txt", median),
            "trace": write_joint_trace(self.out_dir / "ggm_trace.csv", trace),
            "edges": write_edge_probabilities(
                self.out_dir / "ggm_edge_probabilities.csv", trace.edge_probabilities()
            ),
            "loglik": self._write(
                "ggm_loglik.csv", series[["iter", "loglik", "expected_loglik"]]
            ),
        }

    async def compare(self, dataset: Optional[PathLike] = None) -> Dict[str, Path]:
        """Compare test log likelihood of the empirical precision, glasso and the joint sampler."""
        config = self.config
        data_rng, cv_rng, hmc_rng, gibbs_rng = split_rng(config.seed, 4)
        train, test = self._dataset(dataset, data_rng)
        covariance = empirical_covariance(train)
        summary = DataSummary.from_data(train)

        results: List[Row] = []
        timings: List[Row] = []

        started = time.perf_counter()
        baseline = PrecisionState.from_matrix(inv_pd(cholesky(covariance)))
        baseline_loglik = gaussian_loglik(baseline, test)
        results.append(
            {"model": "empirical", "gamma": float("nan"), "test_loglik": baseline_loglik}
        )
        timings.append({"model": "empirical", "seconds": time.perf_counter() - started})

        started = time.perf_counter()
        cv = await self._run(cv_select_gamma, train, config.folds, config.grid_size, cv_rng)
        fit = await self._run(glasso_fit, covariance, GlassoConfig(gamma=cv.gamma))
        glasso_seconds = time.perf_counter() - started
        glasso = PrecisionState.from_matrix(fit.precision)
        glasso_loglik = gaussian_loglik(glasso, test)
        results.append({"model": "glasso", "gamma": cv.gamma, "test_loglik": glasso_loglik})
        timings.append({"model": "glasso", "seconds": glasso_seconds})

        traces = await asyncio.gather(
            self._run(
                run_joint_sampler,
                summary,
                self._ggm_config("hmc"),
                config.iterations,
                config.burn_in,
                hmc_rng,
            ),
            self._run(
                run_joint_sampler,
                summary,
                self._ggm_config("block-gibbs"),
                config.iterations,
                config.burn_in,
                gibbs_rng,
            ),
        )

        curves: Dict[str, pd.DataFrame] = {}
        series_frames = []
        for model, trace in zip(["ggm-hmc", "ggm-bg-hcc"], traces):
            series = expected_test_loglik(trace, test)
            curves[model] = series
            series_frames.append(series.assign(model=model))
            results.append(
                {
                    "model": model,
                    "gamma": float("nan"),
                    "test_loglik": float(series["expected_loglik"].iloc[-1]),
                }
            )
            timings.append({"model": model, "seconds": float(trace.timestamps[-1])})

        series = pd.concat(series_frames, ignore_index=True)
        difference = predictive_loglik_rows(traces[0], test) - gaussian_loglik_rows(glasso, test)

        return {
            "results": self._write("compare_results.csv", pd.DataFrame.from_records(results)),
            "timing": self._write("compare_timing.csv", pd.DataFrame.from_records(timings)),
            "series": self._write(
                "compare_loglik.csv", series[["model", "iter", "loglik", "expected_loglik"]]
            ),
            "series_timing": self._write(
                "compare_loglik_timing.csv", series[["model", "iter", "seconds"]]
            ),
            "difference": self._write(
                "compare_difference.csv",
                pd.DataFrame({"point": np.arange(difference.size), "difference": difference}),
            ),
            "plot": plot_expected_loglik(
                self.out_dir / "compare_loglik.svg",
                curves,
                {
                    "glasso": (glasso_seconds, glasso_loglik),
                    "empirical": (0.0, baseline_loglik),
                },
            ),
            "difference_plot": plot_loglik_difference(
                self.out_dir / "compare_difference.svg", difference
            ),
        }

    async def close(self) -> None:
        """Shut down an executor the harness created."""
        if self._executor and self._close_executor:
            self._executor.shutdown(wait=True)
            self._executor = None
            self._close_executor = False
        self._slots = None

    async def __aenter__(self) -> "Benchmark":
        """Async enter."""
        return self

    async def __aexit__(self, *exc_info) -> None:
        """Async exit."""
        await self.close()
