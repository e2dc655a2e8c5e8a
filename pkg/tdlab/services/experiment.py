# tdlab/services/experiment.py
"""
Experiment Service

Runs n independent trials of one estimator on one instance and reduces them
to a per-checkpoint summary.

Trial i draws from its own counter-based stream keyed by (seed, i), so the
result does not depend on how trials are spread over worker processes.
Results are gathered in trial order before any reduction.
"""

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Dict, List, Optional

import numpy as np
import scipy.linalg

from tdlab import __version__
from tdlab.core.config import get_settings
from tdlab.core.exceptions import DivergenceError
from tdlab.models.learner import TdcState, TdState
from tdlab.models.samples import SamplingMode
from tdlab.operations.learners import averaged_estimate, off_policy_td_step, tdc_step, td_step
from tdlab.operations.samplers import SampleStream, empirical_terms
from tdlab.operations.stepsizes import plan_stepsizes
from tdlab.schemas.experiment import (
    Algorithm,
    ExperimentConfig,
    ExperimentResult,
    ExperimentSummary,
    StartPoint,
    SummaryRow,
    TrialTrace,
)
from tdlab.schemas.reports import StepsizeDecision
from tdlab.services.config_file import config_items
from tdlab.services.problems import EvaluationProblem, build_problem, load_instance

logger = logging.getLogger(__name__)

BAND_METHOD = "empirical 2.5/97.5 percentiles over non-diverged trials (numpy linear interpolation)"


@dataclass(frozen=True)
class TrialContext:
    """Everything a worker needs to run one trial; shared read-only."""

    problem: EvaluationProblem
    algorithm: Algorithm
    decision: StepsizeDecision
    theta0: np.ndarray
    w0: Optional[np.ndarray]
    T: int
    checkpoints: np.ndarray
    seed: int
    divergence_threshold: float
    chunk: int


def run_trial(context: TrialContext, trial: int) -> TrialTrace:
    """
    Run one trial and record the error at every checkpoint.

    A DivergenceError stops the trial; later checkpoints are +inf.
    """
    problem, algorithm = context.problem, context.algorithm
    features, gamma, mode = problem.instance.features, problem.gamma, problem.mode
    stream = SampleStream(context.seed, trial)
    checkpoints = context.checkpoints
    errors = np.full(len(checkpoints), np.inf)
    diverged_at = None

    if algorithm == Algorithm.TDC:
        state = TdcState.start(context.theta0, context.decision.alpha, context.decision.beta, context.w0)
    else:
        state = TdState.start(context.theta0, context.decision.eta or 0.0)
    d = features.dim
    A_sum, b_sum = np.zeros((d, d)), np.zeros(d)

    def estimate(t: int) -> np.ndarray:
        if algorithm in (Algorithm.TD, Algorithm.TDC):
            return state.theta
        if algorithm == Algorithm.LSTD:
            return scipy.linalg.lstsq(A_sum / t, b_sum / t)[0]
        return averaged_estimate(state)

    t, next_cp = 0, 0
    threshold = context.divergence_threshold
    while t < context.T and diverged_at is None:
        batch = problem.sampler.draw_batch(stream, min(context.chunk, context.T - t))
        for i in range(len(batch)):
            terms = empirical_terms(batch.row(i), features, gamma, mode)
            try:
                if algorithm == Algorithm.TDC:
                    state = tdc_step(state, terms, gamma, threshold)
                elif algorithm == Algorithm.OFF_POLICY_TD:
                    state = off_policy_td_step(state, terms, threshold)
                elif algorithm == Algorithm.LSTD:
                    A_sum += terms.A_t
                    b_sum += terms.b_t
                else:
                    state = td_step(state, terms, threshold)
            except DivergenceError as exc:
                diverged_at = exc.step
                break
            t += 1
            if t == checkpoints[next_cp]:
                errors[next_cp] = problem.error(estimate(t))
                next_cp += 1
    if diverged_at is not None:
        logger.debug(f"Trial {trial} diverged at step {diverged_at}")
    return TrialTrace(
        trial=trial,
        steps=[int(s) for s in checkpoints],
        errors=[float(e) for e in errors],
        diverged_at=diverged_at,
    )


def summarize(traces: List[TrialTrace], checkpoints: np.ndarray) -> ExperimentSummary:
    """Mean and 2.5 / 97.5 percentiles over the finite trials at each checkpoint."""
    rows = []
    errors = np.array([trace.errors for trace in traces]).reshape(len(traces), len(checkpoints))
    for j, step in enumerate(checkpoints):
        column = errors[:, j]
        finite = column[np.isfinite(column)]
        if finite.size:
            mean = float(np.mean(finite))
            lo, hi = (float(x) for x in np.percentile(finite, [2.5, 97.5]))
        else:
            mean = lo = hi = float("nan")
        rows.append(SummaryRow(step=int(step), mean=mean, lo95=lo, hi95=hi, diverged=int(column.size - finite.size)))
    return ExperimentSummary(n_trials=len(traces), rows=rows)


class ExperimentService:
    """Resolve a config, prepare the problem, run trials and summarise."""

    def __init__(self):
        self.settings = get_settings()

    def resolve_workers(self, config: ExperimentConfig, workers: Optional[int]) -> int:
        requested = workers or config.workers or self.settings.DEFAULT_WORKERS or os.cpu_count() or 1
        return max(1, min(int(requested), config.n_trials))

    def prepare(self, config: ExperimentConfig) -> TrialContext:
        instance = load_instance(config)
        problem = build_problem(instance, config.algorithm)
        if config.algorithm == Algorithm.LSTD:
            decision = StepsizeDecision(mode=config.stepsize_mode.value)
        else:
            decision = plan_stepsizes(config.stepsize_plan(), problem.constants, config.T, config.delta)
        theta0 = self.starting_theta(config, problem)
        if theta0.shape != (instance.features.dim,):
            raise ValueError(f"theta0 must have length {instance.features.dim}")
        w0 = np.array(config.w0) if config.w0 is not None else None
        if w0 is not None and w0.shape != theta0.shape:
            raise ValueError(f"w0 must have length {instance.features.dim}")
        return TrialContext(
            problem=problem,
            algorithm=config.algorithm,
            decision=decision,
            theta0=theta0,
            w0=w0,
            T=config.T,
            checkpoints=config.checkpoint_grid(),
            seed=config.seed,
            divergence_threshold=self.settings.DIVERGENCE_THRESHOLD,
            chunk=self.settings.SAMPLE_CHUNK,
        )

    @staticmethod
    def starting_theta(config: ExperimentConfig, problem: EvaluationProblem) -> np.ndarray:
        """
        Resolve the first iterate shared by every trial.

        Raises:
            ValueError: start=fixed_point on an instance without a unique fixed point
        """
        if config.start == StartPoint.FIXED_POINT:
            if problem.theta_ref is None:
                raise ValueError(
                    f"start=fixed_point needs a unique fixed point; {problem.instance.name} has none"
                )
            return np.array(problem.theta_ref, dtype=np.float64)
        if config.theta0 is not None:
            return np.array(config.theta0, dtype=np.float64)
        return problem.instance.initial_theta()

    def run(self, config: ExperimentConfig, workers: Optional[int] = None) -> ExperimentResult:
        context = self.prepare(config)
        n_workers = self.resolve_workers(config, workers)
        logger.info(
            f"Running {config.n_trials} trial(s) of {config.algorithm.value} on "
            f"{context.problem.instance.name} for T={config.T} with {n_workers} worker(s)"
        )
        worker = partial(run_trial, context)
        if n_workers == 1:
            traces = [worker(trial) for trial in range(config.n_trials)]
        else:
            chunksize = max(1, config.n_trials // (4 * n_workers))
            with ProcessPoolExecutor(max_workers=n_workers) as executor:
                traces = list(executor.map(worker, range(config.n_trials), chunksize=chunksize))

        summary = summarize(traces, context.checkpoints)
        n_diverged = sum(trace.diverged_at is not None for trace in traces)
        if n_diverged == len(traces):
            logger.warning("All trials diverged")
        elif n_diverged:
            logger.info(f"{n_diverged} of {len(traces)} trials diverged")
        return ExperimentResult(traces=traces, summary=summary, manifest=self.manifest(config, context, n_diverged))

    def manifest(self, config: ExperimentConfig, context: TrialContext, n_diverged: int) -> Dict[str, str]:
        """Flat record of the resolved config, derived stepsizes and every fixed constant."""
        problem, decision, s = context.problem, context.decision, self.settings
        entries: Dict[str, str] = {"tdlab_version": __version__}
        entries.update({f"config.{key}": value for key, value in config_items(config)})
        entries.update(
            {
                "instance.name": problem.instance.name,
                "instance.sampling_mode": problem.mode.value,
                "instance.error_metric": problem.error.kind,
                "instance.theta0": _vector(context.theta0),
                "instance.theta0_source": _theta0_source(config),
                "averaging": _averaging(config.algorithm),
                "checkpoints": ",".join(str(int(x)) for x in context.checkpoints),
                "band_method": BAND_METHOD,
                "rng": "Philox keyed by SeedSequence(seed, spawn_key=(trial,)); one 4-word block per step",
                "divergence_threshold": repr(context.divergence_threshold),
                "constant.theorem1_c0": repr(decision.c0 if decision.c0 is not None else s.THEOREM1_C0),
                "constant.theorem1_margin": repr(s.THEOREM1_MARGIN),
                "constant.burn_in_c1": repr(s.BURN_IN_C1),
                "constant.corollary2_alpha_constant": repr(s.COROLLARY2_ALPHA_CONSTANT),
                "constant.step_condition_margin": repr(s.STEP_CONDITION_MARGIN),
                "constant.epsilon_c1_scale": repr(s.EPSILON_C1_SCALE),
                "result.n_trials": str(config.n_trials),
                "result.n_diverged": str(n_diverged),
            }
        )
        if problem.theta_ref is not None:
            entries["instance.theta_ref"] = _vector(problem.theta_ref)
        for key, value in decision.model_dump(exclude={"warnings"}).items():
            if value is not None:
                entries[f"stepsize.{key}"] = repr(value) if isinstance(value, float) else str(value)
        for i, message in enumerate(decision.warnings):
            entries[f"stepsize.warning.{i}"] = message
        if problem.constants is not None:
            for key, value in problem.constants.model_dump().items():
                if value is not None:
                    entries[f"instance.constant.{key}"] = repr(value)
        return entries


def _vector(v: np.ndarray) -> str:
    return ",".join(repr(float(x)) for x in v)


def _theta0_source(config: ExperimentConfig) -> str:
    if config.start == StartPoint.FIXED_POINT:
        return "fixed_point"
    return "config" if config.theta0 is not None else "instance_default"


def _averaging(algorithm: Algorithm) -> str:
    if algorithm in (Algorithm.AVERAGED_TD, Algorithm.OFF_POLICY_TD):
        return "uniform over iterates 1..t"
    return "none"


_experiment_service: Optional[ExperimentService] = None


def get_experiment_service() -> ExperimentService:
    global _experiment_service
    if _experiment_service is None:
        _experiment_service = ExperimentService()
    return _experiment_service


def run_experiment(config: ExperimentConfig, workers: Optional[int] = None) -> ExperimentResult:
    """Run every trial of ``config`` and summarise; output is identical for identical configs."""
    return get_experiment_service().run(config, workers)
