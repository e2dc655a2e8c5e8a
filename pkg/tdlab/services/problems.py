# tdlab/services/problems.py
"""
Problem Preparation

Turns an instance plus the algorithm being run into everything a trial
needs: the sampler, the error metric against the ground truth, and the
population quantities the stepsize rules read. Closed-form ground truth is
cross-checked against the generic solvers before any trial starts.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from tdlab.core.exceptions import InstanceError
from tdlab.models.instance import PolicyEvaluationInstance
from tdlab.models.mdp import StationaryGeometry
from tdlab.models.population import OffPolicyPopulation, OnPolicyPopulation
from tdlab.models.samples import SamplingMode
from tdlab.operations.exact_solvers import off_policy_population, on_policy_population
from tdlab.operations.mdp_core import build_geometry, induce_mrp, weighted_norm
from tdlab.operations.samplers import OffPolicySampler, OnPolicySampler
from tdlab.operations.stepsizes import off_policy_constants, on_policy_constants
from tdlab.schemas.experiment import Algorithm, ExperimentConfig
from tdlab.schemas.reports import InstanceConstants
from tdlab.services.instances import build_baird, build_minimax, load_instance_file

logger = logging.getLogger(__name__)


class SigmaNormError:
    """theta -> ||theta - theta_ref||_Sigma."""

    kind = "sigma_norm"

    def __init__(self, theta_ref: np.ndarray, Sigma: np.ndarray):
        self.theta_ref = np.asarray(theta_ref, dtype=np.float64)
        self.Sigma = np.asarray(Sigma, dtype=np.float64)

    def __call__(self, theta: np.ndarray) -> float:
        diff = theta - self.theta_ref
        return float(np.sqrt(max(float(diff @ self.Sigma @ diff), 0.0)))


class ValueSpaceError:
    """theta -> ||Phi theta - v_ref||_{D_mu}; used when the fixed point is not unique."""

    kind = "value_space"

    def __init__(self, phi: np.ndarray, mu: np.ndarray, v_ref: np.ndarray):
        self.phi = np.asarray(phi, dtype=np.float64)
        self.mu = np.asarray(mu, dtype=np.float64)
        self.v_ref = np.asarray(v_ref, dtype=np.float64)

    def __call__(self, theta: np.ndarray) -> float:
        return weighted_norm(self.phi @ theta - self.v_ref, self.mu)


@dataclass(frozen=True)
class EvaluationProblem:
    instance: PolicyEvaluationInstance
    mode: SamplingMode
    sampler: Union[OnPolicySampler, OffPolicySampler]
    error: Union[SigmaNormError, ValueSpaceError]
    constants: Optional[InstanceConstants] = None
    geometry: Optional[StationaryGeometry] = None
    on_pop: Optional[OnPolicyPopulation] = None
    off_pop: Optional[OffPolicyPopulation] = None

    @property
    def gamma(self) -> float:
        return self.instance.mdp.gamma

    @property
    def theta_ref(self) -> Optional[np.ndarray]:
        return getattr(self.error, "theta_ref", None)


def load_instance(config: ExperimentConfig) -> PolicyEvaluationInstance:
    """Resolve the ``instance`` key of a config."""
    name = config.instance.lower()
    if name == "minimax":
        return build_minimax(config.minimax_spec())
    if name == "baird":
        return build_baird()
    return load_instance_file(Path(config.instance))


def sampling_mode(instance: PolicyEvaluationInstance, algorithm: Algorithm) -> SamplingMode:
    if algorithm in (Algorithm.TD, Algorithm.AVERAGED_TD):
        return SamplingMode.ON_POLICY
    if algorithm in (Algorithm.OFF_POLICY_TD, Algorithm.TDC):
        return SamplingMode.OFF_POLICY
    return SamplingMode.ON_POLICY if instance.is_on_policy else SamplingMode.OFF_POLICY


def build_problem(instance: PolicyEvaluationInstance, algorithm: Algorithm) -> EvaluationProblem:
    """
    Prepare sampler, ground truth and constants for ``algorithm`` on ``instance``.

    Raises:
        InstanceError: solver failures, or closed-form ground truth disagreeing with the solvers
    """
    mode = sampling_mode(instance, algorithm)
    if mode == SamplingMode.ON_POLICY:
        return _on_policy_problem(instance)
    return _off_policy_problem(instance)


def _on_policy_problem(instance: PolicyEvaluationInstance) -> EvaluationProblem:
    mrp = induce_mrp(instance.mdp, instance.target)
    geometry = build_geometry(mrp, instance.features)
    on_pop = on_policy_population(mrp, instance.features, geometry)
    theta_ref = on_pop.theta_star
    exact = instance.exact
    if exact is not None and exact.theta_star is not None:
        gap = float(np.max(np.abs(exact.theta_star - on_pop.theta_star)))
        mu_gap = float(np.max(np.abs(exact.mu - geometry.mu)))
        if gap > 1e-9 or mu_gap > 1e-10:
            raise InstanceError(
                f"Closed-form ground truth disagrees with the solvers (theta gap {gap:.3e}, mu gap {mu_gap:.3e})"
            )
        logger.info(f"Closed-form theta* matches the LSTD solve (max gap {gap:.3e})")
        theta_ref = exact.theta_star
    return EvaluationProblem(
        instance=instance,
        mode=SamplingMode.ON_POLICY,
        sampler=OnPolicySampler(mrp, geometry.mu),
        error=SigmaNormError(theta_ref, geometry.Sigma),
        constants=on_policy_constants(instance.features, geometry, on_pop, mrp.gamma),
        geometry=geometry,
        on_pop=on_pop,
    )


def _off_policy_problem(instance: PolicyEvaluationInstance) -> EvaluationProblem:
    off_pop = off_policy_population(
        instance.mdp, instance.target, instance.behavior, instance.features, strict=False
    )
    if off_pop.identifiable:
        error = SigmaNormError(off_pop.theta_tilde_star, off_pop.Sigma_tilde)
        constants = off_policy_constants(off_pop)
    else:
        exact = instance.exact
        v_ref = exact.v_star if exact is not None and exact.v_star is not None else off_pop.value_star
        error = ValueSpaceError(instance.features.phi, off_pop.mu_b, v_ref)
        constants = None
        logger.info(f"{instance.name}: fixed point not unique, reporting value-space error")
    return EvaluationProblem(
        instance=instance,
        mode=SamplingMode.OFF_POLICY,
        sampler=OffPolicySampler(instance.mdp, instance.target, instance.behavior, off_pop.mu_b),
        error=error,
        constants=constants,
        off_pop=off_pop,
    )
