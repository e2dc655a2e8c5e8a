# tdlab/services/instances.py
"""
Instances Service

Builders for the two hand-constructed instances (the minimax lower-bound
family and Baird's counterexample) and JSON import / export of arbitrary
instances.
"""

import logging
import math
from pathlib import Path
from typing import Union

import numpy as np
from pydantic import ValidationError

from tdlab.core.exceptions import InstanceError
from tdlab.models.instance import ExactSolution, PolicyEvaluationInstance
from tdlab.models.mdp import FeatureMap, Policy, TabularMdp
from tdlab.schemas.instance import InstanceFile, MinimaxSpec

logger = logging.getLogger(__name__)

BAIRD_THETA0 = (1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 10.0, 1.0)


# ------------------------------------------------------------------------------
# Minimax lower-bound family
# ------------------------------------------------------------------------------
def minimax_kernel(spec: MinimaxSpec) -> np.ndarray:
    """Transition matrix of the hard MRP; states 0..d-2 are the low states."""
    n, d, gamma = spec.n_states, spec.d, spec.gamma
    low = d - 1
    high = n - low
    q = minimax_q(spec)
    P = np.zeros((n, n))
    P[np.arange(low), np.arange(low)] = q
    P[:low, low:] = ((1.0 - q) / high)[:, None]
    P[low:, low:] = gamma / high
    P[low:, :low] = ((1.0 - q) / low)[None, :]
    return P


def minimax_q(spec: MinimaxSpec) -> np.ndarray:
    return np.array([spec.q_plus if sign == "+" else spec.q_minus for sign in spec.signs])


def minimax_exact(spec: MinimaxSpec) -> ExactSolution:
    """Closed-form stationary distribution and TD fixed point of the hard MRP."""
    n, d, gamma = spec.n_states, spec.d, spec.gamma
    low = d - 1
    q = minimax_q(spec)
    mu = np.concatenate([np.full(low, 1.0 / (2 * low)), np.full(n - low, 1.0 / (2 * (n - low)))])
    theta_d = 1.0 / (1.0 - gamma**2 - np.sum(gamma**2 * (1.0 - q) ** 2 / (low * (1.0 - gamma * q))))
    theta = np.append(gamma * (1.0 - q) / (1.0 - gamma * q) * theta_d, theta_d)
    return ExactSolution(mu=mu, theta_star=theta)


def build_minimax(spec: MinimaxSpec) -> PolicyEvaluationInstance:
    """
    Build one member of the minimax lower-bound family.

    Raises:
        InstanceError: kernel rows not stochastic, or epsilon outside the admissible range
    """
    n, d = spec.n_states, spec.d
    P = minimax_kernel(spec)
    deviation = float(np.max(np.abs(P.sum(axis=1) - 1.0)))
    if deviation > 1e-12:
        raise InstanceError(f"Minimax kernel rows deviate from 1 by {deviation:.3e}")

    exact = minimax_exact(spec)
    # phi(s) = e_{min(s, d-1)}: every high state shares the last coordinate.
    phi = np.zeros((n, d))
    phi[np.arange(n), np.minimum(np.arange(n), d - 1)] = 1.0
    Sigma = phi.T @ (exact.mu[:, None] * phi)
    theta_norm = math.sqrt(float(exact.theta_star @ Sigma @ exact.theta_star))
    bound = spec.epsilon_c1 * max(1.0, theta_norm)
    if spec.epsilon >= bound:
        message = f"epsilon={spec.epsilon} is not below c1 max(1, ||theta*||_Sigma) = {bound:.4g}"
        if spec.enforce_epsilon_bound:
            raise InstanceError(message)
        logger.warning(f"{message}; continuing because the bound is not enforced")

    reward = (np.arange(n) >= d - 1).astype(float)[:, None]
    try:
        return PolicyEvaluationInstance(
            name=f"minimax(S={n},d={d},gamma={spec.gamma},epsilon={spec.epsilon})",
            mdp=TabularMdp(kernel=P[:, None, :], reward=reward, gamma=spec.gamma),
            target=Policy.uniform(n, 1),
            behavior=Policy.uniform(n, 1),
            features=FeatureMap(phi=phi),
            exact=exact,
        )
    except ValidationError as exc:
        raise InstanceError(f"Invalid minimax instance: {exc}") from exc


# ------------------------------------------------------------------------------
# Baird's counterexample
# ------------------------------------------------------------------------------
def build_baird() -> PolicyEvaluationInstance:
    """
    Baird's 7-state, 2-action counterexample.

    Action 1 ("solid") jumps to state 7; action 0 ("dashed") moves uniformly
    to states 1..6. The target always takes action 1, the behavior takes it
    with probability 1/7. Rewards are zero, so V* = 0. The 8 features have
    rows of norm sqrt(5) and are kept unnormalised, so the bounded-feature
    check is switched off.
    """
    n = 7
    kernel = np.zeros((n, 2, n))
    kernel[:, 0, :6] = 1.0 / 6.0
    kernel[:, 1, 6] = 1.0
    phi = np.zeros((n, 8))
    phi[np.arange(6), np.arange(6)] = 2.0
    phi[:6, 7] = 1.0
    phi[6, 6] = 1.0
    phi[6, 7] = 2.0
    return PolicyEvaluationInstance(
        name="baird",
        mdp=TabularMdp(kernel=kernel, reward=np.zeros((n, 2)), gamma=0.9),
        target=Policy(probs=np.tile([0.0, 1.0], (n, 1))),
        behavior=Policy(probs=np.tile([6.0 / 7.0, 1.0 / 7.0], (n, 1))),
        features=FeatureMap(phi=phi, enforce_assumption=False),
        exact=ExactSolution(mu=np.full(n, 1.0 / n), v_star=np.zeros(n)),
        theta0=np.array(BAIRD_THETA0),
    )


# ------------------------------------------------------------------------------
# JSON instance files
# ------------------------------------------------------------------------------
def load_instance_file(path: Union[str, Path]) -> PolicyEvaluationInstance:
    """
    Read an instance from JSON.

    Raises:
        OSError: the file cannot be read
        InstanceError: the content is not a valid instance
    """
    text = Path(path).read_text()
    try:
        data = InstanceFile.model_validate_json(text)
        return PolicyEvaluationInstance(
            name=data.name,
            mdp=TabularMdp(kernel=data.kernel, reward=data.reward, gamma=data.gamma),
            target=Policy(probs=data.target),
            behavior=Policy(probs=data.behavior if data.behavior is not None else data.target),
            features=FeatureMap(phi=data.features, enforce_assumption=data.enforce_assumption),
            theta0=data.theta0,
        )
    except ValidationError as exc:
        raise InstanceError(f"Invalid instance file {path}: {exc}") from exc


def export_instance(instance: PolicyEvaluationInstance, path: Union[str, Path]) -> Path:
    """Write ``instance`` as JSON readable by load_instance_file."""
    payload = InstanceFile(
        name=instance.name,
        gamma=instance.mdp.gamma,
        kernel=instance.mdp.kernel.tolist(),
        reward=instance.mdp.reward.tolist(),
        target=instance.target.probs.tolist(),
        behavior=None if instance.is_on_policy else instance.behavior.probs.tolist(),
        features=instance.features.phi.tolist(),
        enforce_assumption=instance.features.enforce_assumption,
        theta0=None if instance.theta0 is None else instance.theta0.tolist(),
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(payload.model_dump_json(indent=2))
    logger.info(f"Exported instance {instance.name} to {path}")
    return path
