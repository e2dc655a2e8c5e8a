# tdlab/operations/mdp_core.py
"""
MDP Core Operations

Policy induction, stationary distributions, exact value functions, feature
validation and the mu-weighted geometry used throughout the package.
"""

import logging
import math
from typing import Optional

import numpy as np
import scipy.linalg
from pydantic import ValidationError

from tdlab.core.config import get_settings
from tdlab.core.exceptions import (
    FeatureDegeneracyError,
    InstanceError,
    SingularSystemError,
    StationaryDistributionError,
)
from tdlab.models.mdp import FeatureMap, InducedMrp, Policy, StationaryGeometry, TabularMdp

logger = logging.getLogger(__name__)


def induce_mrp(mdp: TabularMdp, policy: Policy) -> InducedMrp:
    """
    Fix a policy and collapse the MDP into a Markov reward process.

    Parameters:
        mdp: the finite MDP
        policy: pi(a | s), one row per state

    Returns:
        InducedMrp with P[s, s'] = sum_a pi(a|s) K(s'|s,a) and r[s] = sum_a pi(a|s) R(s,a)

    Raises:
        InstanceError: if the policy shape does not match the MDP, or the induced
            rows or rewards fall outside their ranges by more than STOCHASTIC_TOL

    Example:
        >>> mdp = TabularMdp(kernel=[[[0.0, 1.0]], [[1.0, 0.0]]], reward=[[1.0], [0.0]], gamma=0.5)
        >>> induce_mrp(mdp, Policy.uniform(2, 1)).P.tolist()
        [[0.0, 1.0], [1.0, 0.0]]
    """
    if policy.probs.shape != (mdp.n_states, mdp.n_actions):
        raise InstanceError(
            f"Policy shape {policy.probs.shape} does not match MDP ({mdp.n_states}, {mdp.n_actions})"
        )
    P = np.einsum("sa,sat->st", policy.probs, mdp.kernel)
    r = np.einsum("sa,sa->s", policy.probs, mdp.reward)
    tol = get_settings().STOCHASTIC_TOL
    overshoot = max(float(-r.min()), float(r.max()) - 1.0, 0.0)
    if overshoot > tol:
        raise InstanceError(f"Induced rewards leave [0, 1] by {overshoot:.3e}")
    try:
        # Only roundoff below tol is clipped.
        return InducedMrp(P=P, r=np.clip(r, 0.0, 1.0), gamma=mdp.gamma)
    except ValidationError as exc:
        raise InstanceError(f"Invalid induced MRP: {exc.errors()[0]['msg']}") from exc


def stationary_distribution(P: np.ndarray) -> np.ndarray:
    """
    Solve mu^T P = mu^T, sum(mu) = 1 as one overdetermined linear system.

    Parameters:
        P: row-stochastic matrix

    Returns:
        np.ndarray: the stationary distribution

    Raises:
        StationaryDistributionError: when the solution is not unique or fails the residual check

    Example:
        >>> stationary_distribution(np.array([[0.0, 1.0], [1.0, 0.0]])).tolist()
        [0.5, 0.5]
    """
    settings = get_settings()
    P = np.asarray(P, dtype=np.float64)
    n = P.shape[0]
    system = np.vstack([P.T - np.eye(n), np.ones((1, n))])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    mu, _, rank, _ = scipy.linalg.lstsq(system, rhs)
    if rank < n:
        raise StationaryDistributionError(
            f"Chain has no unique stationary distribution (system rank {rank} < {n})"
        )
    if mu.min() < -settings.STATIONARY_TOL:
        raise StationaryDistributionError(f"Stationary solve produced negative mass {mu.min():.3e}")
    mu = np.clip(mu, 0.0, None)
    mu = mu / mu.sum()
    residual = np.max(np.abs(mu @ P - mu))
    if residual > settings.STATIONARY_TOL:
        raise StationaryDistributionError(f"Stationary residual {residual:.3e} exceeds tolerance")
    return mu


def stationary_distribution_power(
    P: np.ndarray,
    tol: Optional[float] = None,
    max_sweeps: Optional[int] = None,
) -> np.ndarray:
    """
    Power iteration on the lazy chain (I + P) / 2.

    The lazy chain has the same stationary law and is aperiodic, so this
    converges on periodic chains too. Used to cross-check the direct solve.
    """
    settings = get_settings()
    tol = settings.POWER_ITERATION_TOL if tol is None else tol
    max_sweeps = settings.POWER_ITERATION_MAX_SWEEPS if max_sweeps is None else max_sweeps
    P = np.asarray(P, dtype=np.float64)
    lazy = 0.5 * (np.eye(P.shape[0]) + P)
    mu = np.full(P.shape[0], 1.0 / P.shape[0])
    for sweep in range(max_sweeps):
        nxt = mu @ lazy
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - mu)) <= tol:
            logger.debug(f"Power iteration converged after {sweep + 1} sweeps")
            return nxt
        mu = nxt
    raise StationaryDistributionError(f"Power iteration did not converge in {max_sweeps} sweeps")


def exact_value_function(mrp: InducedMrp) -> np.ndarray:
    """
    Solve the Bellman equation (I - gamma P) V = r.

    Raises:
        SingularSystemError: if the solve fails or the residual check does not pass
    """
    n = mrp.n_states
    system = np.eye(n) - mrp.gamma * mrp.P
    try:
        V = scipy.linalg.solve(system, mrp.r)
    except scipy.linalg.LinAlgError as exc:
        raise SingularSystemError(f"Bellman system is singular: {exc}") from exc
    residual = np.max(np.abs(system @ V - mrp.r), initial=0.0)
    if residual > 1e-10:
        raise SingularSystemError(f"Bellman residual {residual:.3e} exceeds 1e-10")
    # Entries are in [0, 1/(1-gamma)] up to roundoff.
    return np.clip(V, 0.0, 1.0 / (1.0 - mrp.gamma))


def validate_features(phi: np.ndarray, enforce_assumption: bool = True) -> FeatureMap:
    """Build a FeatureMap, turning validation failures into FeatureDegeneracyError."""
    try:
        return FeatureMap(phi=phi, enforce_assumption=enforce_assumption)
    except ValidationError as exc:
        raise FeatureDegeneracyError(f"Invalid feature map: {exc.errors()[0]['msg']}") from exc


def build_geometry(mrp: InducedMrp, features: FeatureMap) -> StationaryGeometry:
    """
    Stationary distribution of the chain and the feature covariance under it.

    Raises:
        StationaryDistributionError: propagated from the stationary solve
        FeatureDegeneracyError: if Sigma is not positive definite under mu
    """
    if features.n_states != mrp.n_states:
        raise InstanceError(
            f"Feature map has {features.n_states} rows but the chain has {mrp.n_states} states"
        )
    mu = stationary_distribution(mrp.P)
    phi = features.phi
    Sigma = phi.T @ (mu[:, None] * phi)
    Sigma = 0.5 * (Sigma + Sigma.T)
    eigenvalues = scipy.linalg.eigvalsh(Sigma)
    lam_min, lam_max = float(eigenvalues[0]), float(eigenvalues[-1])
    if lam_min <= 0.0 or lam_min <= 1e-14 * max(lam_max, 1.0):
        raise FeatureDegeneracyError(
            f"Sigma is not positive definite under mu (lambda_min={lam_min:.3e})"
        )
    if features.enforce_assumption and lam_max > 1.0 + 1e-10:
        raise FeatureDegeneracyError(f"||Sigma|| = {lam_max:.6f} exceeds 1 for bounded features")
    return StationaryGeometry(
        mu=mu,
        Sigma=Sigma,
        lambda_min_Sigma=lam_min,
        lambda_max_Sigma=lam_max,
        kappa=lam_max / lam_min,
    )


def sigma_norm(v: np.ndarray, geometry: StationaryGeometry) -> float:
    """
    ||v||_Sigma = sqrt(v^T Sigma v).

    Example:
        >>> g = StationaryGeometry(mu=[0.5, 0.5], Sigma=np.eye(2), lambda_min_Sigma=1, lambda_max_Sigma=1, kappa=1)
        >>> sigma_norm(np.array([3.0, 4.0]), g)
        5.0
    """
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (geometry.dim,):
        raise ValueError(f"Vector of shape {v.shape} does not match Sigma of dimension {geometry.dim}")
    return math.sqrt(max(float(v @ geometry.Sigma @ v), 0.0))


def weighted_norm(v: np.ndarray, mu: np.ndarray) -> float:
    """sqrt(sum_s mu(s) v(s)^2), the D_mu norm of a value vector."""
    v = np.asarray(v, dtype=np.float64)
    return math.sqrt(float(np.dot(mu, v * v)))


def value_error(
    theta: np.ndarray,
    theta_ref: np.ndarray,
    features: FeatureMap,
    geometry: StationaryGeometry,
) -> float:
    """||Phi theta - Phi theta_ref||_{D_mu}; equals ||theta - theta_ref||_Sigma."""
    return weighted_norm(features.phi @ (np.asarray(theta) - np.asarray(theta_ref)), geometry.mu)


def feature_leverage(features: FeatureMap, geometry: StationaryGeometry) -> float:
    """max_s phi(s)^T Sigma^{-1} phi(s)."""
    factor = scipy.linalg.cho_factor(geometry.Sigma)
    solved = scipy.linalg.cho_solve(factor, features.phi.T)
    return float(np.max(np.einsum("ds,sd->s", solved, features.phi)))
