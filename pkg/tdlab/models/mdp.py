# tdlab/models/mdp.py
"""
MDP Domain Types

Finite MDPs, policies, policy-induced Markov reward processes, feature maps
and the stationary geometry (mu, Sigma) that the TD analysis is phrased in.
All types are frozen after validation and safe to share between trial
workers.
"""

from typing import Sequence

import numpy as np
from pydantic import Field, field_validator, model_validator

from tdlab.core.config import get_settings
from tdlab.models.base import ArrayModel, readonly_array


def _check_stochastic_rows(matrix: np.ndarray, name: str) -> None:
    tol = get_settings().STOCHASTIC_TOL
    if np.any(matrix < 0):
        raise ValueError(f"{name} has negative entries")
    deviation = np.max(np.abs(matrix.sum(axis=-1) - 1.0))
    if deviation > tol:
        raise ValueError(f"{name} rows must sum to 1 (max deviation {deviation:.3e})")


def _check_rewards(reward: np.ndarray) -> None:
    if np.any(reward < 0) or np.any(reward > 1):
        raise ValueError("Rewards must lie in [0, 1]")


class TabularMdp(ArrayModel):
    """
    Finite discounted MDP.

    kernel[s, a, s'] is the probability of moving to s' after taking a in s;
    reward[s, a] is the expected one-step reward.
    """

    kernel: np.ndarray
    reward: np.ndarray
    gamma: float = Field(..., gt=0.0, lt=1.0, description="Discount factor")

    @field_validator("kernel", mode="before")
    @classmethod
    def _kernel_array(cls, v):
        return readonly_array(v, 3, "kernel")

    @field_validator("reward", mode="before")
    @classmethod
    def _reward_array(cls, v):
        return readonly_array(v, 2, "reward")

    @model_validator(mode="after")
    def _check_shapes(self) -> "TabularMdp":
        n, a, n_next = self.kernel.shape
        if n != n_next or n == 0 or a == 0:
            raise ValueError(f"kernel must have shape (S, A, S), got {self.kernel.shape}")
        if self.reward.shape != (n, a):
            raise ValueError(f"reward must have shape ({n}, {a}), got {self.reward.shape}")
        _check_stochastic_rows(self.kernel, "kernel")
        _check_rewards(self.reward)
        return self

    @property
    def n_states(self) -> int:
        return self.kernel.shape[0]

    @property
    def n_actions(self) -> int:
        return self.kernel.shape[1]


class Policy(ArrayModel):
    """Stationary stochastic policy, probs[s, a] = pi(a | s)."""

    probs: np.ndarray

    @field_validator("probs", mode="before")
    @classmethod
    def _probs_array(cls, v):
        return readonly_array(v, 2, "policy")

    @model_validator(mode="after")
    def _check_rows(self) -> "Policy":
        _check_stochastic_rows(self.probs, "policy")
        return self

    @property
    def n_states(self) -> int:
        return self.probs.shape[0]

    @property
    def n_actions(self) -> int:
        return self.probs.shape[1]

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> "Policy":
        return cls(probs=np.full((n_states, n_actions), 1.0 / n_actions))

    @classmethod
    def deterministic(cls, actions: Sequence[int], n_actions: int) -> "Policy":
        probs = np.zeros((len(actions), n_actions))
        probs[np.arange(len(actions)), np.asarray(actions, dtype=int)] = 1.0
        return cls(probs=probs)


class InducedMrp(ArrayModel):
    """Markov reward process P^pi, r^pi obtained by fixing a policy."""

    P: np.ndarray
    r: np.ndarray
    gamma: float = Field(..., gt=0.0, lt=1.0)

    @field_validator("P", mode="before")
    @classmethod
    def _p_array(cls, v):
        return readonly_array(v, 2, "P")

    @field_validator("r", mode="before")
    @classmethod
    def _r_array(cls, v):
        return readonly_array(v, 1, "r")

    @model_validator(mode="after")
    def _check(self) -> "InducedMrp":
        n = self.P.shape[0]
        if self.P.shape != (n, n) or self.r.shape != (n,):
            raise ValueError(f"Inconsistent MRP shapes P={self.P.shape}, r={self.r.shape}")
        _check_stochastic_rows(self.P, "P")
        _check_rewards(self.r)
        return self

    @property
    def n_states(self) -> int:
        return self.P.shape[0]


class FeatureMap(ArrayModel):
    """
    Feature matrix Phi with one row phi(s) per state.

    With ``enforce_assumption`` (the default) the columns must be linearly
    independent, d <= |S| and every row has Euclidean norm at most one.
    Baird's counterexample switches the check off.
    """

    phi: np.ndarray
    enforce_assumption: bool = True

    @field_validator("phi", mode="before")
    @classmethod
    def _phi_array(cls, v):
        return readonly_array(v, 2, "phi")

    @model_validator(mode="after")
    def _check_assumption(self) -> "FeatureMap":
        if not self.enforce_assumption:
            return self
        n, d = self.phi.shape
        if d == 0 or d > n:
            raise ValueError(f"Feature dimension d={d} must satisfy 1 <= d <= |S|={n}")
        sv_min = self.smallest_singular_value
        if sv_min <= get_settings().FEATURE_SV_TOL:
            raise ValueError(f"Feature columns are linearly dependent (sigma_min={sv_min:.3e})")
        if self.max_row_norm > 1.0 + 1e-12:
            raise ValueError(f"Feature rows must have norm <= 1 (max {self.max_row_norm:.6f})")
        return self

    @property
    def n_states(self) -> int:
        return self.phi.shape[0]

    @property
    def dim(self) -> int:
        return self.phi.shape[1]

    @property
    def max_row_norm(self) -> float:
        return float(np.max(np.linalg.norm(self.phi, axis=1)))

    @property
    def smallest_singular_value(self) -> float:
        return float(np.linalg.svd(self.phi, compute_uv=False).min())


class StationaryGeometry(ArrayModel):
    """Stationary distribution mu and the feature covariance Sigma = Phi^T D_mu Phi."""

    mu: np.ndarray
    Sigma: np.ndarray
    lambda_min_Sigma: float = Field(..., gt=0.0)
    lambda_max_Sigma: float = Field(..., gt=0.0)
    kappa: float = Field(..., ge=1.0)

    @field_validator("mu", mode="before")
    @classmethod
    def _mu_array(cls, v):
        return readonly_array(v, 1, "mu")

    @field_validator("Sigma", mode="before")
    @classmethod
    def _sigma_array(cls, v):
        return readonly_array(v, 2, "Sigma")

    @model_validator(mode="after")
    def _check(self) -> "StationaryGeometry":
        if np.any(self.mu < 0) or abs(self.mu.sum() - 1.0) > 1e-12:
            raise ValueError("mu must be a probability vector")
        if np.max(np.abs(self.Sigma - self.Sigma.T), initial=0.0) > 1e-12:
            raise ValueError("Sigma must be symmetric")
        if self.lambda_max_Sigma < self.lambda_min_Sigma:
            raise ValueError("lambda_max_Sigma must not be below lambda_min_Sigma")
        return self

    @property
    def D_mu(self) -> np.ndarray:
        return np.diag(self.mu)

    @property
    def dim(self) -> int:
        return self.Sigma.shape[0]
