# tdlab/models/population.py
"""Population (expected) quantities for the on-policy and off-policy problems."""

import math

import numpy as np
from pydantic import Field, field_validator

from tdlab.models.base import ArrayModel, readonly_array
from tdlab.models.mdp import FeatureMap, InducedMrp


class OnPolicyPopulation(ArrayModel):
    """A = Phi^T D_mu (I - gamma P) Phi, b = Phi^T D_mu r and theta* = A^{-1} b."""

    A: np.ndarray
    b: np.ndarray
    theta_star: np.ndarray

    @field_validator("A", mode="before")
    @classmethod
    def _a_array(cls, v):
        return readonly_array(v, 2, "A")

    @field_validator("b", "theta_star", mode="before")
    @classmethod
    def _vectors(cls, v, info):
        return readonly_array(v, 1, info.field_name)


class OffPolicyPopulation(ArrayModel):
    """
    Off-policy population parameters under the behavior stationary law.

    When ``identifiable`` is False the solver was asked to carry on anyway:
    ``theta_tilde_star`` is then the minimum-norm least-squares solution and
    the spectral constants that do not exist are reported as 0 / inf.
    """

    gamma: float
    A_tilde: np.ndarray
    b_tilde: np.ndarray
    Pi: np.ndarray
    Sigma_tilde: np.ndarray
    theta_tilde_star: np.ndarray
    value_star: np.ndarray = Field(..., description="Phi theta_tilde_star, the value-space optimum")
    identifiable: bool = True
    lambda1: float
    lambda2: float
    lambda_Sigma: float
    kappa_tilde: float
    rho_max: float = Field(..., ge=1.0)
    mu_b: np.ndarray
    target: InducedMrp
    features: FeatureMap

    @field_validator("A_tilde", "Pi", "Sigma_tilde", mode="before")
    @classmethod
    def _matrices(cls, v, info):
        return readonly_array(v, 2, info.field_name)

    @field_validator("b_tilde", "theta_tilde_star", "value_star", "mu_b", mode="before")
    @classmethod
    def _vectors(cls, v, info):
        return readonly_array(v, 1, info.field_name)

    @property
    def dim(self) -> int:
        return self.A_tilde.shape[0]

    @property
    def sigma_tilde_norm(self) -> float:
        return float(np.linalg.norm(self.Sigma_tilde, 2))

    @property
    def theta_norm_sigma(self) -> float:
        """||theta_tilde*||_{Sigma_tilde}."""
        return math.sqrt(max(float(self.theta_tilde_star @ self.Sigma_tilde @ self.theta_tilde_star), 0.0))
