# tdlab/models/instance.py
from typing import Optional

import numpy as np
from pydantic import field_validator, model_validator

from tdlab.models.base import ArrayModel, readonly_array
from tdlab.models.mdp import FeatureMap, Policy, TabularMdp


class ExactSolution(ArrayModel):
    """Closed-form ground truth attached to a constructed instance."""

    mu: np.ndarray
    theta_star: Optional[np.ndarray] = None
    v_star: Optional[np.ndarray] = None

    @field_validator("mu", "theta_star", "v_star", mode="before")
    @classmethod
    def _vectors(cls, v, info):
        return None if v is None else readonly_array(v, 1, info.field_name)


class PolicyEvaluationInstance(ArrayModel):
    """
    An MDP with a target policy to evaluate, the behavior policy that
    generates data (equal to the target for on-policy problems) and a
    feature map.
    """

    name: str
    mdp: TabularMdp
    target: Policy
    behavior: Policy
    features: FeatureMap
    exact: Optional[ExactSolution] = None
    theta0: Optional[np.ndarray] = None

    @field_validator("theta0", mode="before")
    @classmethod
    def _theta0(cls, v):
        return None if v is None else readonly_array(v, 1, "theta0")

    @model_validator(mode="after")
    def _check_shapes(self) -> "PolicyEvaluationInstance":
        shape = (self.mdp.n_states, self.mdp.n_actions)
        if self.target.probs.shape != shape or self.behavior.probs.shape != shape:
            raise ValueError(f"Policies must have shape {shape}")
        if self.features.n_states != self.mdp.n_states:
            raise ValueError(f"Feature map has {self.features.n_states} rows for {self.mdp.n_states} states")
        if self.theta0 is not None and self.theta0.shape != (self.features.dim,):
            raise ValueError(f"theta0 must have length {self.features.dim}")
        return self

    @property
    def is_on_policy(self) -> bool:
        return bool(np.array_equal(self.target.probs, self.behavior.probs))

    def initial_theta(self) -> np.ndarray:
        return np.zeros(self.features.dim) if self.theta0 is None else np.array(self.theta0)
