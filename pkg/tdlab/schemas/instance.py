# tdlab/schemas/instance.py
"""
Instance Schemas

Validation for the minimax lower-bound family parameters and for the JSON
instance file format used to exchange instances with other tools.
"""

import logging
from typing import List, Literal, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from tdlab.core.config import get_settings

logger = logging.getLogger(__name__)

Sign = Literal["+", "-"]


class MinimaxSpec(BaseModel):
    """
    Parameters of the minimax lower-bound MRP family.

    The first d-1 states are "low" states with self-loop probability
    q_i = gamma +/- (1-gamma)^2 epsilon; the remaining |S|-d+1 states share
    reward 1 and the last feature coordinate.
    """

    n_states: int = Field(10, description="Number of states |S|, at least d + 1")
    d: int = Field(3, gt=1, description="Feature dimension, odd")
    gamma: float = Field(0.2, gt=0.0, lt=1.0)
    epsilon: float = Field(0.01, gt=0.0)
    signs: Optional[List[Sign]] = Field(None, description="Sign of each low state; balanced")
    enforce_epsilon_bound: bool = True
    c1: Optional[float] = Field(None, gt=0.0, description="Admissibility constant; 0.1 gamma/(1-gamma) when unset")

    @field_validator("signs", mode="before")
    @classmethod
    def split_sign_string(cls, v):
        if isinstance(v, str):
            return list(v.replace(",", "").replace(" ", ""))
        return v

    @model_validator(mode="after")
    def validate_family(self) -> "MinimaxSpec":
        if self.d % 2 == 0:
            raise ValueError(f"d must be odd, got {self.d}")
        if self.n_states < self.d + 1:
            raise ValueError(f"n_states must be at least d + 1 = {self.d + 1}, got {self.n_states}")
        if self.signs is None:
            half = (self.d - 1) // 2
            self.signs = ["+"] * half + ["-"] * half
        if len(self.signs) != self.d - 1:
            raise ValueError(f"Need {self.d - 1} signs, got {len(self.signs)}")
        if self.signs.count("+") != self.signs.count("-"):
            raise ValueError("Sign pattern must contain equally many + and -")
        if not (0.0 < self.q_minus and self.q_plus < 1.0):
            raise ValueError(f"q must lie in (0, 1), got q- = {self.q_minus}, q+ = {self.q_plus}")
        if self.gamma <= 0.5:
            logger.warning(f"gamma={self.gamma} is outside the lower-bound regime (1/2, 1)")
        return self

    @property
    def q_plus(self) -> float:
        return self.gamma + (1.0 - self.gamma) ** 2 * self.epsilon

    @property
    def q_minus(self) -> float:
        return self.gamma - (1.0 - self.gamma) ** 2 * self.epsilon

    @property
    def epsilon_c1(self) -> float:
        if self.c1 is not None:
            return self.c1
        return get_settings().EPSILON_C1_SCALE * self.gamma / (1.0 - self.gamma)


class InstanceFile(BaseModel):
    """On-disk JSON form of a policy-evaluation instance."""

    name: str = "external"
    gamma: float = Field(..., gt=0.0, lt=1.0)
    kernel: List[List[List[float]]] = Field(..., description="kernel[s][a][s']")
    reward: List[List[float]] = Field(..., description="reward[s][a] in [0, 1]")
    target: List[List[float]] = Field(..., description="Target policy pi[s][a]")
    behavior: Optional[List[List[float]]] = Field(None, description="Behavior policy; target when omitted")
    features: List[List[float]] = Field(..., description="Feature rows phi[s]")
    enforce_assumption: bool = True
    theta0: Optional[List[float]] = None
