# tdlab/models/learner.py
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator


@dataclass(frozen=True, slots=True)
class TdState:
    """TD iterate, running sum of iterates for averaging, step count and stepsize."""

    theta: np.ndarray
    theta_sum: np.ndarray
    t: int
    eta: float

    @classmethod
    def start(cls, theta0: np.ndarray, eta: float) -> "TdState":
        theta0 = np.array(theta0, dtype=np.float64)
        return cls(theta=theta0, theta_sum=np.zeros_like(theta0), t=0, eta=float(eta))


@dataclass(frozen=True, slots=True)
class TdcState:
    """Two-timescale TDC iterate (theta, w) with fixed stepsizes alpha, beta."""

    theta: np.ndarray
    w: np.ndarray
    t: int
    alpha: float
    beta: float

    @classmethod
    def start(
        cls,
        theta0: np.ndarray,
        alpha: float,
        beta: float,
        w0: Optional[np.ndarray] = None,
    ) -> "TdcState":
        theta0 = np.array(theta0, dtype=np.float64)
        w = np.zeros_like(theta0) if w0 is None else np.array(w0, dtype=np.float64)
        return cls(theta=theta0, w=w, t=0, alpha=float(alpha), beta=float(beta))


class StepsizeMode(str, Enum):
    FIXED = "fixed"
    THEOREM1 = "theorem1"
    COROLLARY2 = "corollary2"


class StepsizePlan(BaseModel):
    """
    How constant stepsizes are chosen for a run.

    ``fixed`` passes eta / alpha / beta through, ``theorem1`` derives eta for
    averaged TD from the instance constants, ``corollary2`` derives the TDC
    pair (alpha, beta).
    """

    mode: StepsizeMode = StepsizeMode.FIXED
    eta: Optional[float] = Field(None, ge=0.0)
    alpha: Optional[float] = Field(None, ge=0.0)
    beta: Optional[float] = Field(None, ge=0.0)
    c0: Optional[float] = Field(None, gt=0.0, description="c0 of the theorem1 rule; settings default when unset")
    theta_norm_estimate: Optional[float] = Field(
        None, gt=0.0, description="Stand-in for ||theta_tilde*|| when it is unavailable"
    )

    @model_validator(mode="after")
    def _fixed_needs_values(self) -> "StepsizePlan":
        if self.mode == StepsizeMode.FIXED and self.eta is None and (self.alpha is None or self.beta is None):
            raise ValueError("Fixed stepsize mode needs eta, or both alpha and beta")
        return self
