# tdlab/schemas/experiment.py
"""
Experiment Schemas

The experiment configuration (read from a flat key=value file) and the
records produced by a run: per-trial traces and the per-checkpoint summary.
"""

from enum import Enum
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from tdlab.core.config import get_settings
from tdlab.models.learner import StepsizeMode, StepsizePlan
from tdlab.schemas.instance import MinimaxSpec


class Algorithm(str, Enum):
    """Estimators a run can track."""

    TD = "td"
    AVERAGED_TD = "averaged_td"
    OFF_POLICY_TD = "off_policy_td"
    TDC = "tdc"
    LSTD = "lstd"


class StartPoint(str, Enum):
    """Where every trial's iterate starts."""

    DEFAULT = "default"
    FIXED_POINT = "fixed_point"


class ExperimentConfig(BaseModel):
    """
    Resolved configuration of one multi-trial experiment.

    ``instance`` is ``minimax``, ``baird`` or a path to an instance JSON
    file. ``checkpoints`` is ``log:<count>`` for a log-spaced grid from the
    first checkpoint to T, or an explicit comma-separated list ending at T.

    ``start=fixed_point`` starts every trial at the exact fixed point, so the
    reported error is sampling noise alone. ``default`` uses ``theta0`` when
    set and the instance's own starting point otherwise.
    """

    model_config = ConfigDict(extra="forbid")

    instance: str = Field(..., description="minimax | baird | path to instance JSON")
    minimax_states: int = Field(10, ge=3)
    minimax_dim: int = Field(3, gt=1)
    minimax_gamma: float = Field(0.2, gt=0.0, lt=1.0)
    minimax_epsilon: float = Field(0.01, gt=0.0)
    minimax_signs: Optional[str] = Field(None, description="e.g. +-; first half + when unset")
    minimax_enforce_epsilon: bool = True

    algorithm: Algorithm = Algorithm.AVERAGED_TD
    stepsize_mode: StepsizeMode = StepsizeMode.FIXED
    eta: Optional[float] = Field(None, ge=0.0)
    alpha: Optional[float] = Field(None, ge=0.0)
    beta: Optional[float] = Field(None, ge=0.0)
    c0: Optional[float] = Field(None, gt=0.0)
    delta: float = Field(0.05, gt=0.0, lt=1.0)
    theta_norm_estimate: Optional[float] = Field(None, gt=0.0)
    start: StartPoint = StartPoint.DEFAULT
    theta0: Optional[List[float]] = None
    w0: Optional[List[float]] = None

    T: int = Field(..., ge=1, description="Total steps per trial")
    n_trials: int = Field(1, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)
    checkpoints: str = "log:50"
    workers: Optional[int] = Field(None, ge=1)
    output: str = "results/run"

    @field_validator("instance", "checkpoints", mode="before")
    @classmethod
    def strip_text(cls, v):
        return v.strip() if isinstance(v, str) else v

    @field_validator("theta0", "w0", mode="before")
    @classmethod
    def split_vector(cls, v):
        if isinstance(v, str):
            return [float(x) for x in v.split(",") if x.strip()]
        return v

    @field_validator("algorithm", "stepsize_mode", "start", mode="before")
    @classmethod
    def lower_enum(cls, v):
        return v.strip().lower() if isinstance(v, str) else v

    @model_validator(mode="after")
    def validate_run(self) -> "ExperimentConfig":
        self.checkpoint_grid()
        if self.start == StartPoint.FIXED_POINT and self.theta0 is not None:
            raise ValueError("start=fixed_point and theta0 are mutually exclusive")
        if self.stepsize_mode == StepsizeMode.FIXED:
            if self.algorithm == Algorithm.TDC and (self.alpha is None or self.beta is None):
                raise ValueError("tdc with fixed stepsizes needs alpha and beta")
            if self.algorithm in (Algorithm.TD, Algorithm.AVERAGED_TD, Algorithm.OFF_POLICY_TD) and self.eta is None:
                raise ValueError(f"{self.algorithm.value} with fixed stepsizes needs eta")
        if self.stepsize_mode == StepsizeMode.THEOREM1 and self.algorithm not in (Algorithm.TD, Algorithm.AVERAGED_TD):
            raise ValueError("theorem1 stepsizes apply to td and averaged_td")
        if self.stepsize_mode == StepsizeMode.COROLLARY2 and self.algorithm != Algorithm.TDC:
            raise ValueError("corollary2 stepsizes apply to tdc")
        return self

    def checkpoint_grid(self) -> np.ndarray:
        """Strictly increasing checkpoint steps ending at T."""
        spec = self.checkpoints
        if spec.startswith("log:"):
            try:
                count = int(spec[4:])
            except ValueError:
                raise ValueError(f"Bad checkpoint spec {spec!r}") from None
            return log_checkpoints(self.T, count)
        try:
            grid = np.array([int(x) for x in spec.split(",") if x.strip()], dtype=np.int64)
        except ValueError:
            raise ValueError(f"Bad checkpoint list {spec!r}") from None
        if grid.size == 0 or grid[0] < 1 or np.any(np.diff(grid) <= 0) or grid[-1] != self.T:
            raise ValueError("Checkpoints must be strictly increasing, start at >= 1 and end at T")
        return grid

    def stepsize_plan(self) -> StepsizePlan:
        return StepsizePlan(
            mode=self.stepsize_mode,
            eta=self.eta,
            alpha=self.alpha,
            beta=self.beta,
            c0=self.c0,
            theta_norm_estimate=self.theta_norm_estimate,
        )

    def minimax_spec(self) -> MinimaxSpec:
        return MinimaxSpec(
            n_states=self.minimax_states,
            d=self.minimax_dim,
            gamma=self.minimax_gamma,
            epsilon=self.minimax_epsilon,
            signs=self.minimax_signs,
            enforce_epsilon_bound=self.minimax_enforce_epsilon,
        )


def log_checkpoints(T: int, count: int) -> np.ndarray:
    """
    About ``count`` log-spaced steps from the first checkpoint to T.

    Rounding can merge neighbours on short runs; the grid is deduplicated and
    always ends at T.
    """
    if count < 1:
        raise ValueError("Checkpoint count must be positive")
    first = min(get_settings().FIRST_CHECKPOINT, T)
    grid = np.unique(np.rint(np.geomspace(first, T, count)).astype(np.int64))
    grid[-1] = T
    return grid


class TrialTrace(BaseModel):
    """Error of one trial at each checkpoint; +inf after divergence."""

    trial: int = Field(..., ge=0)
    steps: List[int]
    errors: List[float]
    diverged_at: Optional[int] = None


class SummaryRow(BaseModel):
    step: int
    mean: float
    lo95: float
    hi95: float
    diverged: int = 0


class ExperimentSummary(BaseModel):
    """Across-trial mean and empirical 2.5 / 97.5 percentiles over finite trials."""

    n_trials: int
    rows: List[SummaryRow] = Field(default_factory=list)

    @property
    def steps(self) -> np.ndarray:
        return np.array([row.step for row in self.rows], dtype=np.int64)

    @property
    def means(self) -> np.ndarray:
        return np.array([row.mean for row in self.rows])


class ExperimentResult(BaseModel):
    traces: List[TrialTrace]
    summary: ExperimentSummary
    manifest: Dict[str, str] = Field(default_factory=dict)
