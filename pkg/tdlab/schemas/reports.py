# tdlab/schemas/reports.py
"""
Report Schemas

Plain result records returned by diagnostics: the Psi contraction
certificate, the TD contraction check, spectral facts about an instance,
stepsize decisions and convergence-rate fits. They serialise directly into
the run manifest and the ``solve`` output.
"""

from typing import Dict, List, Optional

from pydantic import BaseModel, Field


class ContractionCertificate(BaseModel):
    """Spectral norm of Psi against the contraction bound 1 - alpha * lambda1 / 2."""

    alpha: float
    beta: float
    varkappa: float
    norm: float = Field(..., description="||Psi||_2 from a dense SVD")
    bound: float = Field(..., description="1 - alpha * lambda1 / 2")
    block_bound: float = Field(..., description="Spectral norm of the 2x2 matrix of block norms")
    step_conditions: Dict[str, bool] = Field(default_factory=dict)
    conditions_met: bool


class TdContraction(BaseModel):
    """||I - eta A|| against 1 - eta (1 - gamma) lambda_min(Sigma) / 2."""

    eta: float
    eta_max: float = Field(..., description="(1 - gamma) / (4 ||Sigma||)")
    in_range: bool
    norm: float
    bound: float


class SpectralReport(BaseModel):
    sigma_norm: float = Field(..., description="||Sigma||, at most 1 under bounded features")
    sigma_inv_norm: float = Field(..., description="||Sigma^{-1}||, at least 1 under bounded features")
    normalized_gram_min: float = Field(
        ..., description="lambda_min(Sigma^{-1/2} A^T Sigma^{-1} A Sigma^{-1/2})"
    )
    normalized_gram_floor: float = Field(..., description="(1 - gamma)^2")
    whitened_b_norm: float = Field(..., description="||Sigma^{-1/2} b||, at most 1")


class StepsizeDecision(BaseModel):
    """Constant stepsizes chosen for a run together with the diagnostics behind them."""

    mode: str
    eta: Optional[float] = None
    alpha: Optional[float] = None
    beta: Optional[float] = None
    beta_alpha_ratio: Optional[float] = None
    varkappa: Optional[float] = None
    c0: Optional[float] = None
    burn_in_required: Optional[float] = None
    burn_in_satisfied: Optional[bool] = None
    alpha_upper: Optional[float] = None
    alpha_condition_met: Optional[bool] = None
    warnings: List[str] = Field(default_factory=list)


class RateFit(BaseModel):
    """Least-squares line through (log t, log mean error)."""

    slope: float
    intercept: float
    r2: float
    n_points: int = Field(..., ge=2)


class InstanceConstants(BaseModel):
    """Problem constants the stepsize rules are expressed in. Unused entries stay None."""

    gamma: float
    dim: int = Field(..., ge=1)
    # On-policy
    kappa: Optional[float] = None
    lambda_min_Sigma: Optional[float] = None
    theta_star_sigma_norm: Optional[float] = None
    theta_star_l2_norm: Optional[float] = None
    leverage: Optional[float] = None
    # Off-policy
    lambda1: Optional[float] = None
    lambda2: Optional[float] = None
    lambda_Sigma: Optional[float] = None
    kappa_tilde: Optional[float] = None
    rho_max: Optional[float] = None
    sigma_tilde_norm: Optional[float] = None
    theta_tilde_sigma_norm: Optional[float] = None
    theta_tilde_l2_norm: Optional[float] = None
