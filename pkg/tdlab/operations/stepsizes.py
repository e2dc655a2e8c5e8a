# tdlab/operations/stepsizes.py
"""
Stepsize Rules

Constant stepsizes for averaged TD and TDC derived from instance constants,
plus the sample-size formulas that go with them. The theory only fixes
these up to universal constants; the constants used here come from the
settings and are echoed into every run manifest.
"""

import logging
import math
from typing import Optional

import numpy as np

from tdlab.core.config import get_settings
from tdlab.models.learner import StepsizeMode, StepsizePlan
from tdlab.models.mdp import FeatureMap, StationaryGeometry
from tdlab.models.population import OffPolicyPopulation, OnPolicyPopulation
from tdlab.operations.mdp_core import feature_leverage, sigma_norm
from tdlab.schemas.reports import InstanceConstants, StepsizeDecision

logger = logging.getLogger(__name__)


def on_policy_constants(
    features: FeatureMap,
    geometry: StationaryGeometry,
    on_pop: OnPolicyPopulation,
    gamma: float,
) -> InstanceConstants:
    return InstanceConstants(
        gamma=gamma,
        dim=features.dim,
        kappa=geometry.kappa,
        lambda_min_Sigma=geometry.lambda_min_Sigma,
        theta_star_sigma_norm=sigma_norm(on_pop.theta_star, geometry),
        theta_star_l2_norm=float(np.linalg.norm(on_pop.theta_star)),
        leverage=feature_leverage(features, geometry),
    )


def off_policy_constants(off_pop: OffPolicyPopulation) -> InstanceConstants:
    return InstanceConstants(
        gamma=off_pop.gamma,
        dim=off_pop.dim,
        lambda1=off_pop.lambda1,
        lambda2=off_pop.lambda2,
        lambda_Sigma=off_pop.lambda_Sigma,
        kappa_tilde=off_pop.kappa_tilde,
        rho_max=off_pop.rho_max,
        sigma_tilde_norm=off_pop.sigma_tilde_norm,
        theta_tilde_sigma_norm=off_pop.theta_norm_sigma,
        theta_tilde_l2_norm=float(np.linalg.norm(off_pop.theta_tilde_star)),
    )


def corollary2_ratio(constants: InstanceConstants) -> float:
    """beta / alpha = 128 rho_max^2 (1 + lambda_Sigma rho_max) / (lambda1 lambda2)."""
    rho = constants.rho_max
    return 128.0 * rho**2 * (1.0 + constants.lambda_Sigma * rho) / (constants.lambda1 * constants.lambda2)


def varkappa_choice(constants: InstanceConstants, alpha: float, beta: float) -> float:
    """8 rho_max sqrt(alpha / (lambda1 beta lambda2))."""
    return 8.0 * constants.rho_max * math.sqrt(alpha / (constants.lambda1 * beta * constants.lambda2))


def plan_stepsizes(
    plan: StepsizePlan,
    constants: Optional[InstanceConstants],
    T: int,
    delta: float,
) -> StepsizeDecision:
    """
    Turn a stepsize plan into constant stepsizes for a run of length T.

    Parameters:
        plan: requested mode and any explicit stepsizes
        constants: instance constants; optional in fixed mode
        T: number of steps
        delta: failure probability used inside the logarithms

    Returns:
        StepsizeDecision with the stepsizes and their diagnostics. A burn-in
        requirement that T does not meet is reported as a warning.

    Raises:
        ValueError: constants missing for the requested mode, or degenerate logarithms
    """
    if T < 1 or not 0.0 < delta < 1.0:
        raise ValueError(f"Need T >= 1 and 0 < delta < 1, got T={T}, delta={delta}")
    if plan.mode == StepsizeMode.FIXED:
        decision = _fixed(plan, constants)
    elif plan.mode == StepsizeMode.THEOREM1:
        decision = _theorem1(plan, _require(constants, "kappa", "lambda_min_Sigma"), T, delta)
    else:
        decision = _corollary2(plan, _require(constants, "lambda1", "lambda2", "rho_max"), T, delta)
    for message in decision.warnings:
        logger.warning(message)
    return decision


def _require(constants: Optional[InstanceConstants], *names: str) -> InstanceConstants:
    if constants is None:
        raise ValueError("Instance constants are required for derived stepsizes")
    for name in names:
        value = getattr(constants, name)
        if value is None or not math.isfinite(value) or value <= 0:
            raise ValueError(f"Instance constant {name} is unavailable ({value})")
    return constants


def _fixed(plan: StepsizePlan, constants: Optional[InstanceConstants]) -> StepsizeDecision:
    decision = StepsizeDecision(mode=plan.mode.value, eta=plan.eta, alpha=plan.alpha, beta=plan.beta)
    if plan.alpha is not None and plan.beta is not None and plan.alpha > 0:
        decision.beta_alpha_ratio = plan.beta / plan.alpha
        if constants is not None and constants.lambda1 and constants.lambda2 and plan.beta > 0:
            decision.varkappa = varkappa_choice(constants, plan.alpha, plan.beta)
    return decision


def _theorem1(plan: StepsizePlan, constants: InstanceConstants, T: int, delta: float) -> StepsizeDecision:
    settings = get_settings()
    gamma, kappa, d = constants.gamma, constants.kappa, constants.dim
    log_term = math.log(T * d / delta)
    if log_term <= 0:
        raise ValueError(f"log(T d / delta) = {log_term:.3f} must be positive")
    c0 = plan.c0 if plan.c0 is not None else settings.THEOREM1_C0
    eta = settings.THEOREM1_MARGIN * c0 * (1.0 - gamma) / (kappa * log_term)
    decision = StepsizeDecision(mode=plan.mode.value, eta=eta, c0=c0)

    if constants.theta_star_sigma_norm is not None and constants.theta_star_l2_norm is not None:
        inner = kappa * d * T * (constants.theta_star_l2_norm + 1.0) / ((1.0 - gamma) * delta)
        required = (
            settings.BURN_IN_C1
            * kappa
            * (constants.theta_star_sigma_norm + 1.0) ** 2
            * math.log(inner) ** 2
            / (eta * (1.0 - gamma) * constants.lambda_min_Sigma)
        )
        decision.burn_in_required = required
        decision.burn_in_satisfied = T >= required
        if not decision.burn_in_satisfied:
            decision.warnings.append(f"T={T} is below the averaged-TD burn-in requirement {required:.3e}")
    return decision


def _corollary2(plan: StepsizePlan, constants: InstanceConstants, T: int, delta: float) -> StepsizeDecision:
    settings = get_settings()
    norm_estimate = plan.theta_norm_estimate or constants.theta_tilde_sigma_norm or 1.0
    # log ||theta|| is clamped at 1 so alpha stays positive for small fixed points
    alpha = settings.COROLLARY2_ALPHA_CONSTANT * max(1.0, math.log(norm_estimate)) / (T * constants.lambda1)
    ratio = corollary2_ratio(constants)
    beta = ratio * alpha
    decision = StepsizeDecision(
        mode=plan.mode.value,
        alpha=alpha,
        beta=beta,
        beta_alpha_ratio=ratio,
        varkappa=varkappa_choice(constants, alpha, beta),
    )

    d = constants.dim
    log_term = math.log(2.0 * d * T / delta)
    if constants.sigma_tilde_norm and constants.lambda_Sigma:
        decision.alpha_upper = 1.0 / (
            constants.lambda1 * constants.lambda_Sigma**2 * constants.sigma_tilde_norm * log_term
        )
        decision.alpha_condition_met = alpha < decision.alpha_upper
        if not decision.alpha_condition_met:
            decision.warnings.append(f"alpha={alpha:.3e} exceeds the admissible {decision.alpha_upper:.3e}")

    l2 = constants.theta_tilde_l2_norm
    if l2 is not None and l2 > 0 and constants.kappa_tilde and constants.theta_tilde_sigma_norm is not None:
        spread = max(
            math.sqrt(constants.kappa_tilde),
            constants.theta_tilde_sigma_norm * math.sqrt(alpha * constants.lambda1 / log_term),
        )
        # Reported verbatim; negative when ||theta_tilde*||_2 < 1.
        required = settings.BURN_IN_C1 * math.log(l2) / (alpha * constants.lambda1) * math.log(spread)
        decision.burn_in_required = required
        decision.burn_in_satisfied = T >= required
        if required < 0:
            decision.warnings.append(f"TDC burn-in bound is negative ({required:.3e}) since ||theta_tilde*||_2 < 1")
        elif not decision.burn_in_satisfied:
            decision.warnings.append(f"T={T} is below the TDC burn-in requirement {required:.3e}")
    return decision


# ------------------------------------------------------------------------------
# Sample sizes
# ------------------------------------------------------------------------------
def sample_complexity_td(constants: InstanceConstants, epsilon: float, delta: float, c: float = 1.0) -> float:
    """Samples for averaged TD to reach Sigma-norm error epsilon with probability 1 - delta."""
    _require(constants, "leverage")
    return (
        c
        * constants.leverage
        * (1.0 + (constants.theta_star_sigma_norm or 0.0) ** 2)
        * math.log(constants.dim / delta)
        / ((1.0 - constants.gamma) ** 2 * epsilon**2)
    )


def sample_complexity_tdc(constants: InstanceConstants, epsilon: float, delta: float, c: float = 1.0) -> float:
    """Samples for TDC with corollary2 stepsizes to reach Sigma_tilde-norm error epsilon."""
    _require(constants, "lambda1", "lambda2", "rho_max", "sigma_tilde_norm")
    norm = constants.theta_tilde_sigma_norm or 0.0
    return (
        c
        * constants.rho_max**7
        / (constants.lambda1**4 * constants.lambda2**3)
        * constants.sigma_tilde_norm**2
        / epsilon**2
        * (1.0 + norm**2)
        * math.log(max(constants.dim * norm / delta, math.e))
    )


def minimax_sample_threshold(constants: InstanceConstants, epsilon: float, c: float = 1.0) -> float:
    """Sample size below which no estimator reliably reaches error epsilon on the hard family."""
    _require(constants, "leverage")
    return c * constants.leverage * (1.0 + (constants.theta_star_sigma_norm or 0.0) ** 2) / ((1.0 - constants.gamma) * epsilon**2)
