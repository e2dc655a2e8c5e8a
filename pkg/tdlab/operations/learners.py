# tdlab/operations/learners.py
"""
Learners

TD(0) with Polyak-Ruppert averaging, its off-policy (rho-weighted) variant
and two-timescale TDC. Every step returns a new state; an iterate that leaves
the finite range or exceeds the divergence threshold raises DivergenceError
and the caller decides what that means.
"""

import math
from typing import Optional

import numpy as np

from tdlab.core.config import get_settings
from tdlab.core.exceptions import DivergenceError
from tdlab.models.learner import TdcState, TdState
from tdlab.models.samples import EmpiricalTerms


def check_divergence(theta: np.ndarray, step: int, threshold: Optional[float] = None) -> None:
    """Raise DivergenceError when ``theta`` is non-finite or its norm exceeds the threshold."""
    threshold = get_settings().DIVERGENCE_THRESHOLD if threshold is None else threshold
    norm = math.sqrt(float(theta @ theta))
    if not math.isfinite(norm) or norm > threshold:
        raise DivergenceError(step=step, norm=norm)


def td_step(state: TdState, terms: EmpiricalTerms, threshold: Optional[float] = None) -> TdState:
    """
    theta <- theta - eta (A_t theta - b_t); the new iterate joins the running sum.

    Raises:
        DivergenceError: the new iterate is non-finite or too large
    """
    if terms.A_t.shape != (state.theta.size, state.theta.size):
        raise ValueError(f"A_t has shape {terms.A_t.shape} for a {state.theta.size}-dimensional iterate")
    theta = state.theta - state.eta * (terms.A_t @ state.theta - terms.b_t)
    check_divergence(theta, state.t + 1, threshold)
    return TdState(theta=theta, theta_sum=state.theta_sum + theta, t=state.t + 1, eta=state.eta)


def off_policy_td_step(state: TdState, terms: EmpiricalTerms, threshold: Optional[float] = None) -> TdState:
    """TD step driven by the rho-weighted terms A_tilde_t, b_tilde_t."""
    if not terms.is_off_policy:
        raise ValueError("off_policy_td_step needs off-policy empirical terms")
    return td_step(state, terms, threshold)


def averaged_estimate(state: TdState) -> np.ndarray:
    """
    (1/t) sum_{i=1..t} theta_i.

    Raises:
        ValueError: before the first step
    """
    if state.t == 0:
        raise ValueError("No iterates to average yet (t = 0)")
    return state.theta_sum / state.t


def tdc_step(
    state: TdcState,
    terms: EmpiricalTerms,
    gamma: float,
    threshold: Optional[float] = None,
) -> TdcState:
    """
    One TDC update. Both lines read the pre-step (theta, w):

        theta <- theta - alpha (A_t theta - b_t + gamma Pi_t^T w)
        w     <- w     - beta  (A_t theta - b_t + Sigma_t w)

    Raises:
        ValueError: terms lack Pi_t or Sigma_t
        DivergenceError: either iterate is non-finite or too large
    """
    if not terms.is_off_policy:
        raise ValueError("tdc_step needs off-policy empirical terms (Pi_t and Sigma_t)")
    residual = terms.A_t @ state.theta - terms.b_t
    theta = state.theta - state.alpha * (residual + gamma * (terms.Pi_t.T @ state.w))
    w = state.w - state.beta * (residual + terms.Sigma_t @ state.w)
    step = state.t + 1
    check_divergence(theta, step, threshold)
    check_divergence(w, step, threshold)
    return TdcState(theta=theta, w=w, t=step, alpha=state.alpha, beta=state.beta)
