# tdlab/operations/exact_solvers.py
"""
Exact Solvers

Population quantities of the on-policy and off-policy evaluation problems,
the MSPBE with its gradient, and the population TDC dynamics together with
the Psi matrix and its contraction certificate.

Linear systems are solved by factorisation. The only place Sigma_tilde^{-1}
is formed column by column is inside Psi.
"""

import logging
import math
from typing import Optional, Tuple, Union

import numpy as np
import scipy.linalg

from tdlab.core.config import get_settings
from tdlab.core.exceptions import (
    ContractionViolationError,
    CoverageError,
    InstanceError,
    NonIdentifiableError,
    SingularSystemError,
)
from tdlab.models.mdp import FeatureMap, InducedMrp, Policy, StationaryGeometry, TabularMdp
from tdlab.models.population import OffPolicyPopulation, OnPolicyPopulation
from tdlab.operations.mdp_core import induce_mrp, stationary_distribution, weighted_norm
from tdlab.schemas.reports import ContractionCertificate, SpectralReport, TdContraction

logger = logging.getLogger(__name__)


# ------------------------------------------------------------------------------
# On-policy
# ------------------------------------------------------------------------------
def on_policy_population(
    mrp: InducedMrp,
    features: FeatureMap,
    geometry: StationaryGeometry,
) -> OnPolicyPopulation:
    """
    Mean TD matrices A = Phi^T D_mu (I - gamma P) Phi, b = Phi^T D_mu r and theta* = A^{-1} b.

    Raises:
        SingularSystemError: if A cannot be solved against
    """
    phi, mu = features.phi, geometry.mu
    A = phi.T @ (mu[:, None] * (phi - mrp.gamma * (mrp.P @ phi)))
    b = phi.T @ (mu * mrp.r)
    try:
        theta_star = scipy.linalg.solve(A, b)
    except scipy.linalg.LinAlgError as exc:
        raise SingularSystemError(f"A is singular: {exc}") from exc
    residual = np.max(np.abs(A @ theta_star - b))
    if not np.isfinite(residual) or residual > 1e-10:
        raise SingularSystemError(f"A theta* = b residual {residual:.3e} exceeds 1e-10")
    return OnPolicyPopulation(A=A, b=b, theta_star=theta_star)


def projected_bellman_residual(
    theta: np.ndarray,
    mrp: InducedMrp,
    features: FeatureMap,
    geometry: Union[StationaryGeometry, np.ndarray],
) -> float:
    """
    ||Phi theta - Pi_D (r + gamma P Phi theta)||_{D_mu}.

    ``geometry`` may also be a bare weighting vector mu. The projection is a
    weighted least-squares fit, so it stays defined when Sigma is singular.
    """
    mu = geometry.mu if isinstance(geometry, StationaryGeometry) else np.asarray(geometry, dtype=np.float64)
    phi = features.phi
    values = phi @ np.asarray(theta, dtype=np.float64)
    backed_up = mrp.r + mrp.gamma * (mrp.P @ values)
    root = np.sqrt(mu)
    coeff = scipy.linalg.lstsq(root[:, None] * phi, root * backed_up)[0]
    return weighted_norm(values - phi @ coeff, mu)


def spectral_report(
    on_pop: OnPolicyPopulation,
    geometry: StationaryGeometry,
    gamma: float,
) -> SpectralReport:
    """Spectral facts that bounded features imply for Sigma, A and b."""
    eigenvalues, eigenvectors = scipy.linalg.eigh(geometry.Sigma)
    inv_half = (eigenvectors / np.sqrt(eigenvalues)) @ eigenvectors.T
    whitened_A = inv_half @ on_pop.A @ inv_half
    gram = whitened_A.T @ whitened_A
    return SpectralReport(
        sigma_norm=float(eigenvalues[-1]),
        sigma_inv_norm=float(1.0 / eigenvalues[0]),
        normalized_gram_min=float(scipy.linalg.eigvalsh(0.5 * (gram + gram.T))[0]),
        normalized_gram_floor=(1.0 - gamma) ** 2,
        whitened_b_norm=float(np.linalg.norm(inv_half @ on_pop.b)),
    )


def td_contraction(
    on_pop: OnPolicyPopulation,
    geometry: StationaryGeometry,
    gamma: float,
    eta: float,
) -> TdContraction:
    """Compare ||I - eta A|| with 1 - eta (1 - gamma) lambda_min(Sigma) / 2."""
    d = on_pop.A.shape[0]
    eta_max = (1.0 - gamma) / (4.0 * geometry.lambda_max_Sigma)
    return TdContraction(
        eta=eta,
        eta_max=eta_max,
        in_range=0.0 < eta < eta_max,
        norm=float(np.linalg.norm(np.eye(d) - eta * on_pop.A, 2)),
        bound=1.0 - 0.5 * eta * (1.0 - gamma) * geometry.lambda_min_Sigma,
    )


# ------------------------------------------------------------------------------
# Off-policy
# ------------------------------------------------------------------------------
def importance_ratios(target: Policy, behavior: Policy) -> np.ndarray:
    """
    rho[s, a] = pi(a|s) / pi_b(a|s), zero where the behavior policy never acts.

    Raises:
        CoverageError: if the target acts where the behavior policy does not
    """
    if target.probs.shape != behavior.probs.shape:
        raise InstanceError(
            f"Target {target.probs.shape} and behavior {behavior.probs.shape} policies differ in shape"
        )
    uncovered = (target.probs > 0) & (behavior.probs <= 0)
    if np.any(uncovered):
        s, a = np.argwhere(uncovered)[0]
        raise CoverageError(f"Target policy uses action {a} in state {s} which the behavior policy never takes")
    rho = np.zeros_like(target.probs)
    np.divide(target.probs, behavior.probs, out=rho, where=behavior.probs > 0)
    return rho


def off_policy_population(
    mdp: TabularMdp,
    target: Policy,
    behavior: Policy,
    features: FeatureMap,
    strict: bool = True,
) -> OffPolicyPopulation:
    """
    Population parameters of off-policy evaluation under the behavior chain.

    A_tilde, Pi and b_tilde are assembled as rho-weighted expectations over
    (s, a, s'), Sigma_tilde as the unweighted feature covariance.

    Args:
        mdp: the MDP both policies act in
        target: policy being evaluated
        behavior: policy generating the data
        features: feature map
        strict: raise on a non-unique fixed point instead of returning a
            flagged, minimum-norm solution

    Raises:
        CoverageError: target acts where behavior does not
        NonIdentifiableError: Sigma_tilde or A_tilde singular and ``strict``
    """
    if features.n_states != mdp.n_states:
        raise InstanceError(f"Feature map has {features.n_states} rows for {mdp.n_states} states")
    rho = importance_ratios(target, behavior)
    rho_max = max(float(rho.max()), 1.0)

    mu_b = stationary_distribution(induce_mrp(mdp, behavior).P)
    target_mrp = induce_mrp(mdp, target)

    phi, gamma = features.phi, mdp.gamma
    weights = mu_b[:, None] * behavior.probs * rho
    next_phi = np.einsum("sat,td->sad", mdp.kernel, phi)
    Pi = np.einsum("sa,sd,sae->de", weights, phi, next_phi)
    A_tilde = np.einsum("sa,sd,sae->de", weights, phi, phi[:, None, :] - gamma * next_phi)
    b_tilde = np.einsum("sa,sd,sa->d", weights, phi, mdp.reward)
    Sigma_tilde = phi.T @ (mu_b[:, None] * phi)
    Sigma_tilde = 0.5 * (Sigma_tilde + Sigma_tilde.T)

    sigma_eigs = scipy.linalg.eigvalsh(Sigma_tilde)
    a_singular = np.linalg.svd(A_tilde, compute_uv=False)
    sigma_ok = sigma_eigs[0] > 1e-12 * max(1.0, sigma_eigs[-1])
    a_ok = a_singular[-1] > 1e-10 * max(1.0, a_singular[0])

    if sigma_ok and a_ok:
        theta_tilde_star = scipy.linalg.solve(A_tilde, b_tilde)
        lambda2 = float(sigma_eigs[0])
        M = A_tilde.T @ _cho_solve(Sigma_tilde, A_tilde)
        lambda1 = float(scipy.linalg.eigvalsh(0.5 * (M + M.T))[0])
        lambda_Sigma = 1.0 / lambda2
        kappa_tilde = lambda_Sigma * float(sigma_eigs[-1])
        identifiable = True
    else:
        reason = "Sigma_tilde is singular" if not sigma_ok else "A_tilde is singular"
        if strict:
            raise NonIdentifiableError(f"Off-policy fixed point is not unique: {reason}")
        logger.warning(f"Off-policy fixed point is not unique ({reason}); using the minimum-norm solution")
        theta_tilde_star = scipy.linalg.lstsq(A_tilde, b_tilde)[0]
        lambda2 = max(float(sigma_eigs[0]), 0.0) if sigma_ok else 0.0
        lambda1 = 0.0
        lambda_Sigma = 1.0 / lambda2 if lambda2 > 0 else math.inf
        kappa_tilde = math.inf
        identifiable = False

    return OffPolicyPopulation(
        gamma=gamma,
        A_tilde=A_tilde,
        b_tilde=b_tilde,
        Pi=Pi,
        Sigma_tilde=Sigma_tilde,
        theta_tilde_star=theta_tilde_star,
        value_star=phi @ theta_tilde_star,
        identifiable=identifiable,
        lambda1=lambda1,
        lambda2=lambda2,
        lambda_Sigma=lambda_Sigma,
        kappa_tilde=kappa_tilde,
        rho_max=rho_max,
        mu_b=mu_b,
        target=target_mrp,
        features=features,
    )


def mspbe(
    theta: np.ndarray,
    off_pop: OffPolicyPopulation,
    geometry_b: Optional[StationaryGeometry] = None,
) -> float:
    """
    1/2 ||V_theta - Pi_D T V_theta||^2 under the behavior weighting.

    ``geometry_b`` supplies mu_b and Sigma_tilde when already built; the
    population's own copies are used otherwise.
    """
    mu = off_pop.mu_b if geometry_b is None else geometry_b.mu
    Sigma = off_pop.Sigma_tilde if geometry_b is None else geometry_b.Sigma
    phi, target = off_pop.features.phi, off_pop.target
    values = phi @ np.asarray(theta, dtype=np.float64)
    backed_up = target.r + target.gamma * (target.P @ values)
    projected = phi @ _cho_solve(Sigma, phi.T @ (mu * backed_up))
    return 0.5 * weighted_norm(values - projected, mu) ** 2


def mspbe_quadratic(theta: np.ndarray, off_pop: OffPolicyPopulation) -> float:
    """1/2 g^T Sigma_tilde^{-1} g with g = b_tilde - A_tilde theta."""
    g = _td_error_mean(theta, off_pop)
    return 0.5 * float(g @ _cho_solve(off_pop.Sigma_tilde, g))


def auxiliary_w(theta: np.ndarray, off_pop: OffPolicyPopulation) -> np.ndarray:
    """w(theta) = Sigma_tilde^{-1} (b_tilde - A_tilde theta)."""
    return _cho_solve(off_pop.Sigma_tilde, _td_error_mean(theta, off_pop))


def mspbe_gradient(theta: np.ndarray, off_pop: OffPolicyPopulation) -> np.ndarray:
    """-(b_tilde - A_tilde theta) + gamma Pi^T w(theta)."""
    g = _td_error_mean(theta, off_pop)
    w = _cho_solve(off_pop.Sigma_tilde, g)
    return -g + off_pop.gamma * (off_pop.Pi.T @ w)


# ------------------------------------------------------------------------------
# Population TDC dynamics
# ------------------------------------------------------------------------------
def psi_matrix(off_pop: OffPolicyPopulation, alpha: float, beta: float, varkappa: float) -> np.ndarray:
    """
    The 2d x 2d map x_t = Psi x_{t-1} of the population TDC recursion in the
    coordinates x = (theta - theta_tilde*, varkappa * (w + Sigma_tilde^{-1} A_tilde (theta - theta_tilde*))).
    """
    if alpha < 0 or beta < 0:
        raise ValueError(f"Stepsizes must be nonnegative, got alpha={alpha}, beta={beta}")
    if varkappa <= 0:
        raise ValueError(f"varkappa must be positive, got {varkappa}")
    d, gamma = off_pop.dim, off_pop.gamma
    eye = np.eye(d)
    sinv_A = _cho_solve(off_pop.Sigma_tilde, off_pop.A_tilde)
    sinv_Pi = _cho_solve(off_pop.Sigma_tilde, off_pop.Pi)
    M = off_pop.A_tilde.T @ sinv_A
    X = eye - gamma * sinv_Pi
    return np.block(
        [
            [eye - alpha * M, -(alpha * gamma / varkappa) * off_pop.Pi.T],
            [-varkappa * alpha * (X @ M), eye - beta * off_pop.Sigma_tilde - alpha * gamma * (X @ off_pop.Pi.T)],
        ]
    )


def psi_coordinates(
    off_pop: OffPolicyPopulation,
    theta: np.ndarray,
    w: np.ndarray,
    varkappa: float,
) -> np.ndarray:
    delta = np.asarray(theta, dtype=np.float64) - off_pop.theta_tilde_star
    z = np.asarray(w, dtype=np.float64) + _cho_solve(off_pop.Sigma_tilde, off_pop.A_tilde @ delta)
    return np.concatenate([delta, varkappa * z])


def default_varkappa(off_pop: OffPolicyPopulation, alpha: float, beta: float) -> float:
    """varkappa = 8 rho_max sqrt(alpha / (lambda1 beta lambda2)); 1/2 when undefined."""
    if alpha > 0 and beta > 0 and off_pop.lambda1 > 0 and off_pop.lambda2 > 0:
        return 8.0 * off_pop.rho_max * math.sqrt(alpha / (off_pop.lambda1 * beta * off_pop.lambda2))
    return 0.5


def tdc_step_conditions(
    off_pop: OffPolicyPopulation,
    alpha: float,
    beta: float,
    varkappa: float,
) -> dict:
    """The four TDC stepsize conditions, each read as margin * lhs <= rhs."""
    m = get_settings().STEP_CONDITION_MARGIN
    gamma, rho = off_pop.gamma, off_pop.rho_max
    lam1, lam2, lam_s = off_pop.lambda1, off_pop.lambda2, off_pop.lambda_Sigma
    coupling = alpha * gamma * rho / varkappa + varkappa * alpha * (1.0 + gamma * lam_s * rho) * lam_s * (2.0 * rho) ** 2
    return {
        "beta_dominates_alpha": m * lam_s * rho * alpha <= beta,
        "varkappa_beta_dominates_alpha": m * alpha <= varkappa * beta,
        "beta_dominates_cross_term": m * alpha * gamma * (rho + gamma * lam_s * rho**2) <= beta * lam2,
        "coupling_small": m * coupling <= math.sqrt(max(alpha * lam1 * beta * lam2, 0.0)),
        "varkappa_below_one": varkappa < 1.0,
    }


def psi_contraction_certificate(
    off_pop: OffPolicyPopulation,
    alpha: float,
    beta: float,
    varkappa: Optional[float] = None,
) -> ContractionCertificate:
    """
    ||Psi|| against 1 - alpha lambda1 / 2.

    ``conditions_met`` needs positive stepsizes, every stepsize condition and
    the block-norm bound to hold. The block-norm bound dominates ||Psi||, so
    under ``conditions_met`` the contraction is guaranteed.

    Raises:
        ContractionViolationError: norm above bound while conditions_met
    """
    if varkappa is None:
        varkappa = default_varkappa(off_pop, alpha, beta)
    psi = psi_matrix(off_pop, alpha, beta, varkappa)
    d = off_pop.dim
    norm = float(np.linalg.norm(psi, 2))
    bound = 1.0 - 0.5 * alpha * off_pop.lambda1
    block_norms = np.array(
        [
            [np.linalg.norm(psi[:d, :d], 2), np.linalg.norm(psi[:d, d:], 2)],
            [np.linalg.norm(psi[d:, :d], 2), np.linalg.norm(psi[d:, d:], 2)],
        ]
    )
    block_bound = float(np.linalg.norm(block_norms, 2))
    conditions = tdc_step_conditions(off_pop, alpha, beta, varkappa)
    conditions_met = alpha > 0 and beta > 0 and all(conditions.values()) and block_bound <= bound
    if conditions_met and norm > bound + 1e-10:
        raise ContractionViolationError(f"||Psi|| = {norm:.12f} exceeds bound {bound:.12f}")
    logger.debug(f"Psi certificate: norm={norm:.12f} bound={bound:.12f} conditions_met={conditions_met}")
    return ContractionCertificate(
        alpha=alpha,
        beta=beta,
        varkappa=varkappa,
        norm=norm,
        bound=bound,
        block_bound=block_bound,
        step_conditions=conditions,
        conditions_met=conditions_met,
    )


def population_tdc_run(
    off_pop: OffPolicyPopulation,
    alpha: float,
    beta: float,
    theta0: np.ndarray,
    w0: np.ndarray,
    steps: int,
) -> Tuple[np.ndarray, np.ndarray]:
    """Noise-free TDC: returns the (steps + 1, d) histories of theta and w."""
    A, b, Pi, Sigma, gamma = off_pop.A_tilde, off_pop.b_tilde, off_pop.Pi, off_pop.Sigma_tilde, off_pop.gamma
    thetas = np.empty((steps + 1, off_pop.dim))
    ws = np.empty((steps + 1, off_pop.dim))
    thetas[0], ws[0] = theta0, w0
    for t in range(steps):
        theta, w = thetas[t], ws[t]
        residual = A @ theta - b
        thetas[t + 1] = theta - alpha * (residual + gamma * (Pi.T @ w))
        ws[t + 1] = w - beta * (residual + Sigma @ w)
    return thetas, ws


# ------------------------------------------------------------------------------
# Helpers
# ------------------------------------------------------------------------------
def _td_error_mean(theta: np.ndarray, off_pop: OffPolicyPopulation) -> np.ndarray:
    return off_pop.b_tilde - off_pop.A_tilde @ np.asarray(theta, dtype=np.float64)


def _cho_solve(Sigma: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        factor = scipy.linalg.cho_factor(Sigma)
    except scipy.linalg.LinAlgError as exc:
        raise SingularSystemError(f"Covariance matrix is not positive definite: {exc}") from exc
    return scipy.linalg.cho_solve(factor, rhs)
