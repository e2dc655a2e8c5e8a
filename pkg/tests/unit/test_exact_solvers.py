# tests/unit/test_exact_solvers.py

import numpy as np
import pytest
import scipy.linalg

from tdlab.core.exceptions import CoverageError, NonIdentifiableError
from tdlab.models import FeatureMap, Policy, PolicyEvaluationInstance, TabularMdp
from tdlab.operations.exact_solvers import (
    auxiliary_w,
    default_varkappa,
    importance_ratios,
    mspbe,
    mspbe_gradient,
    mspbe_quadratic,
    off_policy_population,
    on_policy_population,
    population_tdc_run,
    projected_bellman_residual,
    psi_contraction_certificate,
    psi_coordinates,
    psi_matrix,
    spectral_report,
    td_contraction,
    tdc_step_conditions,
)
from tdlab.operations.mdp_core import build_geometry, induce_mrp


def _on_policy(instance):
    mrp = induce_mrp(instance.mdp, instance.target)
    geometry = build_geometry(mrp, instance.features)
    return mrp, geometry, on_policy_population(mrp, instance.features, geometry)


def _off_policy(instance, strict=True):
    return off_policy_population(instance.mdp, instance.target, instance.behavior, instance.features, strict=strict)


# ---------------------------------------------
# On-policy population
# ---------------------------------------------

def test_single_state_population(single_state):
    """A = phi (phi - gamma phi) = 1/2, b = 1, theta* = 2."""
    _, _, pop = _on_policy(single_state)
    np.testing.assert_allclose(pop.A, [[0.5]], atol=1e-15)
    np.testing.assert_allclose(pop.b, [1.0], atol=1e-15)
    np.testing.assert_allclose(pop.theta_star, [2.0], atol=1e-12)


def test_minimax_population_solves_fixed_point(minimax_instance):
    _, _, pop = _on_policy(minimax_instance)
    assert np.max(np.abs(pop.A @ pop.theta_star - pop.b)) <= 1e-10
    np.testing.assert_allclose(pop.theta_star, minimax_instance.exact.theta_star, atol=1e-9)


def test_projected_bellman_residual_vanishes_at_fixed_point(minimax_instance):
    mrp, geometry, pop = _on_policy(minimax_instance)
    assert projected_bellman_residual(pop.theta_star, mrp, minimax_instance.features, geometry) <= 1e-8


def test_projected_bellman_residual_single_state(single_state):
    """V = 3, T V = 1 + 3/2, and Phi spans everything, so the residual is 1/2."""
    mrp, geometry, pop = _on_policy(single_state)
    theta = pop.theta_star + 1.0
    assert projected_bellman_residual(theta, mrp, single_state.features, geometry) == pytest.approx(0.5, abs=1e-12)


def test_projected_bellman_residual_baird_zero_value(baird_instance):
    """Any theta with Phi theta = 0 is a fixed point for Baird's target policy."""
    mrp = induce_mrp(baird_instance.mdp, baird_instance.target)
    mu_b = np.full(7, 1.0 / 7.0)
    phi = baird_instance.features.phi
    null_direction = scipy.linalg.null_space(phi)[:, 0]
    assert projected_bellman_residual(np.zeros(8), mrp, baird_instance.features, mu_b) <= 1e-12
    assert projected_bellman_residual(5.0 * null_direction, mrp, baird_instance.features, mu_b) <= 1e-10


def test_spectral_report_minimax(minimax_instance):
    _, geometry, pop = _on_policy(minimax_instance)
    report = spectral_report(pop, geometry, minimax_instance.mdp.gamma)
    assert report.sigma_norm == pytest.approx(0.5)
    assert report.sigma_inv_norm == pytest.approx(4.0)
    assert report.normalized_gram_min >= report.normalized_gram_floor - 1e-10
    assert report.whitened_b_norm <= 1.0 + 1e-10


@pytest.mark.parametrize("fraction", [0.1, 0.5, 0.99])
def test_td_contraction_holds_inside_range(minimax_instance, fraction):
    _, geometry, pop = _on_policy(minimax_instance)
    gamma = minimax_instance.mdp.gamma
    eta = fraction * (1.0 - gamma) / (4.0 * geometry.lambda_max_Sigma)
    result = td_contraction(pop, geometry, gamma, eta)
    assert result.in_range
    assert result.norm <= result.bound + 1e-10


# ---------------------------------------------
# Off-policy population
# ---------------------------------------------

def test_importance_ratios_baird(baird_instance):
    rho = importance_ratios(baird_instance.target, baird_instance.behavior)
    np.testing.assert_allclose(rho[:, 0], 0.0)
    np.testing.assert_allclose(rho[:, 1], 7.0)


def test_importance_ratios_reject_uncovered_actions():
    target = Policy(probs=[[0.5, 0.5]])
    behavior = Policy(probs=[[1.0, 0.0]])
    with pytest.raises(CoverageError):
        importance_ratios(target, behavior)


def test_off_policy_reduces_to_on_policy(minimax_instance):
    """Target equal to behavior gives A_tilde = A, b_tilde = b and theta_tilde* = theta*."""
    _, geometry, pop = _on_policy(minimax_instance)
    off = _off_policy(minimax_instance)
    np.testing.assert_allclose(off.A_tilde, pop.A, atol=1e-12)
    np.testing.assert_allclose(off.b_tilde, pop.b, atol=1e-12)
    np.testing.assert_allclose(off.Sigma_tilde, geometry.Sigma, atol=1e-12)
    np.testing.assert_allclose(off.theta_tilde_star, pop.theta_star, atol=1e-9)
    assert off.rho_max == 1.0


def test_off_policy_identity_uniform_chain(uniform_chain):
    off = _off_policy(uniform_chain)
    np.testing.assert_allclose(off.A_tilde, off.Sigma_tilde - off.gamma * off.Pi, atol=1e-12)
    assert off.identifiable
    assert off.lambda2 == pytest.approx(1.0 / 3.0)
    assert off.lambda_Sigma == pytest.approx(3.0)
    assert off.kappa_tilde == pytest.approx(1.0)


def test_baird_is_not_identifiable_when_strict(baird_instance):
    with pytest.raises(NonIdentifiableError):
        _off_policy(baird_instance)


def test_baird_lenient_population(baird_instance):
    off = _off_policy(baird_instance, strict=False)
    assert not off.identifiable
    assert off.rho_max == pytest.approx(7.0)
    np.testing.assert_allclose(off.mu_b, np.full(7, 1.0 / 7.0), atol=1e-12)
    np.testing.assert_allclose(off.value_star, np.zeros(7), atol=1e-12)
    assert off.lambda1 == 0.0
    assert np.isinf(off.kappa_tilde)


# ---------------------------------------------
# MSPBE, its gradient and w(theta)
# ---------------------------------------------

def test_mspbe_single_state_at_zero(single_state):
    """g(0) = b = 1 and Sigma = 1, so the MSPBE is 1/2."""
    off = _off_policy(single_state)
    assert mspbe(np.zeros(1), off) == pytest.approx(0.5, abs=1e-12)
    assert mspbe_quadratic(np.zeros(1), off) == pytest.approx(0.5, abs=1e-12)


def test_mspbe_vanishes_at_fixed_point(uniform_chain):
    off = _off_policy(uniform_chain)
    assert mspbe(off.theta_tilde_star, off) <= 1e-10
    assert np.max(np.abs(mspbe_gradient(off.theta_tilde_star, off))) <= 1e-9
    assert np.max(np.abs(auxiliary_w(off.theta_tilde_star, off))) <= 1e-10


def test_auxiliary_w_with_identity_covariance():
    """With Sigma_tilde = I, w(theta) is just b_tilde - A_tilde theta."""
    instance = PolicyEvaluationInstance(
        name="whitened-swap",
        mdp=TabularMdp(kernel=[[[0.0, 1.0]], [[1.0, 0.0]]], reward=[[0.3], [0.9]], gamma=0.5),
        target=Policy.uniform(2, 1),
        behavior=Policy.uniform(2, 1),
        features=FeatureMap(phi=np.sqrt(2.0) * np.eye(2), enforce_assumption=False),
    )
    off = _off_policy(instance)
    np.testing.assert_allclose(off.Sigma_tilde, np.eye(2), atol=1e-12)
    theta = np.array([0.4, -1.2])
    np.testing.assert_allclose(auxiliary_w(theta, off), off.b_tilde - off.A_tilde @ theta, atol=1e-12)


def test_mspbe_gradient_on_policy_form(minimax_instance):
    """With rho = 1 the gradient is A^T Sigma^{-1} (A theta - b)."""
    off = _off_policy(minimax_instance)
    theta = np.array([0.3, -0.7, 1.1])
    expected = off.A_tilde.T @ np.linalg.solve(off.Sigma_tilde, off.A_tilde @ theta - off.b_tilde)
    np.testing.assert_allclose(mspbe_gradient(theta, off), expected, atol=1e-10)


# ---------------------------------------------
# Psi matrix and certificate
# ---------------------------------------------

def test_psi_is_identity_for_zero_stepsizes(uniform_chain):
    off = _off_policy(uniform_chain)
    np.testing.assert_allclose(psi_matrix(off, 0.0, 0.0, 0.5), np.eye(6), atol=1e-15)


def test_psi_is_block_lower_triangular_without_discount(uniform_chain):
    off = _off_policy(uniform_chain).model_copy(update={"gamma": 0.0})
    alpha, beta = 0.01, 0.1
    psi = psi_matrix(off, alpha, beta, 0.5)
    M = off.A_tilde.T @ np.linalg.solve(off.Sigma_tilde, off.A_tilde)
    np.testing.assert_allclose(psi[:3, 3:], 0.0, atol=1e-15)
    np.testing.assert_allclose(psi[:3, :3], np.eye(3) - alpha * M, atol=1e-12)
    np.testing.assert_allclose(psi[3:, 3:], np.eye(3) - beta * off.Sigma_tilde, atol=1e-12)


def test_psi_rejects_bad_arguments(uniform_chain):
    off = _off_policy(uniform_chain)
    with pytest.raises(ValueError):
        psi_matrix(off, -0.1, 0.1, 0.5)
    with pytest.raises(ValueError):
        psi_matrix(off, 0.1, 0.1, 0.0)


def test_psi_reproduces_population_recursion(uniform_chain):
    off = _off_policy(uniform_chain)
    alpha, beta, varkappa = 0.05, 0.2, 0.5
    psi = psi_matrix(off, alpha, beta, varkappa)
    thetas, ws = population_tdc_run(off, alpha, beta, np.array([1.0, -2.0, 0.5]), np.array([0.3, 0.0, -0.1]), 100)
    x = psi_coordinates(off, thetas[0], ws[0], varkappa)
    for t in range(1, 101):
        x = psi @ x
        np.testing.assert_allclose(x, psi_coordinates(off, thetas[t], ws[t], varkappa), atol=1e-10)


def test_certificate_with_zero_stepsizes(uniform_chain):
    off = _off_policy(uniform_chain)
    certificate = psi_contraction_certificate(off, 0.0, 0.0, 0.5)
    assert certificate.norm == pytest.approx(1.0)
    assert certificate.bound == 1.0
    assert not certificate.conditions_met


def test_certificate_contracts_under_small_alpha(uniform_chain):
    """alpha = 1e-6, beta = 0.1 satisfies every condition; varkappa comes from the default rule."""
    off = _off_policy(uniform_chain)
    alpha, beta = 1e-6, 0.1
    certificate = psi_contraction_certificate(off, alpha, beta)
    assert certificate.varkappa == pytest.approx(default_varkappa(off, alpha, beta))
    assert certificate.varkappa < 1.0
    assert all(certificate.step_conditions.values())
    assert certificate.conditions_met
    assert certificate.norm <= certificate.bound + 1e-10
    assert certificate.bound == pytest.approx(1.0 - 0.5 * alpha * off.lambda1)


def test_certificate_reports_violated_conditions(uniform_chain):
    off = _off_policy(uniform_chain)
    certificate = psi_contraction_certificate(off, 0.5, 0.5, 0.5)
    assert not certificate.conditions_met
    conditions = tdc_step_conditions(off, 0.5, 0.5, 0.5)
    assert not conditions["beta_dominates_alpha"]

