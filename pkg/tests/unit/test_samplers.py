# tests/unit/test_samplers.py

import numpy as np
import pytest
from scipy import stats

from tdlab.models import FeatureMap, InducedMrp, SampleTuple, SamplingMode
from tdlab.operations.exact_solvers import off_policy_population
from tdlab.operations.mdp_core import build_geometry, induce_mrp, stationary_distribution
from tdlab.operations.samplers import (
    UNIFORMS_PER_STEP,
    OffPolicySampler,
    OnPolicySampler,
    SampleStream,
    empirical_terms,
    sample_offpolicy,
    sample_onpolicy,
)


def _baird_sampler(instance):
    mu_b = stationary_distribution(induce_mrp(instance.mdp, instance.behavior).P)
    return OffPolicySampler(instance.mdp, instance.target, instance.behavior, mu_b)


# ---------------------------------------------
# SampleStream
# ---------------------------------------------

def test_stream_is_reproducible():
    first = SampleStream(seed=123, trial=4).next_block(100)
    second = SampleStream(seed=123, trial=4).next_block(100)
    assert first.shape == (100, UNIFORMS_PER_STEP)
    assert np.array_equal(first, second)


def test_streams_differ_across_trials_and_seeds():
    base = SampleStream(seed=123, trial=0).next_block(10)
    assert not np.array_equal(base, SampleStream(seed=123, trial=1).next_block(10))
    assert not np.array_equal(base, SampleStream(seed=124, trial=0).next_block(10))


@pytest.mark.parametrize("step", [0, 1, 7, 99])
def test_stream_random_access_matches_sequential(step):
    """at_step recomputes the uniforms of any step bit-for-bit."""
    stream = SampleStream(seed=2**63 + 5, trial=17)
    block = SampleStream(seed=2**63 + 5, trial=17).next_block(100)
    assert np.array_equal(stream.at_step(step), block[step])


def test_stream_tracks_position():
    stream = SampleStream(seed=1, trial=0)
    stream.next_block(5)
    stream.next_block(3)
    assert stream.position == 8


def test_split_blocks_equal_one_block():
    stream = SampleStream(seed=9, trial=2)
    pieces = np.vstack([stream.next_block(3), stream.next_block(4)])
    assert np.array_equal(pieces, SampleStream(seed=9, trial=2).next_block(7))


# ---------------------------------------------
# On-policy sampling
# ---------------------------------------------

def test_cyclic_shift_is_deterministic():
    P = np.roll(np.eye(4), 1, axis=1)
    mrp = InducedMrp(P=P, r=[0.0, 0.25, 0.5, 1.0], gamma=0.5)
    batch = OnPolicySampler(mrp, np.full(4, 0.25)).draw_batch(SampleStream(0, 0), 1000)
    assert np.array_equal(batch.s_next, (batch.s + 1) % 4)
    np.testing.assert_allclose(batch.r, mrp.r[batch.s])
    assert np.all(batch.rho == 1.0)


def test_sequential_draws_match_batch_and_random_access(minimax_instance):
    mrp = induce_mrp(minimax_instance.mdp, minimax_instance.target)
    mu = minimax_instance.exact.mu
    sampler = OnPolicySampler(mrp, mu)
    batch = sampler.draw_batch(SampleStream(5, 3), 20)
    stream = SampleStream(5, 3)
    for t in range(20):
        assert sampler.draw(stream) == batch.row(t)
        assert sampler.draw_at(SampleStream(5, 3), t) == batch.row(t)


def test_sample_onpolicy_returns_a_tuple(minimax_instance):
    mrp = induce_mrp(minimax_instance.mdp, minimax_instance.target)
    sample = sample_onpolicy(mrp, minimax_instance.exact.mu, SampleStream(0, 0))
    assert isinstance(sample, SampleTuple)
    assert 0 <= sample.s < 10 and 0 <= sample.s_next < 10
    assert sample.a == 0 and sample.rho == 1.0


def test_minimax_state_frequencies_pass_chi_square(minimax_instance):
    """10^6 draws of s against the closed-form mu."""
    mrp = induce_mrp(minimax_instance.mdp, minimax_instance.target)
    mu = minimax_instance.exact.mu
    n_samples = 1_000_000
    batch = OnPolicySampler(mrp, mu).draw_batch(SampleStream(11, 0), n_samples)
    counts = np.bincount(batch.s, minlength=10)
    statistic = np.sum((counts - n_samples * mu) ** 2 / (n_samples * mu))
    assert statistic <= stats.chi2.ppf(0.9999, df=9)


def test_on_policy_sampler_rejects_bad_mu(minimax_instance):
    mrp = induce_mrp(minimax_instance.mdp, minimax_instance.target)
    with pytest.raises(ValueError):
        OnPolicySampler(mrp, np.full(3, 1.0 / 3.0))


# ---------------------------------------------
# Off-policy sampling
# ---------------------------------------------

def test_identical_policies_give_unit_ratios(random_instance):
    instance = random_instance.model_copy(update={"behavior": random_instance.target})
    mu = stationary_distribution(induce_mrp(instance.mdp, instance.behavior).P)
    batch = OffPolicySampler(instance.mdp, instance.target, instance.behavior, mu).draw_batch(SampleStream(0, 0), 500)
    assert np.all(batch.rho == 1.0)


def test_baird_ratios_take_two_values(baird_instance):
    n_samples = 100_000
    batch = _baird_sampler(baird_instance).draw_batch(SampleStream(3, 0), n_samples)
    assert set(np.unique(batch.rho).round(12)) <= {0.0, 7.0}
    # rho = 7 exactly when the solid action is taken
    assert np.array_equal(batch.rho > 0, batch.a == 1)
    assert np.all(batch.s_next[batch.a == 1] == 6)
    frequency = np.mean(batch.rho > 0)
    se = np.sqrt((1.0 / 7.0) * (6.0 / 7.0) / n_samples)
    assert abs(frequency - 1.0 / 7.0) <= 4.0 * se


def test_baird_sigma_terms_average_to_gram(baird_instance):
    """Sigma_t is unweighted, so its mean is Phi^T Phi / 7 under the uniform behavior law."""
    n_samples = 1_000_000
    batch = _baird_sampler(baird_instance).draw_batch(SampleStream(4, 0), n_samples)
    phi = baird_instance.features.phi
    freq = np.bincount(batch.s, minlength=7) / n_samples
    empirical = phi.T @ (freq[:, None] * phi)
    exact = phi.T @ phi / 7.0
    products = np.einsum("si,sj->sij", phi, phi)
    se = np.sqrt(np.maximum(np.mean(products**2, axis=0) - exact**2, 0.0) / n_samples)
    assert np.all(np.abs(empirical - exact) <= 5.0 * se + 1e-12)


def test_sample_offpolicy_matches_sampler(baird_instance):
    mu_b = np.full(7, 1.0 / 7.0)
    sample = sample_offpolicy(
        baird_instance.mdp, baird_instance.target, baird_instance.behavior, mu_b, SampleStream(8, 1)
    )
    assert sample == _baird_sampler(baird_instance).draw(SampleStream(8, 1))
    assert sample.rho in (0.0, pytest.approx(7.0))


def test_off_policy_sampler_mean_ratio_is_one(random_instance):
    """E[rho] = 1 under the behavior policy."""
    off = off_policy_population(
        random_instance.mdp, random_instance.target, random_instance.behavior, random_instance.features, strict=False
    )
    sampler = OffPolicySampler(random_instance.mdp, random_instance.target, random_instance.behavior, off.mu_b)
    rho = sampler.draw_batch(SampleStream(21, 0), 200_000).rho
    se = rho.std() / np.sqrt(rho.size)
    assert abs(rho.mean() - 1.0) <= 5.0 * se


# ---------------------------------------------
# empirical_terms
# ---------------------------------------------

def test_empirical_terms_single_coordinate():
    """phi(s) = phi(s') = e1, gamma = 0.9, r = 1: A_t = 0.1 e1 e1^T and b_t = e1."""
    features = FeatureMap(phi=np.eye(2))
    terms = empirical_terms(SampleTuple(s=0, a=0, s_next=0, r=1.0), features, 0.9, SamplingMode.ON_POLICY)
    np.testing.assert_allclose(terms.A_t, [[0.1, 0.0], [0.0, 0.0]], atol=1e-15)
    np.testing.assert_allclose(terms.b_t, [1.0, 0.0])
    assert not terms.is_off_policy


def test_empirical_terms_zero_ratio_keeps_sigma():
    features = FeatureMap(phi=np.array([[0.6, 0.0], [0.0, 0.8]]))
    sample = SampleTuple(s=0, a=0, s_next=1, r=0.5, rho=0.0)
    terms = empirical_terms(sample, features, 0.9, SamplingMode.OFF_POLICY)
    assert terms.is_off_policy
    assert np.all(terms.A_t == 0.0) and np.all(terms.b_t == 0.0) and np.all(terms.Pi_t == 0.0)
    np.testing.assert_allclose(terms.Sigma_t, [[0.36, 0.0], [0.0, 0.0]])


def test_off_policy_terms_satisfy_the_identity(minimax_instance):
    """A_tilde_t = rho Sigma_t - gamma Pi_t sample by sample."""
    mrp = induce_mrp(minimax_instance.mdp, minimax_instance.target)
    geometry = build_geometry(mrp, minimax_instance.features)
    sampler = OnPolicySampler(mrp, geometry.mu)
    stream = SampleStream(2, 0)
    for _ in range(20):
        sample = sampler.draw(stream)
        terms = empirical_terms(sample, minimax_instance.features, 0.2, SamplingMode.OFF_POLICY)
        np.testing.assert_allclose(terms.A_t, sample.rho * terms.Sigma_t - 0.2 * terms.Pi_t, atol=1e-15)
