# tdlab/operations/samplers.py
"""
Samplers

Seeded i.i.d. transition generation for on-policy and off-policy evaluation
and the per-sample empirical matrices built from each transition.

Every trial owns one ``SampleStream``. The stream key is derived from the
master seed and the trial index through ``SeedSequence(seed, spawn_key=(trial,))``
and drives a counter-based Philox generator. Each step consumes exactly one
Philox block of four uniforms (state, action, next state, one spare), so the
draw at (seed, trial, step) can be recomputed without replaying the stream.
"""

import logging
import numpy as np

from tdlab.core.exceptions import CoverageError, InstanceError
from tdlab.models.mdp import FeatureMap, InducedMrp, Policy, TabularMdp
from tdlab.models.samples import EmpiricalTerms, SampleBatch, SampleTuple, SamplingMode
from tdlab.operations.exact_solvers import importance_ratios

logger = logging.getLogger(__name__)

UNIFORMS_PER_STEP = 4


class SampleStream:
    """Counter-based uniform stream owned by a single trial."""

    def __init__(self, seed: int, trial: int):
        self.seed = int(seed)
        self.trial = int(trial)
        self._key = np.random.SeedSequence(self.seed, spawn_key=(self.trial,)).generate_state(2, dtype=np.uint64)
        self._generator = np.random.Generator(np.random.Philox(key=self._key))
        self.position = 0

    def next_block(self, n_steps: int) -> np.ndarray:
        """Uniforms for the next ``n_steps`` steps, shape (n_steps, 4)."""
        block = self._generator.random((n_steps, UNIFORMS_PER_STEP))
        self.position += n_steps
        return block

    def at_step(self, step: int) -> np.ndarray:
        """The four uniforms of ``step`` (0-based), independent of the stream position."""
        bit_generator = np.random.Philox(key=self._key)
        bit_generator.advance(step)
        return np.random.Generator(bit_generator).random(UNIFORMS_PER_STEP)


def _cdf(probs: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(probs, axis=-1)
    cdf[..., -1] = 1.0
    return cdf


def _inverse_cdf(cdf_rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Index of the first cdf entry strictly above u, row by row."""
    idx = (u[:, None] >= cdf_rows).sum(axis=1)
    return np.minimum(idx, cdf_rows.shape[-1] - 1)


class OnPolicySampler:
    """s ~ mu, s' ~ P(.|s), r = r(s); rho is identically one."""

    mode = SamplingMode.ON_POLICY

    def __init__(self, mrp: InducedMrp, mu: np.ndarray):
        mu = np.asarray(mu, dtype=np.float64)
        if mu.shape != (mrp.n_states,):
            raise InstanceError(f"mu has shape {mu.shape}, expected ({mrp.n_states},)")
        self.mrp = mrp
        self._state_cdf = _cdf(mu)
        self._next_cdf = _cdf(mrp.P)

    def draw_batch(self, stream: SampleStream, n_steps: int) -> SampleBatch:
        u = stream.next_block(n_steps)
        return self._from_uniforms(u)

    def draw(self, stream: SampleStream) -> SampleTuple:
        return self.draw_batch(stream, 1).row(0)

    def draw_at(self, stream: SampleStream, step: int) -> SampleTuple:
        return self._from_uniforms(stream.at_step(step)[None, :]).row(0)

    def _from_uniforms(self, u: np.ndarray) -> SampleBatch:
        s = np.minimum(np.searchsorted(self._state_cdf, u[:, 0], side="right"), len(self._state_cdf) - 1)
        s_next = _inverse_cdf(self._next_cdf[s], u[:, 2])
        n = len(s)
        return SampleBatch(s=s, a=np.zeros(n, dtype=np.int64), s_next=s_next, r=self.mrp.r[s], rho=np.ones(n))


class OffPolicySampler:
    """s ~ mu_b, a ~ pi_b(.|s), s' ~ K(.|s, a); rho = pi(a|s) / pi_b(a|s)."""

    mode = SamplingMode.OFF_POLICY

    def __init__(self, mdp: TabularMdp, target: Policy, behavior: Policy, mu_b: np.ndarray):
        mu_b = np.asarray(mu_b, dtype=np.float64)
        if mu_b.shape != (mdp.n_states,):
            raise InstanceError(f"mu_b has shape {mu_b.shape}, expected ({mdp.n_states},)")
        self.mdp = mdp
        self.rho_table = importance_ratios(target, behavior)
        self._state_cdf = _cdf(mu_b)
        self._action_cdf = _cdf(behavior.probs)
        self._next_cdf = _cdf(mdp.kernel)

    def draw_batch(self, stream: SampleStream, n_steps: int) -> SampleBatch:
        return self._from_uniforms(stream.next_block(n_steps))

    def draw(self, stream: SampleStream) -> SampleTuple:
        return self.draw_batch(stream, 1).row(0)

    def draw_at(self, stream: SampleStream, step: int) -> SampleTuple:
        return self._from_uniforms(stream.at_step(step)[None, :]).row(0)

    def _from_uniforms(self, u: np.ndarray) -> SampleBatch:
        s = np.minimum(np.searchsorted(self._state_cdf, u[:, 0], side="right"), len(self._state_cdf) - 1)
        a = _inverse_cdf(self._action_cdf[s], u[:, 1])
        s_next = _inverse_cdf(self._next_cdf[s, a], u[:, 2])
        rho = self.rho_table[s, a]
        if not np.all(np.isfinite(rho)):
            raise CoverageError("Importance ratio undefined at a sampled state-action pair")
        return SampleBatch(s=s, a=a, s_next=s_next, r=self.mdp.reward[s, a], rho=rho)


def sample_onpolicy(mrp: InducedMrp, mu: np.ndarray, rng_stream: SampleStream) -> SampleTuple:
    """Draw one on-policy transition from the stream."""
    return OnPolicySampler(mrp, mu).draw(rng_stream)


def sample_offpolicy(
    mdp: TabularMdp,
    target: Policy,
    behavior: Policy,
    mu_b: np.ndarray,
    rng_stream: SampleStream,
) -> SampleTuple:
    """Draw one behavior-policy transition with its importance ratio."""
    return OffPolicySampler(mdp, target, behavior, mu_b).draw(rng_stream)


def empirical_terms(
    sample: SampleTuple,
    features: FeatureMap,
    gamma: float,
    mode: SamplingMode,
) -> EmpiricalTerms:
    """
    Per-sample TD matrices.

    On-policy: A_t = phi (phi - gamma phi')^T and b_t = phi r. Off-policy
    scales both by rho and adds Pi_t = rho phi phi'^T and the unweighted
    Sigma_t = phi phi^T.
    """
    phi = features.phi[sample.s]
    phi_next = features.phi[sample.s_next]
    if mode == SamplingMode.ON_POLICY:
        return EmpiricalTerms(A_t=np.outer(phi, phi - gamma * phi_next), b_t=phi * sample.r)
    rho = sample.rho
    cross = np.outer(phi, phi_next)
    Sigma_t = np.outer(phi, phi)
    return EmpiricalTerms(
        A_t=rho * (Sigma_t - gamma * cross),
        b_t=(rho * sample.r) * phi,
        Pi_t=rho * cross,
        Sigma_t=Sigma_t,
    )
