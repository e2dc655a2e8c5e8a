import logging
import subprocess
import sys
from pathlib import Path
from typing import Callable, List

import numpy as np
import pytest

from tdlab.models import FeatureMap, Policy, PolicyEvaluationInstance, TabularMdp
from tdlab.schemas.instance import MinimaxSpec
from tdlab.services.instances import build_baird, build_minimax

# ======================================================================================
# Logging Configuration
# ======================================================================================
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

N_RANDOM_INSTANCES = 20

# ======================================================================================
# Helper Functions
# ======================================================================================
def make_random_instance(
    seed: int,
    n_states: int = None,
    n_actions: int = 2,
    d: int = None,
    off_policy: bool = True,
    gamma: float = None,
) -> PolicyEvaluationInstance:
    """
    Random instance with Dirichlet kernels and policies and Gaussian features
    scaled so the largest row has norm one.
    """
    rng = np.random.default_rng(seed)
    n = int(n_states or rng.integers(3, 31))
    d = int(d or rng.integers(1, min(n, 6) + 1))
    gamma = float(gamma if gamma is not None else rng.uniform(0.1, 0.95))
    kernel = rng.dirichlet(np.ones(n), size=(n, n_actions))
    reward = rng.uniform(0.0, 1.0, size=(n, n_actions))
    phi = rng.normal(size=(n, d))
    phi /= np.linalg.norm(phi, axis=1).max()
    target = Policy(probs=rng.dirichlet(np.ones(n_actions), size=n))
    behavior = Policy(probs=rng.dirichlet(np.ones(n_actions), size=n)) if off_policy else target
    return PolicyEvaluationInstance(
        name=f"random-{seed}",
        mdp=TabularMdp(kernel=kernel, reward=reward, gamma=gamma),
        target=target,
        behavior=behavior,
        features=FeatureMap(phi=phi),
    )


def random_instances(count: int = N_RANDOM_INSTANCES) -> List[PolicyEvaluationInstance]:
    return [make_random_instance(seed) for seed in range(count)]


def single_state_instance() -> PolicyEvaluationInstance:
    """|S| = 1, r = 1, gamma = 1/2, phi = 1: A = 1/2, b = 1, theta* = 2."""
    return PolicyEvaluationInstance(
        name="single-state",
        mdp=TabularMdp(kernel=[[[1.0]]], reward=[[1.0]], gamma=0.5),
        target=Policy.uniform(1, 1),
        behavior=Policy.uniform(1, 1),
        features=FeatureMap(phi=[[1.0]]),
    )


def uniform_chain_instance() -> PolicyEvaluationInstance:
    """Three states jumping uniformly, tabular features, gamma = 0.1."""
    return PolicyEvaluationInstance(
        name="uniform-chain",
        mdp=TabularMdp(kernel=np.full((3, 1, 3), 1.0 / 3.0), reward=[[0.2], [0.5], [0.8]], gamma=0.1),
        target=Policy.uniform(3, 1),
        behavior=Policy.uniform(3, 1),
        features=FeatureMap(phi=np.eye(3)),
    )

# ======================================================================================
# Instance Fixtures
# ======================================================================================
@pytest.fixture(params=range(N_RANDOM_INSTANCES), ids=lambda seed: f"random-{seed}")
def random_instance(request) -> PolicyEvaluationInstance:
    """One of the seeded random off-policy instances."""
    return make_random_instance(request.param)


@pytest.fixture
def single_state() -> PolicyEvaluationInstance:
    return single_state_instance()


@pytest.fixture
def uniform_chain() -> PolicyEvaluationInstance:
    return uniform_chain_instance()


@pytest.fixture
def minimax_instance() -> PolicyEvaluationInstance:
    """Default minimax instance: |S| = 10, d = 3, gamma = 0.2, epsilon = 0.01."""
    return build_minimax(MinimaxSpec())


@pytest.fixture
def baird_instance() -> PolicyEvaluationInstance:
    return build_baird()

# ======================================================================================
# CLI Fixture
# ======================================================================================
REPO_ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture(scope="session")
def tdlab_cli() -> Callable[..., subprocess.CompletedProcess]:
    """
    Run `python -m tdlab <args>` in a subprocess from the repository root and
    return the completed process with captured text output.
    """
    def run(*args: str, timeout: float = 600.0) -> subprocess.CompletedProcess:
        command = [sys.executable, "-m", "tdlab", *map(str, args)]
        logger.info(f"Running {' '.join(command)}")
        return subprocess.run(command, cwd=REPO_ROOT, capture_output=True, text=True, timeout=timeout)

    return run

# ======================================================================================
# Pytest Command-Line Options
# ======================================================================================
def pytest_addoption(parser):
    """
    Add custom command line options:
      --run-slow    : Run tests marked as 'slow'
    """
    parser.addoption("--run-slow", action="store_true", help="Run tests marked as slow")

def pytest_collection_modifyitems(config, items):
    """
    Skip tests marked as 'slow' unless --run-slow is specified.
    """
    if not config.getoption("--run-slow"):
        skip_slow = pytest.mark.skip(reason="use --run-slow to run")
        for item in items:
            if "slow" in item.keywords:
                item.add_marker(skip_slow)
