# tdlab/core/config.py
from functools import lru_cache
from typing import Optional

from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

    # Numerical tolerances
    STOCHASTIC_TOL: float = 1e-12  # row sums of kernels and policies
    STATIONARY_TOL: float = 1e-10  # residual of mu^T P = mu^T
    FEATURE_SV_TOL: float = 1e-10  # smallest admissible singular value of Phi
    POWER_ITERATION_TOL: float = 1e-12
    POWER_ITERATION_MAX_SWEEPS: int = 1_000_000

    # Learners
    DIVERGENCE_THRESHOLD: float = 1e12

    # Stepsize constants left unspecified by the theory
    THEOREM1_C0: float = 1.0
    THEOREM1_MARGIN: float = 0.5  # emitted eta = margin * c0 * (1-gamma) / (kappa log(Td/delta))
    BURN_IN_C1: float = 1.0
    COROLLARY2_ALPHA_CONSTANT: float = 1.0
    STEP_CONDITION_MARGIN: float = 10.0  # "lhs << rhs" read as margin * lhs <= rhs

    # Minimax instance
    EPSILON_C1_SCALE: float = 0.1  # c1 = scale * gamma / (1 - gamma)

    # Experiments
    DEFAULT_WORKERS: Optional[int] = None  # None falls back to os.cpu_count()
    DEFAULT_CHECKPOINTS: int = 50
    FIRST_CHECKPOINT: int = 10
    SAMPLE_CHUNK: int = 4096  # steps drawn per vectorised block

    class Config:
        env_file = ".env"
        env_prefix = "TDLAB_"
        case_sensitive = True


# Create a global settings instance
settings = Settings()


@lru_cache()
def get_settings() -> Settings:
    return Settings()
