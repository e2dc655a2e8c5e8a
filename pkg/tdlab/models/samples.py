# tdlab/models/samples.py
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np


class SamplingMode(str, Enum):
    """How transitions are generated and which empirical terms are formed."""

    ON_POLICY = "on_policy"
    OFF_POLICY = "off_policy"


@dataclass(frozen=True, slots=True)
class SampleTuple:
    """One i.i.d. transition (s, a, s', r) with importance ratio rho."""

    s: int
    a: int
    s_next: int
    r: float
    rho: float = 1.0


@dataclass(frozen=True, slots=True)
class SampleBatch:
    """Column arrays of consecutive transitions drawn from one stream."""

    s: np.ndarray
    a: np.ndarray
    s_next: np.ndarray
    r: np.ndarray
    rho: np.ndarray

    def __len__(self) -> int:
        return len(self.s)

    def row(self, i: int) -> SampleTuple:
        return SampleTuple(
            s=int(self.s[i]),
            a=int(self.a[i]),
            s_next=int(self.s_next[i]),
            r=float(self.r[i]),
            rho=float(self.rho[i]),
        )


@dataclass(frozen=True, slots=True)
class EmpiricalTerms:
    """
    Per-sample matrices driving the TD-type recursions.

    Off-policy terms carry the rho weighting in A_t, b_t and Pi_t; Sigma_t is
    never weighted. Population matrices can be wrapped in the same type to
    run the noise-free recursions.
    """

    A_t: np.ndarray
    b_t: np.ndarray
    Pi_t: Optional[np.ndarray] = None
    Sigma_t: Optional[np.ndarray] = None

    @property
    def is_off_policy(self) -> bool:
        return self.Pi_t is not None and self.Sigma_t is not None
