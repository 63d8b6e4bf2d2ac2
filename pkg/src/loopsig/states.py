"""Truncated photon-number distributions (diagonal density matrices).

A state lives on the Fock basis ``|0>, ..., |K>`` and is stored as the vector
of diagonal coefficients ``rho_nn``.  Two flavours exist:

* :class:`PhotonNumberDistribution` -- validated: nonnegative, unit trace.
* :class:`RawPhotonNumberDistribution` -- unconstrained coefficients, as produced
  mid-optimization.  It carries physicality diagnostics and must be converted
  explicitly before it can be treated as a state.

The coherent-state constructor normalizes over ``n = 0..K``.  The published
normalization sum starts at ``n = 1``, which would omit the vacuum term and break
the unit trace, so the vacuum term is included here.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .errors import DomainError

__all__ = [
    "PhotonNumberDistribution",
    "RawPhotonNumberDistribution",
    "coherent_truncated",
    "fock",
    "from_weights",
    "mean_photon_number",
]

_NORM_TOL = 1e-12


def _frozen_array(values: Sequence[float] | np.ndarray) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise DomainError("photon-number coefficients must be a non-empty 1-D vector")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PhotonNumberDistribution:
    """Normalized diagonal ``rho_nn`` on ``n = 0..K``."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = _frozen_array(self.probs)
        if not np.all(np.isfinite(probs)):
            raise DomainError("coefficients must be finite")
        if np.any(probs < 0):
            raise DomainError("coefficients must be nonnegative")
        total = math.fsum(probs)
        if abs(total - 1.0) > _NORM_TOL:
            raise DomainError(f"coefficients sum to {total!r}, not 1")
        object.__setattr__(self, "probs", probs)

    @property
    def K(self) -> int:
        return self.probs.size - 1

    @property
    def mean(self) -> float:
        return mean_photon_number(self)

    def __len__(self) -> int:
        return self.probs.size

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PhotonNumberDistribution):
            return NotImplemented
        return np.array_equal(self.probs, other.probs)

    def __hash__(self) -> int:
        return hash(self.probs.tobytes())

    def to_dict(self) -> dict[str, Any]:
        return {"K": self.K, "probs": [float(p) for p in self.probs]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PhotonNumberDistribution":
        probs = data["probs"]
        if "K" in data and int(data["K"]) != len(probs) - 1:
            raise DomainError(f"K={data['K']} does not match {len(probs)} coefficients")
        return cls(np.asarray(probs, dtype=float))

    @classmethod
    def from_json(cls, text: str) -> "PhotonNumberDistribution":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class RawPhotonNumberDistribution:
    """Unconstrained diagonal coefficients (may be negative or off-trace)."""

    coefficients: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "coefficients", _frozen_array(self.coefficients))

    @property
    def K(self) -> int:
        return self.coefficients.size - 1

    @property
    def trace(self) -> float:
        return math.fsum(self.coefficients)

    @property
    def trace_deviation(self) -> float:
        return self.trace - 1.0

    @property
    def negative_indices(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.coefficients < 0)]

    @property
    def is_physical(self) -> bool:
        return not self.negative_indices and abs(self.trace_deviation) <= _NORM_TOL

    @property
    def mean(self) -> float:
        """Sum of ``n * rho_nn`` taken as-is (no renormalization)."""
        return float(np.dot(np.arange(self.coefficients.size), self.coefficients))

    def to_distribution(self) -> PhotonNumberDistribution:
        """Clip negatives to zero and renormalize."""
        return from_weights(np.clip(self.coefficients, 0.0, None))

    def to_dict(self) -> dict[str, Any]:
        return {
            "K": self.K,
            "probs": [float(p) for p in self.coefficients],
            "physical": self.is_physical,
            "trace_deviation": self.trace_deviation,
            "negative_indices": self.negative_indices,
        }


def coherent_truncated(nbar: float, K: int) -> PhotonNumberDistribution:
    """Poisson weights ``nbar**n / n!`` on ``n = 0..K``, renormalized to unit trace.

    Weights are formed in log space so ``K`` of a few tens does not overflow.
    """
    if K < 0 or int(K) != K:
        raise DomainError(f"K must be a nonnegative integer, got {K!r}")
    nbar = float(nbar)
    if not math.isfinite(nbar) or nbar < 0:
        raise DomainError(f"nbar must be finite and >= 0, got {nbar!r}")
    K = int(K)
    if nbar == 0.0:
        return fock(0, K)
    n = np.arange(K + 1)
    logw = n * math.log(nbar) - np.array([math.lgamma(k + 1) for k in n])
    w = np.exp(logw - logw.max())
    probs = w / math.fsum(w)
    return PhotonNumberDistribution(probs)


def fock(n: int, K: int) -> PhotonNumberDistribution:
    if K < 0 or not 0 <= n <= K:
        raise DomainError(f"need 0 <= n <= K, got n={n}, K={K}")
    probs = np.zeros(int(K) + 1)
    probs[int(n)] = 1.0
    return PhotonNumberDistribution(probs)


def from_weights(weights: Sequence[float] | np.ndarray) -> PhotonNumberDistribution:
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise DomainError("weights must be a non-empty 1-D vector")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise DomainError("weights must be finite and nonnegative")
    total = math.fsum(w)
    if total <= 0:
        raise DomainError("at least one weight must be positive")
    probs = w / total
    # absorb the last rounding residue so the trace check is exact to ~1 ulp
    residue = 1.0 - math.fsum(probs)
    probs[int(np.argmax(probs))] += residue
    return PhotonNumberDistribution(probs)


def mean_photon_number(state: PhotonNumberDistribution) -> float:
    return math.fsum(np.arange(state.probs.size) * state.probs)
