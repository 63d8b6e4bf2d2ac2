"""Forward model of an N-port on/off detector.

Each of ``n`` photons leaves the multiplexer through port ``i`` with probability
``p_c[i]`` and, once there, is lost with probability ``p_loss[i]``.  Every port
also fires a dark count with probability ``p_dc``.  A *signature* is the set of
ports that clicked during one cycle.

Coupling that does not reach any observed port (``1 - sum(p_c)``) is a sink for
photons.  It can be made explicit with :func:`with_catch_all`, which appends a
lossless, unobserved bin; signature probabilities then marginalize that bin's
two outcomes.  Both descriptions give identical observable probabilities.

Signatures are indexed bin-reversed: time bin 1 is the least-significant bit,
so a click in bins 1 and 3 of a 9-bin detector is ``000000101`` (index 5).
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import CapacityError, DomainError
from .states import PhotonNumberDistribution

__all__ = [
    "CALIBRATED_EFFICIENCIES",
    "DARK_COUNT_PROBABILITY",
    "ConditionalMatrix",
    "DetectorConfig",
    "LoopGeometry",
    "Signature",
    "SignatureDistribution",
    "click_marginals",
    "click_prob_binomial",
    "conditional_matrix",
    "config_from_bin_efficiencies",
    "db_to_transmission",
    "loop_config",
    "signature_distribution",
    "signature_matrix",
    "signature_prob_given_n",
    "signature_prob_given_n_bruteforce",
    "signature_prob_state",
    "with_catch_all",
]

# Calibrated per-bin detection efficiencies of the 14-bin, 1550 nm loop detector.
CALIBRATED_EFFICIENCIES: tuple[float, ...] = (
    6.83e-3, 3.58e-3, 1.88e-3, 9.91e-4, 5.22e-4, 2.75e-4, 1.45e-4,
    7.61e-5, 4.01e-5, 2.11e-5, 1.11e-5, 5.84e-6, 3.08e-6, 1.62e-6,
)
DARK_COUNT_PROBABILITY = 9.6e-4

ENUMERATION_BUDGET = 5_000_000
MAX_SIGNATURE_BINS = 16
_SUM_TOL = 1e-12


def db_to_transmission(db: float) -> float:
    """Insertion loss in dB to linear transmission, ``10**(-dB/10)``."""
    return 10.0 ** (-float(db) / 10.0)


# --------------------------------------------------------------------------- #
# configuration
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class DetectorConfig:
    """Coupling, loss and dark-count parameters of an N-port detector.

    When ``catch_all`` is set the final entry of ``p_c``/``p_loss`` is the
    unobserved catch-all bin and ``N`` counts only the observed bins.
    """

    p_c: tuple[float, ...]
    p_loss: tuple[float, ...]
    p_dc: float = 0.0
    catch_all: bool = False

    def __post_init__(self) -> None:
        p_c = tuple(float(x) for x in self.p_c)
        p_loss = tuple(float(x) for x in self.p_loss)
        object.__setattr__(self, "p_c", p_c)
        object.__setattr__(self, "p_loss", p_loss)
        object.__setattr__(self, "p_dc", float(self.p_dc))
        object.__setattr__(self, "catch_all", bool(self.catch_all))

        if len(p_c) != len(p_loss):
            raise DomainError(f"p_c has {len(p_c)} bins but p_loss has {len(p_loss)}")
        if len(p_c) < 1 + self.catch_all:
            raise DomainError("a detector needs at least one observed bin")
        for name, values in (("p_c", p_c), ("p_loss", p_loss), ("p_dc", (self.p_dc,))):
            for v in values:
                if not (math.isfinite(v) and 0.0 <= v <= 1.0):
                    raise DomainError(f"{name} entries must lie in [0, 1], got {v!r}")
        total = math.fsum(p_c)
        if total > 1.0 + _SUM_TOL:
            raise DomainError(f"coupling probabilities sum to {total!r} > 1")
        if self.catch_all:
            if abs(total - 1.0) > _SUM_TOL:
                raise DomainError("catch-all config must have couplings summing to 1")
            if p_loss[-1] != 0.0:
                raise DomainError("catch-all bin must be lossless")

    @property
    def N(self) -> int:
        """Number of observed bins."""
        return len(self.p_c) - int(self.catch_all)

    @property
    def efficiencies(self) -> np.ndarray:
        """Per-bin detection efficiency ``p_c * (1 - p_loss)`` of the observed bins."""
        p_c = np.asarray(self.p_c[: self.N])
        p_loss = np.asarray(self.p_loss[: self.N])
        return p_c * (1.0 - p_loss)

    @property
    def coupled_fraction(self) -> float:
        return math.fsum(self.p_c[: self.N])

    def to_dict(self) -> dict[str, Any]:
        return {
            "N": self.N,
            "p_c": list(self.p_c),
            "p_loss": list(self.p_loss),
            "p_dc": self.p_dc,
            "catch_all": self.catch_all,
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "DetectorConfig":
        missing = [k for k in ("p_c", "p_loss") if k not in data]
        if missing:
            raise DomainError(f"config is missing field(s): {', '.join(missing)}")
        config = cls(
            p_c=tuple(data["p_c"]),
            p_loss=tuple(data["p_loss"]),
            p_dc=data.get("p_dc", 0.0),
            catch_all=data.get("catch_all", False),
        )
        if "N" in data and int(data["N"]) != config.N:
            raise DomainError(f"field N={data['N']} but p_c describes {config.N} observed bins")
        return config

    @classmethod
    def from_json(cls, text: str) -> "DetectorConfig":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class LoopGeometry:
    """Physical parameters of a fibre-loop time-multiplexed detector.

    ``r`` is the output-coupler tap ratio; the ``t_*`` fields are linear
    transmissions; ``eta_d`` is the on/off detector quantum efficiency.
    """

    r: float = 0.1
    t_switch: float = db_to_transmission(1.2)
    t_fiber: float = db_to_transmission(0.8)
    t_coupler: float = db_to_transmission(0.5)
    eta_d: float = 0.1
    N: int = 9

    def __post_init__(self) -> None:
        for name in ("r", "t_switch", "t_fiber", "t_coupler", "eta_d"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise DomainError(f"{name} must lie in (0, 1], got {v!r}")
        if self.N < 1:
            raise DomainError("N must be >= 1")

    @classmethod
    def from_db(
        cls,
        switch_db: float = 1.2,
        fiber_db: float = 0.8,
        coupler_db: float = 0.5,
        r: float = 0.1,
        eta_d: float = 0.1,
        N: int = 9,
    ) -> "LoopGeometry":
        return cls(
            r=r,
            t_switch=db_to_transmission(switch_db),
            t_fiber=db_to_transmission(fiber_db),
            t_coupler=db_to_transmission(coupler_db),
            eta_d=eta_d,
            N=N,
        )

    @property
    def round_trip_transmission(self) -> float:
        """Fraction of the circulating pulse surviving one more pass to the tap."""
        return (1.0 - self.r) * self.t_fiber * self.t_switch * self.t_coupler


def loop_config(geom: LoopGeometry, p_dc: float = 0.0) -> DetectorConfig:
    """Geometric-tap coupling model for a fibre loop.

    The pulse enters through the switch and reaches the coupler, where a fraction
    ``r`` is tapped to the detector.  The remainder circulates once more through
    fibre, switch and coupler before the next tap.
    """
    first = geom.t_switch * geom.t_coupler * geom.r
    ratio = geom.round_trip_transmission
    p_c = tuple(first * ratio**i for i in range(geom.N))
    p_loss = (1.0 - geom.eta_d,) * geom.N
    return DetectorConfig(p_c=p_c, p_loss=p_loss, p_dc=p_dc)


def config_from_bin_efficiencies(
    etas: Sequence[float], p_dc: float, eta_d_ref: float = 0.1
) -> DetectorConfig:
    """Build a config whose per-bin efficiencies equal ``etas``.

    Only ``p_c * (1 - p_loss)`` is observable; transport loss goes into ``p_c``
    and every bin gets ``p_loss = 1 - eta_d_ref``.
    """
    etas = [float(e) for e in etas]
    if not etas:
        raise DomainError("need at least one bin efficiency")
    if not 0.0 < eta_d_ref <= 1.0:
        raise DomainError(f"eta_d_ref must lie in (0, 1], got {eta_d_ref!r}")
    for e in etas:
        if not 0.0 < e <= 1.0:
            raise DomainError(f"bin efficiencies must lie in (0, 1], got {e!r}")
    p_c = tuple(e / eta_d_ref for e in etas)
    if math.fsum(p_c) > 1.0 + _SUM_TOL:
        raise DomainError(
            f"efficiencies imply coupling sum {math.fsum(p_c):.6g} > 1 at eta_d_ref={eta_d_ref}"
        )
    return DetectorConfig(p_c=p_c, p_loss=(1.0 - eta_d_ref,) * len(p_c), p_dc=p_dc)


def with_catch_all(config: DetectorConfig) -> DetectorConfig:
    """Append an unobserved lossless bin holding the residual coupling."""
    if config.catch_all:
        return config
    residual = max(0.0, 1.0 - math.fsum(config.p_c))
    p_c = config.p_c + (residual,)
    # fold rounding into the residual so the augmented sum is 1 to ~1 ulp
    p_c = p_c[:-1] + (max(0.0, p_c[-1] + (1.0 - math.fsum(p_c))),)
    return DetectorConfig(
        p_c=p_c, p_loss=config.p_loss + (0.0,), p_dc=config.p_dc, catch_all=True
    )


# --------------------------------------------------------------------------- #
# signatures
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class Signature:
    """Which of ``N`` bins clicked.  ``bits[0]`` is time bin 1 (the LSB)."""

    bits: tuple[bool, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "bits", tuple(bool(b) for b in self.bits))

    @property
    def N(self) -> int:
        return len(self.bits)

    @property
    def index(self) -> int:
        return sum(1 << i for i, b in enumerate(self.bits) if b)

    @property
    def clicks(self) -> int:
        return sum(self.bits)

    @property
    def pattern(self) -> str:
        """Binary string with time bin 1 as the right-most character."""
        return format(self.index, f"0{self.N}b")

    @classmethod
    def from_index(cls, index: int, N: int) -> "Signature":
        if not 0 <= index < (1 << N):
            raise DomainError(f"signature index {index} out of range for N={N}")
        return cls(tuple(bool((index >> i) & 1) for i in range(N)))

    @classmethod
    def from_bins(cls, bins: Iterable[int], N: int) -> "Signature":
        """From 1-based bin numbers that clicked."""
        bits = [False] * N
        for b in bins:
            if not 1 <= b <= N:
                raise DomainError(f"bin {b} out of range 1..{N}")
            bits[b - 1] = True
        return cls(tuple(bits))


def _signature_mask(config: DetectorConfig, d: Signature | int) -> int:
    if isinstance(d, Signature):
        if d.N != config.N:
            raise DomainError(f"signature has {d.N} bins, detector has {config.N}")
        return d.index
    d = int(d)
    if not 0 <= d < (1 << config.N):
        raise DomainError(f"signature index {d} out of range for N={config.N}")
    return d


def _popcount(x: int) -> int:
    return bin(x).count("1")


# --------------------------------------------------------------------------- #
# conditional signature probabilities
# --------------------------------------------------------------------------- #


def _compositions(n: int, parts: int) -> Iterable[tuple[int, ...]]:
    """All ``(n_1, ..., n_parts)`` with nonnegative entries summing to ``n``."""
    for bars in itertools.combinations(range(n + parts - 1), parts - 1):
        prev = -1
        out = []
        for b in bars:
            out.append(b - prev - 1)
            prev = b
        out.append(n + parts - 2 - prev)
        yield tuple(out)


def _eq1_term(
    counts: tuple[int, ...],
    p_c: tuple[float, ...],
    p_loss: tuple[float, ...],
    p_dc: float,
    mask: int,
    n: int,
) -> float:
    weight = math.factorial(n)
    for k in counts:
        weight //= math.factorial(k)
    prob = float(weight)
    for i, k in enumerate(counts):
        prob *= p_c[i] ** k
        lost = p_loss[i] ** k
        if (mask >> i) & 1:
            prob *= p_dc + (1.0 - p_dc) * (1.0 - lost)
        else:
            prob *= (1.0 - p_dc) * lost
    return prob


def signature_prob_given_n_bruteforce(
    config: DetectorConfig,
    d: Signature | int,
    n: int,
    budget: int = ENUMERATION_BUDGET,
) -> float:
    """Signature probability for ``n`` photons by enumerating every photon split.

    Slow and exact; intended as a reference for small detectors.  The residual
    coupling is represented by a catch-all bin whose two outcomes are summed.
    """
    if n < 0:
        raise DomainError("photon number must be >= 0")
    mask = _signature_mask(config, d)
    full = with_catch_all(config)
    parts = len(full.p_c)
    count = math.comb(n + parts - 1, parts - 1)
    if count > budget:
        raise CapacityError(
            f"{count} compositions exceed the enumeration budget {budget}; "
            "use signature_prob_given_n instead"
        )
    hidden = 1 << config.N
    terms = []
    for counts in _compositions(n, parts):
        for m in (mask, mask | hidden):
            terms.append(_eq1_term(counts, full.p_c, full.p_loss, full.p_dc, m, n))
    return math.fsum(terms)


def _closed_form(eff: Sequence[float], p_dc: float, mask: int, n: int) -> float:
    """Inclusion-exclusion over the clicked set for bins with efficiencies ``eff``."""
    B = len(eff)
    clicked = [i for i in range(B) if (mask >> i) & 1]
    silent_sum = math.fsum(eff[i] for i in range(B) if not (mask >> i) & 1)
    q = 1.0 - p_dc
    n_silent = B - len(clicked)
    terms = []
    for r in range(len(clicked) + 1):
        for S in itertools.combinations(clicked, r):
            w = 1.0 - silent_sum - math.fsum(eff[i] for i in S)
            w = max(w, 0.0)
            terms.append((-1) ** r * q ** (r + n_silent) * w**n)
    return math.fsum(terms)


def signature_prob_given_n(config: DetectorConfig, d: Signature | int, n: int) -> float:
    """Signature probability for ``n`` photons in closed form.

    ``sum_{S <= d} (-1)^|S| (1-p_dc)^(|S|+N-|d|) w(S)^n`` where
    ``w(S) = 1 - sum_{i in S or silent} p_c(i)(1 - p_loss(i))``; cost ``O(2^|d|)``.
    """
    if n < 0:
        raise DomainError("photon number must be >= 0")
    mask = _signature_mask(config, d)
    eff = [c * (1.0 - l) for c, l in zip(config.p_c, config.p_loss)]
    if not config.catch_all:
        return _closed_form(eff, config.p_dc, mask, n)
    hidden = 1 << config.N
    return _closed_form(eff, config.p_dc, mask, n) + _closed_form(
        eff, config.p_dc, mask | hidden, n
    )


def _subset_sums(values: np.ndarray) -> np.ndarray:
    out = np.zeros(1 << values.size)
    for i, v in enumerate(values):
        out[1 << i : 1 << (i + 1)] = out[: 1 << i] + v
    return out


def _butterfly(arr: np.ndarray, bit: int) -> tuple[np.ndarray, np.ndarray]:
    """Views of ``arr`` rows without / with ``bit`` set, paired element-wise."""
    rows = arr.shape[0]
    view = arr.reshape(rows >> (bit + 1), 2, 1 << bit, *arr.shape[1:])
    return view[:, 0], view[:, 1]


def signature_matrix(config: DetectorConfig, n_max: int) -> np.ndarray:
    """``P(d | n)`` for every signature index ``d`` and ``n = 0..n_max``.

    Same inclusion-exclusion as :func:`signature_prob_given_n`, evaluated with
    fast subset transforms.  The dark-count factor is applied after the photon
    part (a sum of positive terms), and photon-hit sets larger than ``n`` are
    set to zero.  This keeps the tiny multi-click entries accurate where a
    direct alternating sum would lose every significant digit.
    """
    if n_max < 0:
        raise DomainError("n_max must be >= 0")
    eff = np.array([c * (1.0 - l) for c, l in zip(config.p_c, config.p_loss)])
    B = eff.size
    if config.N > MAX_SIGNATURE_BINS:
        raise CapacityError(f"N={config.N} exceeds the signature cap {MAX_SIGNATURE_BINS}")
    ns = np.arange(n_max + 1)
    lost = max(0.0, 1.0 - math.fsum(eff))
    base = np.clip(lost + _subset_sums(eff), 0.0, 1.0)
    # photon part: probability the set of bins receiving a detected photon is exactly T
    hit = base[:, None] ** ns[None, :]
    for bit in range(B):
        lo, hi = _butterfly(hit, bit)
        hi -= lo
    sizes = np.array([_popcount(t) for t in range(1 << B)])
    hit[sizes[:, None] > ns[None, :]] = 0.0
    np.clip(hit, 0.0, None, out=hit)
    # dark counts: bins outside T click independently with probability p_dc
    p_dc = config.p_dc
    for bit in range(B):
        lo, hi = _butterfly(hit, bit)
        hi += p_dc * lo
    hit *= ((1.0 - p_dc) ** (B - sizes))[:, None]
    if config.catch_all:
        half = 1 << config.N
        hit = hit[:half] + hit[half:]
    return hit


# --------------------------------------------------------------------------- #
# state-level predictions
# --------------------------------------------------------------------------- #


@dataclass(frozen=True, eq=False)
class SignatureDistribution:
    """Probabilities over all ``2**N`` signatures in bin-reversed index order."""

    probs: np.ndarray
    provenance: str = "predicted"
    sample_count: int | None = None

    def __post_init__(self) -> None:
        probs = np.array(self.probs, dtype=float)
        size = probs.size
        if probs.ndim != 1 or size < 2 or size & (size - 1):
            raise DomainError("signature distribution length must be a power of two >= 2")
        if self.provenance not in ("predicted", "empirical"):
            raise DomainError(f"unknown provenance {self.provenance!r}")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @property
    def N(self) -> int:
        return self.probs.size.bit_length() - 1

    def by_clicks(self) -> np.ndarray:
        """Total probability of each click count ``m = 0..N``."""
        sizes = np.array([_popcount(t) for t in range(self.probs.size)])
        return np.bincount(sizes, weights=self.probs, minlength=self.N + 1)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["signature_index", "pattern", "probability"])
        for idx, p in enumerate(self.probs):
            writer.writerow([idx, format(idx, f"0{self.N}b"), repr(float(p))])
        return buf.getvalue()


@dataclass(frozen=True, eq=False)
class ConditionalMatrix:
    """``entries[m, n] = P(m clicks | n photons)``."""

    entries: np.ndarray

    @property
    def N(self) -> int:
        return self.entries.shape[0] - 1

    @property
    def n_max(self) -> int:
        return self.entries.shape[1] - 1

    def __getitem__(self, mn: tuple[int, int]) -> float:
        return float(self.entries[mn])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["m"] + [f"n={n}" for n in range(self.n_max + 1)])
        for m, row in enumerate(self.entries):
            writer.writerow([m] + [repr(float(v)) for v in row])
        return buf.getvalue()


def signature_prob_state(
    config: DetectorConfig, d: Signature | int, state: PhotonNumberDistribution
) -> float:
    return math.fsum(
        rho * signature_prob_given_n(config, d, n)
        for n, rho in enumerate(state.probs)
        if rho != 0.0
    )


def signature_distribution(
    config: DetectorConfig,
    state: PhotonNumberDistribution,
    max_bins: int = MAX_SIGNATURE_BINS,
) -> SignatureDistribution:
    if config.N > max_bins:
        raise CapacityError(f"N={config.N} exceeds the signature cap {max_bins}")
    matrix = signature_matrix(config, state.K)
    return SignatureDistribution(matrix @ state.probs, provenance="predicted")


def conditional_matrix(config: DetectorConfig, n_max: int) -> ConditionalMatrix:
    matrix = signature_matrix(config, n_max)
    sizes = np.array([_popcount(t) for t in range(matrix.shape[0])])
    entries = np.zeros((config.N + 1, n_max + 1))
    np.add.at(entries, sizes, matrix)
    return ConditionalMatrix(entries)


def click_prob_binomial(eta: float, state: PhotonNumberDistribution, p_dc: float) -> float:
    """Click probability of a single on/off detector with efficiency ``eta``.

    Each photon of an ``j``-photon input is detected independently (binomial
    thinning); the detector fires if at least one is, or on a dark count.
    """
    if not (0.0 <= eta <= 1.0 and 0.0 <= p_dc <= 1.0):
        raise DomainError("eta and p_dc must lie in [0, 1]")
    K = state.K
    rho = state.probs
    terms = []
    for m in range(1, K + 1):
        for j in range(m, K + 1):
            if rho[j] != 0.0:
                terms.append(math.comb(j, m) * eta**m * (1.0 - eta) ** (j - m) * rho[j])
    return p_dc + (1.0 - p_dc) * math.fsum(terms)


def click_marginals(config: DetectorConfig, state: PhotonNumberDistribution) -> np.ndarray:
    """Analytic per-bin click probability of the observed bins."""
    eff = config.efficiencies
    n = np.arange(state.K + 1)
    silent = (1.0 - eff[:, None]) ** n[None, :] @ state.probs
    return 1.0 - (1.0 - config.p_dc) * silent
