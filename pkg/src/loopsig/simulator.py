"""Monte Carlo detection records for a loop detector.

Per cycle: draw a photon number from the source, route each photon to a bin
(or the unobserved remainder) with one categorical draw, detect it with
probability ``1 - p_loss``, add independent dark clicks, then scan bins in
time order letting every click spawn an afterpulse in the next bin with
probability ``p_a``.  Afterpulses can themselves afterpulse and stop at the
last bin; nothing carries over between cycles.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator, Sequence

import numpy as np

from .detector import DetectorConfig, Signature, SignatureDistribution
from .errors import DomainError

__all__ = [
    "AfterpulseModel",
    "CycleRecord",
    "RunResult",
    "SourceSpec",
    "open_loop_config",
    "read_records",
    "simulate_cycle",
    "simulate_run",
    "write_records",
]

_CHUNK = 50_000


@dataclass(frozen=True)
class AfterpulseModel:
    p_a: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.p_a) and 0.0 <= self.p_a <= 1.0):
            raise DomainError(f"p_a must lie in [0, 1], got {self.p_a!r}")


@dataclass(frozen=True)
class SourceSpec:
    """Photon-number source: ``coherent`` (Poisson), ``fock`` or ``fixed_sequence``.

    A fixed sequence is repeated cyclically if the run is longer than it.
    """

    kind: str
    nbar: float = 0.0
    n: int = 0
    sequence: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.kind == "coherent":
            if not (math.isfinite(self.nbar) and self.nbar >= 0):
                raise DomainError(f"coherent source needs nbar >= 0, got {self.nbar!r}")
        elif self.kind == "fock":
            if self.n < 0:
                raise DomainError("fock source needs n >= 0")
        elif self.kind == "fixed_sequence":
            seq = tuple(int(k) for k in self.sequence)
            if not seq or min(seq) < 0:
                raise DomainError("fixed sequence must be non-empty and nonnegative")
            object.__setattr__(self, "sequence", seq)
        else:
            raise DomainError(f"unknown source kind {self.kind!r}")

    @classmethod
    def coherent(cls, nbar: float) -> "SourceSpec":
        return cls("coherent", nbar=float(nbar))

    @classmethod
    def fock(cls, n: int) -> "SourceSpec":
        return cls("fock", n=int(n))

    @classmethod
    def fixed_sequence(cls, sequence: Sequence[int]) -> "SourceSpec":
        return cls("fixed_sequence", sequence=tuple(sequence))

    def draw(self, rng: np.random.Generator, size: int, offset: int = 0) -> np.ndarray:
        if self.kind == "coherent":
            return rng.poisson(self.nbar, size=size)
        if self.kind == "fock":
            return np.full(size, self.n, dtype=np.int64)
        seq = np.asarray(self.sequence, dtype=np.int64)
        return seq[(np.arange(size) + offset) % seq.size]

    def to_dict(self) -> dict[str, Any]:
        if self.kind == "coherent":
            return {"kind": "coherent", "nbar": self.nbar}
        if self.kind == "fock":
            return {"kind": "fock", "n": self.n}
        return {"kind": "fixed_sequence", "sequence": list(self.sequence)}


@dataclass(frozen=True)
class CycleRecord:
    cycle_index: int
    signature: Signature


@dataclass(frozen=True, eq=False)
class RunResult:
    """Signature index per cycle plus the empirical distributions they imply."""

    N: int
    signature_indices: np.ndarray
    seed: int | None = None
    config: DetectorConfig | None = None
    source: SourceSpec | None = None
    afterpulse: AfterpulseModel | None = None

    @property
    def cycles(self) -> int:
        return int(self.signature_indices.size)

    @property
    def records(self) -> Iterator[CycleRecord]:
        for i, idx in enumerate(self.signature_indices):
            yield CycleRecord(i, Signature.from_index(int(idx), self.N))

    @property
    def empirical_signature(self) -> SignatureDistribution:
        counts = np.bincount(self.signature_indices, minlength=1 << self.N)
        return SignatureDistribution(
            counts / self.cycles, provenance="empirical", sample_count=self.cycles
        )

    @property
    def empirical_clicks(self) -> np.ndarray:
        bits = (self.signature_indices[:, None] >> np.arange(self.N)) & 1
        return bits.mean(axis=0)


def open_loop_config(config: DetectorConfig) -> DetectorConfig:
    """The same detector with the loop broken after the first tap."""
    N = config.N
    p_c = (config.p_c[0],) + (0.0,) * (N - 1)
    p_loss = config.p_loss[:N]
    return DetectorConfig(p_c=p_c, p_loss=p_loss, p_dc=config.p_dc)


def _routing(config: DetectorConfig) -> tuple[np.ndarray, np.ndarray]:
    """Categorical routing probabilities over observed bins + remainder."""
    N = config.N
    p_c = np.asarray(config.p_c[:N], dtype=float)
    remainder = max(0.0, 1.0 - p_c.sum())
    pvals = np.append(p_c, remainder)
    pvals /= pvals.sum()
    detect = 1.0 - np.asarray(config.p_loss[:N], dtype=float)
    return pvals, detect


def _apply_afterpulses(clicks: np.ndarray, p_a: float, rng: np.random.Generator) -> None:
    if p_a <= 0.0:
        return
    for i in range(clicks.shape[-1] - 1):
        spawn = rng.random(clicks.shape[:-1]) < p_a
        clicks[..., i + 1] |= clicks[..., i] & spawn


def simulate_cycle(
    config: DetectorConfig,
    n: int,
    ap: AfterpulseModel,
    rng: np.random.Generator,
) -> Signature:
    if n < 0:
        raise DomainError("photon number must be >= 0")
    pvals, detect = _routing(config)
    counts = rng.multinomial(int(n), pvals)[: config.N]
    detected = rng.binomial(counts, detect) > 0
    dark = rng.random(config.N) < config.p_dc
    clicks = detected | dark
    _apply_afterpulses(clicks, ap.p_a, rng)
    return Signature(tuple(clicks))


def simulate_run(
    config: DetectorConfig,
    source: SourceSpec,
    cycles: int,
    ap: AfterpulseModel | None = None,
    seed: int | None = 0,
) -> RunResult:
    """Simulate ``cycles`` measurement cycles.

    Cycles are processed in fixed-size chunks, each with its own generator
    spawned from ``seed``, so the output depends only on the arguments.
    """
    if cycles < 1:
        raise DomainError("cycles must be >= 1")
    ap = ap or AfterpulseModel()
    N = config.N
    pvals, detect = _routing(config)
    weights = 1 << np.arange(N)
    n_chunks = -(-cycles // _CHUNK)
    streams = np.random.SeedSequence(seed).spawn(n_chunks)
    out = np.empty(cycles, dtype=np.int64)
    for k, ss in enumerate(streams):
        rng = np.random.default_rng(ss)
        start = k * _CHUNK
        size = min(_CHUNK, cycles - start)
        photons = source.draw(rng, size, offset=start)
        counts = rng.multinomial(photons, pvals)[:, :N]
        detected = rng.binomial(counts, detect) > 0
        dark = rng.random((size, N)) < config.p_dc
        clicks = detected | dark
        _apply_afterpulses(clicks, ap.p_a, rng)
        out[start : start + size] = clicks @ weights
    out.setflags(write=False)
    return RunResult(N=N, signature_indices=out, seed=seed, config=config, source=source, afterpulse=ap)


# --------------------------------------------------------------------------- #
# record files
# --------------------------------------------------------------------------- #


def records_csv(indices: Sequence[int] | np.ndarray) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["cycle", "signature_index"])
    for i, idx in enumerate(indices):
        writer.writerow([i, int(idx)])
    return buf.getvalue()


def write_records(run: RunResult, path: str | Path) -> tuple[Path, Path]:
    """Write ``cycle,signature_index`` CSV plus a JSON sidecar next to it."""
    path = Path(path)
    path.write_text(records_csv(run.signature_indices))
    sidecar = path.with_suffix(".json")
    meta = {
        "N": run.N,
        "cycles": run.cycles,
        "seed": run.seed,
        "p_a": run.afterpulse.p_a if run.afterpulse else None,
        "source": run.source.to_dict() if run.source else None,
        "config": run.config.to_dict() if run.config else None,
    }
    sidecar.write_text(json.dumps(meta, indent=2) + "\n")
    return path, sidecar


def parse_records(text: str) -> np.ndarray:
    """Parse a record CSV; returns signature indices in file order."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DomainError("record file is empty") from None
    header = [h.strip() for h in header]
    if header != ["cycle", "signature_index"]:
        raise DomainError(f"line 1: expected header 'cycle,signature_index', got {','.join(header)!r}")
    values = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise DomainError(f"line {lineno}: expected 2 fields, got {len(row)}")
        try:
            idx = int(row[1])
            int(row[0])
        except ValueError:
            raise DomainError(f"line {lineno}: non-integer field in {row!r}") from None
        if idx < 0:
            raise DomainError(f"line {lineno}: negative signature index {idx}")
        values.append(idx)
    if not values:
        raise DomainError("record file contains no records")
    return np.asarray(values, dtype=np.int64)


def read_records(path: str | Path) -> np.ndarray:
    return parse_records(Path(path).read_text())
