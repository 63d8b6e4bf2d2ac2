"""Estimating input photostatistics from detection records.

Two data bases are supported:

``binomial``
    per-bin click probabilities, each bin treated as an independent on/off
    detector with efficiency ``p_c(i)(1 - p_loss(i))``.
``binomial-corrected``
    per-bin click probabilities after first-order afterpulse correction.  The
    correction strips the dark-count floor from bins 2..N, so the prediction
    for those bins omits it as well.
``signature``
    the full ``2**N`` signature distribution.

Fits minimize the summed squared difference between predicted and observed
probability vectors.  It is a plain sum (not divided by the vector length),
which does not move the minimum.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .detector import (
    DetectorConfig,
    SignatureDistribution,
    signature_matrix,
)
from .errors import DomainError
from .optim import OptimOptions, nelder_mead
from .states import (
    PhotonNumberDistribution,
    RawPhotonNumberDistribution,
    coherent_truncated,
)

__all__ = [
    "ClickProbabilities",
    "FitResult",
    "afterpulse_correct",
    "binomial_click_kernel",
    "default_grid",
    "estimate_click_probs",
    "estimate_signature_probs",
    "free_form_fit",
    "mse",
    "normalized_curvature",
    "poisson_sweep_fit",
]

MODELS = ("binomial", "binomial-corrected", "signature")
MODES = ("paper-faithful", "physical")


@dataclass(frozen=True, eq=False)
class ClickProbabilities:
    values: np.ndarray
    sample_count: int | None = None
    clamped: bool = False

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise DomainError("click probabilities must be a non-empty vector")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def N(self) -> int:
        return self.values.size


@dataclass
class FitResult:
    """Outcome of a sweep or free-form fit.

    ``estimate`` is the refined mean photon number for sweep fits and a
    (possibly unphysical) coefficient vector for free-form fits.
    """

    estimate: float | RawPhotonNumberDistribution | PhotonNumberDistribution
    epsilon_min: float
    sweep_curve: np.ndarray | None = None
    iterations: int = 0
    converged: bool = True
    diagnostics: dict[str, Any] = field(default_factory=dict)

    @property
    def nbar(self) -> float:
        if isinstance(self.estimate, (int, float)):
            return float(self.estimate)
        return float(self.estimate.mean)

    def to_dict(self) -> dict[str, Any]:
        est = self.estimate
        out: dict[str, Any] = {
            "estimate": float(est) if isinstance(est, (int, float)) else est.to_dict(),
            "nbar": self.nbar,
            "epsilon_min": self.epsilon_min,
            "iterations": self.iterations,
            "converged": self.converged,
            "diagnostics": self.diagnostics,
        }
        if self.sweep_curve is not None:
            out["curve"] = [[float(x), float(e)] for x, e in self.sweep_curve]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def curve_csv(self) -> str:
        if self.sweep_curve is None:
            raise DomainError("fit has no sweep curve")
        lines = ["nbar,epsilon"]
        lines += [f"{x!r},{e!r}" for x, e in self.sweep_curve.tolist()]
        return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------- #
# empirical estimators
# --------------------------------------------------------------------------- #


def _check_indices(indices, N: int) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.int64).ravel()
    if idx.size == 0:
        raise DomainError("no records")
    if idx.min() < 0 or idx.max() >= (1 << N):
        raise DomainError(f"signature index out of range for N={N}")
    return idx


def estimate_click_probs(indices, N: int) -> ClickProbabilities:
    """Fraction of cycles in which each bin clicked."""
    idx = _check_indices(indices, N)
    bits = (idx[:, None] >> np.arange(N)) & 1
    return ClickProbabilities(bits.sum(axis=0) / idx.size, sample_count=int(idx.size))


def estimate_signature_probs(indices, N: int) -> SignatureDistribution:
    idx = _check_indices(indices, N)
    counts = np.bincount(idx, minlength=1 << N)
    return SignatureDistribution(counts / idx.size, provenance="empirical", sample_count=int(idx.size))


def afterpulse_correct(p: ClickProbabilities, p_dc: float, p_a: float) -> ClickProbabilities:
    """First-order dark-count and afterpulse correction of per-bin click data.

    Bin 1 maps to ``p_dc + p(1)(1 - p_dc)``; later bins subtract the dark-count
    floor and ``p_a`` times the previous bin's raw click probability.  Values
    are clamped to [0, 1] and the result is flagged if any clamp was applied.
    """
    if not 0.0 <= p_a <= 1.0:
        raise DomainError(f"p_a must lie in [0, 1], got {p_a!r}")
    if not 0.0 <= p_dc <= 1.0:
        raise DomainError(f"p_dc must lie in [0, 1], got {p_dc!r}")
    if p_dc > 0.05:
        warnings.warn(f"p_dc={p_dc} is not small; first-order correction is unreliable", stacklevel=2)
    raw = p.values
    out = np.empty_like(raw)
    out[0] = p_dc + raw[0] * (1.0 - p_dc)
    out[1:] = raw[1:] - p_dc - p_a * raw[:-1]
    clipped = np.clip(out, 0.0, 1.0)
    return ClickProbabilities(
        clipped,
        sample_count=p.sample_count,
        clamped=bool(np.any(clipped != out)) or p.clamped,
    )


def mse(predicted, observed) -> float:
    """Sum of squared differences."""
    a = np.asarray(predicted, dtype=float)
    b = np.asarray(observed, dtype=float)
    if a.shape != b.shape:
        raise DomainError(f"length mismatch: {a.shape} vs {b.shape}")
    return math.fsum(((a - b) ** 2).ravel())


# --------------------------------------------------------------------------- #
# Poisson sweep
# --------------------------------------------------------------------------- #


def default_grid(lo: float = 0.0, hi: float = 15.0, steps: int = 151) -> np.ndarray:
    return np.linspace(lo, hi, steps)


def binomial_click_kernel(etas: Sequence[float], K: int) -> np.ndarray:
    """``T[i, j]``: probability that at least one of ``j`` photons is detected at efficiency ``etas[i]``.

    Summed term by term over the number ``m >= 1`` of detected photons.
    """
    etas = np.asarray(etas, dtype=float)
    j = np.arange(K + 1)
    m = np.arange(K + 1)
    comb = np.array([[math.comb(jj, mm) for jj in j] for mm in m], dtype=float)  # [m, j]
    valid = (m[:, None] >= 1) & (m[:, None] <= j[None, :])
    e = etas[:, None, None]
    terms = comb[None] * e ** m[None, :, None] * (1.0 - e) ** np.clip(j[None, None, :] - m[None, :, None], 0, None)
    return np.where(valid[None], terms, 0.0).sum(axis=1)


class _SweepModel:
    def __init__(self, model: str, config: DetectorConfig, K: int) -> None:
        if model not in MODELS:
            raise DomainError(f"unknown model {model!r}; choose from {MODELS}")
        self.model = model
        self.K = K
        self.p_dc = config.p_dc
        if model == "signature":
            self.matrix = signature_matrix(config, K)
            self.size = self.matrix.shape[0]
        else:
            self.matrix = binomial_click_kernel(config.efficiencies, K)
            self.size = config.N
            self.dark = np.full(config.N, config.p_dc)
            if model == "binomial-corrected":
                self.dark[1:] = 0.0

    def predict(self, state: PhotonNumberDistribution) -> np.ndarray:
        if self.model == "signature":
            return self.matrix @ state.probs
        return self.dark + (1.0 - self.dark) * (self.matrix @ state.probs)


def _observed_vector(observed, model: str, expected: int) -> np.ndarray:
    if isinstance(observed, SignatureDistribution):
        if model != "signature":
            raise DomainError("a signature distribution can only be fitted with the signature model")
        vec = observed.probs
    elif isinstance(observed, ClickProbabilities):
        if model == "signature":
            raise DomainError("click probabilities can only be fitted with a binomial model")
        vec = observed.values
    else:
        vec = np.asarray(observed, dtype=float)
    if vec.shape != (expected,):
        raise DomainError(f"observed data has shape {vec.shape}, model basis needs ({expected},)")
    return vec


def _parabola_vertex(x: np.ndarray, y: np.ndarray) -> float:
    (x0, x1, x2), (y0, y1, y2) = x, y
    denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
    a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
    b = (x2**2 * (y0 - y1) + x1**2 * (y2 - y0) + x0**2 * (y1 - y2)) / denom
    if a <= 0:
        return float(x1)
    return float(np.clip(-b / (2 * a), x0, x2))


def poisson_sweep_fit(
    observed,
    model: str,
    config: DetectorConfig,
    K: int,
    nbar_grid: Sequence[float] | None = None,
) -> FitResult:
    """Fit a truncated Poisson distribution by sweeping its mean over a grid.

    The discrete minimum is refined by a parabola through it and its two
    neighbours (no refinement when the minimum sits on the grid edge).
    """
    grid = default_grid() if nbar_grid is None else np.asarray(nbar_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise DomainError("nbar grid must be non-empty")
    if np.any(np.diff(grid) <= 0) or grid[0] < 0:
        raise DomainError("nbar grid must be nonnegative and strictly increasing")
    sweep = _SweepModel(model, config, K)
    obs = _observed_vector(observed, model, sweep.size)
    eps = np.array([mse(sweep.predict(coherent_truncated(x, K)), obs) for x in grid])
    k = int(np.argmin(eps))
    refined = float(grid[k])
    if 0 < k < grid.size - 1:
        refined = _parabola_vertex(grid[k - 1 : k + 2], eps[k - 1 : k + 2])
    return FitResult(
        estimate=refined,
        epsilon_min=float(eps[k]),
        sweep_curve=np.column_stack([grid, eps]),
        iterations=int(grid.size),
        converged=True,
        diagnostics={"model": model, "K": K, "grid_argmin": float(grid[k])},
    )


def normalized_curvature(result: FitResult) -> float:
    """Second difference of the sweep curve at its minimum, divided by the squared step."""
    curve = result.sweep_curve
    if curve is None:
        raise DomainError("fit has no sweep curve")
    eps = curve[:, 1]
    k = int(np.argmin(eps))
    if not 0 < k < eps.size - 1:
        raise DomainError("curve minimum lies on the grid edge")
    h1 = curve[k, 0] - curve[k - 1, 0]
    h2 = curve[k + 1, 0] - curve[k, 0]
    return float(2.0 * (h1 * eps[k + 1] - (h1 + h2) * eps[k] + h2 * eps[k - 1]) / (h1 * h2 * (h1 + h2)))


# --------------------------------------------------------------------------- #
# free-form reconstruction
# --------------------------------------------------------------------------- #


def free_form_fit(
    observed: SignatureDistribution,
    config: DetectorConfig,
    K: int,
    init: PhotonNumberDistribution | None = None,
    opts: OptimOptions | None = None,
    mode: str = "paper-faithful",
    trace_weight: float = 1.0,
) -> FitResult:
    """Reconstruct all ``K + 1`` diagonal coefficients from signature data.

    Minimizes ``w (Tr rho - 1)^2 + sum_d (p_obs(d) - p(d, rho))^2`` with the
    simplex optimizer.  In ``paper-faithful`` mode the coefficients are free
    (they may go negative); ``physical`` mode optimizes square roots so every
    coefficient stays nonnegative.  Non-convergence is reported, not raised.
    """
    if mode not in MODES:
        raise DomainError(f"unknown mode {mode!r}; choose from {MODES}")
    if K < 0:
        raise DomainError("K must be >= 0")
    matrix = signature_matrix(config, K)
    obs = _observed_vector(observed, "signature", matrix.shape[0])
    if init is None:
        init = PhotonNumberDistribution(np.full(K + 1, 1.0 / (K + 1)))
    if init.K != K:
        raise DomainError(f"initial state has K={init.K}, expected {K}")

    def to_coeffs(x: np.ndarray) -> np.ndarray:
        return x * x if mode == "physical" else x

    def objective(x: np.ndarray) -> float:
        rho = to_coeffs(x)
        resid = matrix @ rho - obs
        return trace_weight * (rho.sum() - 1.0) ** 2 + float(resid @ resid)

    if K == 0:
        # the vacuum is the only unit-trace state on a one-dimensional space
        raw = RawPhotonNumberDistribution(np.ones(1))
        return FitResult(
            estimate=raw,
            epsilon_min=objective(np.ones(1)),
            iterations=0,
            converged=True,
            diagnostics={"mode": mode, "trace_weight": trace_weight, "trace_deviation": 0.0,
                         "negative_indices": [], "physical": True, "evaluations": 1},
        )

    x0 = np.sqrt(init.probs) if mode == "physical" else init.probs.copy()
    report = nelder_mead(objective, x0, opts or OptimOptions())
    coeffs = to_coeffs(report.best_point)
    raw = RawPhotonNumberDistribution(coeffs)
    return FitResult(
        estimate=raw,
        epsilon_min=report.best_value,
        iterations=report.iterations,
        converged=report.converged,
        diagnostics={
            "mode": mode,
            "trace_weight": trace_weight,
            "trace_deviation": raw.trace_deviation,
            "negative_indices": raw.negative_indices,
            "physical": raw.is_physical,
            "evaluations": report.evaluations,
        },
    )
