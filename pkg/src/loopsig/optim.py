"""Nelder-Mead downhill simplex minimizer."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError

__all__ = ["OptimOptions", "OptimReport", "nelder_mead"]

REFLECT = 1.0
EXPAND = 2.0
CONTRACT = 0.5
SHRINK = 0.5


@dataclass(frozen=True)
class OptimOptions:
    max_iterations: int = 20_000
    f_tolerance: float = 1e-12
    x_tolerance: float = 1e-10
    initial_step: float = 0.05
    restart_count: int = 1
    record_trace: bool = True

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise DomainError("max_iterations must be >= 1")
        if not (self.f_tolerance > 0 and self.x_tolerance > 0):
            raise DomainError("tolerances must be positive")
        if not self.initial_step > 0:
            raise DomainError("initial_step must be positive")
        if self.restart_count < 0:
            raise DomainError("restart_count must be >= 0")


@dataclass
class OptimReport:
    best_point: np.ndarray
    best_value: float
    iterations: int
    converged: bool
    evaluations: int = 0
    restarts_used: int = 0
    trace: list[float] = field(default_factory=list)

    def trace_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["iteration", "best_value"])
        for i, v in enumerate(self.trace):
            writer.writerow([i, repr(v)])
        return buf.getvalue()


class _Simplex:
    """Vertices with values and insertion stamps for stable tie-breaking."""

    def __init__(self, points: np.ndarray, values: np.ndarray) -> None:
        self.points = points
        self.values = values
        self.stamps = np.arange(len(values))
        self._next = len(values)

    def order(self) -> None:
        idx = np.lexsort((self.stamps, self.values))
        self.points = self.points[idx]
        self.values = self.values[idx]
        self.stamps = self.stamps[idx]

    def replace_worst(self, point: np.ndarray, value: float) -> None:
        self.points[-1] = point
        self.values[-1] = value
        self.stamps[-1] = self._next
        self._next += 1

    def restamp(self, rows: slice) -> None:
        count = len(self.stamps[rows])
        self.stamps[rows] = np.arange(self._next, self._next + count)
        self._next += count


def _initial_simplex(x0: np.ndarray, step: float) -> np.ndarray:
    dim = x0.size
    pts = np.tile(x0, (dim + 1, 1))
    for i in range(dim):
        pts[i + 1, i] += step
    return pts


def nelder_mead(
    objective: Callable[[np.ndarray], float],
    x0,
    opts: OptimOptions | None = None,
) -> OptimReport:
    """Minimize ``objective`` starting from ``x0``.

    Standard coefficients (reflection 1, expansion 2, contraction 0.5, shrink
    0.5).  The initial simplex is ``x0`` plus an absolute step along each axis.
    Stops when the spread of vertex values drops below ``f_tolerance``, the
    simplex diameter below ``x_tolerance``, or the iteration budget runs out.
    After convergence the simplex is rebuilt around the incumbent up to
    ``restart_count`` times; a restart that finds no improvement ends the run.
    Non-finite values met mid-run count as ``+inf``.
    """
    opts = opts or OptimOptions()
    x0 = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    evaluations = 0

    def f(x: np.ndarray) -> float:
        nonlocal evaluations
        evaluations += 1
        v = float(objective(x))
        return v if math.isfinite(v) else math.inf

    def build(center: np.ndarray) -> _Simplex:
        pts = _initial_simplex(center, opts.initial_step)
        vals = np.array([f(p) for p in pts])
        if not np.all(np.isfinite(vals)):
            raise DomainError("objective is not finite on the initial simplex")
        return _Simplex(pts, vals)

    simplex = build(x0)
    trace: list[float] = []
    iterations = 0
    restarts_used = 0
    converged = False
    dim = x0.size

    while True:
        simplex.order()
        converged = False
        while iterations < opts.max_iterations:
            vals = simplex.values
            pts = simplex.points
            f_spread = vals[-1] - vals[0]
            diameter = float(np.max(np.abs(pts[1:] - pts[0])))
            if f_spread <= opts.f_tolerance or diameter <= opts.x_tolerance:
                converged = True
                break
            iterations += 1

            centroid = pts[:-1].mean(axis=0)
            worst = pts[-1]
            xr = centroid + REFLECT * (centroid - worst)
            fr = f(xr)
            if fr < vals[0]:
                xe = centroid + EXPAND * (xr - centroid)
                fe = f(xe)
                if fe < fr:
                    simplex.replace_worst(xe, fe)
                else:
                    simplex.replace_worst(xr, fr)
            elif fr < vals[-2]:
                simplex.replace_worst(xr, fr)
            else:
                if fr < vals[-1]:
                    xc = centroid + CONTRACT * (xr - centroid)
                    fc = f(xc)
                    accept = fc <= fr
                else:
                    xc = centroid + CONTRACT * (worst - centroid)
                    fc = f(xc)
                    accept = fc < vals[-1]
                if accept:
                    simplex.replace_worst(xc, fc)
                else:
                    best = pts[0]
                    for i in range(1, dim + 1):
                        pts[i] = best + SHRINK * (pts[i] - best)
                        vals[i] = f(pts[i])
                    simplex.restamp(slice(1, None))
            simplex.order()
            if opts.record_trace:
                trace.append(float(simplex.values[0]))

        if not converged or restarts_used >= opts.restart_count:
            break
        incumbent = simplex.values[0]
        candidate = build(simplex.points[0].copy())
        candidate.order()
        restarts_used += 1
        if candidate.values[0] >= incumbent and candidate.values[-1] - candidate.values[0] <= opts.f_tolerance:
            break
        simplex = candidate

    simplex.order()
    return OptimReport(
        best_point=simplex.points[0].copy(),
        best_value=float(simplex.values[0]),
        iterations=iterations,
        converged=converged,
        evaluations=evaluations,
        restarts_used=restarts_used,
        trace=trace,
    )
