"""Fairness-weight selection: bisection, grid sweep, decaying-step descent, meta-controller.

All tuners take the measured quantity as a plain callable so that they can be
driven by a clustering run or by a closed-form test function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidParameterError, StageError
from .paramfile import read_param_blocks

PRESETS = {"viral": 0.5, "tumor": 0.6}
GAP = 0.05


def preset_lambda(name: str) -> float:
    try:
        return PRESETS[name]
    except KeyError:
        raise InvalidParameterError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


@dataclass
class TuneTrace:
    evaluations: list[tuple[float, float]] = field(default_factory=list)
    chosen: float = 1.0
    feasible: bool = False
    iterations: int = 0
    method: str = "bisect"
    notes: list[str] = field(default_factory=list)

    def to_json(self) -> list[dict]:
        return [{"lambda": lam, "disparity": d} for lam, d in self.evaluations]


class TuningError(StageError):
    """A measure failed mid-run; ``trace`` holds the evaluations made so far."""

    def __init__(self, cause: BaseException, trace: TuneTrace):
        super().__init__("tune", cause)
        self.trace = trace


def _call(measure, lam, trace):
    try:
        value = float(measure(lam))
    except Exception as exc:  # noqa: BLE001 - re-raised with the partial trace
        raise TuningError(exc, trace) from exc
    return value


def tune_bisect(measure: Callable[[float], float], delta_max: float, low: float = 0.0,
                high: float = 1.0, gap: float = GAP) -> TuneTrace:
    """Binary search for the smallest ``lam`` with ``measure(lam) <= delta_max``.

    Assumes the measure is non-increasing in ``lam``. The loop halves
    ``[low, high]`` until its width is at most ``gap`` and returns ``high``,
    the feasible endpoint, rather than the last midpoint (which can be
    infeasible). The final feasibility flag reuses the value already measured
    at ``high``; ``measure(high)`` is only called when ``high`` was never a
    midpoint.
    """
    trace = TuneTrace(method="bisect")
    trace.notes.append("returns the feasible endpoint 'high' instead of the final midpoint")
    cache: dict[float, float] = {}
    while high - low > gap:
        lam = (low + high) / 2.0
        d = _call(measure, lam, trace)
        cache[lam] = d
        trace.evaluations.append((lam, d))
        if d > delta_max:
            low = lam
        else:
            high = lam
    trace.iterations = len(trace.evaluations)
    trace.chosen = high
    final = cache[high] if high in cache else _call(measure, high, trace)
    trace.feasible = final <= delta_max
    return trace


def tune_grid(measure: Callable[[float], float], grid: Sequence[float] | None = None,
              delta_max: float = 0.1, refine: bool = False) -> TuneTrace:
    """Evaluate every grid point and pick the smallest feasible one.

    With ``refine`` the interval between the last infeasible grid point below
    the choice and the choice itself is searched by :func:`tune_bisect`.
    """
    if grid is None:
        grid = [round(0.1 * i, 10) for i in range(11)]
    grid = [float(g) for g in grid]
    if not grid:
        raise InvalidParameterError("grid must be non-empty")
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise InvalidParameterError("grid must be sorted")
    trace = TuneTrace(method="grid")
    values = []
    for lam in grid:
        d = _call(measure, lam, trace)
        trace.evaluations.append((lam, d))
        values.append(d)
    feasible = [i for i, d in enumerate(values) if d <= delta_max]
    if not feasible:
        trace.chosen, trace.feasible = grid[-1], False
    else:
        i = feasible[0]
        trace.chosen, trace.feasible = grid[i], True
        if refine and i > 0:
            sub = tune_bisect(measure, delta_max, low=grid[i - 1], high=grid[i])
            trace.evaluations.extend(sub.evaluations)
            if sub.feasible:
                trace.chosen = sub.chosen
    trace.iterations = len(trace.evaluations)
    return trace


def fd_gradient(risk: Callable[[np.ndarray], float], lambdas, deltas: Sequence[float], m: int = 0) -> float:
    """Central differences in coordinate ``m`` averaged over the step sizes ``deltas``."""
    lam = np.atleast_1d(np.asarray(lambdas, dtype=float))
    if len(deltas) < 1 or any(d <= 0 for d in deltas):
        raise InvalidParameterError("deltas must be a non-empty list of positive steps")
    total = 0.0
    for d in deltas:
        e = np.zeros_like(lam)
        e[m] = d
        total += (float(risk(lam + e)) - float(risk(lam - e))) / (2.0 * d)
    return total / len(deltas)


def tune_gd(objective: Callable[[float], float], eta0: float = 0.5, alpha: float = 1.0, T: int = 50,
            lam0: float = 0.5, deltas: Sequence[float] = (1e-3,)) -> TuneTrace:
    """Projected descent with step ``eta0 * t**-alpha`` and a finite-difference gradient.

    Returns the iterate with the smallest observed objective (earliest on ties).
    """
    if not 0.5 < alpha <= 1.0:
        raise InvalidParameterError("alpha must lie in (0.5, 1]")
    if T < 1:
        raise InvalidParameterError("T must be >= 1")
    trace = TuneTrace(method="gd")

    def f(lam: float) -> float:
        return _call(objective, float(np.clip(lam, 0.0, 1.0)), trace)

    lam = float(np.clip(lam0, 0.0, 1.0))
    best_lam, best_val = lam, math.inf
    for t in range(1, T + 1):
        val = f(lam)
        if not math.isfinite(val):
            raise TuningError(ValueError(f"non-finite objective at lambda={lam}"), trace)
        trace.evaluations.append((lam, val))
        if val < best_val:
            best_lam, best_val = lam, val
        grad = fd_gradient(lambda v: f(v[0]), [lam], deltas)
        lam = float(np.clip(lam - eta0 * t ** (-alpha) * grad, 0.0, 1.0))
    val = f(lam)
    if math.isfinite(val):
        trace.evaluations.append((lam, val))
        if val < best_val:
            best_lam, best_val = lam, val
    trace.chosen = best_lam
    trace.feasible = True
    trace.iterations = T
    return trace


# --- meta-controller ----------------------------------------------------------------


@dataclass
class MetaControllerParams:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        self.W1 = np.atleast_2d(np.asarray(self.W1, dtype=float))
        self.b1 = np.asarray(self.b1, dtype=float).ravel()
        self.W2 = np.atleast_2d(np.asarray(self.W2, dtype=float))
        self.b2 = np.asarray(self.b2, dtype=float).ravel()
        h, f = self.W1.shape
        if self.b1.shape != (h,) or self.W2.shape != (3, h) or self.b2.shape != (3,):
            raise InvalidParameterError(
                f"inconsistent shapes W1{self.W1.shape} b1{self.b1.shape} W2{self.W2.shape} b2{self.b2.shape}"
            )

    @classmethod
    def zeros(cls, n_features: int, hidden: int = 8) -> "MetaControllerParams":
        return cls(np.zeros((hidden, n_features)), np.zeros(hidden), np.zeros((3, hidden)), np.zeros(3))

    @classmethod
    def load(cls, path) -> "MetaControllerParams":
        blocks = read_param_blocks(path)
        try:
            return cls(blocks["W1"], blocks["b1"], blocks["W2"], blocks["b2"])
        except KeyError as exc:
            raise InvalidParameterError(f"meta-controller file lacks block {exc}") from None


def meta_weights(f_risk, params: MetaControllerParams) -> np.ndarray:
    """Softmax of a two-layer rectified score; returns ``(lam_js, lam_dp, lam_eo)``."""
    f = np.asarray(f_risk, dtype=float).ravel()
    if f.shape[0] != params.W1.shape[1]:
        raise InvalidParameterError(f"expected {params.W1.shape[1]} risk features, got {f.shape[0]}")
    h = np.maximum(params.W1 @ f + params.b1, 0.0)
    s = params.W2 @ h + params.b2
    e = np.exp(s - s.max())
    return e / e.sum()


def compound_objective(throughput: float, recall_at_10: float, disparity: float,
                       alpha: float = 1.0, beta: float = 1.0, gamma: float = 1.0) -> float:
    """``alpha * throughput + beta * recall - gamma * disparity``."""
    for w in (alpha, beta, gamma):
        if not math.isfinite(w):
            raise InvalidParameterError("weights must be finite")
    return alpha * throughput + beta * recall_at_10 - gamma * disparity
