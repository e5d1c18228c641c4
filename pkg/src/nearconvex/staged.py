"""Staged optimisation when the non-convexity shrinks near the optimum.

If ``|F - f| <= Delta(r)`` on the ball of radius ``r`` around the minimiser
and ``f`` is ``alpha``-strongly convex, an annealing run on a ball of radius
``2 r_t`` that contains the minimiser returns a point within ``r_{t+1}`` of
it, where ``(alpha / (2 C n)) r_{t+1}^2 = Delta(3 r_t)``.  Repeating on the
smaller ball contracts the radius until it reaches the fixed point ``r*``
of that recursion.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from .annealing import AnnealResult, PlanOptions, anneal, make_plan
from .errors import AnnealingError, ConfigurationError, PreconditionError, SolverError
from .geometry import Ball, ConvexBody, _as_point
from .objectives import ObjectiveOracle

KINDS = ("polynomial", "logarithmic", "custom")


@dataclass(frozen=True)
class DecayModel:
    """Non-convexity profile ``Delta(r)`` plus the strong-convexity data.

    ``polynomial``: ``Delta(r) = c r^p`` with ``0 < p < 2``.
    ``logarithmic``: ``Delta(r) = c log(1 + d r)``.
    ``custom``: ``Delta = fn``, non-decreasing with ``fn(0) >= 0``.
    """

    kind: str
    alpha: float
    C: float = 4.0
    c: float = 0.0
    p: float = 1.0
    d: float = 1.0
    fn: Callable[[float], float] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"kind must be one of {KINDS}")
        if not (self.alpha > 0 and self.C > 0):
            raise ConfigurationError("alpha and C must be positive")
        if self.kind == "polynomial" and not 0 < self.p < 2:
            raise ConfigurationError("polynomial decay needs 0 < p < 2")
        if self.kind != "custom" and self.c < 0:
            raise ConfigurationError("c must be non-negative")
        if self.kind == "logarithmic" and not self.d > 0:
            raise ConfigurationError("d must be positive")
        if self.kind == "custom" and self.fn is None:
            raise ConfigurationError("custom decay needs fn")

    def delta(self, r: float) -> float:
        if self.kind == "polynomial":
            return self.c * r ** self.p
        if self.kind == "logarithmic":
            return self.c * math.log1p(self.d * r)
        try:
            v = float(self.fn(r))
        except Exception as err:  # noqa: BLE001 - user callable
            raise ConfigurationError(f"decay function failed at r={r}: {err}") from err
        if not math.isfinite(v) or v < 0:
            raise ConfigurationError(f"decay function returned {v} at r={r}")
        return v

    def residual(self, n: int, r: float) -> float:
        """``(alpha / (2 C n)) r^2 - Delta(3 r)``; zero at the critical radius."""
        return self.alpha / (2.0 * self.C * n) * r * r - self.delta(3.0 * r)


def next_radius(model: DecayModel, n: int, r_t: float) -> float:
    """``sqrt(2 C n Delta(3 r_t) / alpha)``."""
    if not r_t > 0:
        raise ConfigurationError("radius must be positive")
    return math.sqrt(2.0 * model.C * n * model.delta(3.0 * r_t) / model.alpha)


def critical_radius(model: DecayModel, n: int, rtol: float = 1e-14) -> float:
    """Positive fixed point ``r*`` of the radius recursion (0 when there is no non-convexity).

    Closed form for the polynomial kind; otherwise bisection on
    :meth:`DecayModel.residual` after bracketing a sign change.

    Raises
    ------
    SolverError
        No sign change could be bracketed.
    """
    if model.kind == "polynomial":
        if model.c == 0:
            return 0.0
        return (2.0 * 3.0 ** model.p * model.c * model.C * n / model.alpha) ** (1.0 / (2.0 - model.p))
    if model.kind == "logarithmic" and model.c == 0:
        return 0.0
    phi = lambda r: model.residual(n, r)  # noqa: E731
    hi = 1.0
    for _ in range(200):
        if phi(hi) > 0:
            break
        hi *= 2.0
    else:
        raise SolverError("residual stays non-positive: no finite critical radius")
    lo = hi
    for _ in range(2000):
        lo *= 0.5
        if phi(lo) < 0:
            break
    else:
        if model.delta(0.0) == 0.0:
            return 0.0
        raise SolverError("residual stays positive near 0: no sign change to bracket")
    return float(optimize.bisect(phi, lo, hi, xtol=1e-300, rtol=max(rtol, 4 * np.finfo(float).eps),
                                 maxiter=2000))


def stage_bound(model: DecayModel, r0: float, r_star: float, epsilon_rel: float) -> float:
    """Upper bound on the number of stages for polynomial decay."""
    if model.kind != "polynomial":
        raise ConfigurationError("the stage bound is stated for polynomial decay")
    return (math.log(math.log(r0 / r_star)) + math.log(1.0 / epsilon_rel)) / math.log(2.0 / model.p) + 1.0


@dataclass
class StageRecord:
    stage: int
    center: np.ndarray
    radius: float
    rho: float
    epsilon: float
    best_value: float
    best_point: np.ndarray
    queries: int
    next_radius: float
    nested: bool


@dataclass
class StagedResult:
    x: np.ndarray
    stage_log: list = field(default_factory=list)
    queries: int = 0
    r_star: float = 0.0
    reason: str = ""


def _stage_seed(seed: int, stage: int) -> int:
    return int(np.random.SeedSequence([seed, stage]).generate_state(1, np.uint64)[0] >> 1)


def staged_optimize(F: ObjectiveOracle, model: DecayModel, x0, r0: float, epsilon_rel: float,
                    inner: PlanOptions | None = None, seed: int = 0, body: ConvexBody | None = None,
                    epsilon_floor: float = 1e-6, max_stages: int = 100, workers: int = 1,
                    backend: str | None = None) -> StagedResult:
    """Anneal on shrinking balls ``B(x_{t-1}, 2 r_t)`` until the radius stalls.

    Stage ``t`` declares ``rho_t = Delta(3 r_t)`` and targets accuracy
    ``max(n rho_t, epsilon_floor)``.  The loop stops after the stage whose
    next radius satisfies ``r_{t+1} >= r_t / (1 + epsilon_rel)`` or
    ``r_{t+1} <= (1 + epsilon_rel) r*``.

    Raises
    ------
    PreconditionError
        ``B(x0, 2 r0)`` is not inside ``body``.
    AnnealingError
        An inner run failed; the message names the stage.
    """
    x0 = _as_point(x0, F.dimension)
    n = F.dimension
    if not (r0 > 0 and epsilon_rel > 0):
        raise ConfigurationError("r0 and epsilon_rel must be positive")
    r_star = critical_radius(model, n)
    result = StagedResult(x0.copy(), r_star=r_star)
    if r0 <= r_star:
        result.reason = f"r0 = {r0:.6g} is not above the critical radius {r_star:.6g}; nothing to do"
        return result
    if body is not None and body.contains_ball(x0, 2.0 * r0) is False:
        raise PreconditionError("the first stage ball B(x0, 2 r0) leaves the feasible body")
    inner = inner or PlanOptions()
    center, r = x0, float(r0)
    for t in range(1, max_stages + 1):
        ball = Ball(center, 2.0 * r)
        if body is not None and body.contains_ball(center, 2.0 * r) is False:
            raise PreconditionError(f"stage {t}: search ball leaves the feasible body")
        rho = model.delta(3.0 * r)
        eps = max(n * rho, epsilon_floor)
        plan = make_plan(n, eps, ball, rho=rho, options=inner)
        try:
            res: AnnealResult = anneal(F, ball, plan, _stage_seed(seed, t), workers, backend)
        except AnnealingError as err:
            raise AnnealingError(f"stage {t}: {err}", partial=result) from err
        r_next = next_radius(model, n, r)
        nested = bool(np.linalg.norm(res.best_point - center) + 2.0 * min(r_next, r) <= 4.0 * r * (1 + 1e-12))
        result.stage_log.append(StageRecord(t, center.copy(), r, rho, eps, res.best_value, res.best_point.copy(),
                                            res.queries, r_next, nested))
        result.queries += res.queries
        result.x = res.best_point.copy()
        if r_next <= (1.0 + epsilon_rel) * r_star:
            result.reason = "reached the critical radius"
            break
        if r_next >= r / (1.0 + epsilon_rel):
            result.reason = "radius stalled"
            break
        center, r = res.best_point.copy(), r_next
    else:
        result.reason = "stage limit reached"
    return result


def write_stage_log(path, records) -> None:
    """CSV with ``stage, c1..cn, r_t, rho_t, best_value, queries``."""
    n = len(records[0].center) if records else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["stage"] + [f"c{k + 1}" for k in range(n)] + ["r_t", "rho_t", "best_value", "queries"])
        for s in records:
            w.writerow([s.stage] + [repr(float(v)) for v in s.center]
                       + [repr(s.radius), repr(s.rho), repr(s.best_value), s.queries])
