"""Hit-and-Run over a convex body with the one-dimensional sampler on each chord."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernel
from .errors import InvalidInputError, PreconditionError
from .geometry import ConvexBody, RoundingMap, _as_point
from .objectives import TARGET_CALLABLE, KernelTarget, ObjectiveOracle
from .oned import SamplerParams, SamplerStats, tv_guarantee


@dataclass(frozen=True)
class WalkParams:
    """Configuration of one walk.

    ``beta`` is the log-concavity defect of the target along chords; the walk
    never estimates it.  ``tol`` is the chord boundary tolerance (default
    ``1e-9 R``).
    """

    steps: int
    rounding: RoundingMap | None = None
    sampler: SamplerParams = field(default_factory=SamplerParams)
    beta: float = 0.0
    record_trace: bool = False
    tol: float | None = None

    def __post_init__(self):
        if self.steps < 1:
            raise InvalidInputError("steps must be at least 1")
        if not self.beta >= 0:
            raise InvalidInputError("beta must be non-negative")
        self.sampler.check_beta(self.beta)


@dataclass
class WalkResult:
    final_point: np.ndarray
    final_value: float
    oracle_queries: int
    rejection_stats: SamplerStats
    trace: np.ndarray | None = None

    @property
    def points(self) -> np.ndarray | None:
        """Trace points (one row per step) without the log-density and query columns."""
        if self.trace is None:
            return None
        return self.trace[:, :-2]


def as_target(g, n: int) -> KernelTarget:
    """Normalise the accepted target descriptions to a :class:`KernelTarget`.

    ``None`` means uniform; a callable is taken as ``log g`` itself.
    """
    if g is None:
        return KernelTarget.uniform(n)
    if isinstance(g, KernelTarget):
        return g
    if callable(g):
        return KernelTarget(TARGET_CALLABLE, 1.0, n, func=g)
    raise InvalidInputError("target must be None, a KernelTarget or a callable log-density")


def walk(g, body: ConvexBody, x0, params: WalkParams, rng: np.random.Generator,
         backend: str | None = None, strict: bool = True) -> WalkResult:
    """``params.steps`` Hit-and-Run steps from ``x0`` targeting ``exp(log g)``.

    Parameters
    ----------
    g
        ``None`` (uniform), a :class:`KernelTarget` (e.g. from
        ``ObjectiveOracle.kernel_target(-1 / T)``) or a Python callable
        returning ``log g(x)``.
    strict
        Reject a starting point within the boundary tolerance.  Later steps
        may land anywhere in the closed body.

    Raises
    ------
    PreconditionError
        ``x0`` is outside the body, or (``strict``) on its boundary.
    GeometryError, SamplerError
        Propagated from the chord search or the 1-D sampler, with the step
        index in the message and the ``step`` attribute.
    """
    n = body.dimension
    x0 = _as_point(x0, n)
    if not body._member(x0.tolist()):
        raise PreconditionError("starting point is outside the body")
    rounding = params.rounding or RoundingMap.identity(n)
    if rounding.dimension != n:
        raise InvalidInputError("rounding map dimension does not match the body")
    tol = body.default_tolerance() if params.tol is None else float(params.tol)
    target = as_target(g, n)
    x, value, queries, attempts, accepted, trace = kernel.run_walk(
        body, target, rounding._rows, float(params.beta), params.sampler, tol, x0, int(params.steps),
        rng, params.record_trace, strict, backend=backend)
    stats = SamplerStats(attempts, accepted, queries)
    return WalkResult(x, value, int(queries), stats, trace)


def step(g, body: ConvexBody, x, params: WalkParams, rng: np.random.Generator,
         backend: str | None = None) -> np.ndarray:
    """One Hit-and-Run step; the first-step case of :func:`walk`."""
    one = WalkParams(1, params.rounding, params.sampler, params.beta, False, params.tol)
    return walk(g, body, x, one, rng, backend=backend).final_point


def mixing_steps(n: int, R: float, r: float, beta: float, M: float, gamma: float,
                 C: float = 1.0) -> int:
    """Walk length after which a warm start with ratio norm ``M`` is within ``gamma`` in TV.

    ``ceil(C n^2 e^{6 beta} (R/r)^2 log^4(e^beta M n R / (r gamma^2)) log(M / gamma))``.
    """
    if n < 1 or not (R > 0 and r > 0 and M > 0 and C > 0 and beta >= 0):
        raise InvalidInputError("n, R, r, M, C must be positive and beta non-negative")
    if not 0 < gamma < 0.5:
        raise InvalidInputError("gamma must lie in (0, 1/2)")
    inner = math.exp(beta) * M * n * R / (r * gamma ** 2)
    val = C * n ** 2 * math.exp(6.0 * beta) * (R / r) ** 2 * math.log(inner) ** 4 * math.log(M / gamma)
    return max(1, math.ceil(val))


def sampler_precision(gamma: float, beta: float, m: int) -> float:
    """Per-step truncation level ``gamma e^{-2 beta} / (12 m)``.

    With this choice the accumulated 1-D sampling error over ``m`` steps,
    ``m * 3 e^{2 beta} eps_tilde``, is exactly ``gamma / 4``.
    """
    if not (gamma > 0 and m >= 1 and beta >= 0):
        raise InvalidInputError("gamma and m must be positive, beta non-negative")
    return gamma * math.exp(-2.0 * beta) / (12.0 * m)


def walk_error_budget(beta: float, eps_tilde: float, m: int) -> float:
    return m * tv_guarantee(beta, eps_tilde)


def write_trace(path, result: WalkResult) -> None:
    """CSV with columns ``step_index, x1..xn, log_g, cumulative_queries``."""
    if result.trace is None:
        raise InvalidInputError("walk was run without record_trace")
    n = result.trace.shape[1] - 2
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step_index"] + [f"x{k + 1}" for k in range(n)] + ["log_g", "cumulative_queries"])
        for i, row in enumerate(result.trace):
            w.writerow([i] + [repr(float(v)) for v in row[:n]] + [repr(float(row[n])), int(row[n + 1])])


def oracle_target(oracle: ObjectiveOracle, temperature: float) -> KernelTarget:
    """Target ``exp(-F / T)`` for an objective oracle."""
    if not temperature > 0:
        raise InvalidInputError("temperature must be positive")
    return oracle.kernel_target(-1.0 / temperature)
