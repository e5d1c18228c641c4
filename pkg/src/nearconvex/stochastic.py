"""Noisy zeroth-order oracles on an l-infinity grid.

The oracle snaps each query to the nearest point of a grid of pitch
``alpha`` and returns ``f(snapped) + noise(cell)``.  The noise of a cell is a
fixed Gaussian draw with standard deviation ``sigma / sqrt(tau)``, the law of
the average of ``tau`` independent ``sigma``-noisy evaluations, so each call
is billed as ``tau`` underlying queries.  Cell noise is produced by a
counter-based hash of ``(master_seed, cell index)``: it is drawn once per cell
in effect, never stored, and independent of query order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InvalidInputError, PreconditionError
from .geometry import ConvexBody, _as_point
from .objectives import TARGET_TERMS, KernelTarget, Objective, ObjectiveOracle

MASK64 = (1 << 64) - 1
TWO_PI = 6.283185307179586
INV_2_53 = 2.0 ** -53


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def cell_normal(seed: int, index) -> float:
    """Standard normal value attached to a grid cell (Box-Muller on hashed bits)."""
    h = splitmix64(int(seed) & MASK64)
    for k in index:
        h = splitmix64(h ^ (int(k) & MASK64))
    a = splitmix64(h)
    b = splitmix64(a)
    u1 = ((a >> 11) + 1) * INV_2_53
    u2 = (b >> 11) * INV_2_53
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(TWO_PI * u2)


def snap_index(x: float, alpha: float) -> int:
    # nearest multiple of alpha, ties toward -inf
    return math.ceil(x / alpha - 0.5)


@dataclass(frozen=True)
class GridCell:
    index: tuple

    def point(self, alpha: float) -> np.ndarray:
        return np.array([alpha * k for k in self.index])


def grid_snap(x, alpha: float) -> GridCell:
    """Cell of the pitch-``alpha`` grid nearest to ``x`` coordinate-wise (half-down ties)."""
    if not alpha > 0:
        raise InvalidInputError("alpha must be positive")
    x = _as_point(x)
    return GridCell(tuple(snap_index(float(v), alpha) for v in x))


@dataclass(frozen=True)
class StochasticOracleConfig:
    """Parameters of the grid-snapped noisy oracle.

    ``epsilon`` is the accuracy the parameters were derived for; it fixes the
    declared non-convexity bound ``epsilon / n`` of the wrapped oracle.
    """

    sigma: float
    alpha: float
    tau: int = 1
    master_seed: int = 0
    box_radius: float = 1.0
    epsilon: float | None = None

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigurationError("alpha must be positive")
        if self.tau < 1:
            raise ConfigurationError("tau must be at least 1")
        if self.sigma < 0:
            raise ConfigurationError("sigma must be non-negative")

    @property
    def noise_sd(self) -> float:
        return self.sigma / math.sqrt(self.tau)


@dataclass(frozen=True)
class StochasticParams:
    tau: int
    alpha: float


def stochastic_params(n: int, epsilon: float, sigma: float, L: float, R: float,
                      delta: float) -> StochasticParams:
    """Repeat count and grid pitch that make the noisy oracle ``epsilon/n``-close to ``f``.

    Half the budget goes to the grid bias, ``alpha L = epsilon / (2n)``; the
    other half bounds the averaged noise over every cell of the grid with
    probability ``1 - delta``.
    """
    if n < 1 or not (epsilon > 0 and L > 0 and R > 0 and sigma >= 0):
        raise ConfigurationError("n, epsilon, L, R must be positive and sigma non-negative")
    if not 0 < delta < 1:
        raise ConfigurationError("delta must lie in (0, 1)")
    alpha = epsilon / (2.0 * L * n)
    if R / alpha <= 1.0:
        raise ConfigurationError("grid is degenerate: R / alpha <= 1")
    if sigma == 0:
        return StochasticParams(1, alpha)
    tau = math.ceil(sigma ** 2 * n ** 2 * (8.0 * n * math.log(R / alpha) + 8.0 * math.log(1.0 / delta))
                    / epsilon ** 2)
    return StochasticParams(max(int(tau), 1), alpha)


def noise_bound(n: int, sigma: float, tau: int, R: float, alpha: float, delta: float) -> float:
    """High-probability bound on the per-cell averaged noise over the grid."""
    return sigma * math.sqrt((2.0 * n * math.log(R / alpha) + 2.0 * math.log(1.0 / delta)) / tau)


class GridNoiseOracle:
    """Callable ``x -> f(snap(x)) + noise(cell)`` with optional domain check."""

    def __init__(self, f, cfg: StochasticOracleConfig, body: ConvexBody | None = None):
        self.f = f
        self.cfg = cfg
        self.body = body
        self.__name__ = f"noisy({getattr(f, '__name__', type(f).__name__)})"

    def value_at(self, x) -> float:
        cell = grid_snap(x, self.cfg.alpha)
        y = [self.cfg.alpha * k for k in cell.index]
        v = float(self.f(y)) if isinstance(self.f, Objective) else float(self.f(np.array(y)))
        if self.cfg.sigma > 0:
            v += self.cfg.noise_sd * cell_normal(self.cfg.master_seed, cell.index)
        return v

    def __call__(self, x) -> float:
        x = _as_point(x)
        if self.body is not None and not self.body.contains(x):
            raise PreconditionError("query point lies outside the feasible body")
        return self.value_at(x)


def query(f, cfg: StochasticOracleConfig, x, body: ConvexBody | None = None) -> float:
    """One oracle answer at ``x`` (unbilled; use :class:`StochasticOracle` for accounting)."""
    return GridNoiseOracle(f, cfg, body)(x)


class StochasticOracle(ObjectiveOracle):
    """:class:`ObjectiveOracle` over a :class:`GridNoiseOracle`, billed ``tau`` per query."""

    def __init__(self, f, cfg: StochasticOracleConfig, dimension: int, rho: float,
                 body: ConvexBody | None = None):
        self.base = f
        self.cfg = cfg
        super().__init__(GridNoiseOracle(f, cfg, body), dimension, rho=rho, billing=cfg.tau)

    def evaluate_raw(self, x) -> float:
        return self.fn(x)

    def kernel_target(self, coef: float) -> KernelTarget:
        if isinstance(self.base, Objective):
            sd = self.cfg.noise_sd if self.cfg.sigma > 0 else 0.0
            return KernelTarget(TARGET_TERMS, coef, self.dimension, self.base.terms,
                                grid_alpha=self.cfg.alpha, noise_sd=sd,
                                noise_seed=int(self.cfg.master_seed))
        return super().kernel_target(coef)

    def evaluate_many(self, X) -> np.ndarray:
        return np.array([self.fn.value_at(x) for x in np.atleast_2d(X)])


def wrap_as_approx_convex(f, cfg: StochasticOracleConfig, dimension: int | None = None,
                          body: ConvexBody | None = None) -> StochasticOracle:
    """Expose the noisy oracle as an approximately convex objective with ``rho = epsilon / n``."""
    n = dimension if dimension is not None else getattr(f, "dimension", None)
    if n is None:
        raise InvalidInputError("dimension is required for callable objectives")
    if cfg.epsilon is None:
        raise ConfigurationError("config must carry the epsilon its parameters were derived for")
    return StochasticOracle(f, cfg, n, rho=cfg.epsilon / n, body=body)
