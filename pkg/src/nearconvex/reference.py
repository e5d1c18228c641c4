"""Brute-force numerical oracles for one- and two-dimensional targets.

Everything here works on vectorised log-densities ``log_g(X) -> array`` with
``X`` of shape ``(M, d)``, ``d`` in ``{1, 2}``, and integrates with the
trapezoid rule in log space (shifted by the maximum before exponentiating).
Integrals report a relative error estimate from comparing grid spacing ``h``
with ``h / 2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .annealing import gibbs_gap_bound
from .errors import DegenerateError, InvalidInputError, PrecisionError

CROP_LOG_DROP = 60.0
# coarsest grid per axis; the finest Romberg level has 4x the spacing resolution
DEFAULT_POINTS = {1: 16385, 2: 513}


def _domain(domain) -> np.ndarray:
    d = np.atleast_2d(np.asarray(domain, dtype=float))
    if d.shape[1] != 2 or d.shape[0] not in (1, 2):
        raise InvalidInputError("domain must be (lo, hi) or ((lo1, hi1), (lo2, hi2))")
    if np.any(d[:, 1] <= d[:, 0]) or not np.all(np.isfinite(d)):
        raise InvalidInputError("domain needs finite lo < hi")
    return d


def _axes(box: np.ndarray, points: int, breaks=None, refine: int = 0):
    """Per-axis nodes: uniform pieces between ``breaks`` with about ``points`` nodes in total.

    ``refine`` halves every piece that many times, so refined grids nest.
    """
    axes = []
    for k, (lo, hi) in enumerate(box):
        cuts = sorted(float(c) for c in (breaks[k] if breaks is not None else ()) if lo < c < hi)
        edges = [lo, *cuts, hi]
        pieces = []
        for a, b in zip(edges[:-1], edges[1:]):
            m = max(2, int(round((points - 1) * (b - a) / (hi - lo)))) * 2 ** refine
            pieces.append(np.linspace(a, b, m + 1)[:-1])
        axes.append(np.concatenate(pieces + [np.array([hi])]))
    return axes


def _node_weights(ax: np.ndarray) -> np.ndarray:
    """Trapezoid weights for arbitrary increasing nodes."""
    d = np.diff(ax)
    w = np.zeros(len(ax))
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


def _breaks(breaks, d: int):
    if breaks is None:
        return None
    if d == 1 and len(breaks) and np.isscalar(breaks[0]):
        return [list(breaks)]
    if len(breaks) != d:
        raise InvalidInputError("breaks needs one sequence per axis")
    return [list(b) for b in breaks]


def _evaluate(log_g, axes) -> np.ndarray:
    if len(axes) == 1:
        X = axes[0][:, None]
        shape = (len(axes[0]),)
    else:
        A, B = np.meshgrid(axes[0], axes[1], indexing="ij")
        X = np.column_stack([A.ravel(), B.ravel()])
        shape = A.shape
    v = np.asarray(log_g(X), dtype=float).reshape(shape)
    if np.any(np.isnan(v)) or np.any(v == np.inf):
        raise InvalidInputError("log-density must be finite or -inf")
    return v


def _romberg(a) -> tuple[float, float]:
    """Extrapolate trapezoid values at ``h, h/2, h/4``; returns ``(value, error estimate)``.

    The estimate is the error of the first-order extrapolation at ``h/4``,
    which bounds the error of the returned second-order value.
    """
    a0, a1, a2 = a
    b1 = a1 + (a1 - a0) / 3.0
    b2 = a2 + (a2 - a1) / 3.0
    return b2 + (b2 - b1) / 15.0, abs(b2 - b1) / 15.0


def _trap_weights(m: int) -> np.ndarray:
    w = np.ones(m)
    w[0] = w[-1] = 0.5
    return w


def _log_trapezoid(v: np.ndarray, axes) -> float:
    """``log`` of the trapezoid integral of ``exp(v)`` over the grid."""
    top = np.max(v)
    if top == -np.inf:
        raise DegenerateError("log-density is -inf on the whole grid")
    e = np.exp(v - top)
    for k, ax in enumerate(axes):
        w = _node_weights(ax)
        e = np.tensordot(w, e, axes=([0], [0])) if k == 0 else e @ w
    return float(top + math.log(float(e)))


def _crop(log_g, box: np.ndarray, rounds: int = 2, coarse: int = 257) -> np.ndarray:
    """Shrink ``box`` to where ``log_g`` is within ``CROP_LOG_DROP`` of its maximum (plus one coarse cell)."""
    for _ in range(rounds):
        axes = _axes(box, coarse)
        v = _evaluate(log_g, axes)
        keep = v >= np.max(v) - CROP_LOG_DROP
        new = box.copy()
        for k, ax in enumerate(axes):
            other = tuple(j for j in range(v.ndim) if j != k)
            idx = np.nonzero(keep.any(axis=other) if other else keep)[0]
            lo_i, hi_i = max(idx[0] - 1, 0), min(idx[-1] + 1, len(ax) - 1)
            new[k] = (ax[lo_i], ax[hi_i])
        if np.allclose(new, box, rtol=0, atol=0):
            break
        box = new
    return box


@dataclass(frozen=True)
class LogIntegral:
    log_value: float
    rel_error: float


def log_integral(log_g, domain, points: int | None = None, crop: bool = True,
                 tol: float | None = None, breaks=None) -> LogIntegral:
    """``log`` of the integral of ``exp(log_g)`` over a 1-D or 2-D box.

    The estimate is Romberg-extrapolated from spacings ``h``, ``h/2`` and
    ``h/4``; ``rel_error`` estimates the error of the finer first-order
    extrapolation, which bounds the error of the result.
    With ``crop`` the box is first shrunk to the region carrying all but a
    ``e^{-60}`` fraction of the mass.  ``breaks`` lists, per axis, coordinates
    where ``log_g`` has kinks; they become grid nodes so the error expansion
    in ``h`` stays valid.

    Raises
    ------
    PrecisionError
        ``tol`` given and ``rel_error > tol``.
    """
    box = _domain(domain)
    d = box.shape[0]
    if points is None:
        points = DEFAULT_POINTS[d]
    breaks = _breaks(breaks, d)
    if crop:
        box = _crop(log_g, box)
    logs = []
    for refine in range(3):
        axes = _axes(box, points, breaks, refine)
        logs.append(_log_trapezoid(_evaluate(log_g, axes), axes))
    # sums relative to the finest one
    r, err = _romberg([math.exp(v - logs[2]) for v in logs])
    value = logs[2] + math.log(r)
    rel = err / r
    if tol is not None and rel > tol:
        raise PrecisionError(f"quadrature relative error {rel:.3g} exceeds {tol:.3g}")
    return LogIntegral(value, rel)


@dataclass(frozen=True)
class GridDensity:
    """Normalised trapezoid weights on a uniform 1-D or 2-D lattice."""

    axes: tuple
    weights: np.ndarray

    @property
    def spacing(self) -> tuple:
        return tuple(float(ax[1] - ax[0]) for ax in self.axes)

    @property
    def dimension(self) -> int:
        return len(self.axes)

    def points(self) -> np.ndarray:
        if self.dimension == 1:
            return self.axes[0][:, None]
        A, B = np.meshgrid(*self.axes, indexing="ij")
        return np.column_stack([A.ravel(), B.ravel()])

    def expect(self, fn) -> float:
        """``E[fn(X)]`` for vectorised ``fn``."""
        vals = np.asarray(fn(self.points()), dtype=float).reshape(self.weights.shape)
        return float(np.sum(self.weights * vals))

    def mean(self) -> np.ndarray:
        P = self.points()
        return (self.weights.reshape(-1, 1) * P).sum(axis=0)

    def same_grid(self, other: "GridDensity") -> bool:
        return len(self.axes) == len(other.axes) and all(
            a.shape == b.shape and np.array_equal(a, b) for a, b in zip(self.axes, other.axes))


def quadrature_density(log_g, domain, points: int = 1001) -> GridDensity:
    """Trapezoid-normalised density ``exp(log_g)`` on a ``points``-per-axis grid.

    Raises
    ------
    DegenerateError
        ``log_g`` is ``-inf`` everywhere on the grid.
    """
    if points < 100:
        raise InvalidInputError("need at least 100 points per axis")
    box = _domain(domain)
    axes = _axes(box, points)
    v = _evaluate(log_g, axes)
    top = np.max(v)
    if top == -np.inf:
        raise DegenerateError("log-density is -inf on the whole grid")
    w = np.exp(v - top)
    for k in range(v.ndim):
        shape = [1] * v.ndim
        shape[k] = points
        w = w * _trap_weights(points).reshape(shape)
    w = w / w.sum()
    return GridDensity(tuple(axes), w)


def tv_distance(p, q) -> float:
    """Half the L1 distance between two densities (or probability vectors) on the same grid."""
    if isinstance(p, GridDensity) or isinstance(q, GridDensity):
        if not (isinstance(p, GridDensity) and isinstance(q, GridDensity) and p.same_grid(q)):
            raise InvalidInputError("densities live on different grids")
        p, q = p.weights, q.weights
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise InvalidInputError("shape mismatch")
    return 0.5 * float(np.abs(p - q).sum())


def _bin_weight_matrix(lo: float, hi: float, bins: int, per_bin: int):
    """Nodes of a grid aligned with ``bins`` equal bins and the matrix mapping node values to bin integrals."""
    nodes = np.linspace(lo, hi, bins * per_bin + 1)
    h = nodes[1] - nodes[0]
    W = np.zeros((bins, len(nodes)))
    local = _trap_weights(per_bin + 1) * h
    for b in range(bins):
        W[b, b * per_bin:(b + 1) * per_bin + 1] = local
    return nodes, W


def bin_probabilities(log_g, domain, bins, per_bin: int = 64) -> np.ndarray:
    """Probability of each equal-width bin under the density ``exp(log_g)`` (normalised on the domain).

    ``bins`` is a count (1-D) or a pair of counts (2-D).  Returns a vector or
    a ``(bins_x, bins_y)`` matrix.
    """
    box = _domain(domain)
    bins = np.atleast_1d(bins).astype(int)
    if len(bins) == 1 and box.shape[0] == 2:
        bins = np.repeat(bins, 2)
    mats, axes = [], []
    for (lo, hi), b in zip(box, bins):
        nodes, W = _bin_weight_matrix(lo, hi, int(b), per_bin)
        axes.append(nodes)
        mats.append(W)
    v = _evaluate(log_g, axes)
    top = np.max(v)
    if top == -np.inf:
        raise DegenerateError("log-density is -inf on the whole grid")
    e = np.exp(v - top)
    P = mats[0] @ e if len(axes) == 1 else mats[0] @ e @ mats[1].T
    return P / P.sum()


def empirical_bin_probabilities(samples, domain, bins) -> np.ndarray:
    box = _domain(domain)
    X = np.asarray(samples, dtype=float)
    if box.shape[0] == 1:
        h, _ = np.histogram(X.ravel(), bins=int(np.atleast_1d(bins)[0]), range=tuple(box[0]))
    else:
        b = np.atleast_1d(bins).astype(int)
        if len(b) == 1:
            b = np.repeat(b, 2)
        h, _, _ = np.histogram2d(X[:, 0], X[:, 1], bins=[int(b[0]), int(b[1])],
                                 range=[tuple(box[0]), tuple(box[1])])
    return h / X.shape[0]


def binned_tv(samples, log_g, domain, bins, per_bin: int = 64) -> float:
    """TV between the histogram of ``samples`` and the bin probabilities of ``exp(log_g)``."""
    return tv_distance(empirical_bin_probabilities(samples, domain, bins),
                       bin_probabilities(log_g, domain, bins, per_bin))


@dataclass(frozen=True)
class WarmStartNorm:
    ratio: float
    rel_error: float


def warm_start_norm(F, T_i: float, T_next: float, domain, points: int | None = None,
                    tol: float = 1e-6, breaks=None) -> WarmStartNorm:
    """L2 ratio norm between Gibbs laws at consecutive temperatures.

    Returns ``Y(2/T_i - 1/T_next) Y(1/T_next) / Y(1/T_i)^2`` with
    ``Y(a) = integral of exp(-a F)`` over ``domain``.  ``F`` is vectorised.

    Raises
    ------
    PrecisionError
        Any of the integrals is less accurate than ``tol`` (relative).
    """
    if not (T_i > 0 and T_next > 0):
        raise InvalidInputError("temperatures must be positive")

    def Y(a):
        return log_integral(lambda X: -a * np.asarray(F(X), dtype=float), domain, points, tol=tol,
                            breaks=breaks)

    y1 = Y(2.0 / T_i - 1.0 / T_next)
    y2 = Y(1.0 / T_next)
    y0 = Y(1.0 / T_i)
    log_ratio = y1.log_value + y2.log_value - 2.0 * y0.log_value
    rel = y1.rel_error + y2.rel_error + 2.0 * y0.rel_error
    return WarmStartNorm(math.exp(log_ratio), rel)


def warm_start_bound(beta: float, T_i: float) -> float:
    """``5 e^{2 beta / T_i}`` for a ``beta``-log-concave ``exp(-F)``."""
    return 5.0 * math.exp(2.0 * beta / T_i)


@dataclass(frozen=True)
class GibbsGap:
    gap: float
    bound: float
    rho: float
    rel_error: float


def gibbs_mean_gap(f, F, T: float, domain, f_min: float | None = None, points: int | None = None,
                   tol: float = 1e-6, breaks=None) -> GibbsGap:
    """``E f - min f`` under the density proportional to ``exp(-F/T)``, with its theoretical bound.

    ``rho`` is ``max |F - f|`` over the quadrature grid.  ``f_min`` defaults
    to the grid minimum of ``f``.

    Raises
    ------
    PrecisionError
        The expectation is less accurate than ``tol`` (relative to the gap scale).
    """
    if not T > 0:
        raise InvalidInputError("T must be positive")
    box = _domain(domain)
    d = box.shape[0]
    if points is None:
        points = DEFAULT_POINTS[d]
    lg = lambda X: -np.asarray(F(X), dtype=float) / T  # noqa: E731
    breaks = _breaks(breaks, d)
    crop = _crop(lg, box)

    def expectation(refine):
        axes = _axes(crop, points, breaks, refine)
        v = _evaluate(lg, axes)
        P = _grid_points(axes)
        fv = np.asarray(f(P), dtype=float).reshape(v.shape)
        w = np.exp(v - np.max(v))
        for k, ax in enumerate(axes):
            shape = [1] * v.ndim
            shape[k] = len(ax)
            w = w * _node_weights(ax).reshape(shape)
        return float(np.sum(w * fv) / np.sum(w))

    mean, err = _romberg([expectation(k) for k in range(3)])
    full_axes = _axes(box, points)
    P = _grid_points(full_axes)
    fv = np.asarray(f(P), dtype=float)
    Fv = np.asarray(F(P), dtype=float)
    rho = float(np.max(np.abs(Fv - fv)))
    fmin = float(np.min(fv)) if f_min is None else float(f_min)
    gap = mean - fmin
    scale = max(abs(gap), T)
    if err > tol * scale:
        raise PrecisionError(f"Gibbs mean error {err:.3g} exceeds tolerance")
    return GibbsGap(gap, gibbs_gap_bound(d, T, rho), rho, err / scale)


def _grid_points(axes) -> np.ndarray:
    if len(axes) == 1:
        return axes[0][:, None]
    A, B = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([A.ravel(), B.ravel()])


@dataclass(frozen=True)
class Certificate:
    passed: bool
    worst_margin: float


def certify_beta_log_concave(log_g, domain, beta: float, trials: int, rng: np.random.Generator,
                             slack: float = 1e-12) -> Certificate:
    """Randomised check of ``log g(a x + (1-a) y) >= -beta + a log g(x) + (1-a) log g(y)``.

    ``worst_margin`` is the smallest left-minus-right difference found; a
    negative value below ``-slack`` is a violation.
    """
    if trials < 1000:
        raise InvalidInputError("need at least 1000 trials")
    box = _domain(domain)
    d = box.shape[0]
    lo, hi = box[:, 0], box[:, 1]
    X = lo + (hi - lo) * rng.random((trials, d))
    Yp = lo + (hi - lo) * rng.random((trials, d))
    a = rng.random((trials, 1))
    Z = a * X + (1.0 - a) * Yp
    lx = np.asarray(log_g(X), dtype=float)
    ly = np.asarray(log_g(Yp), dtype=float)
    lz = np.asarray(log_g(Z), dtype=float)
    a = a.ravel()
    with np.errstate(invalid="ignore"):
        rhs = -beta + a * lx + (1.0 - a) * ly
        margin = lz - rhs
    margin = np.where(np.isnan(margin), np.inf, margin)
    worst = float(np.min(margin))
    return Certificate(worst >= -slack, worst)
