"""Objective functions and the query-counting oracle wrapper.

An :class:`Objective` is a sum of registered terms.  Registered terms can be
evaluated by the compiled kernel without calling back into Python, which is
what makes long annealing runs affordable.  Arbitrary callables are accepted
everywhere as well; they just run at Python speed.

``Objective.__call__`` is a scalar loop whose arithmetic matches the C kernel
exactly.  ``Objective.evaluate_many`` is the vectorised version used by the
quadrature oracles; it agrees to rounding error only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidInputError

# term codes; keep in sync with _ckernel.pyx
QUADRATIC = 0
ABS = 1
LINEAR = 2
CONSTANT = 3
SIN_PRODUCT = 4
SIN_SUM = 5
SIGN_SIN = 6
RADIAL_POLY = 7
RADIAL_LOG = 8

TERM_KINDS = {
    "quadratic": QUADRATIC,
    "abs": ABS,
    "linear": LINEAR,
    "constant": CONSTANT,
    "sin_product": SIN_PRODUCT,
    "sin_sum": SIN_SUM,
    "sign_sin": SIGN_SIN,
    "radial_poly": RADIAL_POLY,
    "radial_log": RADIAL_LOG,
}

# kernel target codes
TARGET_UNIFORM = 0
TARGET_TERMS = 1
TARGET_CALLABLE = 2


@dataclass(frozen=True)
class Term:
    """One registered term.

    ``weight`` and ``center`` are per-coordinate vectors; the scalars are
    ``amplitude``, ``freq``, ``power`` and ``scale`` (their meaning depends on
    the kind, see :func:`term_value`).
    """

    kind: int
    weight: tuple
    center: tuple
    amplitude: float = 1.0
    freq: float = 1.0
    power: float = 1.0
    scale: float = 1.0

    @property
    def is_perturbation(self) -> bool:
        return self.kind in (SIN_PRODUCT, SIN_SUM, SIGN_SIN, RADIAL_POLY, RADIAL_LOG)

    def bound(self) -> float:
        """Sup-norm bound for bounded (perturbation) terms, ``inf`` otherwise."""
        if self.kind in (SIN_PRODUCT, SIN_SUM, SIGN_SIN):
            return abs(self.amplitude)
        if self.kind == CONSTANT:
            return abs(self.amplitude)
        return math.inf


def term_value(t: Term, y: Sequence[float]) -> float:
    k = t.kind
    if k == QUADRATIC:
        s = 0.0
        for yi, ci, wi in zip(y, t.center, t.weight):
            d = yi - ci
            s += wi * (d * d)
        return s
    if k == ABS:
        s = 0.0
        for yi, ci, wi in zip(y, t.center, t.weight):
            s += wi * abs(yi - ci)
        return s
    if k == LINEAR:
        s = 0.0
        for yi, ci, wi in zip(y, t.center, t.weight):
            s += wi * (yi - ci)
        return s
    if k == CONSTANT:
        return t.amplitude
    if k == SIN_PRODUCT:
        p = t.amplitude
        for yi, ci in zip(y, t.center):
            p *= math.sin(t.freq * (yi - ci))
        return p
    if k == SIN_SUM:
        s = 0.0
        for yi, ci in zip(y, t.center):
            s += math.sin(t.freq * (yi - ci))
        return t.amplitude * s / len(t.center)
    if k == SIGN_SIN:
        v = math.sin(t.freq * (y[0] - t.center[0]))
        sg = 1.0 if v > 0 else (-1.0 if v < 0 else 0.0)
        return t.amplitude * sg
    if k in (RADIAL_POLY, RADIAL_LOG):
        s = 0.0
        for yi, ci in zip(y, t.center):
            d = yi - ci
            s += d * d
        r = math.sqrt(s)
        if k == RADIAL_POLY:
            return t.amplitude * math.pow(r, t.power) * math.sin(t.freq * r)
        return t.amplitude * math.log(1.0 + t.scale * r) * math.sin(t.freq * r)
    raise InvalidInputError(f"unknown term kind {k}")


def term_values_many(t: Term, Y: np.ndarray) -> np.ndarray:
    c = np.asarray(t.center)
    w = np.asarray(t.weight)
    k = t.kind
    if k == QUADRATIC:
        return ((Y - c) ** 2 * w).sum(axis=1)
    if k == ABS:
        return (np.abs(Y - c) * w).sum(axis=1)
    if k == LINEAR:
        return ((Y - c) * w).sum(axis=1)
    if k == CONSTANT:
        return np.full(Y.shape[0], t.amplitude)
    if k == SIN_PRODUCT:
        return t.amplitude * np.prod(np.sin(t.freq * (Y - c)), axis=1)
    if k == SIN_SUM:
        return t.amplitude * np.sin(t.freq * (Y - c)).sum(axis=1) / Y.shape[1]
    if k == SIGN_SIN:
        return t.amplitude * np.sign(np.sin(t.freq * (Y[:, 0] - c[0])))
    r = np.sqrt(((Y - c) ** 2).sum(axis=1))
    if k == RADIAL_POLY:
        return t.amplitude * r ** t.power * np.sin(t.freq * r)
    if k == RADIAL_LOG:
        return t.amplitude * np.log1p(t.scale * r) * np.sin(t.freq * r)
    raise InvalidInputError(f"unknown term kind {k}")


class Objective:
    """Sum of registered terms on ``R^n``."""

    def __init__(self, dimension: int, terms: Sequence[Term]):
        self.dimension = int(dimension)
        self.terms = tuple(terms)
        for t in self.terms:
            if len(t.center) != self.dimension or len(t.weight) != self.dimension:
                raise InvalidInputError("term vectors must match the objective dimension")

    def __call__(self, x) -> float:
        y = [float(v) for v in x]
        total = 0.0
        for t in self.terms:
            total += term_value(t, y)
        return total

    def evaluate_many(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        total = np.zeros(X.shape[0])
        for t in self.terms:
            total = total + term_values_many(t, X)
        return total

    def __add__(self, other: "Objective") -> "Objective":
        if other.dimension != self.dimension:
            raise InvalidInputError("dimension mismatch")
        return Objective(self.dimension, self.terms + other.terms)

    def convex_part(self) -> "Objective":
        """The objective without its perturbation terms."""
        return Objective(self.dimension, [t for t in self.terms if not t.is_perturbation])

    def perturbation_bound(self) -> float:
        """Sup-norm bound of the perturbation terms (``inf`` for unbounded radial ones)."""
        return sum(t.bound() for t in self.terms if t.is_perturbation)

    def _kernel_arrays(self):
        n, k = self.dimension, len(self.terms)
        kinds = np.array([t.kind for t in self.terms], dtype=np.int32)
        scal = np.array([[t.amplitude, t.freq, t.power, t.scale] for t in self.terms],
                        dtype=float).reshape(k, 4)
        w = np.array([t.weight for t in self.terms], dtype=float).reshape(k, n)
        c = np.array([t.center for t in self.terms], dtype=float).reshape(k, n)
        return kinds, np.ascontiguousarray(scal.ravel()), np.ascontiguousarray(w.ravel()), np.ascontiguousarray(c.ravel())

    def __repr__(self):
        inv = {v: k for k, v in TERM_KINDS.items()}
        return f"Objective(n={self.dimension}, terms={[inv[t.kind] for t in self.terms]})"


def _vec(v, n, default):
    if v is None:
        return tuple([float(default)] * n)
    if np.isscalar(v):
        return tuple([float(v)] * n)
    v = [float(a) for a in v]
    if len(v) != n:
        raise InvalidInputError(f"expected a length-{n} vector")
    return tuple(v)


def quadratic(n: int, center=None, weight=1.0) -> Objective:
    """``sum_k weight_k (x_k - center_k)^2``."""
    return Objective(n, [Term(QUADRATIC, _vec(weight, n, 1.0), _vec(center, n, 0.0))])


def l1(n: int, center=None, weight=1.0) -> Objective:
    return Objective(n, [Term(ABS, _vec(weight, n, 1.0), _vec(center, n, 0.0))])


def linear(n: int, coef, offset=None) -> Objective:
    return Objective(n, [Term(LINEAR, _vec(coef, n, 0.0), _vec(offset, n, 0.0))])


def constant(n: int, value: float) -> Objective:
    return Objective(n, [Term(CONSTANT, _vec(None, n, 0.0), _vec(None, n, 0.0), amplitude=float(value))])


def sin_product(n: int, amplitude: float, freq: float, center=None) -> Objective:
    """``amplitude * prod_k sin(freq (x_k - center_k))``; bounded by ``|amplitude|``."""
    return Objective(n, [Term(SIN_PRODUCT, _vec(None, n, 1.0), _vec(center, n, 0.0),
                              amplitude=float(amplitude), freq=float(freq))])


def sin_sum(n: int, amplitude: float, freq: float, center=None) -> Objective:
    """``amplitude * mean_k sin(freq (x_k - center_k))``."""
    return Objective(n, [Term(SIN_SUM, _vec(None, n, 1.0), _vec(center, n, 0.0),
                              amplitude=float(amplitude), freq=float(freq))])


def sign_sin(n: int, amplitude: float, freq: float, center=None) -> Objective:
    """``amplitude * sign(sin(freq (x_1 - center_1)))``: a discontinuous perturbation."""
    return Objective(n, [Term(SIGN_SIN, _vec(None, n, 1.0), _vec(center, n, 0.0),
                              amplitude=float(amplitude), freq=float(freq))])


def radial_poly(n: int, amplitude: float, power: float, freq: float, center=None) -> Objective:
    """``amplitude * r^power * sin(freq r)`` with ``r = |x - center|``; magnitude at most ``amplitude r^power``."""
    return Objective(n, [Term(RADIAL_POLY, _vec(None, n, 1.0), _vec(center, n, 0.0),
                              amplitude=float(amplitude), freq=float(freq), power=float(power))])


def radial_log(n: int, amplitude: float, scale: float, freq: float, center=None) -> Objective:
    """``amplitude * log(1 + scale r) * sin(freq r)``."""
    return Objective(n, [Term(RADIAL_LOG, _vec(None, n, 1.0), _vec(center, n, 0.0),
                              amplitude=float(amplitude), freq=float(freq), scale=float(scale))])


@dataclass(frozen=True)
class KernelTarget:
    """Log-density description handed to a walk kernel.

    ``log g(y) = coef * v(y)`` where ``v`` is the objective (registered terms,
    optionally grid-snapped with per-cell noise) or a Python callable.  The
    uniform target evaluates nothing.
    """

    kind: int
    coef: float = 0.0
    n: int = 0
    terms: tuple = ()
    grid_alpha: float = 0.0
    noise_sd: float = 0.0
    noise_seed: int = 0
    func: Callable | None = None

    @classmethod
    def uniform(cls, n: int) -> "KernelTarget":
        return cls(TARGET_UNIFORM, 0.0, n)


class ObjectiveOracle:
    """Zeroth-order access to ``F`` with query accounting.

    Parameters
    ----------
    fn
        An :class:`Objective` (fast path) or any callable ``x -> float``.
    rho
        Declared bound on ``|F - f|`` for some convex ``f``.  The optimizer never
        sees ``f``, so this has to come from the caller.
    billing
        Underlying oracle calls charged per query (``tau`` for the repeated-query
        oracle, 1 otherwise).

    Direct calls increment ``queries``.  Walks and annealing runs do not touch
    this counter; they report their own counts, which callers merge with
    :meth:`charge` after joining strands.
    """

    def __init__(self, fn, dimension: int, rho: float = 0.0, billing: int = 1, name: str | None = None):
        if rho < 0:
            raise InvalidInputError("rho must be non-negative")
        self.fn = fn
        self.dimension = int(dimension)
        self.rho = float(rho)
        self.billing = int(billing)
        self.name = name or getattr(fn, "__name__", type(fn).__name__)
        self.queries = 0

    def evaluate_raw(self, x) -> float:
        return float(self.fn(x))

    def __call__(self, x) -> float:
        self.queries += 1
        return self.evaluate_raw(x)

    def charge(self, count: int) -> None:
        self.queries += int(count)

    @property
    def billed_queries(self) -> int:
        return self.billing * self.queries

    def billed(self, count: int) -> int:
        return self.billing * int(count)

    def evaluate_many(self, X) -> np.ndarray:
        if isinstance(self.fn, Objective):
            return self.fn.evaluate_many(X)
        return np.array([self.evaluate_raw(x) for x in np.atleast_2d(X)])

    def kernel_target(self, coef: float) -> KernelTarget:
        if isinstance(self.fn, Objective):
            return KernelTarget(TARGET_TERMS, coef, self.dimension, self.fn.terms)
        return KernelTarget(TARGET_CALLABLE, coef, self.dimension, func=self.evaluate_raw)

    def __repr__(self):
        return f"ObjectiveOracle({self.name}, n={self.dimension}, rho={self.rho}, billing={self.billing})"
