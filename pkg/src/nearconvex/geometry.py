"""Convex bodies given by membership oracles, chord extraction and direction sampling.

Every body is closed: a point on the boundary is a member.  The radii ``r`` and
``R`` are measured from ``interior_point``: ``B(interior_point, r) ⊆ K ⊆
B(interior_point, R)``.

Membership tests are written as plain scalar loops over Python floats.  The
compiled kernel repeats the same arithmetic in C, so both backends agree bit
for bit on every membership decision.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import GeometryError, InvalidInputError, PreconditionError

# kernel body codes; keep in sync with _ckernel.pyx
BODY_BALL = 0
BODY_BOX = 1
BODY_POLYTOPE = 2
BODY_CALLABLE = 3

WELL_ROUNDED_CONSTANT = 2.0
DEFAULT_TOLERANCE_FACTOR = 1e-9
CONDITION_CAP = 1e12


def _as_point(x, n: int | None = None) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise InvalidInputError(f"expected a 1-D point, got shape {arr.shape}")
    if n is not None and arr.shape[0] != n:
        raise InvalidInputError(f"expected dimension {n}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("point has non-finite coordinates")
    return arr


class ConvexBody:
    """Base class: a convex body known through its membership oracle."""

    kind = BODY_CALLABLE

    def __init__(self, dimension: int, inner_radius: float, outer_radius: float,
                 interior_point, well_rounded_constant: float = WELL_ROUNDED_CONSTANT):
        if dimension < 1:
            raise InvalidInputError("dimension must be positive")
        if not (0 < inner_radius <= outer_radius) or not math.isfinite(outer_radius):
            raise InvalidInputError(
                f"need 0 < r <= R < inf, got r={inner_radius}, R={outer_radius}")
        self.dimension = int(dimension)
        self.inner_radius = float(inner_radius)
        self.outer_radius = float(outer_radius)
        self.interior_point = _as_point(interior_point, self.dimension)
        self.well_rounded_constant = well_rounded_constant

    @property
    def well_rounded(self) -> bool:
        return self.outer_radius / self.inner_radius <= (
            self.well_rounded_constant * math.sqrt(self.dimension))

    def _member(self, y: Sequence[float]) -> bool:
        raise NotImplementedError

    def contains(self, x) -> bool:
        return bool(self._member(_as_point(x, self.dimension).tolist()))

    def contains_ball(self, center, radius: float) -> bool | None:
        """Whether ``B(center, radius) ⊆ K``; ``None`` when it cannot be decided analytically."""
        return None

    def _kernel_spec(self):
        """(code, array1, array2, scalar, callable) consumed by the walk kernels."""
        return (BODY_CALLABLE, np.zeros(0), np.zeros(0), 0.0, self._member)

    def default_tolerance(self) -> float:
        return DEFAULT_TOLERANCE_FACTOR * self.outer_radius


class Ball(ConvexBody):
    """Euclidean ball ``{x : |x - center| <= radius}``."""

    kind = BODY_BALL

    def __init__(self, center, radius: float):
        center = _as_point(center)
        super().__init__(center.shape[0], radius, radius, center)
        self.center = center
        self.radius = float(radius)
        self._c = center.tolist()
        self._r2 = self.radius * self.radius

    def _member(self, y):
        s = 0.0
        for yi, ci in zip(y, self._c):
            d = yi - ci
            s += d * d
        return s <= self._r2

    def contains_ball(self, center, radius):
        return float(np.linalg.norm(_as_point(center, self.dimension) - self.center)) + radius <= self.radius

    def _kernel_spec(self):
        return (BODY_BALL, np.ascontiguousarray(self.center), np.zeros(0), self._r2, None)

    def __repr__(self):
        return f"Ball(center={self.center.tolist()}, radius={self.radius})"


class Box(ConvexBody):
    """Axis-aligned box ``lo <= x <= hi`` (coordinate-wise)."""

    kind = BODY_BOX

    def __init__(self, lo, hi):
        lo = _as_point(lo)
        hi = _as_point(hi, lo.shape[0])
        if np.any(hi <= lo):
            raise InvalidInputError("box needs lo < hi in every coordinate")
        half = 0.5 * (hi - lo)
        super().__init__(lo.shape[0], float(half.min()), float(np.linalg.norm(half)), 0.5 * (lo + hi))
        self.lo, self.hi = lo, hi
        self._lo, self._hi = lo.tolist(), hi.tolist()

    @classmethod
    def cube(cls, dimension: int, half_width: float = 1.0) -> "Box":
        return cls(-half_width * np.ones(dimension), half_width * np.ones(dimension))

    def _member(self, y):
        for yi, a, b in zip(y, self._lo, self._hi):
            if yi < a or yi > b:
                return False
        return True

    def contains_ball(self, center, radius):
        c = _as_point(center, self.dimension)
        return bool(np.all(c - radius >= self.lo) and np.all(c + radius <= self.hi))

    def _kernel_spec(self):
        return (BODY_BOX, np.ascontiguousarray(self.lo), np.ascontiguousarray(self.hi), 0.0, None)

    def __repr__(self):
        return f"Box(lo={self.lo.tolist()}, hi={self.hi.tolist()})"


class Polytope(ConvexBody):
    """Bounded intersection of halfspaces ``A x <= b``.

    Missing metadata is computed by linear programming: the interior point and
    inner radius from the Chebyshev ball, the outer radius from the bounding box.
    """

    kind = BODY_POLYTOPE

    def __init__(self, A, b, interior_point=None, inner_radius=None, outer_radius=None):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float).ravel()
        if A.shape[0] != b.shape[0]:
            raise InvalidInputError("A and b disagree on the number of halfspaces")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise InvalidInputError("halfspace data must be finite")
        self.A, self.b = A, b
        n = A.shape[1]
        if interior_point is None or inner_radius is None:
            center, rad = _chebyshev_ball(A, b)
            interior_point = center if interior_point is None else interior_point
            inner_radius = rad if inner_radius is None else inner_radius
        interior_point = _as_point(interior_point, n)
        if outer_radius is None:
            lo, hi = _bounding_box(A, b)
            outer_radius = float(np.linalg.norm(np.maximum(hi - interior_point, interior_point - lo)))
        super().__init__(n, inner_radius, outer_radius, interior_point)
        self._rows = [row.tolist() for row in A]
        self._b = b.tolist()

    def _member(self, y):
        for row, bj in zip(self._rows, self._b):
            s = 0.0
            for aij, yi in zip(row, y):
                s += aij * yi
            if s > bj:
                return False
        return True

    def contains_ball(self, center, radius):
        c = _as_point(center, self.dimension)
        return bool(np.all(self.A @ c + radius * np.linalg.norm(self.A, axis=1) <= self.b))

    def _kernel_spec(self):
        return (BODY_POLYTOPE, np.ascontiguousarray(self.A.ravel()), np.ascontiguousarray(self.b), 0.0, None)

    def analytic_chord(self, x, u) -> tuple[float, float]:
        """Exact chord offsets from the halfspace description (used as a test oracle)."""
        x = _as_point(x, self.dimension)
        au = self.A @ u
        slack = self.b - self.A @ x
        with np.errstate(divide="ignore"):
            t = slack / au
        hi = np.min(t[au > 0]) if np.any(au > 0) else np.inf
        lo = np.max(t[au < 0]) if np.any(au < 0) else -np.inf
        return float(lo), float(hi)

    def __repr__(self):
        return f"Polytope({self.A.shape[0]} halfspaces in R^{self.dimension})"


class MembershipBody(ConvexBody):
    """A body given only by a membership callable ``x -> bool``."""

    def __init__(self, membership: Callable[[np.ndarray], bool], dimension: int,
                 inner_radius: float, outer_radius: float, interior_point):
        super().__init__(dimension, inner_radius, outer_radius, interior_point)
        self.membership = membership
        if not self.contains(self.interior_point):
            raise InvalidInputError("interior_point is not a member of the body")

    def _member(self, y):
        return bool(self.membership(np.asarray(y, dtype=float)))


def _chebyshev_ball(A, b):
    from scipy.optimize import linprog

    norms = np.linalg.norm(A, axis=1)
    n = A.shape[1]
    c = np.zeros(n + 1)
    c[-1] = -1.0
    res = linprog(c, A_ub=np.hstack([A, norms[:, None]]), b_ub=b,
                  bounds=[(None, None)] * n + [(0, None)], method="highs")
    if not res.success or res.x[-1] <= 0:
        raise InvalidInputError("polytope has empty interior or is unbounded")
    return res.x[:n], float(res.x[-1])


def _bounding_box(A, b):
    from scipy.optimize import linprog

    n = A.shape[1]
    lo, hi = np.empty(n), np.empty(n)
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        r1 = linprog(e, A_ub=A, b_ub=b, bounds=[(None, None)] * n, method="highs")
        r2 = linprog(-e, A_ub=A, b_ub=b, bounds=[(None, None)] * n, method="highs")
        if not (r1.success and r2.success):
            raise InvalidInputError("polytope is unbounded")
        lo[i], hi[i] = r1.fun, -r2.fun
    return lo, hi


def contains(body: ConvexBody, x) -> bool:
    """Membership query; raises InvalidInputError on non-finite input."""
    return body.contains(x)


@dataclass(frozen=True)
class Chord:
    """Segment ``origin + t * direction`` for ``t`` in ``[lo, hi]``, inside the body."""

    origin: np.ndarray
    direction: np.ndarray
    lo: float
    hi: float
    boundary_tolerance: float

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def point(self, t: float) -> np.ndarray:
        return self.origin + t * self.direction


def iteration_cap(outer_radius: float, tol: float) -> int:
    return math.ceil(math.log2(4.0 * outer_radius / tol)) + 64


def boundary_offset(member, x: list, v: list, tol: float, step0: float, limit: float, cap: int) -> float:
    """Largest offset ``t >= 0`` (to within ``tol``) with ``x + t v`` inside.

    Doubling search from ``step0`` capped at ``limit``, then bisection.  The
    returned offset is always a member.  Mirrors ``_offset`` in the C kernel.
    """
    inside = 0.0
    s = step0
    it = 0
    while True:
        if s >= limit:
            s = limit
        y = [xi + s * vi for xi, vi in zip(x, v)]
        if member(y):
            if s >= limit:
                raise GeometryError("membership extends beyond the declared outer radius")
            inside = s
            s = 2.0 * s
        else:
            outside = s
            break
        it += 1
        if it > cap:
            raise GeometryError("chord search exceeded its iteration cap")
    while outside - inside > tol:
        mid = 0.5 * (inside + outside)
        y = [xi + mid * vi for xi, vi in zip(x, v)]
        if member(y):
            inside = mid
        else:
            outside = mid
        it += 1
        if it > cap:
            raise GeometryError("chord search exceeded its iteration cap")
    return inside


def chord_offsets(body: ConvexBody, x: list, u: list, tol: float, strict: bool) -> tuple[float, float]:
    R = body.outer_radius
    cap = iteration_cap(R, tol)
    limit = 2.0 * R * (1.0 + 1e-9) + tol
    step0 = body.inner_radius
    neg = [-ui for ui in u]
    a_lo = boundary_offset(body._member, x, neg, tol, step0, limit, cap)
    a_hi = boundary_offset(body._member, x, u, tol, step0, limit, cap)
    if strict and (a_lo < tol or a_hi < tol):
        raise PreconditionError("point lies within the boundary tolerance of the body")
    return -a_lo, a_hi


def find_chord(body: ConvexBody, x, u, tol: float | None = None, *, strict: bool = True) -> Chord:
    """Intersect the line through ``x`` along unit vector ``u`` with the body."""
    x = _as_point(x, body.dimension)
    u = _as_point(u, body.dimension)
    if abs(float(np.linalg.norm(u)) - 1.0) > 1e-12:
        raise InvalidInputError("direction must be a unit vector")
    tol = body.default_tolerance() if tol is None else float(tol)
    if not tol > 0:
        raise InvalidInputError("tolerance must be positive")
    if not body._member(x.tolist()):
        raise PreconditionError("chord origin is outside the body")
    lo, hi = chord_offsets(body, x.tolist(), u.tolist(), tol, strict)
    return Chord(x, u, lo, hi, tol)


@dataclass(frozen=True)
class RoundingMap:
    """Linear map shaping Hit-and-Run directions.

    Directions are ``matrix @ u / |matrix @ u|`` for ``u`` uniform on the
    sphere, i.e. uniform in the coordinates ``y = matrix^{-1} x``.  A good map
    makes those coordinates near-isotropic for the current target.
    """

    matrix: np.ndarray
    epoch: int = 0
    _rows: list = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidInputError("rounding matrix must be square")
        if not np.all(np.isfinite(m)):
            raise GeometryError("rounding matrix has non-finite entries")
        cond = np.linalg.cond(m)
        if not np.isfinite(cond) or cond > CONDITION_CAP:
            raise GeometryError(f"rounding matrix is near singular (condition number {cond:.3g})")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "_rows", [row.tolist() for row in m])

    @classmethod
    def identity(cls, n: int) -> "RoundingMap":
        return cls(np.eye(n), 0)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def whiten(self, points) -> np.ndarray:
        """Coordinates in which this map's directions are uniform (``matrix^{-1} x``)."""
        return np.linalg.solve(self.matrix, np.atleast_2d(points).T).T


def direction_from_normals(rows: list, z) -> list:
    """Normalised ``Σ z``; same summation order as the C kernel."""
    v = []
    for row in rows:
        s = 0.0
        for sij, zj in zip(row, z):
            s += sij * zj
        v.append(s)
    nrm2 = 0.0
    for vi in v:
        nrm2 += vi * vi
    if not (nrm2 > 1e-300) or not math.isfinite(nrm2):
        raise GeometryError("degenerate direction: rounding map collapsed the sample")
    nrm = math.sqrt(nrm2)
    return [vi / nrm for vi in v]


def sample_direction(rounding: RoundingMap, rng: np.random.Generator) -> np.ndarray:
    """Direction uniform on the ellipse ``rounding.matrix · S^{n-1}``, normalised to unit length."""
    z = rng.standard_normal(rounding.dimension)
    return np.array(direction_from_normals(rounding._rows, z.tolist()))
