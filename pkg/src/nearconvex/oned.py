"""One-dimensional sampling from a beta-log-concave function on a segment.

Three stages, all in log space:

1. :func:`find_near_max` shrinks the segment by quarters until the three
   probe values agree to within ``beta_eff``, giving a point ``p`` whose value
   is within ``3 beta_eff`` of the maximum.
2. :func:`find_tail_point` locates, on each side of ``p``, either the segment
   end or a point where ``g`` has dropped to roughly ``eps_tilde * g(p)``.
3. Rejection sampling between the two tail points against the envelope
   ``g(p) e^{3 beta_eff}``.

The walk kernels (``_pykernel`` and the compiled ``_ckernel``) implement the
same three stages with identical arithmetic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DegenerateError, InvalidInputError, SamplerError

LOG_HALF = math.log(0.5)
ENVELOPE_FACTOR = 3.0


@dataclass(frozen=True)
class SamplerParams:
    """Precision and safety caps for the chord sampler.

    Attributes
    ----------
    eps_tilde
        Tail truncation level; must lie in ``(0, e^{-2 beta}/2)``.
    beta_floor
        Lower bound applied to ``beta`` in the near-max search and the
        rejection envelope.  The quarter-shrinking search only stops once the
        probes agree to within ``beta``, which never happens for ``beta = 0``
        on a strictly log-concave function.
    max_rejections, max_bisection_iters
        Hard caps; exceeding them raises :class:`SamplerError`.
    """

    eps_tilde: float = 1e-3
    beta_floor: float = 1e-6
    max_rejections: int = 10**6
    max_bisection_iters: int = 200

    def __post_init__(self):
        if not (self.eps_tilde > 0 and self.eps_tilde < 0.5):
            raise InvalidInputError("eps_tilde must lie in (0, 1/2)")
        if not self.beta_floor > 0:
            raise InvalidInputError("beta_floor must be positive")
        if self.max_rejections < 1 or self.max_bisection_iters < 1:
            raise InvalidInputError("iteration caps must be positive")

    def check_beta(self, beta: float) -> None:
        if not beta >= 0:
            raise InvalidInputError("beta must be non-negative")
        if not self.eps_tilde < 0.5 * math.exp(-2.0 * beta):
            raise InvalidInputError(
                f"eps_tilde={self.eps_tilde} violates eps_tilde < exp(-2 beta)/2 for beta={beta}")

    def beta_eff(self, beta: float) -> float:
        return max(beta, self.beta_floor)


@dataclass
class ChordFunction:
    """``log g`` restricted to a segment ``[lo, hi]`` of offsets.

    ``eval_log`` may return ``-inf``.  ``evaluations`` counts calls made through
    :meth:`__call__`.
    """

    eval_log: Callable[[float], float]
    beta: float
    lo: float
    hi: float
    evaluations: int = field(default=0, compare=False)

    def __post_init__(self):
        if not self.beta >= 0:
            raise InvalidInputError("beta must be non-negative")
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.lo < self.hi):
            raise InvalidInputError("domain must be a finite interval with lo < hi")

    def __call__(self, t: float) -> float:
        self.evaluations += 1
        v = float(self.eval_log(t))
        if math.isnan(v) or v == math.inf:
            raise InvalidInputError(f"log-density returned {v} at offset {t}")
        return v


@dataclass
class SamplerStats:
    attempts: int = 0
    accepted: int = 0
    evaluations: int = 0

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.attempts if self.attempts else float("nan")

    def merge(self, other: "SamplerStats") -> "SamplerStats":
        return SamplerStats(self.attempts + other.attempts, self.accepted + other.accepted,
                            self.evaluations + other.evaluations)


def _gap(u: float, v: float) -> float:
    # |u - v| that treats two -inf values as equal
    if u == v:
        return 0.0
    return abs(u - v)


def near_max(lg, a: float, b: float, beta_eff: float, max_iter: int) -> tuple[float, float]:
    """Quarter-shrinking search on ``[a, b]``; returns ``(p, log g(p))``.

    The segment loses a quarter or a half each round, always the part whose
    probe is lower by more than ``beta_eff``.  Once all three probes agree the
    best of them is returned.
    """
    best_t, best_v = a, -math.inf
    for _ in range(max_iter):
        xl = 0.75 * a + 0.25 * b
        xc = 0.5 * a + 0.5 * b
        xr = 0.25 * a + 0.75 * b
        vl = lg(xl)
        vc = lg(xc)
        vr = lg(xr)
        if vl > best_v:
            best_t, best_v = xl, vl
        if vc > best_v:
            best_t, best_v = xc, vc
        if vr > best_v:
            best_t, best_v = xr, vr
        if _gap(vl, vr) > beta_eff:
            if vl < vr:
                a = xl
            else:
                b = xr
        elif _gap(vl, vc) > beta_eff:
            if vl < vc:
                a = xl
            else:
                b = xc
        elif _gap(vr, vc) > beta_eff:
            if vr < vc:
                b = xr
            else:
                a = xc
        else:
            if vl >= vc and vl >= vr:
                return xl, vl
            if vc >= vr:
                return xc, vc
            return xr, vr
    raise SamplerError("near-maximum search exceeded its iteration cap", best_point=best_t)


def tail_point(lg, p: float, lp: float, end: float, beta: float, eps_tilde: float,
               max_iter: int) -> float:
    """Point between ``p`` and ``end`` where ``g`` has decayed to about ``eps_tilde g(p)``.

    Returns ``end`` when ``g(end) >= e^{-beta} eps_tilde g(p) / 2``.  Otherwise
    bisects toward ``p`` while the value is too small and away from it while
    the value is too large, stopping inside
    ``[e^{-beta} eps_tilde g(p) / 2, eps_tilde g(p)]``.  If ``g`` jumps across
    that band the bracket shrinks to adjacent floats and the far end is
    returned.
    """
    log_eps = math.log(eps_tilde)
    hi_thr = log_eps + lp
    lo_thr = LOG_HALF - beta + log_eps + lp
    if lg(end) >= lo_thr:
        return end
    near, far = p, end
    for _ in range(max_iter):
        mid = 0.5 * (near + far)
        if mid == near or mid == far:
            # bracket collapsed onto a jump that skips the band
            return far
        v = lg(mid)
        if v > hi_thr:
            near = mid
        elif v < lo_thr:
            far = mid
        else:
            return mid
    raise SamplerError("tail-point bisection exceeded its iteration cap", best_point=near)


def rejection_draw(lg, e_lo: float, e_hi: float, lp: float, beta_eff: float, max_rejections: int,
                   rng: np.random.Generator, stats: SamplerStats) -> tuple[float, float]:
    """Uniform proposals on ``[e_lo, e_hi]`` accepted with probability ``g(x) / (g(p) e^{3 beta_eff})``.

    Returns the accepted offset and its log value.
    """
    width = e_hi - e_lo
    shift = ENVELOPE_FACTOR * beta_eff
    for _ in range(max_rejections):
        x = e_lo + width * rng.random()
        u = rng.random()
        lx = lg(x)
        stats.attempts += 1
        if lx != -math.inf:
            lu = math.log(u) if u > 0.0 else -math.inf
            if lu <= (lx - lp) - shift:
                stats.accepted += 1
                return x, lx
    raise SamplerError(f"rejection sampler exceeded {max_rejections} proposals", stats=stats)


class ChordSampler:
    """Sampler for one chord function; initialisation runs once, draws are cheap.

    Attributes set at construction: ``p`` and ``log_p`` (near-maximum),
    ``e_lo`` and ``e_hi`` (tail points), ``init_evaluations``.
    """

    def __init__(self, g: ChordFunction, params: SamplerParams):
        params.check_beta(g.beta)
        self.g = g
        self.params = params
        self.beta_eff = params.beta_eff(g.beta)
        start = g.evaluations
        self.p, self.log_p = near_max(g, g.lo, g.hi, self.beta_eff, params.max_bisection_iters)
        if self.log_p == -math.inf:
            raise DegenerateError("log-density is -inf at every probe of the near-maximum search")
        self.e_lo = tail_point(g, self.p, self.log_p, g.lo, g.beta, params.eps_tilde,
                               params.max_bisection_iters)
        self.e_hi = tail_point(g, self.p, self.log_p, g.hi, g.beta, params.eps_tilde,
                               params.max_bisection_iters)
        self.init_evaluations = g.evaluations - start
        self.stats = SamplerStats(evaluations=self.init_evaluations)

    def draw(self, rng: np.random.Generator) -> float:
        start = self.g.evaluations
        x, _ = rejection_draw(self.g, self.e_lo, self.e_hi, self.log_p, self.beta_eff,
                              self.params.max_rejections, rng, self.stats)
        self.stats.evaluations += self.g.evaluations - start
        return x

    def draws(self, size: int, rng: np.random.Generator) -> np.ndarray:
        return np.array([self.draw(rng) for _ in range(int(size))])


def find_near_max(g: ChordFunction, params: SamplerParams) -> float:
    """Offset ``p`` with ``log g(p) >= max log g - 3 max(beta, beta_floor)``."""
    p, lp = near_max(g, g.lo, g.hi, params.beta_eff(g.beta), params.max_bisection_iters)
    if lp == -math.inf:
        raise DegenerateError("log-density is -inf at every probe of the near-maximum search")
    return p


def find_tail_point(g: ChordFunction, side: str, p: float, params: SamplerParams) -> float:
    """Tail point on ``side`` (``"left"`` or ``"right"``) of ``p``; see :func:`tail_point`."""
    if side not in ("left", "right"):
        raise InvalidInputError("side must be 'left' or 'right'")
    if not g.lo <= p <= g.hi:
        raise InvalidInputError("p must lie in the domain")
    lp = g(p)
    if lp == -math.inf:
        raise DegenerateError("g(p) = 0")
    end = g.lo if side == "left" else g.hi
    return tail_point(g, p, lp, end, g.beta, params.eps_tilde, params.max_bisection_iters)


def sample_chord(g: ChordFunction, params: SamplerParams, rng: np.random.Generator) -> float:
    """One draw from (approximately) the density proportional to ``g`` on its domain."""
    return ChordSampler(g, params).draw(rng)


def acceptance_rate_bound(beta: float, eps_tilde: float) -> float:
    """Lower bound on the rejection step's acceptance probability."""
    return math.exp(-5.0 * beta) * math.log(2.0) / (2.0 * math.log(2.0 / eps_tilde))


def tv_guarantee(beta: float, eps_tilde: float) -> float:
    """Total-variation bound ``3 e^{2 beta} eps_tilde`` between the sampler's law and the target."""
    return 3.0 * math.exp(2.0 * beta) * eps_tilde
