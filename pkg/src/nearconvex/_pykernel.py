"""Pure-Python walk kernel.

Reference implementation of the Hit-and-Run loop.  ``_ckernel.pyx`` performs
the same floating-point operations in the same order and draws from the
generator in the same sequence, so both backends produce identical results.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import DegenerateError, NearConvexError, SamplerError
from .geometry import chord_offsets, direction_from_normals
from .objectives import TARGET_CALLABLE, TARGET_UNIFORM, term_value
from .oned import SamplerStats, near_max, rejection_draw, tail_point
from .stochastic import cell_normal, snap_index

NAME = "python"


class _Target:
    """``t -> coef * v(x + t u)`` with evaluation counting; remembers the last ``v``."""

    def __init__(self, target):
        self.kind = target.kind
        self.coef = target.coef
        self.terms = target.terms
        self.alpha = target.grid_alpha
        self.sd = target.noise_sd
        self.seed = target.noise_seed
        self.func = target.func
        self.queries = 0
        self.last = math.nan
        self.x = None
        self.u = None

    def value(self, y: list) -> float:
        if self.kind == TARGET_CALLABLE:
            return float(self.func(np.array(y)))
        idx = None
        if self.alpha > 0.0:
            idx = [snap_index(yi, self.alpha) for yi in y]
            y = [self.alpha * k for k in idx]
        total = 0.0
        for t in self.terms:
            total += term_value(t, y)
        if idx is not None and self.sd > 0.0:
            total += self.sd * cell_normal(self.seed, idx)
        return total

    def __call__(self, t: float) -> float:
        if self.kind == TARGET_UNIFORM:
            return 0.0
        y = [xi + t * ui for xi, ui in zip(self.x, self.u)]
        v = self.value(y)
        self.queries += 1
        self.last = v
        lv = self.coef * v
        if math.isnan(lv):
            raise SamplerError(f"log-density is NaN at offset {t}")
        return lv


def _annotate(err: NearConvexError, step: int) -> NearConvexError:
    err.step = step
    if err.args:
        err.args = (f"step {step}: {err.args[0]}",) + tuple(err.args[1:])
    return err


def _chord_sample(lg, lo, hi, beta, params, rng, stats):
    be = max(beta, params.beta_floor)
    p, lp = near_max(lg, lo, hi, be, params.max_bisection_iters)
    if lp == -math.inf:
        raise DegenerateError("log-density is -inf at every probe of the near-maximum search")
    e_lo = tail_point(lg, p, lp, lo, beta, params.eps_tilde, params.max_bisection_iters)
    e_hi = tail_point(lg, p, lp, hi, beta, params.eps_tilde, params.max_bisection_iters)
    return rejection_draw(lg, e_lo, e_hi, lp, be, params.max_rejections, rng, stats)


def run_walk(body, target, rounding_rows, beta, params, tol, x0, steps, rng,
             record_trace=False, strict_first=True):
    """Run ``steps`` Hit-and-Run steps from ``x0``.

    Returns ``(x, value, queries, attempts, accepted, trace)`` where ``value``
    is the objective at the final point (NaN for the uniform target or when no
    step moved) and ``trace`` is a ``(steps, n + 2)`` array of
    ``x, log_g, cumulative_queries`` rows or ``None``.
    """
    n = body.dimension
    x = [float(v) for v in x0]
    lg = _Target(target)
    stats = SamplerStats()
    trace = np.empty((steps, n + 2)) if record_trace else None
    value = math.nan
    log_value = 0.0
    for i in range(steps):
        try:
            z = rng.standard_normal(n)
            u = direction_from_normals(rounding_rows, z.tolist())
            lo, hi = chord_offsets(body, x, u, tol, strict_first and i == 0)
            lg.x, lg.u = x, u
            t, log_value = _chord_sample(lg, lo, hi, beta, params, rng, stats)
        except NearConvexError as err:
            raise _annotate(err, i) from None
        x = [xi + t * ui for xi, ui in zip(x, u)]
        value = lg.last
        if trace is not None:
            trace[i, :n] = x
            trace[i, n] = log_value
            trace[i, n + 1] = lg.queries
    return np.array(x), value, lg.queries, stats.attempts, stats.accepted, trace


def run_line(target, origin, direction, lo, hi, beta, params, size, rng):
    """``size`` draws from the chord sampler on the line ``origin + t direction``, ``t`` in ``[lo, hi]``.

    Initialisation (near-maximum and tail points) runs once.  Returns
    ``(draws, p, log_p, e_lo, e_hi, init_queries, queries, attempts, accepted)``.
    """
    lg = _Target(target)
    lg.x = [float(v) for v in origin]
    lg.u = [float(v) for v in direction]
    be = max(beta, params.beta_floor)
    p, lp = near_max(lg, lo, hi, be, params.max_bisection_iters)
    if lp == -math.inf:
        raise DegenerateError("log-density is -inf at every probe of the near-maximum search")
    e_lo = tail_point(lg, p, lp, lo, beta, params.eps_tilde, params.max_bisection_iters)
    e_hi = tail_point(lg, p, lp, hi, beta, params.eps_tilde, params.max_bisection_iters)
    init = lg.queries
    stats = SamplerStats()
    out = np.empty(size)
    for k in range(size):
        out[k], _ = rejection_draw(lg, e_lo, e_hi, lp, be, params.max_rejections, rng, stats)
    return out, p, lp, e_lo, e_hi, init, lg.queries, stats.attempts, stats.accepted

