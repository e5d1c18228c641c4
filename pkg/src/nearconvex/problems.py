"""Registered test problems: 1-D sampler targets, quadrature verification targets and synthetic optimisation problems."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import objectives as ob
from .errors import ConfigurationError
from .geometry import Ball, Box
from .staged import DecayModel


@dataclass(frozen=True)
class Target1D:
    """``g = exp(-F)`` on ``domain``; ``beta`` is a valid log-concavity defect (twice the perturbation bound)."""

    name: str
    objective: ob.Objective
    beta: float
    domain: tuple = (0.0, 1.0)

    def log_g(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, 1)
        return -self.objective.evaluate_many(X)

    def log_g_scalar(self, t: float) -> float:
        return -self.objective([t])

    def target(self):
        return ob.ObjectiveOracle(self.objective, 1).kernel_target(-1.0)


def _t(name, beta, *parts):
    obj = parts[0]
    for p in parts[1:]:
        obj = obj + p
    return Target1D(name, obj, beta)


TARGETS_1D = {
    t.name: t for t in [
        _t("uniform", 0.0, ob.constant(1, 0.0)),
        _t("exp_decay", 0.0, ob.linear(1, [5.0])),
        _t("gaussian", 0.0, ob.quadratic(1, [0.4], 8.0)),
        _t("laplace", 0.0, ob.l1(1, [0.7], 5.0)),
        _t("exp_sin", 0.05, ob.linear(1, [5.0]), ob.sin_sum(1, 0.025, 50.0)),
        _t("gaussian_sin", 0.05, ob.quadratic(1, [0.4], 8.0), ob.sin_sum(1, 0.025, 30.0)),
        _t("laplace_sin", 0.2, ob.l1(1, [0.7], 5.0), ob.sin_sum(1, 0.1, 40.0)),
        _t("exp_step", 0.2, ob.linear(1, [5.0]), ob.sign_sin(1, 0.1, 20.0)),
        _t("gaussian_sin_large", 0.5, ob.quadratic(1, [0.4], 8.0), ob.sin_sum(1, 0.25, 25.0)),
        _t("flat_step", 0.5, ob.sign_sin(1, 0.25, 15.0)),
    ]
}


@dataclass(frozen=True)
class VerificationTarget:
    """Convex ``f`` and perturbed ``F`` on a box, with the known minimum of ``f``.

    ``breaks`` lists per-axis kink coordinates for the quadrature oracles.
    """

    name: str
    f: ob.Objective
    F: ob.Objective
    domain: tuple
    f_min: float
    rho: float
    breaks: tuple | None = None

    @property
    def dimension(self) -> int:
        return self.f.dimension

    @property
    def beta(self) -> float:
        """Log-concavity defect of ``exp(-F)``: twice the perturbation bound."""
        return 2.0 * self.rho

    def f_vec(self, X):
        return self.f.evaluate_many(X)

    def F_vec(self, X):
        return self.F.evaluate_many(X)


def _v(name, f, pert, domain, f_min, breaks=None):
    F = f if pert is None else f + pert
    rho = 0.0 if pert is None else pert.perturbation_bound()
    return VerificationTarget(name, f, F, domain, f_min, rho, breaks)


VERIFICATION_TARGETS = {
    v.name: v for v in [
        _v("linear_1d", ob.linear(1, [1.0]), None, ((0.0, 1.0),), 0.0),
        _v("quadratic_sin_1d", ob.quadratic(1, [0.3], 5.0), ob.sin_sum(1, 0.05, 30.0), ((0.0, 1.0),), 0.0),
        _v("abs_sin_1d", ob.l1(1, [0.6], 3.0), ob.sin_sum(1, 0.02, 50.0), ((0.0, 1.0),), 0.0,
           ((0.6,),)),
        _v("quadratic_2d", ob.quadratic(2, [0.3, -0.2]), None, ((-1.0, 1.0), (-1.0, 1.0)), 0.0),
        _v("quadratic_sin_2d", ob.quadratic(2, [0.3, -0.2]), ob.sin_product(2, 0.05, 10.0),
           ((-1.0, 1.0), (-1.0, 1.0)), 0.0),
        _v("l1_sin_2d", ob.l1(2, [-0.1, 0.25], 2.0), ob.sin_sum(2, 0.03, 12.0),
           ((-1.0, 1.0), (-1.0, 1.0)), 0.0, ((-0.1,), (0.25,))),
    ]
}


@dataclass(frozen=True)
class OptimizationProblem:
    """Quadratic plus bounded perturbation on the unit ball.

    ``f = |x - x*|^2``, ``F = f + (epsilon / n) prod_k sin(freq x_k)``, and
    ``epsilon = rel * (max f - min f)`` over the ball.
    """

    n: int
    x_star: np.ndarray
    epsilon: float
    f: ob.Objective
    F: ob.Objective
    body: Ball

    @property
    def rho(self) -> float:
        return self.epsilon / self.n

    def f_gap(self, x) -> float:
        return float(self.f(x))


def quadratic_problem(n: int, rel: float = 0.05, freq: float = 40.0) -> OptimizationProblem:
    if n < 2:
        raise ConfigurationError("n must be at least 2")
    xs = np.zeros(n)
    xs[0], xs[1] = 0.3, -0.2
    body = Ball(np.zeros(n), 1.0)
    # f ranges over [0, (1 + |x*|)^2] on the unit ball
    eps = rel * (1.0 + float(np.linalg.norm(xs))) ** 2
    f = ob.quadratic(n, xs)
    F = f + ob.sin_product(n, eps / n, freq)
    return OptimizationProblem(n, xs, eps, f, F, body)


@dataclass(frozen=True)
class StagedProblem:
    model: DecayModel
    x_star: np.ndarray
    F: ob.Objective
    f: ob.Objective
    body: Ball
    x0: np.ndarray
    r0: float
    epsilon_rel: float


def staged_problem(n: int = 2, alpha: float = 2.0, C: float = 4.0, r0: float = 1.0, ratio: float = 256.0,
                   freq: float = 50.0, epsilon_rel: float = 1.0) -> StagedProblem:
    """``f = (alpha/2)|x - x*|^2`` plus ``c r sin(freq r)``, ``r = |x - x*|``, with ``r* = r0 / ratio``."""
    r_star = r0 / ratio
    c = r_star * alpha / (6.0 * C * n)
    xs = np.zeros(n)
    xs[0], xs[1] = 0.3, -0.2
    model = DecayModel("polynomial", alpha, C, c=c, p=1.0)
    f = ob.quadratic(n, xs, alpha / 2.0)
    F = f + ob.radial_poly(n, c, 1.0, freq, xs)
    return StagedProblem(model, xs, F, f, Ball(np.zeros(n), 5.0), np.zeros(n), r0, epsilon_rel)


BODIES = {"ball": Ball, "box": Box}


def box_domain(n: int, half: float = 1.0):
    return tuple((-half, half) for _ in range(n))


def perturbation_amplitude_ok(amplitude: float, n: int, epsilon: float) -> bool:
    return amplitude * n <= epsilon * (1 + 1e-12) or math.isclose(amplitude * n, epsilon)
