"""Simulated annealing over Hit-and-Run samples.

``N`` strands start from approximately uniform points.  Epoch ``i`` re-rounds
the direction distribution on the previous epoch's points, then walks every
strand ``m_i`` steps against ``exp(-F / T_i)`` starting where it stopped.  The
output is the best point seen among the initial points and every epoch's
final points.

Strand ``j`` of epoch ``i`` draws from its own generator seeded by
``(master_seed, i, j)`` (epoch 0 is the uniform burn-in), so results do not
depend on how strands are scheduled across threads.
"""
from __future__ import annotations

import csv
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import AnnealingError, ConfigurationError, NearConvexError, RoundingError
from .geometry import ConvexBody, RoundingMap, _as_point
from .hitrun import WalkParams, mixing_steps, sampler_precision, walk
from .objectives import KernelTarget, ObjectiveOracle
from .oned import SamplerParams

log = logging.getLogger(__name__)

RANK_TOLERANCE = 1e-10


@dataclass(frozen=True)
class PlanOptions:
    """Overrides and constants for :func:`make_plan`.

    Attributes
    ----------
    mode
        ``"practice"``: ``m = max(50, 10 n^2)`` steps per epoch.
        ``"theory"``: ``m`` from :func:`~nearconvex.hitrun.mixing_steps` with
        warm-start norm ``5 e^{2 beta_i}``.
    steps
        Fixed steps per epoch (overrides ``mode``).
    gamma
        Per-epoch total-variation target; sets the sampler precision.
    burn_in_factor
        Uniform burn-in length is ``10 n burn_in_factor`` steps.
    rho_warn_ratio
        Warn when ``rho n / epsilon`` exceeds this.
    beta_cap
        Upper limit on the walk's ``beta``.  ``None`` means ``2 rho n / epsilon``
        (the value at the nominal final temperature ``epsilon / n``) in practice
        mode and no limit in theory mode.  For small ``n`` the epoch count
        overshoots that temperature by orders of magnitude, and the uncapped
        rejection envelope ``e^{3 beta}`` would stall the sampler.
    """

    mode: str = "practice"
    steps: int | None = None
    epochs: int | None = None
    strands: int | None = None
    c_strand: float = 4.0
    C_mix: float = 1.0
    gamma: float = 0.1
    burn_in_factor: int = 100
    beta_floor: float = 1e-6
    max_rejections: int = 10**6
    max_bisection_iters: int = 200
    rho_warn_ratio: float = 1.0
    beta_cap: float | None = None

    def __post_init__(self):
        if self.mode not in ("practice", "theory"):
            raise ConfigurationError("mode must be 'practice' or 'theory'")
        if not 0 < self.gamma < 0.5:
            raise ConfigurationError("gamma must lie in (0, 1/2)")
        if self.steps is not None and self.steps < 1:
            raise ConfigurationError("steps must be positive")
        if self.epochs is not None and self.epochs < 0:
            raise ConfigurationError("epochs must be non-negative")
        if self.strands is not None and self.strands < 1:
            raise ConfigurationError("strands must be positive")


@dataclass(frozen=True)
class AnnealingPlan:
    """Everything a run needs besides the objective, body and seed.

    ``temperatures[0] = 1`` belongs to the uniform start; epoch ``i`` (1-based)
    uses ``temperatures[i]``, ``betas[i - 1]``, ``steps[i - 1]`` and
    ``eps_tilde[i - 1]``.
    """

    dimension: int
    epsilon: float
    rho: float
    temperatures: tuple
    epochs: int
    strands: int
    steps: tuple
    eps_tilde: tuple
    betas: tuple
    burn_in: int
    nominal_betas: tuple = ()
    options: PlanOptions = field(default_factory=PlanOptions)

    @property
    def ratio(self) -> float:
        return 1.0 - 1.0 / math.sqrt(self.dimension)

    def sampler(self, epoch: int) -> SamplerParams:
        o = self.options
        return SamplerParams(self.eps_tilde[epoch - 1], o.beta_floor, o.max_rejections,
                             o.max_bisection_iters)

    def total_steps(self) -> int:
        return self.strands * (self.burn_in + sum(self.steps))

    def summary(self) -> dict:
        return {
            "n": self.dimension, "epsilon": self.epsilon, "rho": self.rho, "K": self.epochs,
            "N": self.strands, "m": list(self.steps), "eps_tilde": list(self.eps_tilde),
            "T_final": self.temperatures[-1], "burn_in": self.burn_in, "mode": self.options.mode,
        }


def epoch_count(n: int, epsilon: float) -> int:
    return math.ceil(math.sqrt(n) * math.log(n / epsilon))


def strand_count(n: int, c_strand: float = 4.0) -> int:
    return max(1, math.ceil(c_strand * n * math.log(n)))


def practice_steps(n: int) -> int:
    return max(50, 10 * n * n)


def make_plan(n: int, epsilon: float, body: ConvexBody, rho: float | None = None,
              options: PlanOptions | None = None) -> AnnealingPlan:
    """Temperature schedule, strand count and per-epoch walk parameters.

    ``T_i = (1 - 1/sqrt(n))^i`` for ``i = 0..K`` with ``K = ceil(sqrt(n) log(n/epsilon))``,
    so ``T_K <= epsilon / n``; ``N = ceil(c_strand n log n)``; the walk at
    epoch ``i`` uses ``beta_i = 2 rho / T_i`` (limited by ``options.beta_cap``)
    with ``rho`` defaulting to ``epsilon / n``.

    Raises
    ------
    ConfigurationError
        ``n < 2`` (the schedule ratio ``1 - 1/sqrt(n)`` is then 0), or
        non-positive ``epsilon``, negative ``rho``, mismatched body.
    """
    options = options or PlanOptions()
    if n < 2:
        raise ConfigurationError("the cooling schedule needs n >= 2 (ratio 1 - 1/sqrt(n) vanishes at n = 1)")
    if not epsilon > 0:
        raise ConfigurationError("epsilon must be positive")
    if body.dimension != n:
        raise ConfigurationError("body dimension does not match n")
    epsilon = float(epsilon)
    rho = epsilon / n if rho is None else float(rho)
    if rho < 0:
        raise ConfigurationError("rho must be non-negative")
    if rho * n / epsilon > options.rho_warn_ratio * (1.0 + 1e-12):
        warnings.warn(f"rho n / epsilon = {rho * n / epsilon:.3g}: the optimality guarantee degrades "
                      "like exp(2 rho / T_K)", stacklevel=2)
    K = epoch_count(n, epsilon) if options.epochs is None else options.epochs
    N = strand_count(n, options.c_strand) if options.strands is None else options.strands
    ratio = 1.0 - 1.0 / math.sqrt(n)
    temps = [1.0]
    for _ in range(K):
        temps.append(temps[-1] * ratio)
    if options.beta_cap is not None:
        cap = options.beta_cap
    elif options.mode == "practice":
        cap = 2.0 * rho * n / epsilon
    else:
        cap = math.inf
    betas, nominal, steps, eps = [], [], [], []
    for i in range(1, K + 1):
        nominal.append(2.0 * rho / temps[i])
        b = min(nominal[-1], cap)
        if options.steps is not None:
            m = options.steps
        elif options.mode == "theory":
            M = 5.0 * math.exp(2.0 * b)
            m = mixing_steps(n, body.outer_radius, body.inner_radius, b, M, options.gamma, options.C_mix)
        else:
            m = practice_steps(n)
        betas.append(b)
        steps.append(int(m))
        eps.append(sampler_precision(options.gamma, b, m))
    burn_in = 10 * n * options.burn_in_factor
    return AnnealingPlan(n, float(epsilon), rho, tuple(temps), K, N, tuple(steps), tuple(eps),
                         tuple(betas), burn_in, tuple(nominal), options)


def gibbs_gap_bound(n: int, T: float, rho: float) -> float:
    """``(n + 1) T e^{2 rho / T}``: expected gap of an exact ``exp(-F/T)`` sample when ``|F - f| <= rho``."""
    if not T > 0 or rho < 0:
        raise ConfigurationError("need T > 0 and rho >= 0")
    return (n + 1) * T * math.exp(2.0 * rho / T)


def _symmetric_sqrt(C: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(C)
    if not (w[-1] > 0) or w[0] <= RANK_TOLERANCE * w[-1]:
        raise RoundingError(f"sample covariance is rank deficient (eigenvalues {w[0]:.3g} .. {w[-1]:.3g})")
    return (V * np.sqrt(w)) @ V.T


def update_rounding(points, previous: RoundingMap, epoch: int | None = None) -> RoundingMap:
    """New direction map that makes ``points`` isotropic in its coordinates.

    The points are mapped by ``previous``'s whitening, their empirical
    covariance ``C`` is factored by its symmetric square root, and the result
    is ``previous.matrix @ C^{1/2}``: whitening with the new map applies
    ``C^{-1/2}`` after the previous whitening.
    """
    X = np.atleast_2d(np.asarray(points, dtype=float))
    N, n = X.shape
    if n != previous.dimension:
        raise ConfigurationError("points and rounding map disagree on dimension")
    if N < n + 1:
        raise RoundingError(f"need at least n + 1 = {n + 1} points, got {N}")
    Y = previous.whiten(X)
    C = np.cov(Y, rowvar=False, bias=True).reshape(n, n)
    S = _symmetric_sqrt(C)
    return RoundingMap(previous.matrix @ S, previous.epoch + 1 if epoch is None else epoch)


def mapped_covariance(points, rounding: RoundingMap) -> np.ndarray:
    Y = rounding.whiten(points)
    n = Y.shape[1]
    return np.cov(Y, rowvar=False, bias=True).reshape(n, n)


def strand_rng(master_seed: int, epoch: int, strand: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([master_seed, epoch, strand])))


@dataclass
class EpochRecord:
    epoch: int
    temperature: float
    best_value: float
    queries: int
    acceptance_min: float
    acceptance_median: float
    eig_min: float
    eig_max: float
    rounding_fallback: bool = False


@dataclass
class AnnealResult:
    best_point: np.ndarray
    best_value: float
    queries: int
    billed_queries: int
    epoch_log: list
    points: np.ndarray
    rounding: RoundingMap
    failed: bool = False
    failure: str | None = None


def _run_strands(jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [job() for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(job) for job in jobs]
        return [f.result() for f in futures]


def initial_points(body: ConvexBody, plan: AnnealingPlan, master_seed: int, workers: int = 1,
                   backend: str | None = None, start=None) -> np.ndarray:
    """``N`` approximately uniform points: uniform-target walks of ``plan.burn_in`` steps."""
    x0 = body.interior_point if start is None else _as_point(start, body.dimension)
    params = WalkParams(plan.burn_in, None, SamplerParams(plan.options.gamma / (12.0 * plan.burn_in)))
    uniform = KernelTarget.uniform(body.dimension)
    jobs = [lambda j=j: walk(uniform, body, x0, params, strand_rng(master_seed, 0, j), backend=backend,
                             strict=False).final_point
            for j in range(plan.strands)]
    return np.array(_run_strands(jobs, workers))


def anneal(F: ObjectiveOracle, body: ConvexBody, plan: AnnealingPlan, seed: int | np.random.Generator = 0,
           workers: int = 1, backend: str | None = None, start=None) -> AnnealResult:
    """Minimise ``F`` over ``body`` by simulated annealing.

    Parameters
    ----------
    seed
        Master seed, or a generator from which one is drawn.
    workers
        Threads for the strands of an epoch; results do not depend on it.

    Returns
    -------
    AnnealResult
        ``queries`` counts ``N`` evaluations of the initial points plus every
        objective evaluation of every walk.  The oracle's own counter is
        advanced by the same amount.

    Raises
    ------
    AnnealingError
        A strand failed; ``partial`` holds the result up to the last
        completed epoch with ``failed=True``.
    """
    if isinstance(seed, np.random.Generator):
        seed = int(seed.integers(2**63))
    seed = int(seed)
    n = body.dimension
    if plan.dimension != n or F.dimension != n:
        raise ConfigurationError("plan, oracle and body disagree on dimension")
    epoch_log: list[EpochRecord] = []
    X = initial_points(body, plan, seed, workers, backend, start)
    values = np.array([F(x) for x in X])
    queries = len(X)
    best_idx = int(np.argmin(values))
    best_point, best_value = X[best_idx].copy(), float(values[best_idx])
    rounding = RoundingMap.identity(n)

    def partial(reason):
        return AnnealResult(best_point, best_value, queries, F.billed(queries), epoch_log, X, rounding,
                            True, reason)

    for i in range(1, plan.epochs + 1):
        fallback = False
        try:
            rounding = update_rounding(X, rounding, epoch=i)
        except (RoundingError, NearConvexError) as err:
            log.warning("epoch %d: keeping previous rounding map (%s)", i, err)
            fallback = True
        eig = np.linalg.eigvalsh(mapped_covariance(X, rounding))
        params = WalkParams(plan.steps[i - 1], rounding, plan.sampler(i), plan.betas[i - 1])
        target = F.kernel_target(-1.0 / plan.temperatures[i])
        jobs = [lambda j=j: walk(target, body, X[j], params, strand_rng(seed, i, j), backend=backend,
                                 strict=False)
                for j in range(plan.strands)]
        try:
            results = _run_strands(jobs, workers)
        except NearConvexError as err:
            raise AnnealingError(f"epoch {i}: strand failed: {err}", partial=partial(str(err))) from err
        X = np.array([r.final_point for r in results])
        vals = np.array([r.final_value for r in results])
        q = sum(r.oracle_queries for r in results)
        queries += q
        k = int(np.argmin(vals))
        if vals[k] < best_value:
            best_point, best_value = X[k].copy(), float(vals[k])
        rates = [r.rejection_stats.acceptance_rate for r in results]
        epoch_log.append(EpochRecord(i, plan.temperatures[i], best_value, q, float(np.min(rates)),
                                     float(np.median(rates)), float(eig[0]), float(eig[-1]), fallback))
    # initial evaluations went through F directly; add the walks' share
    F.charge(queries - plan.strands)
    return AnnealResult(best_point, best_value, queries, F.billed(queries), epoch_log, X, rounding)


EPOCH_LOG_FIELDS = ["epoch", "T_i", "best_value", "queries_this_epoch", "acceptance_min",
                    "acceptance_median", "eig_min", "eig_max", "rounding_fallback"]


def write_epoch_log(path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EPOCH_LOG_FIELDS)
        for r in records:
            w.writerow([r.epoch, repr(r.temperature), repr(r.best_value), r.queries,
                        repr(r.acceptance_min), repr(r.acceptance_median), repr(r.eig_min),
                        repr(r.eig_max), int(r.rounding_fallback)])


def with_options(plan: AnnealingPlan, **changes) -> AnnealingPlan:
    return replace(plan, **changes)
