"""Exit criteria of the library, one test per criterion.

Each test records a one-line verdict printed in the ``acceptance criteria``
section of the pytest summary.  Run just this suite with
``pytest -m acceptance``.
"""
import math
import shutil
import time
from pathlib import Path

import numpy as np
import pytest
import yaml
from scipy import optimize

from nearconvex import kernel
from nearconvex import objectives as ob
from nearconvex.annealing import make_plan, update_rounding, anneal
from nearconvex.cli import main
from nearconvex.geometry import Ball, Box, RoundingMap
from nearconvex.hitrun import WalkParams, walk
from nearconvex.oned import ChordFunction, ChordSampler, SamplerParams, acceptance_rate_bound, tv_guarantee
from nearconvex.problems import TARGETS_1D, VERIFICATION_TARGETS, quadratic_problem, staged_problem
from nearconvex.reference import (bin_probabilities, binned_tv, empirical_bin_probabilities, gibbs_mean_gap,
                                  tv_distance, warm_start_bound, warm_start_norm)
from nearconvex.staged import DecayModel, critical_radius, stage_bound, staged_optimize
from nearconvex.stochastic import (GridNoiseOracle, StochasticOracleConfig, stochastic_params,
                                   wrap_as_approx_convex)

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]

EPS_TILDE = 1e-3
SAMPLES_1D = 100_000
CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture(scope="module")
def line_runs():
    """10^5 draws per registered 1-D target, with the sampler diagnostics."""
    runs = {}
    start = time.perf_counter()
    for i, (name, t) in enumerate(TARGETS_1D.items()):
        runs[name] = kernel.run_line(t.target(), [0.0], [1.0], *t.domain, t.beta, SamplerParams(EPS_TILDE),
                                     SAMPLES_1D, np.random.default_rng(1000 + i))
    return runs, time.perf_counter() - start


def test_criterion_01_line_sampler_tv(line_runs, report):
    runs, elapsed = line_runs
    worst, failures = -np.inf, []
    for name, t in TARGETS_1D.items():
        tv = binned_tv(runs[name][0], t.log_g, t.domain, 100)
        bound = tv_guarantee(t.beta, EPS_TILDE) + 0.02
        worst = max(worst, tv - bound)
        if tv > bound:
            failures.append(f"{name} tv={tv:.4f}>{bound:.4f}")
    ok = not failures and elapsed < 30.0
    report(1, ok, f"10 targets, worst tv - bound = {worst:.4f}, sampling {elapsed:.1f}s {' '.join(failures)}")
    assert not failures
    assert elapsed < 30.0


def _grid_max(lg, a, b, points=100_001):
    """Maximum of ``lg`` on ``[a, b]``: dense grid refined by bounded Brent around the best node."""
    t = np.linspace(a, b, points)
    v = np.array([lg(x) for x in t])
    k = int(np.argmax(v))
    lo, hi = t[max(k - 1, 0)], t[min(k + 1, points - 1)]
    best = float(v[k])
    if hi > lo:
        r = optimize.minimize_scalar(lambda x: -lg(x), bounds=(lo, hi), method="bounded",
                                     options={"xatol": 1e-12})
        best = max(best, -float(r.fun))
    return best


def test_criterion_02_bracket_and_certificate(report):
    rng = np.random.default_rng(2)
    params = SamplerParams(EPS_TILDE)
    inits = violations = 0
    worst_cert = worst_bracket = np.inf
    for name, t in TARGETS_1D.items():
        lg = t.log_g_scalar
        for k in range(30):
            if k == 0:
                a, b = t.domain
            else:
                a, b = np.sort(rng.uniform(*t.domain, size=2))
                if b - a < 0.02:
                    continue
            sampler = ChordSampler(ChordFunction(lg, t.beta, a, b), params)
            inits += 1
            beta_eff = params.beta_eff(t.beta)
            lp = lg(sampler.p)
            assert lp == sampler.log_p
            margin = lp - (_grid_max(lg, a, b) - 3.0 * beta_eff)
            worst_cert = min(worst_cert, margin)
            violations += margin < -1e-12
            lo_band = math.log(0.5) - t.beta + math.log(EPS_TILDE) + lp
            hi_band = math.log(EPS_TILDE) + lp
            for e, end in ((sampler.e_lo, a), (sampler.e_hi, b)):
                le = lg(e)
                if e == end:
                    m = le - lo_band
                else:
                    m = min(le - lo_band, hi_band - le)
                worst_bracket = min(worst_bracket, m)
                violations += m < -1e-12
    ok = violations == 0
    report(2, ok, f"{inits} initialisations, worst certificate margin {worst_cert:.3g}, "
                  f"worst bracket margin {worst_bracket:.3g}")
    assert ok


def test_criterion_03_acceptance_rate(line_runs, report):
    runs, _ = line_runs
    worst, failures = np.inf, []
    for name, t in TARGETS_1D.items():
        attempts, accepted = runs[name][7], runs[name][8]
        assert attempts >= 10_000
        rate = accepted / attempts
        sigma = math.sqrt(rate * (1.0 - rate) / attempts)
        z = (rate - acceptance_rate_bound(t.beta, EPS_TILDE)) / max(sigma, 1e-300)
        worst = min(worst, z)
        if rate < acceptance_rate_bound(t.beta, EPS_TILDE) - 3.0 * sigma:
            failures.append(name)
    report(3, not failures, f"10 targets, smallest (rate - bound) / sigma = {worst:.1f} {' '.join(failures)}")
    assert not failures


def _stationarity_tv(target, beta, log_g, x0, seed):
    body = Box.cube(2)
    dom = ((-1.0, 1.0), (-1.0, 1.0))
    params = WalkParams(1000, sampler=SamplerParams(1e-4), beta=beta)
    X = np.array([walk(target, body, x0, params, np.random.default_rng(seed + r)).final_point for r in range(500)])
    expected = bin_probabilities(log_g, dom, 4, per_bin=100)
    return tv_distance(empirical_bin_probabilities(X, dom, 4), expected)


def test_criterion_04_hit_and_run_stationarity(report):
    T = 0.5
    laplace = ob.ObjectiveOracle(ob.l1(2, weight=5.0), 2)
    gauss = ob.ObjectiveOracle(ob.quadratic(2) + ob.sin_product(2, 0.05 * T, 6.0), 2)
    cases = {
        "uniform": (None, 0.0, lambda P: np.zeros(len(P))),
        "laplace": (laplace.kernel_target(-1.0), 0.0, lambda P: -5.0 * np.abs(P).sum(axis=1)),
        "gauss_sin": (gauss.kernel_target(-1.0 / T), 0.1, lambda P: -gauss.fn.evaluate_many(P) / T),
    }
    start = time.perf_counter()
    tvs = {name: _stationarity_tv(g, beta, lg, [0.9, -0.9], 40_000 * i)
           for i, (name, (g, beta, lg)) in enumerate(cases.items())}
    elapsed = time.perf_counter() - start
    ok = all(v <= 0.1 for v in tvs.values()) and elapsed < 300.0
    report(4, ok, ", ".join(f"{k} tv={v:.3f}" for k, v in tvs.items()) + f" (4x4 bins, {elapsed:.0f}s)")
    assert ok


def _isotropic(name, n, N, rng):
    if name == "gaussian":
        return rng.normal(size=(N, n))
    if name == "cube":
        return rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), size=(N, n))
    return rng.laplace(scale=1.0 / math.sqrt(2.0), size=(N, n))


def test_criterion_05_rounding_band(report):
    # mapped population covariance of an isotropic law: M^{-1} I M^{-T}
    rates = {}
    for n in (2, 5, 10):
        N = math.ceil(4 * n * math.log(n))
        for name in ("gaussian", "cube", "laplace"):
            hits = 0
            for trial in range(100):
                rng = np.random.default_rng([5, n, trial, len(name)])
                M = update_rounding(_isotropic(name, n, N, rng), RoundingMap.identity(n)).matrix
                Minv = np.linalg.inv(M)
                eig = np.linalg.eigvalsh(Minv @ Minv.T)
                hits += bool(eig.min() >= 0.5 and eig.max() <= 1.5)
            rates[(n, name)] = hits / 100
    ok = all(r >= 0.95 for r in rates.values())
    worst = min(rates, key=rates.get)
    report(5, ok, f"in-band rate with N = ceil(4 n log n): min {rates[worst]:.2f} at n={worst[0]} {worst[1]}, "
                  f"max {max(rates.values()):.2f}")
    assert ok


def _schedule(n, eps):
    K = math.ceil(math.sqrt(n) * math.log(n / eps))
    q = 1.0 - 1.0 / math.sqrt(n)
    T = [1.0]
    for _ in range(K):
        T.append(T[-1] * q)
    return T


def test_criterion_06_warm_start(report):
    checks, failures, worst = 0, [], 0.0
    for n in (9, 16, 25):
        T = _schedule(n, 0.05)
        for name, v in VERIFICATION_TARGETS.items():
            for i in range(len(T) - 1):
                w = warm_start_norm(v.F_vec, T[i], T[i + 1], v.domain, breaks=v.breaks)
                bound = warm_start_bound(v.beta, T[i])
                checks += 1
                assert w.rel_error < 1e-6
                worst = max(worst, w.ratio * (1 + w.rel_error) / bound)
                if not w.ratio * (1 + w.rel_error) < bound:
                    failures.append(f"{name}@n={n},T={T[i]:.3g}")
    report(6, not failures, f"{checks} epochs over schedules n=9,16,25, max ratio/bound = {worst:.3f}")
    assert not failures


def test_criterion_07_gibbs_gap(report):
    checks, failures, worst = 0, [], 0.0
    for name, v in VERIFICATION_TARGETS.items():
        for T in (1.0, 0.3, 0.1, 0.03):
            g = gibbs_mean_gap(v.f_vec, v.F_vec, T, v.domain, f_min=v.f_min, breaks=v.breaks)
            checks += 1
            worst = max(worst, g.gap / g.bound)
            if not g.gap + 1e-6 < g.bound:
                failures.append(f"{name}@T={T}")
    report(7, not failures, f"{checks} (target, T) pairs, max gap/bound = {worst:.3f}")
    assert not failures


def _optimize_quadratic(n, seeds=20):
    prob = quadratic_problem(n)
    plan = make_plan(n, prob.epsilon, prob.body)
    assert set(plan.steps) == {max(50, 10 * n * n)}
    hits = 0
    for seed in range(seeds):
        F = ob.ObjectiveOracle(prob.F, n, rho=prob.rho)
        hits += prob.f_gap(anneal(F, prob.body, plan, seed=seed).best_point) <= prob.epsilon
    return hits


def test_criterion_08_end_to_end(report):
    results, times = {}, {}
    for n in (2, 3, 5):
        start = time.perf_counter()
        results[n] = _optimize_quadratic(n)
        times[n] = time.perf_counter() - start
    ok = all(h >= 18 for h in results.values()) and all(t < 600 for t in times.values())
    report(8, ok, ", ".join(f"n={n}: {results[n]}/20 in {times[n]:.0f}s" for n in results))
    assert ok


def test_criterion_09_stochastic_reduction(report):
    n, sigma, delta, L, R = 2, 1.0, 0.05, 4.0, 1.0
    prob = quadratic_problem(n)
    eps = prob.epsilon
    sp = stochastic_params(n, eps, sigma, L, R, delta)
    rng = np.random.default_rng(9)
    U = rng.normal(size=(10_000, n))
    probes = U / np.linalg.norm(U, axis=1, keepdims=True) * rng.random((10_000, 1)) ** (1.0 / n)
    fv = prob.f.evaluate_many(probes)
    probe_ok = solved = 0
    billing_ok = True
    plan = make_plan(n, eps, prob.body)
    for seed in range(20):
        cfg = StochasticOracleConfig(sigma, sp.alpha, sp.tau, seed, R, eps)
        noisy = GridNoiseOracle(prob.f, cfg)
        err = np.max(np.abs(np.array([noisy.value_at(x) for x in probes]) - fv))
        probe_ok += err <= eps / n
        F = wrap_as_approx_convex(prob.f, cfg)
        res = anneal(F, prob.body, plan, seed=seed)
        solved += prob.f_gap(res.best_point) <= eps
        billing_ok &= res.billed_queries == sp.tau * res.queries == F.billed_queries
    ok = probe_ok >= 19 and solved >= 17 and billing_ok
    report(9, ok, f"tau={sp.tau}, alpha={sp.alpha:.4g}: probe bound {probe_ok}/20, solved {solved}/20, "
                  f"billing exact: {billing_ok}")
    assert ok


def test_criterion_10_staged(report):
    prob = staged_problem()
    contracted = 0
    max_stages = 0
    r_star = critical_radius(prob.model, 2)
    bound = stage_bound(prob.model, prob.r0, r_star, prob.epsilon_rel)
    for seed in range(20):
        F = ob.ObjectiveOracle(prob.F, 2)
        res = staged_optimize(F, prob.model, prob.x0, prob.r0, prob.epsilon_rel, seed=seed, body=prob.body)
        max_stages = max(max_stages, len(res.stage_log))
        contracted += all(np.linalg.norm(s.best_point - prob.x_star) <= 1.25 * math.sqrt(r_star * s.radius)
                          for s in res.stage_log)
    models = {
        "polynomial": DecayModel("polynomial", 2.0, 4.0, c=0.01, p=1.5),
        "logarithmic": DecayModel("logarithmic", 2.0, 1.0, c=1.0, d=1.0),
        "custom": DecayModel("custom", 2.0, 1.0, fn=lambda r: 0.1 * math.sqrt(r) + 0.01 * r),
    }
    residuals = {}
    for k, m in models.items():
        rs = critical_radius(m, 2)
        residuals[k] = abs(m.residual(2, rs)) / max(1.0, m.delta(3.0 * rs))
    ok = contracted >= 18 and max_stages <= bound + 1 and max(residuals.values()) < 1e-8
    report(10, ok, f"contraction held in {contracted}/20 seeds, max stages {max_stages} (bound {bound:.2f} + 1), "
                   f"max residual {max(residuals.values()):.1e}")
    assert ok


def _cli_configs(tmp_path):
    cfgs = {}
    for cmd, fname in [("sample1d", "sample1d"), ("walk", "walk"), ("anneal", "anneal"), ("stoch-opt", "stoch_opt"),
                       ("staged", "staged"), ("verify", "verify")]:
        cfg = yaml.safe_load((CONFIGS / f"{fname}.yaml").read_text())
        if cmd == "verify":
            cfg["verify"]["targets"] = ["linear_1d", "quadratic_sin_2d"]
        path = tmp_path / f"{fname}.yaml"
        path.write_text(yaml.safe_dump(cfg))
        cfgs[cmd] = path
    return cfgs


def test_criterion_11_determinism(tmp_path, report):
    differing = []
    for cmd, path in _cli_configs(tmp_path).items():
        outs = []
        for tag, workers in (("a", "1"), ("b", "1"), ("c", "4")):
            out = tmp_path / f"{cmd}-{tag}"
            assert main([cmd, "--config", str(path), "--out", str(out), "--workers", workers]) == 0
            outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        if not (outs[0] == outs[1] == outs[2]):
            differing.append(cmd)
        for tag in "abc":
            shutil.rmtree(tmp_path / f"{cmd}-{tag}")
    report(11, not differing, "6 subcommands, 2 serial runs + 1 run with 4 workers each: "
                              + ("byte-identical" if not differing else "differ: " + " ".join(differing)))
    assert not differing
