import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from nearconvex import kernel
from nearconvex import objectives as ob
from nearconvex.errors import DegenerateError, InvalidInputError, SamplerError
from nearconvex.oned import (ChordFunction, ChordSampler, SamplerParams, acceptance_rate_bound,
                             find_near_max, find_tail_point, near_max, sample_chord, tail_point,
                             tv_guarantee)

# e^{-10 x} in [0.005, 0.01]  <=>  x in [log(100)/10, log(200)/10]
EXP10_BRACKET = (0.46051701859880917, 0.5298317366548037)


def line_draws(obj, beta, size, seed, eps=1e-3, lo=0.0, hi=1.0, backend=None):
    target = ob.ObjectiveOracle(obj, 1).kernel_target(-1.0)
    return kernel.run_line(target, [0.0], [1.0], lo, hi, beta, SamplerParams(eps), size,
                           np.random.default_rng(seed), backend=backend)


def binned_tv_exact(samples, density, bins=100):
    edges = np.linspace(0.0, 1.0, bins + 1)
    p = np.array([integrate.quad(density, a, b, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
                  for a, b in zip(edges[:-1], edges[1:])])
    p /= p.sum()
    h, _ = np.histogram(samples, bins=edges)
    return 0.5 * np.abs(h / len(samples) - p).sum()


def test_params_validation():
    with pytest.raises(InvalidInputError):
        SamplerParams(eps_tilde=0.6)
    with pytest.raises(InvalidInputError):
        SamplerParams(1e-3).check_beta(-0.1)
    # eps_tilde must stay below e^{-2 beta} / 2
    with pytest.raises(InvalidInputError):
        SamplerParams(0.1).check_beta(1.0)
    SamplerParams(0.1).check_beta(0.5)


def test_near_max_flat_branch():
    g = ChordFunction(lambda t: 0.0, 0.1, 0.0, 1.0)
    p = find_near_max(g, SamplerParams())
    assert p in (0.25, 0.5, 0.75)
    assert g.evaluations == 3


def test_near_max_gaussian():
    g = ChordFunction(lambda t: -(t - 0.3) ** 2, 0.01, 0.0, 1.0)
    p = find_near_max(g, SamplerParams())
    assert (p - 0.3) ** 2 <= 0.03


def test_near_max_perturbed_laplace():
    lg = lambda t: -5.0 * abs(t - 0.7) + 0.05 * math.sin(37.0 * t)  # noqa: E731
    g = ChordFunction(lg, 0.1, 0.0, 1.0)
    p = find_near_max(g, SamplerParams())
    grid = np.linspace(0.0, 1.0, 10001)
    assert lg(p) >= max(lg(t) for t in grid) - 0.3


def test_near_max_all_minus_inf_is_degenerate():
    g = ChordFunction(lambda t: -math.inf, 0.1, 0.0, 1.0)
    with pytest.raises(DegenerateError):
        find_near_max(g, SamplerParams())


def test_near_max_iteration_cap_carries_best_point():
    with pytest.raises(SamplerError) as info:
        near_max(lambda t: -100.0 * t, 0.0, 1.0, 1e-9, 3)
    # every round keeps the left part, so the best probe is the leftmost one seen
    assert 0.0 < info.value.best_point <= 0.25


def test_tail_point_constant_returns_endpoint():
    g = ChordFunction(lambda t: 0.0, 0.0, 0.0, 1.0)
    assert find_tail_point(g, "right", 0.5, SamplerParams(1e-3)) == 1.0
    assert find_tail_point(g, "left", 0.5, SamplerParams(1e-3)) == 0.0


def test_tail_point_exponential_bracket():
    g = ChordFunction(lambda t: -10.0 * t, 0.0, 0.0, 3.0)
    e = find_tail_point(g, "right", 0.0, SamplerParams(0.01))
    assert EXP10_BRACKET[0] <= e <= EXP10_BRACKET[1]


def test_tail_point_perturbed_bracket_by_reevaluation():
    lg = lambda t: -10.0 * t + 0.05 * math.sin(23.0 * t)  # noqa: E731
    beta, eps = 0.1, 0.01
    g = ChordFunction(lg, beta, 0.0, 3.0)
    e = find_tail_point(g, "right", 0.0, SamplerParams(eps))
    ratio = math.exp(lg(e) - lg(0.0))
    assert 0.5 * math.exp(-beta) * eps <= ratio <= eps


def test_tail_point_jump_across_band_returns_far_side():
    # log g drops by 10 at t = 0.4: no point has a value inside the band
    lg = lambda t: 0.0 if t < 0.4 else -10.0  # noqa: E731
    e = tail_point(lg, 0.0, 0.0, 1.0, 0.0, 1e-3, 200)
    assert lg(e) == -10.0 and e == pytest.approx(0.4, abs=1e-12)


def test_tail_point_bad_side():
    g = ChordFunction(lambda t: 0.0, 0.0, 0.0, 1.0)
    with pytest.raises(InvalidInputError):
        find_tail_point(g, "up", 0.5, SamplerParams())


def test_uniform_target_accepts_first_draw_and_has_mean_half():
    draws, p, lp, e_lo, e_hi, init, queries, attempts, accepted = line_draws(ob.constant(1, 0.0), 0.0,
                                                                            100_000, 1)
    assert (e_lo, e_hi) == (0.0, 1.0)
    assert attempts == accepted == 100_000
    assert abs(draws.mean() - 0.5) < 0.005


def test_exponential_target_tv():
    draws = line_draws(ob.linear(1, [5.0]), 0.0, 100_000, 2)[0]
    tv = binned_tv_exact(draws, lambda x: math.exp(-5.0 * x))
    assert tv <= 0.02


def test_perturbed_exponential_target_tv():
    # log g = -5 x + 0.04 sin(50 x); beta = 0.08
    obj = ob.linear(1, [5.0]) + ob.sin_sum(1, -0.04, 50.0)
    draws = line_draws(obj, 0.08, 100_000, 3)[0]
    tv = binned_tv_exact(draws, lambda x: math.exp(-5.0 * x + 0.04 * math.sin(50.0 * x)))
    assert tv <= 3.0 * math.exp(0.16) * 1e-3 + 0.015


def test_python_sampler_matches_line_kernel():
    obj = ob.l1(1, [0.7], 5.0) + ob.sin_sum(1, 0.1, 40.0)
    g = ChordFunction(lambda t: -obj([t]), 0.2, 0.0, 1.0)
    s = ChordSampler(g, SamplerParams(1e-3))
    xs = s.draws(200, np.random.default_rng(5))
    out = line_draws(obj, 0.2, 200, 5)
    assert np.array_equal(xs, out[0])
    assert (s.p, s.e_lo, s.e_hi) == (out[1], out[3], out[4])
    assert s.stats.attempts == out[7]


@given(st.integers(0, 2**32 - 1))
def test_sampling_is_deterministic(seed):
    obj = ob.quadratic(1, [0.4], 8.0)
    g1 = ChordFunction(lambda t: -obj([t]), 0.0, 0.0, 1.0)
    g2 = ChordFunction(lambda t: -obj([t]), 0.0, 0.0, 1.0)
    a = sample_chord(g1, SamplerParams(), np.random.default_rng(seed))
    b = sample_chord(g2, SamplerParams(), np.random.default_rng(seed))
    assert a == b and g1.evaluations == g2.evaluations


@given(st.floats(0.0, 0.5), st.floats(1e-6, 0.1))
def test_bounds_are_monotone(beta, eps):
    assert acceptance_rate_bound(beta + 0.1, eps) < acceptance_rate_bound(beta, eps)
    assert tv_guarantee(beta, eps) == pytest.approx(3.0 * math.exp(2.0 * beta) * eps)


def test_rejection_cap_raises():
    target = ob.ObjectiveOracle(ob.linear(1, [5.0]), 1).kernel_target(-1.0)
    with pytest.raises(SamplerError):
        kernel.run_line(target, [0.0], [1.0], 0.0, 1.0, 0.0, SamplerParams(1e-3, max_rejections=1), 1000,
                        np.random.default_rng(0))
