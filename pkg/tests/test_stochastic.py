import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nearconvex import objectives as ob
from nearconvex.errors import ConfigurationError, InvalidInputError, PreconditionError
from nearconvex.geometry import Box
from nearconvex.stochastic import (GridNoiseOracle, StochasticOracleConfig, grid_snap, noise_bound, query,
                                   stochastic_params, wrap_as_approx_convex)


@pytest.mark.parametrize("x,alpha,index", [
    ((0.25, 0.25), 0.5, (0, 0)),
    ((0.26, -0.25), 0.5, (1, -1)),
    ((-0.75, 1.0), 0.5, (-2, 2)),
])
def test_grid_snap_half_down(x, alpha, index):
    assert grid_snap(x, alpha).index == index


@given(st.lists(st.integers(-1000, 1000), min_size=1, max_size=4))
def test_grid_points_are_fixed(index):
    x = [0.25 * k for k in index]
    cell = grid_snap(x, 0.25)
    assert np.array_equal(cell.point(0.25), x)


def test_grid_snap_rejects_bad_pitch():
    with pytest.raises(InvalidInputError):
        grid_snap([0.0], 0.0)


def test_noiseless_oracle_is_f_at_snapped_point():
    f = ob.quadratic(2)
    cfg = StochasticOracleConfig(0.0, 0.1)
    assert query(f, cfg, [0.12, -0.33]) == pytest.approx(0.01 + 0.09)
    assert query(f, cfg, [0.12, -0.33]) == query(f, cfg, [0.12, -0.33])


def test_same_cell_same_value():
    O = GridNoiseOracle(ob.quadratic(2), StochasticOracleConfig(1.0, 0.1, 4, master_seed=3))
    assert O([0.101, 0.2]) == O([0.149, 0.16])
    assert O([0.101, 0.2]) != O([0.151, 0.2])


def test_noise_is_order_independent():
    cfg = StochasticOracleConfig(1.0, 0.1, master_seed=8)
    pts = np.random.default_rng(0).uniform(-1, 1, size=(50, 2))
    a = [query(ob.constant(2, 0.0), cfg, p) for p in pts]
    b = [query(ob.constant(2, 0.0), cfg, p) for p in pts[::-1]][::-1]
    assert a == b


def test_noise_standard_deviation():
    cfg = StochasticOracleConfig(1.0, 1.0, tau=100, master_seed=1)
    O = GridNoiseOracle(ob.constant(2, 0.0), cfg)
    vals = np.array([O([float(i), float(j)]) for i in range(100) for j in range(100)])
    assert 0.095 <= vals.std(ddof=1) <= 0.105
    assert abs(vals.mean()) < 0.003


def test_domain_check():
    O = GridNoiseOracle(ob.constant(2, 0.0), StochasticOracleConfig(1.0, 0.1), body=Box.cube(2))
    with pytest.raises(PreconditionError):
        O([1.5, 0.0])


def test_params_instance():
    # 4 (16 log 40 + 8 log 10) / 0.01 = 30977.1008 at 50 digits
    p = stochastic_params(2, 0.1, 1.0, 1.0, 1.0, 0.1)
    assert p.alpha == pytest.approx(0.025)
    assert p.tau == 30978


def test_noiseless_params_use_one_repeat():
    assert stochastic_params(2, 0.1, 0.0, 1.0, 1.0, 0.1).tau == 1


@given(st.integers(1, 6), st.floats(1e-3, 0.5), st.floats(0.1, 5.0))
def test_halving_epsilon_quadruples_tau(n, eps, sigma):
    a = stochastic_params(n, eps, sigma, 1.0, 10.0, 0.05).tau
    b = stochastic_params(n, eps / 2, sigma, 1.0, 10.0, 0.05).tau
    assert b >= 4 * a - 3


@given(st.integers(1, 6), st.floats(1e-3, 0.5), st.floats(0.1, 5.0), st.floats(0.5, 5.0))
def test_noise_bound_matches_half_budget(n, eps, sigma, L):
    p = stochastic_params(n, eps, sigma, L, 10.0, 0.05)
    assert noise_bound(n, sigma, p.tau, 10.0, p.alpha, 0.05) <= eps / (2 * n) * (1 + 1e-12)
    assert p.alpha * L == pytest.approx(eps / (2 * n))


@pytest.mark.parametrize("kwargs", [dict(delta=1.0), dict(epsilon=0.0), dict(R=0.01)])
def test_params_validation(kwargs):
    args = dict(n=2, epsilon=0.1, sigma=1.0, L=1.0, R=1.0, delta=0.1)
    args.update(kwargs)
    with pytest.raises(ConfigurationError):
        stochastic_params(**args)


def test_probe_error_within_bound():
    n, eps, delta = 2, 0.1, 0.05
    p = stochastic_params(n, eps, 1.0, 1.0, 1.0, delta)
    bound = noise_bound(n, 1.0, p.tau, 1.0, p.alpha, delta) + p.alpha
    f = ob.linear(2, [1.0, 0.0])
    probes = np.random.default_rng(0).uniform(-1, 1, size=(1000, 2))
    ok = 0
    for seed in range(20):
        O = GridNoiseOracle(f, StochasticOracleConfig(1.0, p.alpha, p.tau, seed, 1.0, eps))
        err = max(abs(O(x) - f(x)) for x in probes)
        ok += err <= bound
    assert ok >= 19


def test_wrapped_oracle_declares_rho_and_bills_tau():
    cfg = StochasticOracleConfig(1.0, 0.05, tau=37, master_seed=2, epsilon=0.2)
    F = wrap_as_approx_convex(ob.quadratic(2), cfg)
    assert F.rho == pytest.approx(0.1)
    for x in np.random.default_rng(1).uniform(-1, 1, size=(11, 2)):
        F(x)
    assert F.queries == 11 and F.billed_queries == 37 * 11


def test_wrap_needs_epsilon_and_dimension():
    with pytest.raises(ConfigurationError):
        wrap_as_approx_convex(ob.quadratic(2), StochasticOracleConfig(1.0, 0.05))
    with pytest.raises(InvalidInputError):
        wrap_as_approx_convex(lambda x: 0.0, StochasticOracleConfig(1.0, 0.05, epsilon=0.1))


def test_wrapped_vectorised_agrees():
    cfg = StochasticOracleConfig(0.5, 0.05, tau=3, master_seed=4, epsilon=0.2)
    F = wrap_as_approx_convex(ob.quadratic(2), cfg)
    X = np.random.default_rng(2).uniform(-1, 1, size=(20, 2))
    assert np.array_equal(F.evaluate_many(X), [F.fn(x) for x in X])
    assert math.isclose(F.evaluate_many(X[:1])[0], query(ob.quadratic(2), cfg, X[0]))
