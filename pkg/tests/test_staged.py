import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nearconvex import objectives as ob
from nearconvex.annealing import PlanOptions
from nearconvex.errors import ConfigurationError, PreconditionError
from nearconvex.geometry import Ball
from nearconvex.problems import staged_problem
from nearconvex.staged import (DecayModel, critical_radius, next_radius, stage_bound, staged_optimize,
                               write_stage_log)

UNIT = dict(alpha=2.0, C=1.0, c=1.0)


def test_model_validation():
    with pytest.raises(ConfigurationError):
        DecayModel("cubic", 1.0)
    with pytest.raises(ConfigurationError):
        DecayModel("polynomial", 1.0, p=2.0)
    with pytest.raises(ConfigurationError):
        DecayModel("custom", 1.0)
    with pytest.raises(ConfigurationError):
        DecayModel("polynomial", 0.0)


def test_next_radius_instance():
    # sqrt(2 * 1 * 1 * 3 * 3 / 2)
    assert next_radius(DecayModel("polynomial", p=1.0, **UNIT), 1, 3.0) == pytest.approx(3.0)


def test_next_radius_without_perturbation_is_zero():
    assert next_radius(DecayModel("polynomial", 2.0, c=0.0), 3, 1.0) == 0.0


@given(st.floats(1.0001, 1e6))
def test_linear_decay_contracts_geometrically(ratio):
    m = DecayModel("polynomial", p=1.0, **UNIT)
    rs = critical_radius(m, 1)
    r = ratio * rs
    assert next_radius(m, 1, r) == pytest.approx(math.sqrt(rs * r), rel=1e-12)
    assert next_radius(m, 1, r) < r


@given(st.floats(0.1, 1.9), st.floats(1.0001, 1e3))
def test_polynomial_contraction_above_fixed_point(p, ratio):
    m = DecayModel("polynomial", 1.5, 4.0, c=0.01, p=p)
    rs = critical_radius(m, 3)
    assert next_radius(m, 3, ratio * rs) < ratio * rs


def test_critical_radius_polynomial_instance():
    m = DecayModel("polynomial", p=1.0, **UNIT)
    rs = critical_radius(m, 1)
    assert rs == pytest.approx(3.0, rel=1e-15)
    assert abs(m.residual(1, rs)) < 1e-12


def test_critical_radius_without_perturbation():
    assert critical_radius(DecayModel("polynomial", 2.0, c=0.0), 2) == 0.0
    assert critical_radius(DecayModel("logarithmic", 2.0, c=0.0), 2) == 0.0


def test_critical_radius_logarithmic_instance():
    m = DecayModel("logarithmic", d=1.0, **UNIT)
    rs = critical_radius(m, 1)
    # root of log(1 + 3 r) = r^2 from scipy brentq at xtol 1e-15
    assert rs == pytest.approx(1.2476654511897622, abs=1e-12)
    assert abs(math.log(1.0 + 3.0 * rs) - rs * rs) < 1e-9


def test_critical_radius_custom_model():
    m = DecayModel("custom", 2.0, 1.0, fn=lambda r: 0.1 * math.sqrt(r))
    rs = critical_radius(m, 2)
    # (2 / 4) r^2 = 0.1 sqrt(3 r)  =>  r^{3/2} = 0.2 sqrt(3)
    assert rs == pytest.approx((0.2 * math.sqrt(3.0)) ** (2.0 / 3.0), rel=1e-12)
    assert abs(m.residual(2, rs)) <= 1e-8


def test_custom_model_bad_values():
    m = DecayModel("custom", 2.0, fn=lambda r: -1.0)
    with pytest.raises(ConfigurationError):
        m.delta(1.0)


def test_stage_bound_instance():
    m = DecayModel("polynomial", 2.0, c=0.01, p=1.0)
    # log log 256 / log 2 + 1
    assert stage_bound(m, 256.0, 1.0, 1.0) == pytest.approx(3.4712336, abs=1e-6)


def test_stage_bound_needs_polynomial():
    with pytest.raises(ConfigurationError):
        stage_bound(DecayModel("logarithmic", 2.0, c=0.1), 10.0, 1.0, 1.0)


def test_convex_objective_needs_one_stage():
    F = ob.ObjectiveOracle(ob.quadratic(2, [0.3, -0.2]), 2)
    res = staged_optimize(F, DecayModel("polynomial", 2.0, c=0.0), [0.0, 0.0], 1.0, 1.0,
                          inner=PlanOptions(epochs=6, steps=40), seed=1)
    assert len(res.stage_log) == 1
    assert res.reason == "reached the critical radius"


def test_start_below_critical_radius_returns_immediately():
    F = ob.ObjectiveOracle(ob.quadratic(2), 2)
    res = staged_optimize(F, DecayModel("polynomial", 2.0, c=1.0), [0.0, 0.0], 0.5, 1.0)
    assert res.stage_log == [] and "critical radius" in res.reason and F.queries == 0


def test_first_ball_must_fit():
    F = ob.ObjectiveOracle(ob.quadratic(2), 2)
    with pytest.raises(PreconditionError):
        staged_optimize(F, DecayModel("polynomial", 2.0, c=1e-4), [0.0, 0.0], 1.0, 1.0, body=Ball([0.0, 0.0], 1.5))


def test_synthetic_problem_contracts(tmp_path):
    prob = staged_problem()
    F = ob.ObjectiveOracle(prob.F, 2)
    res = staged_optimize(F, prob.model, prob.x0, prob.r0, prob.epsilon_rel, seed=3, body=prob.body)
    assert res.r_star == pytest.approx(prob.r0 / 256)
    assert len(res.stage_log) <= stage_bound(prob.model, prob.r0, res.r_star, prob.epsilon_rel) + 1
    for s in res.stage_log:
        assert np.linalg.norm(s.best_point - prob.x_star) <= 1.25 * s.next_radius
    assert res.queries == F.queries
    write_stage_log(tmp_path / "s.csv", res.stage_log)
    rows = list(csv.reader(open(tmp_path / "s.csv")))
    assert rows[0] == ["stage", "c1", "c2", "r_t", "rho_t", "best_value", "queries"]
    assert len(rows) == len(res.stage_log) + 1
