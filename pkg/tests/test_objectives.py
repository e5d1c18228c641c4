import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nearconvex import objectives as ob
from nearconvex.errors import InvalidInputError

POINT = st.lists(st.floats(-2, 2), min_size=2, max_size=2)

ALL_2D = [
    ob.quadratic(2, [0.3, -0.2], 2.0),
    ob.l1(2, [0.1, 0.1], 5.0),
    ob.linear(2, [1.0, -3.0]),
    ob.constant(2, 0.7),
    ob.sin_product(2, 0.05, 40.0),
    ob.sin_sum(2, 0.1, 12.0, [0.2, 0.0]),
    ob.sign_sin(2, 0.1, 20.0),
    ob.radial_poly(2, 0.01, 1.0, 50.0, [0.3, -0.2]),
    ob.radial_log(2, 0.02, 2.0, 30.0),
]


@pytest.mark.parametrize("x,expected", [
    ((0.3, -0.2), 0.0),
    ((1.3, -0.2), 2.0),
    ((0.0, 0.0), 2.0 * (0.09 + 0.04)),
])
def test_quadratic_values(x, expected):
    assert ob.quadratic(2, [0.3, -0.2], 2.0)(x) == pytest.approx(expected, abs=1e-15)


def test_linear_and_l1_values():
    assert ob.linear(2, [1.0, -3.0])([2.0, 1.0]) == pytest.approx(-1.0)
    assert ob.l1(2, None, 5.0)([0.2, -0.4]) == pytest.approx(3.0)


def test_sin_product_value():
    v = ob.sin_product(2, 0.05, 40.0)([0.1, 0.2])
    assert v == pytest.approx(0.05 * math.sin(4.0) * math.sin(8.0), rel=1e-14)


@pytest.mark.parametrize("obj", ALL_2D, ids=repr)
@given(x=POINT)
def test_scalar_and_vectorised_agree(obj, x):
    assert obj(x) == pytest.approx(float(obj.evaluate_many([x])[0]), rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("obj", [o for o in ALL_2D if o.terms[0].is_perturbation
                                 and math.isfinite(o.perturbation_bound())], ids=repr)
@given(x=POINT)
def test_bounded_perturbations_respect_their_bound(obj, x):
    assert abs(obj(x)) <= obj.perturbation_bound() + 1e-15


def test_sum_and_convex_part():
    F = ob.quadratic(2) + ob.sin_product(2, 0.1, 3.0) + ob.sign_sin(2, 0.05, 7.0)
    assert F.perturbation_bound() == pytest.approx(0.15)
    f = F.convex_part()
    assert len(f.terms) == 1
    x = [0.4, -0.1]
    assert f(x) == pytest.approx(0.17)


def test_dimension_checks():
    with pytest.raises(InvalidInputError):
        ob.quadratic(2) + ob.quadratic(3)
    with pytest.raises(InvalidInputError):
        ob.quadratic(2, [1.0, 2.0, 3.0])


def test_oracle_counts_and_bills():
    O = ob.ObjectiveOracle(ob.quadratic(2), 2, rho=0.01, billing=7)
    for _ in range(3):
        O([0.1, 0.2])
    O.charge(5)
    assert O.queries == 8
    assert O.billed_queries == 56
    assert O.billed(4) == 28
    O.evaluate_many(np.zeros((10, 2)))
    assert O.queries == 8


def test_oracle_rejects_negative_rho():
    with pytest.raises(InvalidInputError):
        ob.ObjectiveOracle(ob.quadratic(2), 2, rho=-1.0)


def test_kernel_target_kinds():
    O = ob.ObjectiveOracle(ob.quadratic(2), 2)
    t = O.kernel_target(-2.0)
    assert t.kind == ob.TARGET_TERMS and t.coef == -2.0 and t.terms == O.fn.terms
    C = ob.ObjectiveOracle(lambda x: float(np.sum(x)), 2)
    assert C.kernel_target(-1.0).kind == ob.TARGET_CALLABLE
    assert ob.KernelTarget.uniform(3).kind == ob.TARGET_UNIFORM
