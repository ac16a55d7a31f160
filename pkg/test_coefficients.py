import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from coefficients import (BreakpointError, Const, Cos, EquationSpec, Poly, Pos, ProblemSchemaError, PwConst, Quot,
                          Sin, Sum, cumulative_integral, derivative, ess_bounds, eval_expr, from_dict, integrate,
                          p_coefficient, positive_part, segments, validate_period)

STEP = PwConst((1.0, 2.0), (0.5, 3.0, -1.0))


def test_breakpoint_needs_a_side():
    with pytest.raises(BreakpointError):
        eval_expr(STEP, 1.0)
    assert eval_expr(STEP, 1.0, side='left') == 0.5
    assert eval_expr(STEP, 1.0, side='right') == 3.0
    assert eval_expr(STEP, 1.5) == 3.0


def test_side_flag_is_validated():
    with pytest.raises(ValueError):
        eval_expr(Const(1.0), 0.0, side='middle')


def test_segments_split_at_breakpoints():
    assert segments(STEP, 0.0, 3.0) == [(0.0, 1.0), (1.0, 2.0), (2.0, 3.0)]
    assert segments([Const(1.0), STEP], 1.2, 1.8) == [(1.2, 1.8)]


def test_derivative_of_sinusoid_and_quotient():
    d = derivative(Sin(2.0, 3.0))
    assert d.value(0.4) == pytest.approx(6.0 * math.cos(1.2))
    q = Quot(Const(1.0), Sum((Const(2.0), Cos(1.0))))
    t = 0.7
    expected = math.sin(t) / (2.0 + math.cos(t)) ** 2
    assert derivative(q).value(t) == pytest.approx(expected, rel=1e-12)


def test_integrate_closed_forms():
    assert integrate(Sin(1.0), 0.0, 2.0 * math.pi) == pytest.approx(0.0, abs=1e-12)
    assert integrate(Poly((1.0, 0.0, 3.0)), 0.0, 2.0) == pytest.approx(2.0 + 8.0, rel=1e-14)
    assert integrate(STEP, 0.0, 3.0) == pytest.approx(0.5 + 3.0 - 1.0, rel=1e-14)


def test_integrate_by_quadrature():
    q = Quot(Const(1.0), Sum((Const(2.0), Cos(1.0))))
    # 2 pi / sqrt(3) over one period
    assert integrate(q, 0.0, 2.0 * math.pi, tol=1e-12) == pytest.approx(2.0 * math.pi / math.sqrt(3.0), abs=1e-10)


def test_integrate_rejects_reversed_limits():
    with pytest.raises(ValueError):
        integrate(Const(1.0), 1.0, 0.0)


def test_cumulative_integral_matches_primitive():
    ts = np.linspace(0.0, 3.0, 7)
    values = cumulative_integral(Cos(1.0), ts)
    np.testing.assert_allclose(values, np.sin(ts), atol=1e-12)


@given(st.floats(-5.0, 5.0), st.floats(0.0, 3.0), st.floats(0.0, 3.0))
def test_integral_is_additive(lo, w1, w2):
    expr = Sum((Const(0.3), Sin(1.5, 2.0), STEP))
    mid, hi = lo + w1, lo + w1 + w2
    whole = integrate(expr, lo, hi, tol=1e-11)
    parts = integrate(expr, lo, mid, tol=1e-11) + integrate(expr, mid, hi, tol=1e-11)
    assert whole == pytest.approx(parts, abs=1e-9)


def test_ess_bounds_exact_for_harmonics():
    bounds = ess_bounds(Sum((Const(1.0), Sin(0.99))), 0.0, 2.0 * math.pi)
    assert bounds.rigorous
    assert bounds.inf_val == pytest.approx(0.01, abs=1e-14)
    assert bounds.sup_val == pytest.approx(1.99, abs=1e-14)


def test_ess_bounds_on_partial_window():
    bounds = ess_bounds(Sin(1.0), 0.0, 1.0)
    assert bounds.inf_val == pytest.approx(0.0, abs=1e-14)
    assert bounds.sup_val == pytest.approx(math.sin(1.0), abs=1e-14)


def test_ess_bounds_sampled_for_quotients():
    q = Quot(Sum((Const(26.0), Cos(1.0))), Sum((Const(10.0), Sin(1.0))))
    bounds = ess_bounds(q, 0.0, 2.0 * math.pi)
    assert not bounds.rigorous
    assert 2.88 < bounds.sup_val < 2.92
    assert bounds.inf_val < 26.0 / 10.0


@given(st.floats(0.0, 4.0), st.floats(0.1, 2.0), st.floats(0.1, 2.0))
def test_ess_bounds_widen_with_the_window(lo, inner, outer):
    expr = Sum((Const(0.5), Sin(2.0, 3.0, 0.4)))
    small = ess_bounds(expr, lo, lo + inner)
    large = ess_bounds(expr, lo, lo + inner + outer)
    assert large.inf_val <= small.inf_val + 1e-12
    assert large.sup_val >= small.sup_val - 1e-12


def test_positive_part_splits():
    split = positive_part(Sin(1.0))
    assert split(0.5 * math.pi) == pytest.approx(1.0)
    assert split(1.5 * math.pi) == 0.0
    assert split.negative_at(1.5 * math.pi) == pytest.approx(1.0)


def test_validate_period():
    assert validate_period(Sum((Const(1.0), Sin(0.5, 2.0))), math.pi)
    assert not validate_period(Sin(1.0), 1.0)
    with pytest.raises(ValueError):
        validate_period(Sin(1.0), -1.0)


def test_equation_checks_its_period():
    with pytest.raises(ValueError):
        EquationSpec(Sin(1.0), Const(1.0), period=1.0)
    eq = EquationSpec(Const(1.0), Sin(1.0), period=2.0 * math.pi)
    assert eq.homogeneous
    assert eq.without_forcing() is eq


def test_quotient_rejects_vanishing_denominator():
    with pytest.raises(ValueError):
        Quot(Const(1.0), Sin(1.0))


def test_p_coefficient_for_constant_damping():
    eq = EquationSpec(Const(2.0), Sum((Const(4.3), Sin(1.0))))
    p = p_coefficient(eq)
    assert p.value(1.0) == pytest.approx(4.3 + math.sin(1.0) - 1.0)


def test_p_coefficient_uses_damping_derivative():
    eq = EquationSpec(Sin(1.0), Const(1.0))
    t = 0.3
    assert p_coefficient(eq).value(t) == pytest.approx(1.0 - 0.25 * math.sin(t) ** 2 - 0.5 * math.cos(t))


def test_from_dict_builds_nested_expressions():
    data = {'kind': 'sum', 'args': [{'kind': 'const', 'value': {'param': 'b'}}, {'kind': 'sin', 'amp': 1.0}]}
    expr = from_dict(data, {'b': 4.3})
    assert expr.value(0.0) == pytest.approx(4.3)
    assert from_dict(expr.to_dict()) == expr


@pytest.mark.parametrize('data, pointer', [
    ({'kind': 'tan', 'amp': 1.0}, '/a/kind'),
    ({'kind': 'sin', 'amp': 1.0, 'period': 2.0}, '/a/period'),
    ({'kind': 'sum', 'args': []}, '/a/args'),
    ({'kind': 'sum', 'args': [{'kind': 'const'}]}, '/a/args/0/value'),
    ({'kind': 'const', 'value': {'param': 'missing'}}, '/a/value'),
    ({'kind': 'pw_const', 'breaks': [1.0], 'values': [1.0]}, '/a'),
])
def test_from_dict_reports_json_pointer(data, pointer):
    with pytest.raises(ProblemSchemaError) as excinfo:
        from_dict(data, {}, '/a')
    assert excinfo.value.pointer == pointer


def test_pos_of_pw_const_integrates_positive_mass():
    assert integrate(Pos(STEP), 0.0, 3.0) == pytest.approx(3.5)


@pytest.mark.parametrize('expr', [
    Sum((Const(1.0), Sin(0.99))),
    Quot(Sum((Const(26.0), Cos(1.0))), Sum((Const(10.0), Sin(1.0)))),
], ids=['harmonic', 'quotient'])
def test_integral_differentiates_back(expr):
    # central differences of t -> int_0^t expr recover expr
    h = 1e-4
    for t in (0.3, 1.7, 5.2):
        slope = (integrate(expr, 0.0, t + h, tol=1e-12) - integrate(expr, 0.0, t - h, tol=1e-12)) / (2.0 * h)
        assert slope == pytest.approx(eval_expr(expr, t), abs=1e-7)
