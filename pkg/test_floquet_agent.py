import cmath
import math

import numpy as np
import pytest

import corpus
from coefficients import Const, EquationSpec
from agents.floquet_agent import FloquetClass, multipliers, zone_check

OMEGAS = (0.5, 1.0, 2.0 * math.pi)


def characteristic_multipliers(a, b, omega):
    root = cmath.sqrt(a * a - 4.0 * b)
    return cmath.exp(omega * 0.5 * (-a + root)), cmath.exp(omega * 0.5 * (-a - root))


def random_constant_pairs(count=20, seed=7):
    """(a, b) in [-2, 4] x [0.1, 5], skipping pairs whose multipliers nearly coincide"""
    rng = np.random.default_rng(seed)
    pairs = []
    while len(pairs) < count:
        a, b = float(rng.uniform(-2.0, 4.0)), float(rng.uniform(0.1, 5.0))
        separated = all(abs(l1 - l2) > 1e-3 * max(abs(l1), abs(l2))
                        for l1, l2 in (characteristic_multipliers(a, b, w) for w in OMEGAS))
        if separated:
            pairs.append((a, b))
    return pairs


def test_multipliers_complex_pair():
    l1, l2 = multipliers(0.0, 1.0)
    assert abs(l1) == pytest.approx(1.0)
    assert l1 == pytest.approx(l2.conjugate())
    assert l1.imag != 0.0


def test_multipliers_real_pair_avoid_cancellation():
    l1, l2 = multipliers(1e8, 1.0)
    assert l1.real == pytest.approx(1e8)
    assert l2.real == pytest.approx(1e-8, rel=1e-12)


def test_multipliers_need_positive_wronskian():
    with pytest.raises(ValueError):
        multipliers(1.0, 0.0)


def test_zone_check_first_zone():
    # p = 1: the first zone is omega <= pi / 2
    assert zone_check(1.0, 1.0, 1.0).in_zone
    assert zone_check(1.0, 1.0, 1.0).k == 1
    assert not zone_check(1.0, 1.0, 10.0).in_zone


def test_zone_check_higher_zone():
    # P = Q = 1, k = 2: (pi/2, pi)
    result = zone_check(1.0, 1.0, 2.5)
    assert result.in_zone and result.k == 2


def test_zone_check_not_applicable_without_positive_p():
    result = zone_check(-0.5, 1.0, 1.0)
    assert not result.applicable and not result.in_zone


def test_zone_check_flags_boundary():
    assert zone_check(1.0, 1.0, 0.5 * math.pi).near_boundary


def test_zone_check_requires_ordered_bounds():
    with pytest.raises(ValueError):
        zone_check(2.0, 1.0, 1.0)


@pytest.mark.parametrize('p', [0.25, 1.0, 4.0])
def test_zone_check_with_equal_bounds_uses_quarter_period_steps(p):
    # P = Q = p: zone k is ((k - 1) step, k step) with step = pi / (2 sqrt p)
    step = math.pi / (2.0 * math.sqrt(p))
    for k in range(1, 6):
        for omega in ((k - 1 + 1e-6) * step, (k - 0.5) * step, (k - 1e-6) * step):
            result = zone_check(p, p, omega)
            assert result.in_zone and result.k == k
    assert not zone_check(p, p, 5.5 * step).in_zone


@pytest.mark.slow
@pytest.mark.parametrize('a, b', random_constant_pairs())
def test_constant_coefficient_multipliers(floquet_agent, a, b):
    for omega in OMEGAS:
        eq = corpus.constant(a, b, period=omega)
        result = floquet_agent.monodromy(eq)
        computed = multipliers(result.trace, result.W_liouville)
        expected = characteristic_multipliers(a, b, omega)
        error = min(max(abs(computed[0] - expected[0]) / abs(expected[0]),
                        abs(computed[1] - expected[1]) / abs(expected[1])),
                    max(abs(computed[0] - expected[1]) / abs(expected[1]),
                        abs(computed[1] - expected[0]) / abs(expected[0])))
        assert error < 1e-6
        assert abs(computed[0] * computed[1] - result.W_liouville) <= 1e-8 * result.W_liouville
        assert abs(computed[0] + computed[1] - result.trace) <= 1e-8 * max(1.0, abs(result.trace))


def test_monodromy_wronskian_routes(floquet_agent):
    result = floquet_agent.monodromy(corpus.example1(2.0))
    assert result.W_direct == pytest.approx(result.W_liouville, rel=1e-8)
    assert not result.notes


def test_monodromy_needs_period(floquet_agent, overdamped):
    with pytest.raises(ValueError):
        floquet_agent.monodromy(overdamped)


def test_example4_guard(floquet_agent):
    result = floquet_agent.classify(corpus.example4())
    assert result.W_direct == pytest.approx(math.exp(-math.pi), rel=1e-6)
    assert result.W_liouville == pytest.approx(math.exp(-math.pi), rel=1e-6)
    assert result.mean_damping > 0
    assert result.classification is FloquetClass.REAL_ROOT_GUARD_FAILED
    assert result.caveat
    moduli = sorted(abs(m) for m in result.multipliers)
    assert moduli[0] == pytest.approx(math.exp(-math.pi), rel=1e-6)
    assert moduli[1] == pytest.approx(1.0, rel=1e-6)


def test_underdamped_constant_is_stable(floquet_agent):
    # a = 0.2, b = 1: roots -0.1 +- i sqrt(0.99); the guard passes through the zero spacing
    result = floquet_agent.classify(corpus.constant(0.2, 1.0, period=1.0))
    assert result.classification is FloquetClass.EXP_STABLE
    assert result.spacing.oscillatory
    assert max(result.growth_ratios) < 1.0


def test_antidamped_constant_grows(floquet_agent):
    result = floquet_agent.classify(corpus.constant(-0.05, 1.0, period=1.0), horizon=60.0)
    assert result.classification is FloquetClass.UNSTABLE_GROWING


def test_zero_spacing_of_harmonic(floquet_agent):
    spacing = floquet_agent.zero_spacing(corpus.constant(0.0, 1.0, period=1.0), horizon=50.0)
    assert spacing.oscillatory
    assert spacing.min_gap == pytest.approx(math.pi, abs=1e-6)
    assert spacing.max_gap == pytest.approx(math.pi, abs=1e-6)


def test_zero_spacing_horizon_covers_ten_periods(floquet_agent):
    with pytest.raises(ValueError):
        floquet_agent.zero_spacing(corpus.constant(0.0, 1.0, period=1.0), horizon=5.0)


def test_floquet_result_to_dict(floquet_agent):
    data = floquet_agent.classify(corpus.example4()).to_dict()
    assert data['classification'] == 'REAL_ROOT_GUARD_FAILED'
    assert len(data['lambda']) == 2
    assert set(data['guard']) == {'zone_k', 'near_boundary', 'min_gap', 'max_gap', 'oscillatory'}
    assert np.array(data['monodromy']).shape == (2, 2)


def test_constant_equation_has_exact_p_bounds(floquet_agent):
    result = floquet_agent.classify(EquationSpec(Const(0.2), Const(1.0), period=1.0))
    assert result.P == pytest.approx(0.99)
    assert result.Q == pytest.approx(0.99)
