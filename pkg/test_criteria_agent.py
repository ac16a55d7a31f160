import math

import pytest

import corpus
from coefficients import Const, EquationSpec, Poly, Pos, Sin, Sum
from agents import Claim, Verdict, lemma2_bounds
from agents.criteria_agent import REFERENCES, solve_witness


@pytest.mark.parametrize('a, b, K0, K1, case', [
    (3.0, 2.0, 0.5, 3.0, 'a^2>4b'),
    (2.0, 1.0, 1.0, 2.0, 'a^2=4b'),
    (2.0, 2.0, 1.0, 2.0, 'a^2<4b'),
])
def test_lemma2_bounds(a, b, K0, K1, case):
    bounds = lemma2_bounds(a, b)
    assert bounds.case == case
    assert bounds.K0 == pytest.approx(K0)
    assert bounds.K1 == pytest.approx(K1)


def test_lemma2_bounds_need_positive_constants():
    with pytest.raises(ValueError):
        lemma2_bounds(0.0, 1.0)
    with pytest.raises(ValueError):
        lemma2_bounds(1.0, -1.0)


def test_every_criterion_has_a_reference():
    for criterion in ('C1', 'C2_LEVIN', 'T3_1', 'T3_2', 'T3_3', 'C7_1', 'C7_2', 'C7_3', 'T6', 'T7', 'T8',
                      'T9_1', 'T9_2', 'T9_3', 'C9_BAND', 'T10', 'WITNESS_U', 'TA_1'):
        assert REFERENCES[criterion]


def test_quadratic_lambda_for_overdamped(criteria_agent, overdamped):
    cert = criteria_agent.cert_quadratic_lambda(overdamped, 50.0)
    assert cert.verdict is Verdict.PASS
    assert cert.claim is Claim.EXP_STABLE
    assert -2.0 - 1e-6 <= cert.witnesses['lambda'] <= -1.0 + 1e-6


def test_quadratic_lambda_fails_for_harmonic(criteria_agent, harmonic):
    cert = criteria_agent.cert_quadratic_lambda(harmonic, 50.0)
    assert cert.verdict is Verdict.FAIL
    assert cert.margin < 0


def test_levin_roots(criteria_agent, overdamped, harmonic):
    cert = criteria_agent.cert_levin(overdamped, 50.0)
    assert cert.verdict is Verdict.PASS
    assert cert.witnesses['nu0'] == pytest.approx(-2.0)
    assert cert.witnesses['nu2'] == pytest.approx(-1.0)
    assert criteria_agent.cert_levin(harmonic, 50.0).verdict is Verdict.INAPPLICABLE


def test_thm3_first_condition(criteria_agent):
    # a = 1 + t dominates the integral of b = 1
    eq = EquationSpec(Poly((1.0, 1.0)), Const(1.0), label='growing damping')
    cert = criteria_agent.cert_thm3(eq, horizon=20.0)
    assert cert.passed
    assert cert.criterion == 'T3_1'


def test_thm3_lambda_condition(criteria_agent, overdamped):
    # 3 >= 2 lambda + 1/lambda holds for lambda in [1/2, 1]
    cert = criteria_agent.cert_thm3(overdamped, horizon=30.0)
    assert cert.passed
    assert cert.criterion == 'T3_2'
    assert 0.5 - 1e-6 <= cert.witnesses['lambda'] <= 1.0 + 1e-6


def test_thm3_fails_on_oscillating_equation(criteria_agent, harmonic):
    cert = criteria_agent.cert_thm3(harmonic, horizon=10.0)
    assert cert.verdict is Verdict.FAIL
    assert cert.claim is None


def test_cor7_limit_condition(criteria_agent):
    cert = criteria_agent.cert_cor7(corpus.constant(2.0, 1.0), search_T=40.0)
    assert cert.passed
    assert cert.criterion == 'C7_2'
    assert cert.witnesses['t0'] == 0.0


def test_cor7_summable_stiffness(criteria_agent):
    eq = EquationSpec(Const(1.0), Const(0.0), label='free damping')
    cert = criteria_agent.cert_cor7(eq, search_T=40.0)
    assert cert.passed
    assert cert.criterion == 'C7_1'


def test_thm6_uses_positivity_routes(criteria_agent, overdamped, harmonic):
    cert = criteria_agent.cert_thm6(overdamped, search_T=30.0)
    assert cert.verdict is Verdict.PASS
    assert cert.claim is Claim.EXP_STABLE
    assert criteria_agent.cert_thm6(harmonic, search_T=30.0).verdict is Verdict.INAPPLICABLE


def test_thm7_example1_threshold(criteria_agent):
    passed = criteria_agent.cert_thm7(corpus.example1(2.0))
    failed = criteria_agent.cert_thm7(corpus.example1(1.9))
    assert passed.verdict is Verdict.PASS and passed.claim is Claim.EXP_STABLE
    assert passed.rigorous
    assert passed.witnesses['beta'] == pytest.approx(0.01)
    assert passed.witnesses['B'] == pytest.approx(1.99)
    assert failed.verdict is Verdict.FAIL
    assert failed.margin < 0


def test_thm8_example2_witness(criteria_agent):
    cert = criteria_agent.cert_thm8(corpus.example2(), witness=(10.0, 26.0))
    assert cert.verdict is Verdict.PASS
    assert cert.witnesses['A'] == 10.0 and cert.witnesses['B'] == 26.0
    assert cert.witnesses['rhs'] == pytest.approx(5.0)
    assert cert.margin >= 1.0 - 1e-6


def test_thm8_margin_matches_formula(criteria_agent):
    data = criteria_agent.thm8_margin(corpus.example2(), 10.0, 26.0)
    assert data['margin'] == pytest.approx(data['rhs'] - data['lhs'])
    assert data['lhs'] > 3.8


def test_thm8_searches_when_witness_missing(criteria_agent):
    cert = criteria_agent.cert_thm8(corpus.example2())
    assert cert.verdict is Verdict.PASS
    assert cert.margin >= 1.0 - 1e-6


def test_thm9_example3_threshold(criteria_agent):
    passed = criteria_agent.cert_thm9(corpus.example3(4.3), witness=(1.0, 4.3))
    failed = criteria_agent.cert_thm9(corpus.example3(4.2), witness=(1.0, 4.2))
    assert passed.criterion == 'T9_2' and passed.verdict is Verdict.PASS
    assert failed.verdict is Verdict.FAIL


def test_thm9_margin_at_natural_witness(criteria_agent):
    data = criteria_agent.thm9_margin(corpus.example3(4.3), 1.0, 4.3)
    assert data['case'] == 'a^2<4b'
    assert data['margin'] == pytest.approx(1.0 - 4.0 / math.sqrt(16.2), abs=1e-9)


def test_thm9_overdamped_perturbation(criteria_agent):
    eq = EquationSpec(Sum((Const(3.0), Sin(0.1))), Const(2.0), period=2.0 * math.pi)
    data = criteria_agent.thm9_margin(eq, 3.0, 2.0)
    assert data['margin'] == pytest.approx(1.0 - 0.3, abs=1e-9)
    assert criteria_agent.cert_thm9(eq).verdict is Verdict.PASS


def test_cor9_band(criteria_agent):
    cert = criteria_agent.cert_cor9(corpus.example3(4.3))
    assert cert.verdict is Verdict.PASS
    assert cert.witnesses['a'] == 1.0
    assert cert.witnesses['B'] - cert.witnesses['radius'] < cert.witnesses['m']
    assert cert.witnesses['M'] < cert.witnesses['B'] + cert.witnesses['radius']


def test_cor9_needs_constant_damping(criteria_agent):
    assert criteria_agent.cert_cor9(corpus.example2()).verdict is Verdict.INAPPLICABLE


def test_thm10_periodic_positive_mean(criteria_agent):
    # p = 1 + 0.99 sin t - 1 has zero mean for a = 2; a = 1 gives p = 0.75 + 0.99 sin t
    eq = EquationSpec(Const(1.0), Sum((Const(1.0), Sin(0.99))), period=2.0 * math.pi)
    cert = criteria_agent.cert_thm10(eq)
    assert cert.witnesses['int_p'] == pytest.approx(0.75 * 2.0 * math.pi, rel=1e-9)
    assert cert.witnesses['int_a'] == pytest.approx(2.0 * math.pi)
    if cert.passed:
        assert cert.claim is Claim.TENDS_TO_ZERO


def test_thm10_zero_mean_damping_claims_bounded(criteria_agent):
    eq = EquationSpec(Sin(0.1), Const(0.01), period=2.0 * math.pi)
    cert = criteria_agent.cert_thm10(eq)
    assert cert.verdict is Verdict.PASS
    assert cert.claim is Claim.BOUNDED


def test_thm10_needs_a_period(criteria_agent, overdamped):
    assert criteria_agent.cert_thm10(overdamped).verdict is Verdict.INAPPLICABLE


def test_thm10_negative_mean_damping(criteria_agent):
    eq = EquationSpec(Const(-0.1), Const(1.0), period=1.0)
    assert criteria_agent.cert_thm10(eq).verdict is Verdict.INAPPLICABLE


def test_witness_u_equal_to_damping(criteria_agent, overdamped):
    # m = int_0^t b = 2t stays below u = 3 until t = 1.5
    assert criteria_agent.verify_witness_u(overdamped, Const(3.0), horizon=1.0)
    assert not criteria_agent.verify_witness_u(overdamped, Const(3.0), horizon=3.0)


def test_witness_u_constant_lambda(criteria_agent, overdamped):
    # u = 1: m' = 2 - 2m, m -> 1 from below
    cert = criteria_agent.cert_witness_u(overdamped, Const(1.0), horizon=5.0)
    assert cert.verdict is Verdict.PASS
    assert cert.claim is Claim.NONOSCILLATION_POSITIVITY


def test_witness_u_must_be_nonnegative(criteria_agent, overdamped):
    cert = criteria_agent.cert_witness_u(overdamped, Const(-1.0), horizon=5.0)
    assert cert.verdict is Verdict.INAPPLICABLE


def test_solve_witness_closed_form():
    # m' = 2 - 2m from 0: 1 - exp(-2t)
    run = solve_witness(Const(3.0), Const(2.0), Const(1.0), 0.0, 3.0, tol=1e-10)
    assert run.m[-1] == pytest.approx(1.0 - math.exp(-6.0), abs=1e-8)
    assert not run.stopped
    assert run.last_exceedance() is None


def test_test_function_on_nonoscillation_interval(criteria_agent):
    # x'' + x = 0 on [0, 1] with v = cos(t - 1/2): Lv = 0, v > 0
    v = Sin(1.0, 1.0, 0.5 * math.pi - 0.5)
    cert = criteria_agent.verify_test_function(corpus.constant(0.0, 1.0), v, 1.0)
    assert cert.verdict is Verdict.PASS
    assert cert.witnesses['boundary_sum'] == pytest.approx(2.0 * math.cos(0.5), abs=1e-9)


def test_test_function_fails_when_v_negative(criteria_agent, harmonic):
    cert = criteria_agent.verify_test_function(harmonic, Sin(1.0), 4.0)
    assert cert.verdict is Verdict.FAIL


def test_errors_become_inapplicable(criteria_agent, overdamped):
    cert = criteria_agent.cert_quadratic_lambda(overdamped, horizon=-1.0)
    assert cert.verdict is Verdict.INAPPLICABLE
    assert cert.notes


def test_certificate_to_dict(criteria_agent):
    data = criteria_agent.cert_thm7(corpus.example1(2.0)).to_dict()
    assert data['criterion'] == 'T7'
    assert data['verdict'] == 'PASS'
    assert data['claim'] == 'EXP_STABLE'
    assert data['window'] == [0.0, 2.0 * math.pi]
    assert data['reference']


@pytest.mark.parametrize('a, b', [(3.0, 2.0), (4.0, 1.5), (3.0, 0.0), (10.0, 2.0)])
def test_witness_u_survives_stronger_damping_and_weaker_stiffness(criteria_agent, a, b):
    # every pair dominates the base (3, 2): a' >= 3, b' <= 2
    assert criteria_agent.verify_witness_u(corpus.constant(a, b), Const(1.5), horizon=20.0)


def test_positive_part_certificate_carries_over_to_signed_stiffness(criteria_agent, oracle_agent):
    b = Sum((Const(0.5), Sin(1.0)))
    cert = criteria_agent.cert_thm3(EquationSpec(Const(3.0), Pos(b)), horizon=30.0)
    assert cert.passed
    assert oracle_agent.positivity_scan(EquationSpec(Const(3.0), b), 20.0)


def test_failed_cor7_names_the_closest_condition(criteria_agent):
    cert = criteria_agent.cert_cor7(corpus.example1(2.0), search_T=100.0)
    assert cert.verdict is Verdict.FAIL
    margins = {k: cert.witnesses[f'c{k}_margin'] for k in (1, 2, 3)}
    closest = max(margins, key=margins.get)
    assert cert.criterion == f'C7_{closest}'
    assert cert.margin == margins[closest]
    assert margins[1] < 0.0 and margins[2] == pytest.approx(4.0 - 4.0 * 1.99)
