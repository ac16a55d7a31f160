"""
System test for oscillint
Runs the complete pipeline on the worked problems: problem file, certificates,
Floquet analysis and oracle, then checks that every claim survives the oracle.
"""

import pytest

import corpus
from agents import Claim, FloquetAgent, OracleAgent, certify_all
from agents.floquet_agent import FloquetClass
from problem_integration import dumps, serialize_problem, parse_problem_data

MIN_DECAY_RATE = 1e-3


@pytest.fixture(scope='module')
def example2_problem():
    """Stage 1: problem integration"""
    problem = corpus.load_problem('example2')
    assert parse_problem_data(serialize_problem(problem)) == problem
    return problem


@pytest.fixture(scope='module')
def example2_report(example2_problem):
    """Stage 2: certificates"""
    eq = example2_problem.build_equation()
    return certify_all(eq, example2_problem.settings, example2_problem.witnesses(), only=['C1', 'T7', 'T8', 'T9'])


def test_certificates(example2_report):
    assert example2_report.summary == Claim.EXP_STABLE.value
    assert 'T8' in example2_report.supporting
    assert dumps(example2_report.to_dict()) == dumps(example2_report.to_dict())


def test_floquet_agrees_with_certificates(example2_problem, example2_report):
    """Stage 3: an EXP_STABLE summary must come with multipliers inside the unit disk"""
    result = FloquetAgent(example2_problem.settings).classify(example2_problem.build_equation())
    assert max(abs(m) for m in result.multipliers) < 1.0


def test_oracle_agrees_with_certificates(example2_problem):
    """Stage 4: oracle report"""
    report = OracleAgent(example2_problem.settings).oracle_report(example2_problem.build_equation(), horizon=60.0)
    assert report['decay']['rate'] > 0.0
    assert report['bounded_response']['bounded']


def test_example4_is_not_certified():
    """Positive mean damping alone certifies nothing: no criterion may claim decay here"""
    eq = corpus.example4()
    report = certify_all(eq, only=['C1', 'T7'])
    assert report.summary not in (Claim.EXP_STABLE.value, Claim.TENDS_TO_ZERO.value)
    assert FloquetAgent().classify(eq).classification is FloquetClass.REAL_ROOT_GUARD_FAILED


@pytest.mark.slow
@pytest.mark.parametrize('label', corpus.golden_labels())
def test_golden_claims_survive_the_oracle(label):
    """Every passed certificate on the golden set must agree with the trajectories."""
    eq = corpus.golden()[label]
    report = certify_all(eq, only=['C1', 'C2', 'T3', 'C7', 'T7', 'T8', 'T9', 'C9'])
    oracle = OracleAgent()
    passed = [cert for cert in report.certificates if cert.passed]
    if any(cert.claim is Claim.EXP_STABLE for cert in passed):
        rate = oracle.empirical_decay_rate(eq).rate
        stable = [cert.criterion for cert in passed if cert.claim is Claim.EXP_STABLE]
        assert rate >= MIN_DECAY_RATE, f"{label}: certified by {stable} but fitted rate {rate}"
    for cert in passed:
        if cert.claim is Claim.NONOSCILLATION_POSITIVITY:
            t0 = cert.witnesses.get('t0', eq.t_start)
            assert oracle.positivity_scan(eq, t0 + 30.0, t0=t0), f"{label}: {cert.criterion} claims positivity"
