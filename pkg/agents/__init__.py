"""Analysis agents: stability criteria, Floquet analysis and the numerical oracle."""

from agents.criteria_agent import CriteriaAgent, Certificate, Claim, Verdict, lemma2_bounds
from agents.floquet_agent import FloquetAgent, FloquetResult
from agents.oracle_agent import OracleAgent, DecayEstimate
from agents.aggregate_certificates import CertificateAggregator, certify_all

__all__ = [
    'CriteriaAgent', 'Certificate', 'Claim', 'Verdict', 'lemma2_bounds',
    'FloquetAgent', 'FloquetResult',
    'OracleAgent', 'DecayEstimate',
    'CertificateAggregator', 'certify_all',
]
