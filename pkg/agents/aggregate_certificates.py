"""
Certificate Aggregation Layer
Runs every applicable criterion on one equation and reduces the certificates
to a single summary verdict.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence

from coefficients import CoefficientExpr, EquationSpec
from integrator import parallel_map
from agents.criteria_agent import CLAIM_STRENGTH, Certificate, CriteriaAgent, Verdict

logger = logging.getLogger(__name__)

CRITERION_ORDER = ('C1', 'C2', 'T3', 'C7', 'T6', 'T7', 'T8', 'T9', 'C9', 'T10', 'WITNESS_U', 'TA_1')

UNDECIDED = 'UNDECIDED'


@dataclass
class CertificationReport:
    label: str
    certificates: List[Certificate]
    summary: str = UNDECIDED
    supporting: List[str] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)

    @property
    def inapplicable_only(self) -> bool:
        return bool(self.certificates) and all(c.verdict is Verdict.INAPPLICABLE for c in self.certificates)

    def by_criterion(self, prefix: str) -> Optional[Certificate]:
        for cert in self.certificates:
            if cert.criterion == prefix or cert.criterion.startswith(prefix + '_'):
                return cert
        return None

    def to_dict(self) -> Dict[str, Any]:
        return {
            'label': self.label,
            'summary': self.summary,
            'supporting': list(self.supporting),
            'certificates': [c.to_dict() for c in self.certificates],
            'notes': list(self.notes),
        }


class CertificateAggregator:
    """
    Combines the criteria agent's certificates in a fixed order. Independent
    criteria may run on worker threads; the order of the output never depends
    on which finished first.
    """

    def __init__(self, config: Optional[Dict] = None):
        self.agent = CriteriaAgent(config)
        self.settings = self.agent.settings

    def _runners(self, eq: EquationSpec, witnesses: Dict[str, Any]) -> Dict[str, Callable[[], Certificate]]:
        horizon = self.settings['horizon']
        t0 = witnesses.get('t0')
        runners = {
            'C1': lambda: self.agent.cert_quadratic_lambda(eq, horizon),
            'C2': lambda: self.agent.cert_levin(eq, horizon),
            'T3': lambda: self.agent.cert_thm3(eq, t0, horizon),
            'C7': lambda: self.agent.cert_cor7(eq),
            'T7': lambda: self.agent.cert_thm7(eq),
            'T8': lambda: self.agent.cert_thm8(eq, t0, witnesses.get('T8')),
            'T9': lambda: self.agent.cert_thm9(eq, t0, witnesses.get('T9')),
            'C9': lambda: self.agent.cert_cor9(eq, t0),
            'T10': lambda: self.agent.cert_thm10(eq),
        }
        u: Optional[CoefficientExpr] = witnesses.get('u')
        if u is not None:
            runners['WITNESS_U'] = lambda: self.agent.cert_witness_u(eq, u, horizon)
        v: Optional[CoefficientExpr] = witnesses.get('v')
        if v is not None:
            omega = witnesses.get('v_omega') or eq.period
            if omega is None:
                logger.warning(f"'{eq.label}': test function given without an interval length; skipping it")
            else:
                runners['TA_1'] = lambda: self.agent.verify_test_function(eq, v, omega)
        return runners

    def aggregate(self, eq: EquationSpec, witnesses: Optional[Dict[str, Any]] = None,
                  only: Optional[Sequence[str]] = None) -> CertificationReport:
        witnesses = witnesses or {}
        selected = [name for name in CRITERION_ORDER if only is None or name in only]
        runners = self._runners(eq, witnesses)
        independent = [name for name in selected if name in runners]

        results = dict(zip(independent, parallel_map(lambda name: runners[name](), independent)))
        if 'T6' in selected:
            positivity = [results[name] for name in ('C1', 'T3', 'C7') if name in results]
            results['T6'] = self.agent.cert_thm6(eq, positivity or None)

        certificates = [results[name] for name in selected if name in results]
        report = CertificationReport(eq.label, certificates)
        self._summarize(report)
        logger.info(f"'{eq.label}': {len(certificates)} certificates, summary {report.summary}"
                    + (f" via {', '.join(report.supporting)}" if report.supporting else ''))
        return report

    @staticmethod
    def _summarize(report: CertificationReport) -> None:
        """Strongest PASS claim wins; `supporting` lists every criterion that reached it, in run order."""
        passed = [c for c in report.certificates if c.passed and c.claim is not None]
        if not passed:
            return
        strongest = max(CLAIM_STRENGTH[c.claim] for c in passed)
        winners = [c for c in passed if CLAIM_STRENGTH[c.claim] == strongest]
        report.summary = winners[0].claim.value
        report.supporting = [c.criterion for c in winners]


def certify_all(eq: EquationSpec, config: Optional[Dict] = None, witnesses: Optional[Dict[str, Any]] = None,
                only: Optional[Sequence[str]] = None) -> CertificationReport:
    return CertificateAggregator(config).aggregate(eq, witnesses, only)
