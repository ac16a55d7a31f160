"""
Criteria Agent
Turns each explicit sufficient condition for positivity of the fundamental
function or for exponential stability of x'' + a(t) x' + b(t) x = f(t) into a
Certificate, including the searches over the free constants those conditions
only assert to exist.
"""

import math
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.optimize import minimize, minimize_scalar

from coefficients import (CoefficientExpr, Const, EquationSpec, EssBounds, Pos, Prod, QuadratureError, Quot,
                          Scale, Sum, ess_bounds, integrate, p_coefficient, sample_joint)
from integrator import DenseSolution, IntegrationError, integrate_segments

logger = logging.getLogger(__name__)


class Verdict(str, Enum):
    PASS = 'PASS'
    FAIL = 'FAIL'
    INAPPLICABLE = 'INAPPLICABLE'


class Claim(str, Enum):
    NONOSCILLATION_POSITIVITY = 'NONOSCILLATION_POSITIVITY'
    EXP_STABLE = 'EXP_STABLE'
    BOUNDED = 'BOUNDED'
    TENDS_TO_ZERO = 'TENDS_TO_ZERO'


CLAIM_STRENGTH = {
    Claim.EXP_STABLE: 4,
    Claim.TENDS_TO_ZERO: 3,
    Claim.BOUNDED: 2,
    Claim.NONOSCILLATION_POSITIVITY: 1,
}

REFERENCES = {
    'C1': "lambda^2 + a(t) lambda + b(t) <= 0 for one real lambda",
    'C2_LEVIN': "real roots lambda_1(t) <= nu_1 <= lambda_2(t) separated by a constant",
    'T3_1': "a(t) >= integral of b+ over [t0, t]",
    'T3_2': "a(t) >= lambda b+(t) + 1/lambda for one lambda > 0",
    'T3_3': "a >= 0 and int_t0^t exp(-int_s^t (a - lambda)) b+(s) ds <= lambda",
    'C7_1': "a(t) >= a > 0 with summable b+",
    'C7_2': "a(t)^2 >= 4 limsup b+",
    'C7_3': "inf over lambda of limsup (1/lambda) int_0^t exp(-int_s^t (a - lambda)) b+(s) ds < 1",
    'T6': "a >= alpha > 0, b >= beta > 0 and a positive fundamental function",
    'T7': "0 < liminf b <= limsup b < (liminf a)^2 / 2",
    'T8': "||a - A|| ||b/a|| + ||b - B|| below the stability radius of x'' + A x' + B x",
    'T9_1': "perturbation of constant (a, b), a^2 > 4b, weighted by Cauchy-function integral bounds",
    'T9_2': "perturbation of constant (a, b), a^2 < 4b, weighted by Cauchy-function integral bounds",
    'T9_3': "perturbation of constant (a, b), a^2 = 4b, weighted by Cauchy-function integral bounds",
    'C9_BAND': "constant damping a, liminf and limsup of b inside B -+ a sqrt(4B - a^2) / 4",
    'T10': "periodic coefficients, positive mean of p = b - a^2/4 - a'/2, nonoscillation on one period",
    'WITNESS_U': "u(t) >= int_0^t exp(-int_s^t (a - u)) b(s) ds with u >= 0",
    'TA_1': "test function v >= 0, Lv <= 0, v(0) + v(omega) - int Lv > 0",
}


@dataclass
class Certificate:
    """One criterion's verdict; FAIL never asserts instability"""
    criterion: str
    verdict: Verdict
    claim: Optional[Claim] = None
    witnesses: Dict[str, float] = field(default_factory=dict)
    margin: Optional[float] = None
    window: Optional[Tuple[float, float]] = None
    horizon: Optional[float] = None
    rigorous: bool = False
    notes: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.verdict is Verdict.PASS

    @property
    def reference(self) -> str:
        return REFERENCES.get(self.criterion, '')

    def to_dict(self) -> Dict[str, Any]:
        return {
            'criterion': self.criterion,
            'verdict': self.verdict.value,
            'claim': self.claim.value if self.claim is not None else None,
            'witnesses': dict(self.witnesses),
            'margin': self.margin,
            'window': list(self.window) if self.window is not None else None,
            'horizon': self.horizon,
            'rigorous': self.rigorous,
            'reference': self.reference,
            'notes': list(self.notes),
        }


@dataclass(frozen=True)
class Lemma2Bounds:
    """K0 bounds the integral of |X(t, s)| ds, K1 that of |dX/dt (t, s)| ds, for x'' + a x' + b x = 0"""
    K0: float
    K1: float
    case: str


T9_CASES = {'a^2>4b': 'T9_1', 'a^2<4b': 'T9_2', 'a^2=4b': 'T9_3'}


def lemma2_bounds(a: float, b: float) -> Lemma2Bounds:
    if a <= 0 or b <= 0:
        raise ValueError(f"Cauchy-function bounds need a > 0 and b > 0, got a={a!r}, b={b!r}")
    disc = a * a - 4.0 * b
    if disc > 0:
        r = math.sqrt(disc)
        return Lemma2Bounds(1.0 / b, 2.0 * a / (r * (a - r)), 'a^2>4b')
    if disc < 0:
        r = math.sqrt(-disc)
        return Lemma2Bounds(4.0 / (a * r), 2.0 * (a + r) / (a * r), 'a^2<4b')
    return Lemma2Bounds(1.0 / b, 2.0 / math.sqrt(b), 'a^2=4b')


# ---------------------------------------------------------------------------
# Witness inequality m' = b - (a - u) m
# ---------------------------------------------------------------------------

@dataclass
class WitnessRun:
    ts: np.ndarray
    m: np.ndarray
    u: np.ndarray
    stopped: bool

    @property
    def excess(self) -> float:
        return float(np.max(self.m - self.u))

    def last_exceedance(self) -> Optional[float]:
        above = np.nonzero(self.m > self.u)[0]
        return float(self.ts[above[-1]]) if above.size else None


def solve_witness(a: CoefficientExpr, b: CoefficientExpr, u: CoefficientExpr, t0: float, T: float,
                  tol: float = 1e-8, ceiling: Optional[float] = None, per_unit: int = 10) -> WitnessRun:
    """
    m(t) = int_t0^t exp(-int_s^t (a - u)) b(s) ds through m' = b - (a - u) m, m(t0) = 0,
    reported on the solver nodes plus a uniform grid; stops once m reaches `ceiling`.
    """
    def factory(lo, hi):
        a_t, b_t, u_t = (e.restrict(lo, hi).value for e in (a, b, u))

        def rhs(t, y):
            return np.array([b_t(t) - (a_t(t) - u_t(t)) * y[0]])
        return rhs

    hit = None
    if ceiling is not None:
        def hit(t, y):
            return y[0] - ceiling
        hit.terminal = True
        hit.direction = 1

    ts, ys, pieces = integrate_segments(factory, [a, b, u], t0, T, (0.0,), tol, max_step=1.0, events=hit)
    dense = DenseSolution(ts, ys, pieces)
    end = float(ts[-1])
    grid = np.union1d(ts, np.linspace(t0, end, max(2, int(math.ceil((end - t0) * per_unit)) + 1)))
    return WitnessRun(grid, dense.states_at(grid)[0], u.values(grid), stopped=end < T)


def _lambda_search(score: Callable[[float], float], lo: float, hi: float, n: int) -> Tuple[float, float]:
    """Log-grid scan of score over [lo, hi], refined around the best grid point."""
    grid = np.geomspace(lo, hi, n)
    scores = [score(float(lam)) for lam in grid]
    i = int(np.argmin(scores))
    best_lam, best = float(grid[i]), float(scores[i])
    left, right = math.log(grid[max(i - 1, 0)]), math.log(grid[min(i + 1, n - 1)])
    refined = minimize_scalar(lambda z: score(math.exp(z)), bounds=(left, right), method='bounded',
                              options={'xatol': 1e-6})
    if refined.fun < best:
        best_lam, best = math.exp(refined.x), float(refined.fun)
    return best_lam, best


def _closest_condition(witnesses: Dict[str, float]) -> Tuple[int, float]:
    """(condition number, margin) of the failed condition nearest to passing"""
    margins = {k: witnesses[f'c{k}_margin'] for k in (1, 2, 3) if f'c{k}_margin' in witnesses}
    closest = max(margins, key=margins.get)
    return closest, margins[closest]


class CriteriaAgent:
    """
    Runs the explicit criteria on an EquationSpec. Every public cert_* method
    returns a Certificate; numerical failures come back as INAPPLICABLE with the
    error in `notes`.
    """

    DEFAULTS = {
        'tol': 1e-10,
        'witness_tol': 1e-8,
        'horizon': 200.0,
        'margin': 1e-9,
        'density': 1e4,
        'max_samples': 2_000_000,
        'search_T': 500.0,
        'search_periods': 50,
        'restarts': 5,
        'seed': 20090607,
        'lambda_range': (1e-3, 1e3),
        'lambda_grid': 25,
        'summable_tol': 1e-9,
        'mean_tol': 1e-9,
    }

    def __init__(self, config: Optional[Dict] = None):
        self.settings = {**self.DEFAULTS, **(config or {})}
        self.margin = self.settings['margin']

    # -- windows and sampling ------------------------------------------------

    def search_horizon(self, eq: EquationSpec, search_T: Optional[float] = None) -> float:
        if search_T is not None:
            return search_T
        if eq.period is not None:
            return eq.t_start + self.settings['search_periods'] * eq.period
        return self.settings['search_T']

    def pointwise_window(self, eq: EquationSpec, horizon: float) -> Tuple[float, float]:
        if eq.period is not None:
            return eq.t_start, eq.t_start + eq.period
        return eq.t_start, horizon

    def tail_window(self, eq: EquationSpec, search_T: Optional[float] = None) -> Tuple[float, float]:
        """Window standing in for liminf/limsup: one period if periodic, else [T/2, T]."""
        if eq.period is not None:
            return eq.t_start, eq.t_start + eq.period
        T = self.search_horizon(eq, search_T)
        return max(eq.t_start, 0.5 * T), T

    def late_window(self, eq: EquationSpec, T: float) -> Tuple[float, float]:
        if eq.period is not None:
            return T - eq.period, T
        return max(eq.t_start, 0.5 * T), T

    def _bounds(self, expr: CoefficientExpr, lo: float, hi: float) -> EssBounds:
        return ess_bounds(expr, lo, hi, self.settings['density'], self.settings['max_samples'])

    def _samples(self, lo: float, hi: float, *exprs: CoefficientExpr):
        return sample_joint(exprs, lo, hi, self.settings['density'], self.settings['max_samples'])

    def _error_certificate(self, criterion: str, eq: EquationSpec, error: Exception) -> Certificate:
        logger.error(f"Error in {criterion} certification of '{eq.label}': {error}")
        return Certificate(criterion, Verdict.INAPPLICABLE, notes=[str(error)])

    @staticmethod
    def _exact_coefficients(*exprs: CoefficientExpr) -> bool:
        return all(e.is_constant and not e.breakpoints() for e in exprs)

    # -- positivity criteria -------------------------------------------------

    def cert_quadratic_lambda(self, eq: EquationSpec, horizon: Optional[float] = None) -> Certificate:
        try:
            horizon = horizon or self.settings['horizon']
            if horizon <= eq.t_start:
                raise ValueError(f"horizon {horizon} must exceed t_start {eq.t_start}")
            lo, hi = self.pointwise_window(eq, horizon)
            _, (a_s, b_s) = self._samples(lo, hi, eq.a, eq.b)

            def g(lam):
                return float(np.max(lam * lam + lam * a_s + b_s))

            span = float(np.max(np.abs(a_s))) + math.sqrt(float(np.max(np.abs(b_s)))) + 1.0
            opts = {'xatol': 1e-12}
            lam = float(minimize_scalar(g, bounds=(-span, span), method='bounded', options=opts).x)
            if lam >= 0.0:
                negative = float(minimize_scalar(g, bounds=(-span, 0.0), method='bounded', options=opts).x)
                if g(negative) <= self.margin:
                    lam = negative

            check = self._bounds(Sum((Const(lam * lam), Scale(lam, eq.a), eq.b)), lo, hi)
            b_inf = self._bounds(eq.b, lo, hi).inf_val
            witnesses = {'lambda': lam, 'sup_quadratic': check.sup_val, 'b_inf': b_inf}
            if check.sup_val > self.margin:
                return Certificate('C1', Verdict.FAIL, None, witnesses, -check.sup_val, (lo, hi), horizon,
                                   check.rigorous)
            claim = Claim.EXP_STABLE if lam < 0 and b_inf > self.margin else Claim.NONOSCILLATION_POSITIVITY
            return Certificate('C1', Verdict.PASS, claim, witnesses, -check.sup_val, (lo, hi), horizon,
                               check.rigorous)
        except (ValueError, RuntimeError) as e:
            return self._error_certificate('C1', eq, e)

    def cert_levin(self, eq: EquationSpec, horizon: Optional[float] = None) -> Certificate:
        try:
            horizon = horizon or self.settings['horizon']
            lo, hi = self.pointwise_window(eq, horizon) if eq.period is not None \
                else (max(eq.t_start, 0.5 * horizon), horizon)
            ts, (a_s, b_s) = self._samples(lo, hi, eq.a, eq.b)
            rigorous = self._exact_coefficients(eq.a, eq.b)
            disc = 0.25 * a_s * a_s - b_s
            if float(np.min(disc)) < -self.margin:
                where = float(ts[int(np.argmin(disc))])
                return Certificate('C2_LEVIN', Verdict.INAPPLICABLE, None, {'discriminant_min': float(np.min(disc))},
                                   float(np.min(disc)), (lo, hi), horizon, rigorous,
                                   [f"a^2/4 - b is negative near t = {where:.6g}; the roots are not real"])
            root = np.sqrt(np.clip(disc, 0.0, None))
            lam1, lam2 = -0.5 * a_s - root, -0.5 * a_s + root
            nu0, lam1_max = float(np.min(lam1)), float(np.max(lam1))
            lam2_min, nu2 = float(np.min(lam2)), float(np.max(lam2))
            gap = lam2_min - lam1_max
            witnesses = {'nu0': nu0, 'nu1': 0.5 * (lam1_max + lam2_min), 'nu2': nu2, 'gap': gap}
            if gap <= self.margin:
                return Certificate('C2_LEVIN', Verdict.FAIL, None, witnesses, gap, (lo, hi), horizon, rigorous)
            claim = Claim.EXP_STABLE if nu2 < -self.margin else Claim.NONOSCILLATION_POSITIVITY
            return Certificate('C2_LEVIN', Verdict.PASS, claim, witnesses, gap, (lo, hi), horizon, rigorous)
        except (ValueError, RuntimeError) as e:
            return self._error_certificate('C2_LEVIN', eq, e)

    def _witness_score(self, a: CoefficientExpr, b: CoefficientExpr, lam: float, t0: float, T: float) -> float:
        """max m / lambda - 1 on [t0, T] for u = lambda, capped at 1"""
        try:
            run = solve_witness(a, b, Const(lam), t0, T, self.settings['witness_tol'], ceiling=2.0 * lam)
        except IntegrationError:
            return 1.0
        if run.stopped:
            return 1.0
        return min(float(np.max(run.m)) / lam - 1.0, 1.0)

    def cert_thm3(self, eq: EquationSpec, t0: Optional[float] = None, horizon: Optional[float] = None) -> Certificate:
        try:
            t0 = eq.t_start if t0 is None else t0
            horizon = horizon or self.settings['horizon']
            if horizon <= t0:
                raise ValueError(f"horizon {horizon} must exceed t0 {t0}")
            window = (t0, horizon)
            b_plus = Pos(eq.b)
            ts, (a_s, bp_s) = self._samples(t0, horizon, eq.a, b_plus)
            witnesses: Dict[str, float] = {'t0': t0}

            accumulated = cumulative_trapezoid(bp_s, ts, initial=0.0)
            witnesses['c1_margin'] = float(np.min(a_s - accumulated))
            if witnesses['c1_margin'] >= -self.margin:
                return Certificate('T3_1', Verdict.PASS, Claim.NONOSCILLATION_POSITIVITY, witnesses,
                                   witnesses['c1_margin'], window, horizon)

            lo, hi = self.settings['lambda_range']

            def h(lam):
                return float(np.max(lam * bp_s + 1.0 / lam - a_s))

            best = minimize_scalar(lambda z: h(math.exp(z)), bounds=(math.log(lo), math.log(hi)), method='bounded',
                                   options={'xatol': 1e-10})
            witnesses['c2_lambda'] = math.exp(best.x)
            witnesses['c2_margin'] = -h(witnesses['c2_lambda'])
            if witnesses['c2_margin'] >= -self.margin:
                witnesses['lambda'] = witnesses['c2_lambda']
                return Certificate('T3_2', Verdict.PASS, Claim.NONOSCILLATION_POSITIVITY, witnesses,
                                   witnesses['c2_margin'], window, horizon)

            notes = []
            if float(np.min(a_s)) < -self.margin:
                notes.append("a(t) takes negative values; the exponential-weight condition does not apply")
            else:
                lam3, score3 = _lambda_search(lambda lam: self._witness_score(eq.a, b_plus, lam, t0, horizon),
                                              lo, hi, self.settings['lambda_grid'])
                witnesses['c3_lambda'] = lam3
                witnesses['c3_margin'] = -score3
                if -score3 >= -self.margin:
                    witnesses['lambda'] = lam3
                    return Certificate('T3_3', Verdict.PASS, Claim.NONOSCILLATION_POSITIVITY, witnesses,
                                       -score3, window, horizon)

            closest, margin = _closest_condition(witnesses)
            return Certificate(f'T3_{closest}', Verdict.FAIL, None, witnesses, margin, window, horizon, notes=notes)
        except (ValueError, RuntimeError) as e:
            return self._error_certificate('T3_1', eq, e)

    def cert_cor7(self, eq: EquationSpec, search_T: Optional[float] = None) -> Certificate:
        try:
            T = self.search_horizon(eq, search_T)
            start = eq.t_start
            tail = self.tail_window(eq, T)
            a_all = self._bounds(eq.a, start, T)
            if a_all.inf_val < -self.margin:
                return Certificate('C7_1', Verdict.INAPPLICABLE, None, {'a_inf': a_all.inf_val}, None, tail, T,
                                   notes=["a(t) takes negative values"])
            b_plus = Pos(eq.b)
            witnesses: Dict[str, float] = {'a_inf': a_all.inf_val}

            try:
                tail_mass = integrate(b_plus, tail[0], tail[1], tol=1e-8)
            except QuadratureError as e:
                tail_mass = e.estimate
            witnesses['tail_b_plus_integral'] = tail_mass
            witnesses['c1_margin'] = min(a_all.inf_val - self.margin, self.settings['summable_tol'] - tail_mass)
            if a_all.inf_val > self.margin and tail_mass <= self.settings['summable_tol']:
                witnesses['t0'] = start
                return Certificate('C7_1', Verdict.PASS, Claim.NONOSCILLATION_POSITIVITY, witnesses,
                                   a_all.inf_val, tail, T)

            B = self._bounds(b_plus, *tail).sup_val
            a_tail = self._bounds(eq.a, *tail).inf_val
            witnesses.update({'B': B, 'a_tail_inf': a_tail, 'c2_margin': a_tail * a_tail - 4.0 * B})
            if witnesses['c2_margin'] >= -self.margin:
                ts, (a_s,) = self._samples(start, T, eq.a)
                below = np.nonzero(a_s * a_s < 4.0 * B - self.margin)[0]
                witnesses['t0'] = float(ts[below[-1]]) if below.size else start
                return Certificate('C7_2', Verdict.PASS, Claim.NONOSCILLATION_POSITIVITY, witnesses,
                                   witnesses['c2_margin'], tail, T)

            late = self.late_window(eq, T)

            def limsup_score(lam):
                try:
                    run = solve_witness(eq.a, b_plus, Const(lam), start, T, self.settings['witness_tol'],
                                        ceiling=1e6 * lam)
                except IntegrationError:
                    return 1e6
                if run.stopped:
                    return 1e6
                return float(np.max(run.m[run.ts >= late[0]])) / lam - 1.0

            lo, hi = self.settings['lambda_range']
            lam3, score3 = _lambda_search(limsup_score, lo, hi, self.settings['lambda_grid'])
            witnesses.update({'c3_lambda': lam3, 'c3_margin': -score3})
            if -score3 > self.margin:
                run = solve_witness(eq.a, b_plus, Const(lam3), start, T, self.settings['witness_tol'])
                last = run.last_exceedance()
                witnesses['lambda'] = lam3
                witnesses['t0'] = last if last is not None else start
                return Certificate('C7_3', Verdict.PASS, Claim.NONOSCILLATION_POSITIVITY, witnesses, -score3,
                                   late, T)

            closest, margin = _closest_condition(witnesses)
            return Certificate(f'C7_{closest}', Verdict.FAIL, None, witnesses, margin, tail, T)
        except (ValueError, RuntimeError) as e:
            return self._error_certificate('C7_1', eq, e)

    # -- stability criteria --------------------------------------------------

    def cert_thm6(self, eq: EquationSpec, positivity: Optional[Sequence[Certificate]] = None,
                  search_T: Optional[float] = None) -> Certificate:
        try:
            T = self.search_horizon(eq, search_T)
            window = self.pointwise_window(eq, T)
            alpha = self._bounds(eq.a, *window).inf_val
            beta = self._bounds(eq.b, *window).inf_val
            witnesses = {'alpha': alpha, 'beta': beta}
            if alpha <= self.margin or beta <= self.margin:
                return Certificate('T6', Verdict.INAPPLICABLE, None, witnesses, min(alpha, beta), window, T,
                                   notes=["needs a >= alpha > 0 and b >= beta > 0"])
            if positivity is None:
                positivity = [self.cert_quadratic_lambda(eq), self.cert_thm3(eq), self.cert_cor7(eq, search_T)]
            routes = [c for c in positivity
                      if c.passed and c.criterion.split('_')[0] in ('C1', 'T3', 'C7')]
            if not routes:
                return Certificate('T6', Verdict.FAIL, None, witnesses, min(alpha, beta), window, T,
                                   notes=["no positivity certificate for the fundamental function"])
            return Certificate('T6', Verdict.PASS, Claim.EXP_STABLE, witnesses, min(alpha, beta), window, T,
                               notes=[f"positivity from {routes[0].criterion}"])
        except (ValueError, RuntimeError) as e:
            return self._error_certificate('T6', eq, e)

    def cert_thm7(self, eq: EquationSpec, search_T: Optional[float] = None) -> Certificate:
        try:
            window = self.tail_window(eq, search_T)
            a_b = self._bounds(eq.a, *window)
            b_b = self._bounds(eq.b, *window)
            alpha, beta, B = a_b.inf_val, b_b.inf_val, b_b.sup_val
            witnesses = {'alpha': alpha, 'beta': beta, 'B': B}
            margin = min(beta, 0.5 * alpha * alpha - B)
            if alpha > 0:
                witnesses['epsilon'] = min(4.0 * beta / (alpha * alpha), 2.0 - 4.0 * B / (alpha * alpha))
            rigorous = a_b.rigorous and b_b.rigorous
            horizon = window[1]
            if alpha > self.margin and margin > self.margin:
                return Certificate('T7', Verdict.PASS, Claim.EXP_STABLE, witnesses, margin, window, horizon, rigorous)
            return Certificate('T7', Verdict.FAIL, None, witnesses, margin, window, horizon, rigorous)
        except (ValueError, RuntimeError) as e:
            return self._error_certificate('T7', eq, e)

    def _norm_window(self, eq: EquationSpec, t0: Optional[float]) -> Tuple[float, float]:
        if eq.period is not None:
            return eq.t_start, eq.t_start + eq.period
        lo, hi = self.tail_window(eq)
        return (lo if t0 is None else t0), hi

    @staticmethod
    def _sup_dist(bounds: EssBounds, c: float) -> float:
        return max(abs(bounds.inf_val - c), abs(bounds.sup_val - c))

    def _norm_data(self, eq: EquationSpec, window: Tuple[float, float]) -> Dict[str, Any]:
        a_b = self._bounds(eq.a, *window)
        b_b = self._bounds(eq.b, *window)
        data = {'a': a_b, 'b': b_b}
        if a_b.inf_val > 0:
            ratio = self._bounds(Quot(eq.b, eq.a, check=False), *window)
            data['ratio_norm'] = max(abs(ratio.inf_val), abs(ratio.sup_val))
            data['rigorous'] = a_b.rigorous and b_b.rigorous and ratio.rigorous
        return data

    def _thm8(self, data: Dict[str, Any], A: float, B: float) -> Dict[str, float]:
        lhs = self._sup_dist(data['a'], A) * data['ratio_norm'] + self._sup_dist(data['b'], B)
        rhs = B if A * A >= 4.0 * B else A * math.sqrt(4.0 * B - A * A) / 4.0
        return {'A': A, 'B': B, 'lhs': lhs, 'rhs': rhs, 'margin': rhs - lhs}

    def thm8_margin(self, eq: EquationSpec, A: float, B: float, t0: Optional[float] = None) -> Dict[str, float]:
        """RHS - LHS of the (A, B) perturbation inequality at a fixed witness"""
        data = self._norm_data(eq, self._norm_window(eq, t0))
        if 'ratio_norm' not in data:
            raise ValueError("damping must stay positive for the b/a norm")
        return self._thm8(data, A, B)

    def _restart_points(self, center: np.ndarray) -> List[np.ndarray]:
        rng = np.random.default_rng(self.settings['seed'])
        points = [center]
        for _ in range(self.settings['restarts'] - 1):
            points.append(center * (1.0 + 0.5 * rng.uniform(-1.0, 1.0, size=center.shape)))
        return points

    def _nelder_mead(self, objective: Callable[[np.ndarray], float], center: np.ndarray) -> Tuple[np.ndarray, float]:
        best_x, best_f = center, objective(center)
        for x0 in self._restart_points(center):
            res = minimize(objective, x0, method='Nelder-Mead',
                           options={'xatol': 1e-10, 'fatol': 1e-12, 'maxiter': 4000})
            if res.fun < best_f:
                best_x, best_f = np.asarray(res.x), float(res.fun)
        return best_x, best_f

    def cert_thm8(self, eq: EquationSpec, t0: Optional[float] = None,
                  witness: Optional[Tuple[float, float]] = None) -> Certificate:
        try:
            window = self._norm_window(eq, t0)
            data = self._norm_data(eq, window)
            a_b, b_b = data['a'], data['b']
            if a_b.inf_val <= self.margin or b_b.inf_val < -self.margin:
                return Certificate('T8', Verdict.INAPPLICABLE, None, {'a_inf': a_b.inf_val, 'b_inf': b_b.inf_val},
                                   None, window, window[1], notes=["needs a >= alpha > 0 and b >= 0"])

            chosen = None
            if witness is not None:
                chosen = self._thm8(data, *witness)
                if chosen['margin'] <= self.margin:
                    logger.info(f"'{eq.label}': witness (A, B) = {witness} misses by {-chosen['margin']:.3g}; searching")
                    chosen = None
            if chosen is None:
                def objective(x):
                    A, B = x
                    if A <= 0 or B <= 0:
                        return 1e6 + abs(A) + abs(B)
                    return -self._thm8(data, A, B)['margin']
                center = np.array([0.5 * (a_b.inf_val + a_b.sup_val), max(0.5 * (b_b.inf_val + b_b.sup_val), 1e-6)])
                x, _ = self._nelder_mead(objective, center)
                chosen = self._thm8(data, float(x[0]), float(x[1]))

            margin = chosen.pop('margin')
            verdict = Verdict.PASS if margin > self.margin else Verdict.FAIL
            return Certificate('T8', verdict, Claim.EXP_STABLE if verdict is Verdict.PASS else None, chosen, margin,
                               window, window[1], data.get('rigorous', False))
        except (ValueError, RuntimeError) as e:
            return self._error_certificate('T8', eq, e)

    def _thm9(self, data: Dict[str, Any], a0: float, b0: float) -> Dict[str, Any]:
        bounds = lemma2_bounds(a0, b0)
        load = self._sup_dist(data['a'], a0) * bounds.K1 + self._sup_dist(data['b'], b0) * bounds.K0
        return {'a': a0, 'b': b0, 'K0': bounds.K0, 'K1': bounds.K1, 'margin': 1.0 - load, 'case': bounds.case}

    def thm9_margin(self, eq: EquationSpec, a0: float, b0: float, t0: Optional[float] = None) -> Dict[str, Any]:
        """1 - (||a - a0|| K1 + ||b - b0|| K0) at a fixed constant pair"""
        return self._thm9(self._norm_data(eq, self._norm_window(eq, t0)), a0, b0)

    def cert_thm9(self, eq: EquationSpec, t0: Optional[float] = None,
                  witness: Optional[Tuple[float, float]] = None) -> Certificate:
        try:
            window = self._norm_window(eq, t0)
            data = self._norm_data(eq, window)
            a_b, b_b = data['a'], data['b']
            if a_b.inf_val <= self.margin or b_b.inf_val < -self.margin:
                return Certificate('T9_1', Verdict.INAPPLICABLE, None, {'a_inf': a_b.inf_val, 'b_inf': b_b.inf_val},
                                   None, window, window[1], notes=["needs a >= alpha > 0 and b >= 0"])

            center = np.array([0.5 * (a_b.inf_val + a_b.sup_val), max(0.5 * (b_b.inf_val + b_b.sup_val), 1e-6)])
            candidates = [self._thm9(data, float(center[0]), float(center[1]))]
            if witness is not None:
                candidates.append(self._thm9(data, *witness))

            def objective(x):
                a0, b0 = x
                if a0 <= 0 or b0 <= 0:
                    return 1e6 + abs(a0) + abs(b0)
                return -self._thm9(data, a0, b0)['margin']

            x, _ = self._nelder_mead(objective, center)
            candidates.append(self._thm9(data, float(x[0]), float(x[1])))

            # the critically damped family b = a^2/4 is a separate case with finite constants
            top = 2.0 * a_b.sup_val + 1.0
            double = minimize_scalar(lambda a0: objective((a0, 0.25 * a0 * a0)), bounds=(1e-6, top),
                                     method='bounded', options={'xatol': 1e-10})
            candidates.append(self._thm9(data, float(double.x), 0.25 * float(double.x) ** 2))

            best = max(candidates, key=lambda c: c['margin'])
            case = best.pop('case')
            margin = best.pop('margin')
            criterion = T9_CASES[case]
            verdict = Verdict.PASS if margin > self.margin else Verdict.FAIL
            return Certificate(criterion, verdict, Claim.EXP_STABLE if verdict is Verdict.PASS else None, best,
                               margin, window, window[1], data.get('rigorous', False))
        except (ValueError, RuntimeError) as e:
            return self._error_certificate('T9_1', eq, e)

    def cert_cor9(self, eq: EquationSpec, t0: Optional[float] = None) -> Certificate:
        try:
            window = self._norm_window(eq, t0)
            if eq.a.breakpoints() or not eq.a.is_constant:
                return Certificate('C9_BAND', Verdict.INAPPLICABLE, None, {}, None, window, window[1],
                                   notes=["damping is not constant"])
            a0 = eq.a.value(0.0)
            if a0 <= self.margin:
                return Certificate('C9_BAND', Verdict.INAPPLICABLE, None, {'a': a0}, None, window, window[1],
                                   notes=["damping must be positive"])
            b_b = self._bounds(eq.b, *window)
            m, M = b_b.inf_val, b_b.sup_val

            def radius(B):
                return a0 * math.sqrt(max(4.0 * B - a0 * a0, 0.0)) / 4.0

            def slack(B):
                r = radius(B)
                return min(m - (B - r), (B + r) - M)

            lo, hi = 0.25 * a0 * a0, max(M, 0.25 * a0 * a0) + a0 * a0 + 4.0 * abs(M) + 1.0
            grid = np.linspace(lo, hi, 401)
            i = int(np.argmax([slack(B) for B in grid]))
            refined = minimize_scalar(lambda B: -slack(B), bounds=(grid[max(i - 1, 0)], grid[min(i + 1, 400)]),
                                      method='bounded', options={'xatol': 1e-12})
            B = float(refined.x) if -refined.fun >= slack(grid[i]) else float(grid[i])
            margin = min(slack(B), m)
            witnesses = {'a': a0, 'B': B, 'radius': radius(B), 'm': m, 'M': M}
            verdict = Verdict.PASS if margin > self.margin else Verdict.FAIL
            return Certificate('C9_BAND', verdict, Claim.EXP_STABLE if verdict is Verdict.PASS else None, witnesses,
                               margin, window, window[1], b_b.rigorous)
        except (ValueError, RuntimeError) as e:
            return self._error_certificate('C9_BAND', eq, e)

    def cert_thm10(self, eq: EquationSpec) -> Certificate:
        try:
            if eq.period is None:
                return Certificate('T10', Verdict.INAPPLICABLE, notes=["equation has no declared period"])
            if eq.a.breakpoints():
                return Certificate('T10', Verdict.INAPPLICABLE, notes=["damping must be absolutely continuous"])
            omega = eq.period
            lo, hi = eq.t_start, eq.t_start + omega
            window = (lo, hi)
            tol = self.settings['tol']
            p = p_coefficient(eq)
            int_p = integrate(p, lo, hi, tol)
            int_a = integrate(eq.a, lo, hi, tol)
            witnesses: Dict[str, float] = {'omega': omega, 'int_p': int_p, 'int_a': int_a}
            if int_a < -self.settings['mean_tol']:
                return Certificate('T10', Verdict.INAPPLICABLE, None, witnesses, None, window, hi,
                                   notes=["mean damping is negative"])
            claim = Claim.TENDS_TO_ZERO if int_a > self.settings['mean_tol'] else Claim.BOUNDED
            if int_p <= self.margin:
                return Certificate('T10', Verdict.FAIL, None, witnesses, int_p, window, hi,
                                   notes=["mean of p over one period is not positive"])

            b_plus = Pos(eq.b)
            ts, (a_s, bp_s) = self._samples(lo, hi, eq.a, b_plus)
            witnesses['c1_margin'] = float(np.min(a_s - cumulative_trapezoid(bp_s, ts, initial=0.0)))
            if witnesses['c1_margin'] >= -self.margin:
                witnesses['condition'] = 1.0
                return Certificate('T10', Verdict.PASS, claim, witnesses, min(int_p, witnesses['c1_margin']),
                                   window, hi)

            if float(np.min(a_s)) >= -self.margin:
                lam_lo, lam_hi = self.settings['lambda_range']
                lam, score = _lambda_search(lambda x: self._witness_score(eq.a, b_plus, x, lo, hi),
                                            lam_lo, lam_hi, self.settings['lambda_grid'])
                witnesses.update({'c2_lambda': lam, 'c2_margin': -score})
                if -score >= -self.margin:
                    witnesses['condition'] = 2.0
                    witnesses['lambda'] = lam
                    return Certificate('T10', Verdict.PASS, claim, witnesses, min(int_p, -score), window, hi)

            try:
                int_p_plus = integrate(Pos(p), lo, hi, 1e-9)
            except QuadratureError as e:
                logger.warning(f"'{eq.label}': integral of p+ only reached {e.error_bound:.3g}")
                int_p_plus = e.estimate
            witnesses['int_p_plus'] = int_p_plus
            witnesses['c3_margin'] = 4.0 / omega - int_p_plus
            if witnesses['c3_margin'] >= -self.margin:
                witnesses['condition'] = 3.0
                return Certificate('T10', Verdict.PASS, claim, witnesses, min(int_p, witnesses['c3_margin']),
                                   window, hi)
            margins = [witnesses[k] for k in ('c1_margin', 'c2_margin', 'c3_margin') if k in witnesses]
            return Certificate('T10', Verdict.FAIL, None, witnesses, max(margins), window, hi)
        except (ValueError, RuntimeError) as e:
            return self._error_certificate('T10', eq, e)

    # -- user witnesses ------------------------------------------------------

    def _witness_u_run(self, eq: EquationSpec, u: CoefficientExpr, horizon: float) -> Tuple[float, WitnessRun]:
        u_min = self._bounds(u, eq.t_start, horizon).inf_val
        if u_min < -self.margin:
            raise ValueError(f"witness u must be nonnegative; inf u = {u_min:.6g}")
        return u_min, solve_witness(eq.a, eq.b, u, eq.t_start, horizon, self.settings['witness_tol'])

    def verify_witness_u(self, eq: EquationSpec, u: CoefficientExpr, horizon: Optional[float] = None) -> bool:
        """u(t) >= int_0^t exp(-int_s^t (a - u)) b(s) ds on a dense grid of [t_start, horizon]"""
        try:
            _, run = self._witness_u_run(eq, u, horizon or self.settings['horizon'])
        except IntegrationError as e:
            logger.info(f"'{eq.label}': witness inequality integration failed: {e}")
            return False
        return run.excess <= self.margin

    def cert_witness_u(self, eq: EquationSpec, u: CoefficientExpr, horizon: Optional[float] = None) -> Certificate:
        horizon = horizon or self.settings['horizon']
        window = (eq.t_start, horizon)
        try:
            u_min, run = self._witness_u_run(eq, u, horizon)
        except ValueError as e:
            return Certificate('WITNESS_U', Verdict.INAPPLICABLE, None, {}, None, window, horizon, notes=[str(e)])
        except RuntimeError as e:
            return self._error_certificate('WITNESS_U', eq, e)
        witnesses = {'u_min': u_min, 'max_excess': run.excess}
        verdict = Verdict.PASS if run.excess <= self.margin else Verdict.FAIL
        return Certificate('WITNESS_U', verdict, Claim.NONOSCILLATION_POSITIVITY if verdict is Verdict.PASS else None,
                           witnesses, -run.excess, window, horizon)

    def verify_test_function(self, eq: EquationSpec, v: CoefficientExpr, omega: float) -> Certificate:
        """v >= 0 and Lv <= 0 on [t_start, t_start + omega] with v(0) + v(omega) - int Lv > 0"""
        lo, hi = eq.t_start, eq.t_start + omega
        try:
            if v.breakpoints():
                return Certificate('TA_1', Verdict.INAPPLICABLE, None, {}, None, (lo, hi), hi,
                                   notes=["test function needs an absolutely continuous derivative"])
            dv = v.derivative()
            Lv = Sum((dv.derivative(), Prod((eq.a, dv)), Prod((eq.b, v))))
            v_b = self._bounds(v, lo, hi)
            L_b = self._bounds(Lv, lo, hi)
            boundary = v.value(lo) + v.value(hi) - integrate(Lv, lo, hi, self.settings['tol'])
            witnesses = {'omega': omega, 'v_min': v_b.inf_val, 'Lv_max': L_b.sup_val, 'boundary_sum': boundary}
            margin = min(v_b.inf_val, -L_b.sup_val, boundary)
            passed = v_b.inf_val >= -self.margin and L_b.sup_val <= self.margin and boundary > self.margin
            verdict = Verdict.PASS if passed else Verdict.FAIL
            return Certificate('TA_1', verdict, Claim.NONOSCILLATION_POSITIVITY if passed else None, witnesses,
                               margin, (lo, hi), hi, v_b.rigorous and L_b.rigorous)
        except (ValueError, RuntimeError) as e:
            return self._error_certificate('TA_1', eq, e)
