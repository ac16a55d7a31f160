"""
Oracle Agent
Independent numerical evidence for certificate claims: decay-rate fitting,
positivity scans of the fundamental function, the bound 0 <= int X b <= 1,
comparison of dominated equations, the Y-representation identities and the
sign pattern of Green's kernels on concrete instances.
"""

import math
import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from coefficients import Const, EquationSpec, cumulative_integral, ess_bounds, sample_joint, segments
from integrator import (GreenKernel, IntegrationError, cauchy_row, find_zeros, fundamental_function,
                        fundamental_system, integro_fundamental, parallel_map, propagate_matrix, row_integral,
                        solve_ivp)

logger = logging.getLogger(__name__)


class InapplicableError(ValueError):
    """A hypothesis of the requested check does not hold"""


@dataclass
class DecayEstimate:
    """Fit of log E(t) ~ log K - rate (t - t_start) for the envelope E of the fundamental matrix"""
    rate: float
    K: float
    residual: float
    horizon: float
    method: str = 'windowed-svd-lsq'

    def to_dict(self) -> Dict[str, Any]:
        return {'rate': self.rate, 'K': self.K, 'residual': self.residual, 'horizon': self.horizon,
                'method': self.method}


@dataclass
class ChainReport:
    """Assertions about one interval [0, omega]: positivity, Green's sign, zero counts, interpolation sign"""
    omega: float
    positivity: bool
    green_negative: bool
    green_max: float
    max_zeros: int
    interpolation_regular: bool
    interpolation_points: Tuple[float, float]
    notes: List[str] = field(default_factory=list)

    @property
    def consistent(self) -> bool:
        if not self.positivity:
            return True
        return self.green_negative and self.max_zeros <= 1 and self.interpolation_regular

    def to_dict(self) -> Dict[str, Any]:
        return {
            'omega': self.omega,
            'positivity': self.positivity,
            'green_negative': self.green_negative,
            'green_max': self.green_max,
            'max_zeros': self.max_zeros,
            'interpolation_regular': self.interpolation_regular,
            'interpolation_points': list(self.interpolation_points),
            'consistent': self.consistent,
            'notes': list(self.notes),
        }


class OracleAgent:
    """Numerical ground truth for x'' + a x' + b x = f, independent of the criteria"""

    DEFAULTS = {
        'tol': 1e-10,
        'horizon': 200.0,
        'grid': 50,
        'scan_T': 20.0,
        'decay_window': 1.0,
        'fan_size': 32,
        'gl_nodes': 12,
        'gl_panel': 1.0,
        'compare_rtol': 1e-8,
        'margin': 1e-9,
        'bounded_growth': 2.0,
        'density': 1e4,
        'max_samples': 2_000_000,
    }

    def __init__(self, config: Optional[Dict] = None):
        self.settings = {**self.DEFAULTS, **(config or {})}
        self.tol = self.settings['tol']

    # -- decay ----------------------------------------------------------------

    def empirical_decay_rate(self, eq: EquationSpec, horizon: Optional[float] = None) -> DecayEstimate:
        """
        Propagates the fundamental matrix window by window, renormalizing after each
        window, and fits the log of its largest singular value on the second half.
        """
        horizon = horizon or self.settings['horizon']
        homogeneous = eq.without_forcing()
        lo = eq.t_start
        count = max(2, int(math.ceil(horizon / self.settings['decay_window'])))
        edges = np.linspace(lo, lo + horizon, count + 1)

        matrix = np.eye(2)
        log_scale = 0.0
        log_envelope = np.empty(count)
        try:
            for k, (w0, w1) in enumerate(zip(edges[:-1], edges[1:])):
                matrix = propagate_matrix(homogeneous, w0, w1, self.tol) @ matrix
                norm = float(np.linalg.norm(matrix, 2))
                if norm == 0.0 or not math.isfinite(norm):
                    raise IntegrationError("fundamental matrix degenerated", float(w0))
                log_scale += math.log(norm)
                matrix /= norm
                log_envelope[k] = log_scale
        except IntegrationError as e:
            logger.warning(f"'{eq.label}': envelope overflow near t = {e.last_t:.6g}")
            return DecayEstimate(-math.inf, math.inf, math.nan, horizon, 'overflow')

        times = edges[1:]
        tail = times >= lo + 0.5 * horizon
        slope, intercept = np.polyfit(times[tail], log_envelope[tail], 1)
        fitted = intercept + slope * times[tail]
        residual = float(np.sqrt(np.mean((log_envelope[tail] - fitted) ** 2)))
        estimate = DecayEstimate(float(-slope), float(math.exp(intercept + slope * lo)), residual, horizon)
        logger.info(f"'{eq.label}': fitted decay rate {estimate.rate:.6g} (residual {residual:.3g})")
        return estimate

    # -- positivity and the integral bound ---------------------------------------

    def _row_positive(self, eq: EquationSpec, s: float, T: float, grid: int, include_y: bool) -> bool:
        checks = [fundamental_function(eq, s, T, self.tol)]
        if include_y:
            checks.append(integro_fundamental(eq, s, T, self.tol))
        dense = np.linspace(s, T, grid + 1)[1:]
        for traj in checks:
            if np.any(traj.ys[0][traj.ts > s] <= 0.0) or np.any(traj.x(dense) <= 0.0):
                logger.debug(f"'{eq.label}': kernel row from s = {s:.6g} leaves the positive cone")
                return False
        return True

    def positivity_scan(self, eq: EquationSpec, T: float, grid: Optional[int] = None, t0: Optional[float] = None,
                        include_y: bool = False) -> bool:
        """X(t, s) > 0 for every sampled s in [t0, T) and t in (s, T]; optionally Y(t, s) as well."""
        grid = grid or self.settings['grid']
        if grid < 20:
            raise ValueError(f"positivity scan needs at least 20 grid points, got {grid}")
        t0 = eq.t_start if t0 is None else t0
        homogeneous = eq.without_forcing()
        starts = t0 + (T - t0) * np.arange(grid) / grid
        rows = parallel_map(lambda s: self._row_positive(homogeneous, float(s), T, grid, include_y), starts)
        return all(rows)

    def eq34_profile(self, eq: EquationSpec, ts) -> np.ndarray:
        """I(t) = integral of X(t, s) b(s) over s in [t_start, t] at each t"""
        homogeneous = eq.without_forcing()
        lo = eq.t_start
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        return np.array(parallel_map(
            lambda t: row_integral(homogeneous, float(t), lo, self.tol, weight=eq.b) if t > lo else 0.0, ts))

    def check_eq34(self, eq: EquationSpec, T: float, grid: Optional[int] = None) -> Tuple[float, float]:
        """(min, max) of I(t) on a uniform grid of [t_start, T]; meaningful when X is positive."""
        grid = grid or self.settings['grid']
        values = self.eq34_profile(eq, np.linspace(eq.t_start, T, grid + 1))
        return float(values.min()), float(values.max())

    # -- comparison -----------------------------------------------------------

    def _check_dominance(self, base: EquationSpec, dominated: EquationSpec, T: float) -> None:
        _, (a, b, a1, b1) = sample_joint([base.a, base.b, dominated.a, dominated.b], base.t_start, T,
                                         self.settings['density'], self.settings['max_samples'])
        slack = -self.settings['margin']
        failures = [name for name, gap in (('a >= 0', a), ('a1 >= a', a1 - a), ('b1 >= 0', b1), ('b >= b1', b - b1))
                    if float(np.min(gap)) < slack]
        if failures:
            raise InapplicableError(f"comparison hypotheses fail: {', '.join(failures)}")

    def _within(self, lower: np.ndarray, upper: np.ndarray) -> bool:
        scale = max(1.0, float(np.max(np.abs(lower))), float(np.max(np.abs(upper))))
        return bool(np.all(lower <= upper + self.settings['compare_rtol'] * scale))

    def comparison_check(self, base: EquationSpec, dominated: EquationSpec, T: float,
                         grid: Optional[int] = None) -> bool:
        """
        With a1 >= a >= 0, b >= b1 >= 0 and X positive: x1 <= v1, x2 <= v2 and X <= V.
        When both equations carry a forcing term, also x >= v for the base
        coefficients driven by f >= f1 from zero data.
        """
        grid = grid or self.settings['grid']
        lo = base.t_start
        self._check_dominance(base, dominated, T)
        if not self.positivity_scan(base, T, max(grid, 20)):
            raise InapplicableError("fundamental function of the base equation is not positive")

        ts = np.linspace(lo, T, grid + 1)
        pair = fundamental_system(base, lo, T, self.tol)
        other = fundamental_system(dominated, lo, T, self.tol)
        ordered = self._within(pair.x1.x(ts), other.x1.x(ts)) and self._within(pair.x2.x(ts), other.x2.x(ts))

        def row(s):
            t_row = ts[ts > s]
            X = fundamental_function(base.without_forcing(), s, T, self.tol).x(t_row)
            V = fundamental_function(dominated.without_forcing(), s, T, self.tol).x(t_row)
            return self._within(X, V)

        ordered = ordered and all(parallel_map(row, [float(s) for s in ts[:-1]]))

        if base.f is not None and dominated.f is not None:
            _, (f, f1) = sample_joint([base.f, dominated.f], lo, T, self.settings['density'],
                                      self.settings['max_samples'])
            if float(np.min(f - f1)) < -self.settings['margin']:
                raise InapplicableError("forced comparison needs f >= f1")
            x = solve_ivp(base, lo, 0.0, 0.0, T, self.tol).x(ts)
            v = solve_ivp(replace(base, f=dominated.f), lo, 0.0, 0.0, T, self.tol).x(ts)
            ordered = ordered and self._within(v, x)
        return ordered

    # -- identities through Y ---------------------------------------------------

    def _gl_nodes(self, eq: EquationSpec, lo: float, hi: float) -> Tuple[np.ndarray, np.ndarray]:
        nodes, weights = np.polynomial.legendre.leggauss(self.settings['gl_nodes'])
        xs, ws = [], []
        for a, b in segments([eq.a, eq.b], lo, hi):
            pieces = max(1, int(math.ceil((b - a) / self.settings['gl_panel'])))
            for p0, p1 in zip(np.linspace(a, b, pieces + 1)[:-1], np.linspace(a, b, pieces + 1)[1:]):
                half = 0.5 * (p1 - p0)
                xs.append(p0 + half * (nodes + 1.0))
                ws.append(half * weights)
        return np.concatenate(xs), np.concatenate(ws)

    def lemma6_consistency(self, eq: EquationSpec, T: float, grid: int = 8) -> float:
        """
        Largest discrepancy in x1(t) = Y(t, 0), x2(t) = int_0^t Y(t, tau) e^{-A(tau)} dtau and
        X(t, s) = int_s^t Y(t, tau) e^{-(A(tau) - A(s))} dtau, A the primitive of a.
        """
        homogeneous = eq.without_forcing()
        lo = eq.t_start
        ts = np.linspace(lo, T, grid + 1)[1:]
        pair = fundamental_system(homogeneous, lo, T, self.tol)
        y0 = integro_fundamental(homogeneous, lo, T, self.tol)
        worst = float(np.max(np.abs(pair.x1.x(ts) - y0.x(ts))))

        forward = {float(s): fundamental_function(homogeneous, float(s), T, self.tol)
                   for s in ts[:-1]}

        def at_t(t):
            row = cauchy_row(homogeneous, t, lo, self.tol)
            nodes, weights = self._gl_nodes(homogeneous, lo, t)
            primitive = cumulative_integral(homogeneous.a, np.concatenate(([lo], nodes)), self.tol)[1:]
            total = float(np.sum(row.Y(nodes) * np.exp(-primitive) * weights))
            gap = abs(pair.x2.x(t) - total)
            for s, traj in forward.items():
                if s >= t:
                    continue
                sub_nodes, sub_weights = self._gl_nodes(homogeneous, s, t)
                sub_primitive = cumulative_integral(homogeneous.a, np.concatenate(([s], sub_nodes)), self.tol)[1:]
                represented = float(np.sum(row.Y(sub_nodes) * np.exp(-sub_primitive) * sub_weights))
                gap = max(gap, abs(traj.x(t) - represented))
            return gap

        worst = max([worst] + parallel_map(at_t, [float(t) for t in ts]))
        logger.info(f"'{eq.label}': largest representation discrepancy {worst:.3e}")
        return worst

    # -- interval assertions -------------------------------------------------

    def _fan_zero_counts(self, eq: EquationSpec, hi: float) -> List[int]:
        n = self.settings['fan_size']
        counts = []
        for k in range(n):
            phi = math.pi * k / n
            x0, v0 = math.cos(phi), math.sin(phi)
            traj = solve_ivp(eq, eq.t_start, x0, v0, hi, self.tol)
            counts.append(len(find_zeros(traj)) + (1 if abs(x0) < 1e-12 else 0))
        return counts

    def theorem_a_chain(self, eq: EquationSpec, omega: float, grid: Optional[int] = None,
                        t1: Optional[float] = None, t2: Optional[float] = None) -> ChainReport:
        """
        On [0, omega]: positivity of X, negativity of the two-point Green's kernel,
        at most one zero per solution, and G(t, s)(t - t1)(t - t2) >= 0 for the
        interpolation problem x(t1) = x(t2) = 0.
        """
        grid = grid or self.settings['grid']
        if eq.t_start != 0.0:
            raise ValueError("interval assertions are stated on [0, omega]; t_start must be 0")
        homogeneous = eq.without_forcing()
        t1 = 0.25 * omega if t1 is None else t1
        t2 = 0.75 * omega if t2 is None else t2
        notes = []

        positivity = self.positivity_scan(homogeneous, omega, max(grid, 20))
        interior = np.linspace(0.0, omega, grid + 2)[1:-1]
        green = GreenKernel(homogeneous, omega, tol=self.tol).grid(interior, interior)
        green_max = float(green.max())
        counts = self._fan_zero_counts(homogeneous, omega)

        interpolation = GreenKernel(homogeneous, omega, t1, t2, tol=self.tol).grid(interior, interior)
        weight = ((interior - t1) * (interior - t2))[:, None]
        product = interpolation * weight
        scale = max(1.0, float(np.max(np.abs(interpolation))))
        regular = bool(np.all(product >= -self.settings['compare_rtol'] * scale))
        if not regular:
            notes.append(f"interpolation kernel has the wrong sign; worst product {float(product.min()):.3e}")

        report = ChainReport(omega, positivity, green_max < 0.0, green_max, max(counts), regular, (t1, t2), notes)
        if not report.consistent:
            logger.warning(f"'{eq.label}': interval assertions disagree on [0, {omega}]: {report.to_dict()}")
        return report

    # -- diagnostics -------------------------------------------------------------

    def bounded_response(self, eq: EquationSpec, horizon: Optional[float] = None) -> Dict[str, Any]:
        """
        Response to f = 1 from zero data. Boundedness of x and x' is evidence for,
        not a proof of, exponential stability.
        """
        horizon = horizon or self.settings['horizon']
        lo = eq.t_start
        forced = replace(eq, f=Const(1.0))
        try:
            traj = solve_ivp(forced, lo, 0.0, 0.0, lo + horizon, self.tol)
        except IntegrationError as e:
            return {'bounded': False, 'sup_x': math.inf, 'sup_xdot': math.inf, 'growth': math.inf,
                    'notes': [str(e)]}
        ts = np.linspace(lo, lo + horizon, 4001)
        states = np.abs(traj.state(ts))
        first = ts <= lo + 0.5 * horizon
        early = float(np.max(states[:, first]))
        late = float(np.max(states[:, ~first]))
        growth = late / early if early > 0 else math.inf
        return {
            'bounded': bool(growth <= self.settings['bounded_growth']),
            'sup_x': float(states[0].max()),
            'sup_xdot': float(states[1].max()),
            'growth': growth,
            'notes': [],
        }

    def cauchy_abs_integrals(self, eq: EquationSpec, T: float) -> Tuple[float, float]:
        """(int |X(T, s)| ds, int |dX/dt (T, s)| ds) over s in [t_start, T]"""
        homogeneous = eq.without_forcing()
        return (row_integral(homogeneous, T, eq.t_start, self.tol, absolute=True, kernel='X'),
                row_integral(homogeneous, T, eq.t_start, self.tol, absolute=True, kernel='Xt'))

    def cauchy_integral_bound(self, eq: EquationSpec, T: float, grid: Optional[int] = None) -> Dict[str, Any]:
        """int X(t, s) ds <= 1/b0 for constant a, b(t) >= b0 > 0 and a^2 >= 4 b0"""
        grid = grid or self.settings['grid']
        if eq.a.breakpoints() or not eq.a.is_constant:
            raise InapplicableError("damping must be constant")
        a = eq.a.value(0.0)
        b0 = ess_bounds(eq.b, eq.t_start, T, self.settings['density'], self.settings['max_samples']).inf_val
        if b0 <= 0 or a * a < 4.0 * b0:
            raise InapplicableError(f"needs b >= b0 > 0 and a^2 >= 4 b0 (a={a:.6g}, b0={b0:.6g})")
        homogeneous = eq.without_forcing()
        ts = np.linspace(eq.t_start, T, grid + 1)[1:]
        values = parallel_map(lambda t: row_integral(homogeneous, float(t), eq.t_start, self.tol), ts)
        peak = float(max(values))
        bound = 1.0 / b0
        return {'max_integral': peak, 'bound': bound, 'holds': peak <= bound + self.settings['margin']}

    def oracle_report(self, eq: EquationSpec, horizon: Optional[float] = None,
                      grid: Optional[int] = None) -> Dict[str, Any]:
        horizon = horizon or self.settings['horizon']
        grid = grid or self.settings['grid']
        scan_T = eq.t_start + self.settings['scan_T']
        report: Dict[str, Any] = {'label': eq.label, 'horizon': horizon, 'scan_T': scan_T, 'notes': []}

        try:
            report['decay'] = self.empirical_decay_rate(eq, horizon).to_dict()
        except Exception as e:
            logger.error(f"Error in decay fit for '{eq.label}': {e}")
            report['decay'] = None
            report['notes'].append(f"decay: {e}")

        try:
            report['positivity'] = self.positivity_scan(eq, scan_T, max(grid, 20))
        except Exception as e:
            logger.error(f"Error in positivity scan for '{eq.label}': {e}")
            report['positivity'] = None
            report['notes'].append(f"positivity: {e}")

        report['eq34'] = None
        if report['positivity']:
            try:
                low, high = self.check_eq34(eq, scan_T, grid)
                report['eq34'] = {'min': low, 'max': high}
            except Exception as e:
                logger.error(f"Error in integral bound check for '{eq.label}': {e}")
                report['notes'].append(f"eq34: {e}")
        else:
            report['notes'].append("eq34: skipped, fundamental function not shown positive")

        try:
            report['lemma6_max_discrepancy'] = self.lemma6_consistency(eq, min(scan_T, eq.t_start + 10.0))
        except Exception as e:
            logger.error(f"Error in representation identities for '{eq.label}': {e}")
            report['lemma6_max_discrepancy'] = None
            report['notes'].append(f"lemma6: {e}")

        report['bounded_response'] = self.bounded_response(eq, horizon)
        return report
