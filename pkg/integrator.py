"""
Trajectory Integration Layer
Solves x'' + a(t) x' + b(t) x = f(t) segment by segment between coefficient
breakpoints and derives the fundamental system, the fundamental (Cauchy)
function X(t, s), the integro-differential fundamental function Y(t, s),
Wronskians, zeros and Green's kernels from it.
"""

import os
import math
import logging
from bisect import bisect_right
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy import integrate as sp_integrate
from scipy.optimize import brentq, minimize_scalar

from coefficients import CoefficientExpr, EquationSpec, integrate, segments

logger = logging.getLogger(__name__)

SOLVER_DEFAULTS = {
    'tol': 1e-10,
    'max_step': 0.1,
    'method': 'DOP853',
    'zero_samples_per_step': 8,
    'zero_xtol': 1e-12,
    'tangential_rtol': 1e-10,
    'overflow': 1e250,
}


class IntegrationError(RuntimeError):
    """Solver failure; `last_t` is the last time reached with a finite state"""

    def __init__(self, message: str, last_t: float):
        super().__init__(f"{message} (last good t = {last_t!r})")
        self.last_t = last_t


class BVPNotSolvableError(ValueError):
    def __init__(self, t1: float, t2: float, value: float):
        super().__init__(
            f"BVP not uniquely solvable: solution vanishing at t={t1!r} has |x({t2!r})| = {abs(value):.3e}"
        )


def thread_count() -> int:
    """Worker cap from OSCILLINT_THREADS (default 1, sequential)."""
    raw = os.environ.get('OSCILLINT_THREADS', '1')
    try:
        return max(1, int(raw))
    except ValueError:
        logger.warning(f"Ignoring OSCILLINT_THREADS={raw!r}; running sequentially")
        return 1


def parallel_map(fn: Callable, items: Iterable, n_jobs: Optional[int] = None) -> list:
    """Ordered map over items; threads only, so expressions are shared, not pickled."""
    items = list(items)
    n_jobs = n_jobs or thread_count()
    if n_jobs == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    return Parallel(n_jobs=n_jobs, prefer='threads')(delayed(fn)(item) for item in items)


def _check_tol(tol: float) -> float:
    if not 1e-14 <= tol <= 1e-4:
        raise ValueError(f"tol must lie in [1e-14, 1e-4], got {tol!r}")
    return tol


# ---------------------------------------------------------------------------
# Low-level segment-wise integration
# ---------------------------------------------------------------------------

RhsFactory = Callable[[float, float], Callable[[float, np.ndarray], np.ndarray]]


def integrate_segments(rhs_factory: RhsFactory, exprs: Sequence[CoefficientExpr], t_from: float, t_to: float,
                        y0: Sequence[float], tol: float, max_step: Optional[float] = None,
                        dense: bool = True, events: Optional[Callable] = None) -> Tuple[np.ndarray, np.ndarray, list]:
    """
    Integrate y' = rhs(t, y) from t_from to t_to (either direction) restarting the
    solver at every breakpoint of `exprs`. Returns node times, node states in
    ascending time order, and per-segment dense interpolants (lo, hi, sol).
    A terminal event stops the whole integration early.
    """
    max_step = SOLVER_DEFAULTS['max_step'] if max_step is None else max_step
    lo, hi = min(t_from, t_to), max(t_from, t_to)
    panels = segments(list(exprs), lo, hi)
    forward = t_to > t_from
    if not forward:
        panels = [(b, a) for a, b in reversed(panels)]

    state = np.asarray(y0, dtype=float)
    times, states, pieces = [], [], []
    for start, stop in panels:
        rhs = rhs_factory(min(start, stop), max(start, stop))
        with np.errstate(over='ignore', invalid='ignore'):
            result = sp_integrate.solve_ivp(
                rhs, (start, stop), state, method=SOLVER_DEFAULTS['method'],
                rtol=tol, atol=tol * 1e-2, max_step=min(max_step, abs(stop - start)),
                dense_output=dense, events=events,
            )
        if result.status == -1:
            raise IntegrationError(f"solver failed: {result.message}", float(result.t[-1]))
        if not np.all(np.isfinite(result.y)) or np.max(np.abs(result.y)) > SOLVER_DEFAULTS['overflow']:
            bad = np.nonzero(~np.isfinite(result.y).all(axis=0) |
                             (np.abs(result.y) > SOLVER_DEFAULTS['overflow']).any(axis=0))[0][0]
            raise IntegrationError("state overflow or NaN", float(result.t[max(bad - 1, 0)]))
        seg_t, seg_y = result.t, result.y
        if times:
            seg_t, seg_y = seg_t[1:], seg_y[:, 1:]
        times.append(seg_t)
        states.append(seg_y)
        if dense:
            pieces.append((min(start, stop), max(start, stop), result.sol))
        state = result.y[:, -1]
        if result.status == 1:
            break

    ts = np.concatenate(times)
    ys = np.concatenate(states, axis=1)
    if not forward:
        ts, ys = ts[::-1], ys[:, ::-1]
        pieces.reverse()
    return ts, ys, pieces


def _equation_rhs(eq: EquationSpec) -> RhsFactory:
    def factory(lo, hi):
        a = eq.a.restrict(lo, hi).value
        b = eq.b.restrict(lo, hi).value
        f = eq.f.restrict(lo, hi).value if eq.f is not None else None

        def rhs(t, y):
            forcing = f(t) if f is not None else 0.0
            return np.array([y[1], forcing - a(t) * y[1] - b(t) * y[0]])
        return rhs
    return factory


@dataclass
class DenseSolution:
    """Node list plus per-segment dense interpolants; shared by trajectories and Cauchy rows."""
    ts: np.ndarray
    ys: np.ndarray
    pieces: list = field(repr=False)

    @property
    def t_lo(self) -> float:
        return float(self.ts[0])

    @property
    def t_hi(self) -> float:
        return float(self.ts[-1])

    def state_at(self, t: float) -> np.ndarray:
        span = 1e-12 * max(1.0, abs(self.t_hi))
        if t < self.t_lo - span or t > self.t_hi + span:
            raise ValueError(f"t = {t!r} outside solution range [{self.t_lo}, {self.t_hi}]")
        idx = int(np.searchsorted(self.ts, t))
        if idx < len(self.ts) and self.ts[idx] == t:
            return self.ys[:, idx]
        starts = [p[0] for p in self.pieces]
        k = min(max(bisect_right(starts, t) - 1, 0), len(self.pieces) - 1)
        return np.asarray(self.pieces[k][2](t), dtype=float)

    def states_at(self, ts: np.ndarray) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        out = np.empty((self.ys.shape[0], ts.size))
        starts = np.array([p[0] for p in self.pieces])
        which = np.clip(np.searchsorted(starts, ts, side='right') - 1, 0, len(self.pieces) - 1)
        for k in np.unique(which):
            mask = which == k
            out[:, mask] = np.asarray(self.pieces[k][2](ts[mask])).reshape(self.ys.shape[0], -1)
        nodes = np.searchsorted(self.ts, ts).clip(0, len(self.ts) - 1)
        exact = self.ts[nodes] == ts
        out[:, exact] = self.ys[:, nodes[exact]]
        return out


@dataclass
class Trajectory(DenseSolution):
    """Solution (x, x') on [t0, T] with dense output; x == 0 before t0 for fundamental functions"""
    tol: float = SOLVER_DEFAULTS['tol']
    zero_before_start: bool = False
    label: str = ''

    @property
    def t0(self) -> float:
        return self.t_lo

    @property
    def T(self) -> float:
        return self.t_hi

    def state(self, t):
        """(x, x') at scalar t, or a (2, n) array for an array of times."""
        if np.ndim(t) == 0:
            if self.zero_before_start and t < self.t0:
                return np.zeros(2)
            return self.state_at(float(t))[:2]
        ts = np.asarray(t, dtype=float)
        out = np.zeros((2, ts.size))
        live = ~(self.zero_before_start & (ts < self.t0))
        if np.any(live):
            out[:, live] = self.states_at(ts[live])[:2]
        return out

    def x(self, t):
        s = self.state(t)
        return float(s[0]) if np.ndim(t) == 0 else s[0]

    def xdot(self, t):
        s = self.state(t)
        return float(s[1]) if np.ndim(t) == 0 else s[1]

    def __call__(self, t):
        return self.x(t)

    @cached_property
    def zeros(self) -> List[float]:
        return find_zeros(self)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.ys[0])))

    def to_frame(self, grid: Optional[Sequence[float]] = None) -> pd.DataFrame:
        ts = self.ts if grid is None else np.asarray(grid, dtype=float)
        states = self.state(ts)
        return pd.DataFrame({'t': ts, 'x': states[0], 'xdot': states[1]})


@dataclass
class FundamentalPair:
    """x1 from (1, 0) and x2 from (0, 1) at t0, with both Wronskian routes"""
    x1: Trajectory
    x2: Trajectory
    a: CoefficientExpr = field(repr=False)
    tol: float = SOLVER_DEFAULTS['tol']
    liouville_mismatch: float = 0.0

    def wronskian(self, t: float) -> float:
        s1, s2 = self.x1.state(t), self.x2.state(t)
        return float(s1[0] * s2[1] - s2[0] * s1[1])

    def liouville_wronskian(self, t: float) -> float:
        return math.exp(-integrate(self.a, self.x1.t0, t, self.tol))

    def matrix(self, t: float) -> np.ndarray:
        """[[x1, x2], [x1', x2']] at t"""
        return np.column_stack((self.x1.state(t), self.x2.state(t)))


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------

def solve_ivp(eq: EquationSpec, t0: float, x0: float, v0: float, T: float, tol: Optional[float] = None,
              max_step: Optional[float] = None) -> Trajectory:
    """x(t) with x(t0) = x0, x'(t0) = v0 on [t0, T]"""
    tol = _check_tol(SOLVER_DEFAULTS['tol'] if tol is None else tol)
    if not t0 < T:
        raise ValueError(f"solve_ivp requires t0 < T, got t0={t0!r}, T={T!r}")
    ts, ys, pieces = integrate_segments(_equation_rhs(eq), eq.coefficients(), t0, T, (x0, v0), tol, max_step)
    return Trajectory(ts, ys, pieces, tol=tol, label=eq.label)


def fundamental_system(eq: EquationSpec, t0: float, T: float, tol: Optional[float] = None) -> FundamentalPair:
    tol = _check_tol(SOLVER_DEFAULTS['tol'] if tol is None else tol)
    homogeneous = eq.without_forcing()
    x1 = solve_ivp(homogeneous, t0, 1.0, 0.0, T, tol)
    x2 = solve_ivp(homogeneous, t0, 0.0, 1.0, T, tol)
    pair = FundamentalPair(x1, x2, eq.a, tol)

    direct = pair.wronskian(T)
    liouville = pair.liouville_wronskian(T)
    pair.liouville_mismatch = abs(direct - liouville) / liouville if liouville > 0 else math.inf
    if pair.liouville_mismatch > 10 * tol:
        logger.warning(f"{eq.label or 'equation'}: Wronskian routes differ by {pair.liouville_mismatch:.3e} "
                       f"(relative) at t={T}")
    return pair


def fundamental_function(eq: EquationSpec, s: float, T: float, tol: Optional[float] = None) -> Trajectory:
    """X(., s): homogeneous solution from (0, 1) at s, zero before s"""
    if not s < T:
        raise ValueError(f"fundamental_function requires s < T, got s={s!r}, T={T!r}")
    traj = solve_ivp(eq.without_forcing(), s, 0.0, 1.0, T, tol)
    traj.zero_before_start = True
    return traj


def integro_fundamental(eq: EquationSpec, s: float, T: float, tol: Optional[float] = None) -> Trajectory:
    """
    Y(., s) through the local system y' = -z, z' = b y - a z, y(s) = 1, z(s) = 0;
    the trajectory stores (y, y') = (y, -z) and is zero before s.
    """
    tol = _check_tol(SOLVER_DEFAULTS['tol'] if tol is None else tol)
    if not s < T:
        raise ValueError(f"integro_fundamental requires s < T, got s={s!r}, T={T!r}")

    def factory(lo, hi):
        a = eq.a.restrict(lo, hi).value
        b = eq.b.restrict(lo, hi).value

        def rhs(t, y):
            return np.array([-y[1], b(t) * y[0] - a(t) * y[1]])
        return rhs

    ts, ys, pieces = integrate_segments(factory, [eq.a, eq.b], s, T, (1.0, 0.0), tol)
    flip = np.array([[1.0, 0.0], [0.0, -1.0]])
    mapped = [(lo, hi, _Mapped(sol, flip)) for lo, hi, sol in pieces]
    return Trajectory(ts, flip @ ys, mapped, tol=tol, zero_before_start=True, label=eq.label)


class _Mapped:
    """Dense interpolant composed with a fixed linear map of the state"""

    def __init__(self, sol, matrix: np.ndarray):
        self.sol = sol
        self.matrix = matrix

    def __call__(self, t):
        return self.matrix @ np.asarray(self.sol(t))


def _sample_grid(ts: np.ndarray, per_step: int) -> np.ndarray:
    steps = np.linspace(0.0, 1.0, per_step + 1)[:-1]
    grid = (ts[:-1, None] + np.diff(ts)[:, None] * steps[None, :]).ravel()
    return np.concatenate((grid, ts[-1:]))


def classify_zeros(traj: Trajectory) -> Tuple[List[float], List[float]]:
    """(sign-change zeros, tangential zeros) of x on (t0, T]"""
    grid = _sample_grid(traj.ts, SOLVER_DEFAULTS['zero_samples_per_step'])
    xs = traj.x(grid)
    xtol = SOLVER_DEFAULTS['zero_xtol']
    crossings = []

    for i in np.nonzero(xs == 0.0)[0]:
        if grid[i] > traj.t0 and not (0 < i < len(xs) - 1 and xs[i - 1] * xs[i + 1] > 0):
            crossings.append(float(grid[i]))
    for i in np.nonzero(xs[:-1] * xs[1:] < 0.0)[0]:
        crossings.append(float(brentq(traj.x, grid[i], grid[i + 1], xtol=xtol)))

    tangential = []
    mags = np.abs(xs)
    candidates = np.nonzero((mags[1:-1] <= mags[:-2]) & (mags[1:-1] <= mags[2:]) &
                            (xs[:-2] * xs[2:] > 0.0))[0] + 1
    for i in candidates:
        local = max(1.0, float(np.max(mags[max(i - 8, 0):i + 9])))
        if mags[i] > 1e-6 * local:
            continue
        best = minimize_scalar(lambda t: abs(traj.x(t)), bounds=(grid[i - 1], grid[i + 1]), method='bounded',
                               options={'xatol': xtol})
        if best.fun <= SOLVER_DEFAULTS['tangential_rtol'] * local:
            tangential.append(float(best.x))
    return sorted(crossings), sorted(tangential)


def find_zeros(traj: Trajectory) -> List[float]:
    """All zeros of x after the initial point, ascending; tangential ones included."""
    crossings, tangential = classify_zeros(traj)
    if tangential:
        logger.info(f"{traj.label or 'trajectory'}: {len(tangential)} tangential zero(s) at {tangential}")
    return sorted(crossings + tangential)


# ---------------------------------------------------------------------------
# Rows of the fundamental function, integrated backward in s
# ---------------------------------------------------------------------------

@dataclass
class CauchyRow(DenseSolution):
    """
    s -> X(t, s) (or d/dt X(t, s) when derivative=True) on [s_lo, t] from the
    adjoint system dX/ds = a X + w, dw/ds = -b X; Y(t, s) = -w(s) on the plain row.
    """
    t: float = 0.0
    derivative: bool = False

    def X(self, s):
        if np.ndim(s) == 0:
            return 0.0 if s > self.t else float(self.state_at(float(s))[0])
        ss = np.asarray(s, dtype=float)
        out = np.zeros(ss.size)
        live = ss <= self.t
        out[live] = self.states_at(ss[live])[0]
        return out

    def Y(self, s):
        if np.ndim(s) == 0:
            return 0.0 if s > self.t else float(-self.state_at(float(s))[1])
        ss = np.asarray(s, dtype=float)
        out = np.zeros(ss.size)
        live = ss <= self.t
        out[live] = -self.states_at(ss[live])[1]
        return out

    __call__ = X


def _adjoint_factory(eq: EquationSpec, integrand: Optional[Callable] = None,
                     weight: Optional[CoefficientExpr] = None) -> RhsFactory:
    def factory(lo, hi):
        a = eq.a.restrict(lo, hi).value
        b = eq.b.restrict(lo, hi).value
        wt = weight.restrict(lo, hi).value if weight is not None else None

        def rhs(s, y):
            dX = a(s) * y[0] + y[1]
            dw = -b(s) * y[0]
            if integrand is None:
                return np.array([dX, dw])
            return np.array([dX, dw, integrand(y, wt(s) if wt is not None else 1.0)])
        return rhs
    return factory


def cauchy_row(eq: EquationSpec, t: float, s_lo: float, tol: Optional[float] = None,
               derivative: bool = False) -> CauchyRow:
    tol = _check_tol(SOLVER_DEFAULTS['tol'] if tol is None else tol)
    if not s_lo < t:
        raise ValueError(f"cauchy_row requires s_lo < t, got s_lo={s_lo!r}, t={t!r}")
    start = (1.0, 0.0) if derivative else (0.0, -1.0)
    ts, ys, pieces = integrate_segments(_adjoint_factory(eq), [eq.a, eq.b], t, s_lo, start, tol)
    return CauchyRow(ts, ys, pieces, t=t, derivative=derivative)


_KERNELS = {
    'X': ((0.0, -1.0), 0, 1.0),
    'Y': ((0.0, -1.0), 1, -1.0),
    'Xt': ((1.0, 0.0), 0, 1.0),
    'Yt': ((1.0, 0.0), 1, -1.0),
}


def row_integral(eq: EquationSpec, t: float, s_lo: float, tol: Optional[float] = None,
                 weight: Optional[CoefficientExpr] = None, absolute: bool = False, kernel: str = 'X') -> float:
    """
    Integral over s in [s_lo, t] of K(t, s) * weight(s), or of |K(t, s)| * weight(s),
    for K one of X, Y, Xt = dX/dt, Yt = dY/dt; carried as a quadrature state of
    the backward adjoint integration.
    """
    tol = _check_tol(SOLVER_DEFAULTS['tol'] if tol is None else tol)
    if s_lo == t:
        return 0.0
    if not s_lo < t:
        raise ValueError(f"row_integral requires s_lo <= t, got s_lo={s_lo!r}, t={t!r}")
    if kernel not in _KERNELS:
        raise ValueError(f"unknown kernel {kernel!r}")
    start, component, sign = _KERNELS[kernel]

    if absolute:
        def integrand(y, w):
            return abs(y[component]) * w
    else:
        def integrand(y, w):
            return sign * y[component] * w

    exprs = [eq.a, eq.b] + ([weight] if weight is not None else [])
    _, ys, _ = integrate_segments(_adjoint_factory(eq, integrand, weight), exprs, t, s_lo,
                                   (*start, 0.0), tol, dense=False)
    # integrated from t down to s_lo
    return float(-ys[2, 0])


def propagate_matrix(eq: EquationSpec, t_lo: float, t_hi: float, tol: Optional[float] = None) -> np.ndarray:
    """2x2 state-transition matrix of the homogeneous equation from t_lo to t_hi"""
    tol = _check_tol(SOLVER_DEFAULTS['tol'] if tol is None else tol)

    def factory(lo, hi):
        a = eq.a.restrict(lo, hi).value
        b = eq.b.restrict(lo, hi).value

        def rhs(t, y):
            at, bt = a(t), b(t)
            return np.array([y[1], -at * y[1] - bt * y[0], y[3], -at * y[3] - bt * y[2]])
        return rhs

    _, ys, _ = integrate_segments(factory, [eq.a, eq.b], t_lo, t_hi, (1.0, 0.0, 0.0, 1.0), tol, dense=False)
    end = ys[:, -1]
    return np.array([[end[0], end[2]], [end[1], end[3]]])


# ---------------------------------------------------------------------------
# Green's kernels
# ---------------------------------------------------------------------------

class TwoSidedSolution:
    """Homogeneous solution through (s, x0, v0) on [lo, hi], integrated both ways from s"""

    def __init__(self, eq: EquationSpec, s: float, lo: float, hi: float, x0: float, v0: float, tol: float):
        self.s = s
        rhs = _equation_rhs(eq.without_forcing())
        exprs = [eq.a, eq.b]
        self.forward = DenseSolution(*integrate_segments(rhs, exprs, s, hi, (x0, v0), tol)) if s < hi else None
        self.backward = DenseSolution(*integrate_segments(rhs, exprs, s, lo, (x0, v0), tol)) if s > lo else None

    def x(self, t):
        if np.ndim(t) == 0:
            part = self.forward if (t >= self.s and self.forward is not None) or self.backward is None else self.backward
            return float(part.state_at(float(t))[0])
        ts = np.asarray(t, dtype=float)
        out = np.empty(ts.size)
        ahead = (ts >= self.s) if self.backward is not None else np.ones(ts.size, dtype=bool)
        if self.forward is None:
            ahead[:] = False
        if np.any(ahead):
            out[ahead] = self.forward.states_at(ts[ahead])[0]
        if np.any(~ahead):
            out[~ahead] = self.backward.states_at(ts[~ahead])[0]
        return out

    def max_abs(self) -> float:
        return float(max(np.max(np.abs(part.ys[0])) for part in (self.forward, self.backward) if part is not None))


class GreenKernel:
    """
    Kernel of x'' + a x' + b x = f on [0, omega] with x(t1) = x(t2) = 0:
    G(t, s) = K(t, s) - phi(t) K(t2, s) / phi(t2), where K(t, s) = (1[s <= t] - 1[s <= t1]) X(t, s)
    with X(., s) the two-sided Cauchy solution and phi(t1) = 0, phi'(t1) = 1.
    """

    def __init__(self, eq: EquationSpec, omega: float, t1: float = 0.0, t2: Optional[float] = None,
                 tol: Optional[float] = None):
        t2 = omega if t2 is None else t2
        if not 0.0 <= t1 < t2 <= omega:
            raise ValueError(f"GreenKernel requires 0 <= t1 < t2 <= omega, got t1={t1}, t2={t2}, omega={omega}")
        self.eq = eq.without_forcing()
        self.omega, self.t1, self.t2 = omega, t1, t2
        self.tol = _check_tol(SOLVER_DEFAULTS['tol'] if tol is None else tol)
        self.phi = TwoSidedSolution(self.eq, t1, 0.0, omega, 0.0, 1.0, self.tol)
        self.phi_end = self.phi.x(t2)
        if abs(self.phi_end) < 1e-8 * self.phi.max_abs():
            raise BVPNotSolvableError(t1, t2, self.phi_end)
        self._columns: Dict[float, TwoSidedSolution] = {}

    def _column(self, s: float) -> TwoSidedSolution:
        if s not in self._columns:
            self._columns[s] = TwoSidedSolution(self.eq, s, 0.0, self.omega, 0.0, 1.0, self.tol)
        return self._columns[s]

    def _k(self, column: TwoSidedSolution, s: float, t):
        step = (np.asarray(s <= np.asarray(t), dtype=float) - (1.0 if s <= self.t1 else 0.0))
        return step * column.x(t)

    def __call__(self, t: float, s: float) -> float:
        if not 0.0 < s < self.omega:
            raise ValueError(f"s = {s!r} must lie in (0, {self.omega})")
        if not 0.0 <= t <= self.omega:
            raise ValueError(f"t = {t!r} must lie in [0, {self.omega}]")
        column = self._column(s)
        return float(self._k(column, s, t) - self.phi.x(t) * self._k(column, s, self.t2) / self.phi_end)

    def grid(self, ts: Sequence[float], ss: Sequence[float]) -> np.ndarray:
        """G on the product grid, rows indexed by t, columns by s"""
        ts = np.asarray(ts, dtype=float)
        phi_t = self.phi.x(ts)

        def column(s):
            col = TwoSidedSolution(self.eq, s, 0.0, self.omega, 0.0, 1.0, self.tol)
            return self._k(col, s, ts) - phi_t * self._k(col, s, self.t2) / self.phi_end

        return np.column_stack(parallel_map(column, ss))


def green_kernel(eq: EquationSpec, omega: float, t: float, s: float, tol: Optional[float] = None) -> float:
    """G(t, s) of the two-point problem x(0) = x(omega) = 0"""
    return GreenKernel(eq, omega, tol=tol)(t, s)
