"""
Coefficient Expressions for Second-Order Linear Equations
Represents a(t), b(t), f(t) as immutable expression trees and supplies the
evaluation, differentiation, quadrature and essential-bound services every
criterion builds on
"""

import math
import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union, NamedTuple

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.integrate import quad

logger = logging.getLogger(__name__)

Number = Union[int, float]

DEFAULT_SETTINGS = {
    'tol': 1e-10,
    'density': 1e4,          # ess_bounds samples per unit time
    'max_samples': 2_000_000,
    'max_panels': 5000,      # quad subinterval budget per breakpoint-free segment
    'quotient_check_span': 100.0,
    'quotient_check_samples': 20001,
    'period_rtol': 1e-9,
}


class BreakpointError(ValueError):
    """Raised when an expression is evaluated exactly at a breakpoint without a side flag"""

    def __init__(self, breakpoint: float):
        super().__init__(f"t = {breakpoint!r} is a coefficient breakpoint; request side='left' or side='right'")
        self.breakpoint = breakpoint


class QuadratureError(RuntimeError):
    """Raised when adaptive quadrature cannot reach the requested tolerance"""

    def __init__(self, estimate: float, error_bound: float, tol: float):
        super().__init__(
            f"quadrature did not converge: estimate {estimate!r}, error bound {error_bound!r} > tol {tol!r}"
        )
        self.estimate = estimate
        self.error_bound = error_bound


class ProblemSchemaError(ValueError):
    """Schema violation in a problem file; `pointer` is the JSON pointer of the offending key"""

    def __init__(self, pointer: str, message: str):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer or '/'


class EssBounds(NamedTuple):
    inf_val: float
    sup_val: float
    rigorous: bool


def _coerce(value: Any) -> 'CoefficientExpr':
    if isinstance(value, CoefficientExpr):
        return value
    if isinstance(value, (int, float, np.integer, np.floating)):
        return Const(float(value))
    raise TypeError(f"cannot use {type(value).__name__} as a coefficient expression")


class CoefficientExpr:
    """
    Base class of all expression nodes. Nodes are frozen dataclasses, so an
    expression never changes after construction and can be shared between threads.
    """

    kind = 'abstract'

    # evaluation

    def value(self, t: float, side: Optional[str] = None) -> float:
        raise NotImplementedError

    def values(self, ts: np.ndarray) -> np.ndarray:
        """Vectorized evaluation; piecewise-constant nodes are taken right-continuous."""
        raise NotImplementedError

    def __call__(self, t: float, side: Optional[str] = None) -> float:
        return self.value(t, side)

    # structure

    def children(self) -> Tuple['CoefficientExpr', ...]:
        return ()

    def breakpoints(self) -> Tuple[float, ...]:
        points = set()
        for child in self.children():
            points.update(child.breakpoints())
        return tuple(sorted(points))

    def breakpoints_in(self, lo: float, hi: float) -> List[float]:
        return [p for p in self.breakpoints() if lo < p < hi]

    @property
    def is_constant(self) -> bool:
        return all(child.is_constant for child in self.children())

    def restrict(self, lo: float, hi: float) -> 'CoefficientExpr':
        """Breakpoint-free expression equal to this one on the open interval (lo, hi)."""
        return self

    def derivative(self) -> 'CoefficientExpr':
        raise NotImplementedError

    def to_dict(self) -> Dict[str, Any]:
        raise NotImplementedError

    # arithmetic sugar

    def __add__(self, other):
        return Sum((self, _coerce(other)))

    def __radd__(self, other):
        return Sum((_coerce(other), self))

    def __sub__(self, other):
        return Sum((self, Scale(-1.0, _coerce(other))))

    def __rsub__(self, other):
        return Sum((_coerce(other), Scale(-1.0, self)))

    def __mul__(self, other):
        if isinstance(other, CoefficientExpr):
            return Prod((self, other))
        return Scale(float(other), self)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return Scale(-1.0, self)

    def __truediv__(self, other):
        if isinstance(other, CoefficientExpr):
            return Quot(self, other)
        return Scale(1.0 / float(other), self)


@dataclass(frozen=True)
class Const(CoefficientExpr):
    c: float
    kind = 'const'

    def value(self, t, side=None):
        return self.c

    def values(self, ts):
        return np.full(np.shape(ts), self.c, dtype=float)

    @property
    def is_constant(self):
        return True

    def derivative(self):
        return Const(0.0)

    def to_dict(self):
        return {'kind': 'const', 'value': self.c}


@dataclass(frozen=True)
class Sin(CoefficientExpr):
    """amp * sin(freq * t + phase)"""
    amp: float
    freq: float = 1.0
    phase: float = 0.0
    kind = 'sin'

    def value(self, t, side=None):
        return self.amp * math.sin(self.freq * t + self.phase)

    def values(self, ts):
        return self.amp * np.sin(self.freq * np.asarray(ts, dtype=float) + self.phase)

    @property
    def is_constant(self):
        return self.freq == 0.0 or self.amp == 0.0

    def derivative(self):
        return Cos(self.amp * self.freq, self.freq, self.phase)

    def to_dict(self):
        return {'kind': 'sin', 'amp': self.amp, 'freq': self.freq, 'phase': self.phase}


@dataclass(frozen=True)
class Cos(CoefficientExpr):
    """amp * cos(freq * t + phase)"""
    amp: float
    freq: float = 1.0
    phase: float = 0.0
    kind = 'cos'

    def value(self, t, side=None):
        return self.amp * math.cos(self.freq * t + self.phase)

    def values(self, ts):
        return self.amp * np.cos(self.freq * np.asarray(ts, dtype=float) + self.phase)

    @property
    def is_constant(self):
        return self.freq == 0.0 or self.amp == 0.0

    def derivative(self):
        return Sin(-self.amp * self.freq, self.freq, self.phase)

    def to_dict(self):
        return {'kind': 'cos', 'amp': self.amp, 'freq': self.freq, 'phase': self.phase}


@dataclass(frozen=True)
class Poly(CoefficientExpr):
    """coeffs[0] + coeffs[1] t + coeffs[2] t^2 + ..."""
    coeffs: Tuple[float, ...]
    kind = 'poly'

    def value(self, t, side=None):
        return float(P.polyval(t, self.coeffs))

    def values(self, ts):
        return P.polyval(np.asarray(ts, dtype=float), self.coeffs)

    @property
    def is_constant(self):
        return all(c == 0.0 for c in self.coeffs[1:])

    def derivative(self):
        if len(self.coeffs) <= 1:
            return Const(0.0)
        return Poly(tuple(float(c) for c in P.polyder(self.coeffs)))

    def to_dict(self):
        return {'kind': 'poly', 'coeffs': list(self.coeffs)}


@dataclass(frozen=True)
class PwConst(CoefficientExpr):
    """
    Right-continuous piecewise constant: values[0] before breaks[0],
    values[i] on [breaks[i-1], breaks[i]), values[-1] from breaks[-1] on.
    """
    breaks: Tuple[float, ...]
    vals: Tuple[float, ...]
    kind = 'pw_const'

    def __post_init__(self):
        if len(self.vals) != len(self.breaks) + 1:
            raise ValueError("pw_const needs exactly one more value than breakpoints")
        if any(b2 <= b1 for b1, b2 in zip(self.breaks, self.breaks[1:])):
            raise ValueError("pw_const breakpoints must be strictly increasing")

    def value(self, t, side=None):
        idx = int(np.searchsorted(self.breaks, t, side='right'))
        if idx > 0 and self.breaks[idx - 1] == t:
            if side is None:
                raise BreakpointError(t)
            if side == 'left':
                return self.vals[idx - 1]
        return self.vals[idx]

    def values(self, ts):
        idx = np.searchsorted(self.breaks, np.asarray(ts, dtype=float), side='right')
        return np.asarray(self.vals, dtype=float)[idx]

    def breakpoints(self):
        return tuple(self.breaks)

    @property
    def is_constant(self):
        return len(set(self.vals)) == 1

    def restrict(self, lo, hi):
        return Const(self.vals[int(np.searchsorted(self.breaks, 0.5 * (lo + hi), side='right'))])

    def derivative(self):
        return Const(0.0)

    def to_dict(self):
        return {'kind': 'pw_const', 'breaks': list(self.breaks), 'values': list(self.vals)}


@dataclass(frozen=True)
class Sum(CoefficientExpr):
    args: Tuple[CoefficientExpr, ...]
    kind = 'sum'

    def value(self, t, side=None):
        return sum(arg.value(t, side) for arg in self.args)

    def values(self, ts):
        total = np.zeros(np.shape(ts), dtype=float)
        for arg in self.args:
            total = total + arg.values(ts)
        return total

    def children(self):
        return self.args

    def restrict(self, lo, hi):
        return Sum(tuple(arg.restrict(lo, hi) for arg in self.args))

    def derivative(self):
        return Sum(tuple(arg.derivative() for arg in self.args))

    def to_dict(self):
        return {'kind': 'sum', 'args': [arg.to_dict() for arg in self.args]}


@dataclass(frozen=True)
class Prod(CoefficientExpr):
    args: Tuple[CoefficientExpr, ...]
    kind = 'prod'

    def value(self, t, side=None):
        result = 1.0
        for arg in self.args:
            result *= arg.value(t, side)
        return result

    def values(self, ts):
        result = np.ones(np.shape(ts), dtype=float)
        for arg in self.args:
            result = result * arg.values(ts)
        return result

    def children(self):
        return self.args

    def restrict(self, lo, hi):
        return Prod(tuple(arg.restrict(lo, hi) for arg in self.args))

    def derivative(self):
        terms = []
        for i, arg in enumerate(self.args):
            factors = list(self.args)
            factors[i] = arg.derivative()
            terms.append(Prod(tuple(factors)))
        return Sum(tuple(terms))

    def to_dict(self):
        return {'kind': 'prod', 'args': [arg.to_dict() for arg in self.args]}


@dataclass(frozen=True)
class Scale(CoefficientExpr):
    factor: float
    arg: CoefficientExpr
    kind = 'scale'

    def value(self, t, side=None):
        return self.factor * self.arg.value(t, side)

    def values(self, ts):
        return self.factor * self.arg.values(ts)

    def children(self):
        return (self.arg,)

    @property
    def is_constant(self):
        return self.factor == 0.0 or self.arg.is_constant

    def restrict(self, lo, hi):
        return Scale(self.factor, self.arg.restrict(lo, hi))

    def derivative(self):
        return Scale(self.factor, self.arg.derivative())

    def to_dict(self):
        return {'kind': 'scale', 'factor': self.factor, 'arg': self.arg.to_dict()}


@dataclass(frozen=True)
class Quot(CoefficientExpr):
    """num / den; the denominator is checked for sign changes and zeros on a sample grid"""
    num: CoefficientExpr
    den: CoefficientExpr
    check: bool = field(default=True, compare=False)
    kind = 'quot'

    def __post_init__(self):
        if not self.check:
            return
        span = DEFAULT_SETTINGS['quotient_check_span']
        ts = np.linspace(0.0, span, DEFAULT_SETTINGS['quotient_check_samples'])
        den = self.den.values(ts)
        if np.any(den == 0.0) or (np.min(den) < 0.0 < np.max(den)):
            raise ValueError(f"quotient denominator vanishes on [0, {span}]")

    def value(self, t, side=None):
        return self.num.value(t, side) / self.den.value(t, side)

    def values(self, ts):
        return self.num.values(ts) / self.den.values(ts)

    def children(self):
        return (self.num, self.den)

    def restrict(self, lo, hi):
        return Quot(self.num.restrict(lo, hi), self.den.restrict(lo, hi), check=False)

    def derivative(self):
        numerator = Sum((Prod((self.num.derivative(), self.den)),
                         Scale(-1.0, Prod((self.num, self.den.derivative())))))
        return Quot(numerator, Prod((self.den, self.den)), check=False)

    def to_dict(self):
        return {'kind': 'quot', 'args': [self.num.to_dict(), self.den.to_dict()]}


@dataclass(frozen=True)
class Pos(CoefficientExpr):
    """max(arg, 0)"""
    arg: CoefficientExpr
    kind = 'pos'

    def value(self, t, side=None):
        return max(self.arg.value(t, side), 0.0)

    def values(self, ts):
        return np.maximum(self.arg.values(ts), 0.0)

    def children(self):
        return (self.arg,)

    def restrict(self, lo, hi):
        return Pos(self.arg.restrict(lo, hi))

    def derivative(self):
        return Prod((Indicator(self.arg), self.arg.derivative()))

    def to_dict(self):
        return {'kind': 'pos', 'arg': self.arg.to_dict()}


@dataclass(frozen=True)
class Neg(CoefficientExpr):
    """max(-arg, 0)"""
    arg: CoefficientExpr
    kind = 'neg'

    def value(self, t, side=None):
        return max(-self.arg.value(t, side), 0.0)

    def values(self, ts):
        return np.maximum(-self.arg.values(ts), 0.0)

    def children(self):
        return (self.arg,)

    def restrict(self, lo, hi):
        return Neg(self.arg.restrict(lo, hi))

    def derivative(self):
        return Scale(-1.0, Prod((Indicator(Scale(-1.0, self.arg)), self.arg.derivative())))

    def to_dict(self):
        return {'kind': 'neg', 'arg': self.arg.to_dict()}


@dataclass(frozen=True)
class Indicator(CoefficientExpr):
    """1 where arg > 0, else 0 (a.e. derivative of the positive part)"""
    arg: CoefficientExpr
    kind = 'indicator'

    def value(self, t, side=None):
        return 1.0 if self.arg.value(t, side) > 0.0 else 0.0

    def values(self, ts):
        return (self.arg.values(ts) > 0.0).astype(float)

    def children(self):
        return (self.arg,)

    def restrict(self, lo, hi):
        return Indicator(self.arg.restrict(lo, hi))

    def derivative(self):
        return Const(0.0)

    def to_dict(self):
        return {'kind': 'indicator', 'arg': self.arg.to_dict()}


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def eval_expr(expr: CoefficientExpr, t: float, side: Optional[str] = None) -> float:
    """Evaluate at t; at a breakpoint `side` must be 'left' or 'right'."""
    if side not in (None, 'left', 'right'):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    return expr.value(t, side)


def derivative(expr: CoefficientExpr) -> CoefficientExpr:
    """Derivative expression; piecewise-constant nodes differentiate to zero (a.e.)."""
    return expr.derivative()


def segments(exprs: Union[CoefficientExpr, Sequence[CoefficientExpr]], lo: float, hi: float) -> List[Tuple[float, float]]:
    """Consecutive breakpoint-free panels covering [lo, hi]."""
    if isinstance(exprs, CoefficientExpr):
        exprs = [exprs]
    cuts = set()
    for expr in exprs:
        if expr is not None:
            cuts.update(expr.breakpoints_in(lo, hi))
    points = [lo] + sorted(cuts) + [hi]
    return list(zip(points[:-1], points[1:]))


def _antiderivative(expr: CoefficientExpr) -> Optional[CoefficientExpr]:
    if isinstance(expr, Const):
        return Poly((0.0, expr.c))
    if isinstance(expr, Poly):
        return Poly(tuple(float(c) for c in P.polyint(expr.coeffs)))
    if isinstance(expr, (Sin, Cos)) and expr.freq == 0.0:
        return Poly((0.0, expr.value(0.0)))
    if isinstance(expr, Sin):
        return Cos(-expr.amp / expr.freq, expr.freq, expr.phase)
    if isinstance(expr, Cos):
        return Sin(expr.amp / expr.freq, expr.freq, expr.phase)
    if isinstance(expr, Scale):
        inner = _antiderivative(expr.arg)
        return None if inner is None else Scale(expr.factor, inner)
    if isinstance(expr, Sum):
        parts = [_antiderivative(arg) for arg in expr.args]
        return None if any(p is None for p in parts) else Sum(tuple(parts))
    if expr.is_constant and not expr.breakpoints():
        return Poly((0.0, expr.value(0.0)))
    return None


def integrate(expr: CoefficientExpr, s: float, t: float, tol: Optional[float] = None,
              max_panels: Optional[int] = None) -> float:
    """
    Integral of expr over [s, t] to absolute accuracy tol. Closed forms are used
    for constants, polynomials and sinusoids; everything else goes through
    adaptive Gauss-Kronrod quadrature on breakpoint-free segments.
    """
    tol = DEFAULT_SETTINGS['tol'] if tol is None else tol
    max_panels = DEFAULT_SETTINGS['max_panels'] if max_panels is None else max_panels
    if s > t:
        raise ValueError(f"integrate requires s <= t, got s={s!r}, t={t!r}")
    if s == t:
        return 0.0

    panels = segments(expr, s, t)
    seg_tol = tol / len(panels)
    total = 0.0
    for lo, hi in panels:
        piece = expr.restrict(lo, hi)
        primitive = _antiderivative(piece)
        if primitive is not None:
            total += primitive.value(hi) - primitive.value(lo)
            continue
        result = quad(piece.value, lo, hi, epsabs=seg_tol, epsrel=0.0, limit=max_panels, full_output=1)
        estimate, error_bound = result[0], result[1]
        if len(result) > 3 and error_bound > seg_tol:
            raise QuadratureError(estimate, error_bound, seg_tol)
        total += estimate
    return total


def cumulative_integral(expr: CoefficientExpr, ts: Sequence[float], tol: Optional[float] = None) -> np.ndarray:
    """Integral of expr from ts[0] to each ts[k] (ts ascending)."""
    ts = np.asarray(ts, dtype=float)
    pieces = [integrate(expr, lo, hi, tol) for lo, hi in zip(ts[:-1], ts[1:])]
    return np.concatenate(([0.0], np.cumsum(pieces)))


def _harmonic(expr: CoefficientExpr) -> Optional[Tuple[float, float, float, Optional[float]]]:
    """Write expr as c + S sin(nu t) + C cos(nu t) if possible; returns (c, S, C, nu)."""
    if not expr.breakpoints() and expr.is_constant:
        return (expr.value(0.0), 0.0, 0.0, None)
    if isinstance(expr, Sin):
        return (0.0, expr.amp * math.cos(expr.phase), expr.amp * math.sin(expr.phase), expr.freq)
    if isinstance(expr, Cos):
        return (0.0, -expr.amp * math.sin(expr.phase), expr.amp * math.cos(expr.phase), expr.freq)
    if isinstance(expr, Scale):
        inner = _harmonic(expr.arg)
        if inner is None:
            return None
        c, s, k, nu = inner
        return (expr.factor * c, expr.factor * s, expr.factor * k, nu)
    if isinstance(expr, Sum):
        c_total, s_total, k_total, freq = 0.0, 0.0, 0.0, None
        for arg in expr.args:
            part = _harmonic(arg)
            if part is None:
                return None
            c, s, k, nu = part
            if nu is not None:
                if freq is not None and nu != freq:
                    return None
                freq = nu
            c_total, s_total, k_total = c_total + c, s_total + s, k_total + k
        return (c_total, s_total, k_total, freq)
    if isinstance(expr, Prod):
        constant = 1.0
        varying = None
        for arg in expr.args:
            if not arg.breakpoints() and arg.is_constant:
                constant *= arg.value(0.0)
            elif varying is None:
                varying = arg
            else:
                return None
        if varying is None:
            return (constant, 0.0, 0.0, None)
        inner = _harmonic(varying)
        if inner is None:
            return None
        c, s, k, nu = inner
        return (constant * c, constant * s, constant * k, nu)
    return None


def _harmonic_bounds(c, s, k, nu, lo, hi) -> Tuple[float, float]:
    amp = math.hypot(s, k)
    if nu is None or amp == 0.0:
        return c, c
    shift = math.atan2(k, s)
    nu_abs = abs(nu)
    if nu_abs * (hi - lo) >= 2.0 * math.pi:
        return c - amp, c + amp
    candidates = [lo, hi]
    # extrema where nu t + shift = pi/2 + j pi
    phase_lo, phase_hi = sorted((nu * lo + shift, nu * hi + shift))
    j = math.ceil((phase_lo - math.pi / 2) / math.pi)
    while math.pi / 2 + j * math.pi <= phase_hi:
        candidates.append((math.pi / 2 + j * math.pi - shift) / nu)
        j += 1
    vals = [c + s * math.sin(nu * x) + k * math.cos(nu * x) for x in candidates]
    return min(vals), max(vals)


def _exact_bounds(expr: CoefficientExpr, lo: float, hi: float) -> Optional[Tuple[float, float]]:
    harmonic = _harmonic(expr)
    if harmonic is not None:
        return _harmonic_bounds(*harmonic, lo, hi)
    if isinstance(expr, Poly):
        crit = [r.real for r in P.polyroots(P.polyder(expr.coeffs)) if abs(r.imag) < 1e-14 and lo < r.real < hi] \
            if len(expr.coeffs) > 2 else []
        vals = [expr.value(x) for x in [lo, hi] + crit]
        return min(vals), max(vals)
    if isinstance(expr, PwConst):
        vals = [expr.restrict(a, b).value(a) for a, b in segments(expr, lo, hi)]
        return min(vals), max(vals)
    if isinstance(expr, Scale):
        inner = _exact_bounds(expr.arg, lo, hi)
        if inner is None:
            return None
        a, b = expr.factor * inner[0], expr.factor * inner[1]
        return min(a, b), max(a, b)
    if isinstance(expr, Pos):
        inner = _exact_bounds(expr.arg, lo, hi)
        return None if inner is None else (max(inner[0], 0.0), max(inner[1], 0.0))
    if isinstance(expr, Neg):
        inner = _exact_bounds(expr.arg, lo, hi)
        return None if inner is None else (max(-inner[1], 0.0), max(-inner[0], 0.0))
    return None


def sample_joint(exprs: Sequence[CoefficientExpr], lo: float, hi: float, density: Optional[float] = None,
                 max_samples: Optional[int] = None) -> Tuple[np.ndarray, List[np.ndarray]]:
    """
    Sample several expressions on the lattice k/density inside [lo, hi]. Each
    breakpoint-free segment is evaluated through its restriction, so breakpoints
    contribute both one-sided values. Returns (times, [values per expr]); times
    may repeat at breakpoints.
    """
    density = DEFAULT_SETTINGS['density'] if density is None else density
    max_samples = DEFAULT_SETTINGS['max_samples'] if max_samples is None else max_samples
    while (hi - lo) * density > max_samples:
        density /= 2.0
        logger.warning(f"sample cap reached on [{lo}, {hi}]; density lowered to {density}")
    times, values = [], [[] for _ in exprs]
    for a, b in segments(list(exprs), lo, hi):
        ks = np.arange(math.ceil(a * density), math.floor(b * density) + 1)
        ts = ks / density
        if a != lo:
            ts = np.concatenate(([a], ts))
        if b != hi:
            ts = np.concatenate((ts, [b]))
        if ts.size == 0:
            ts = np.array([0.5 * (a + b)])
        times.append(ts)
        for bucket, expr in zip(values, exprs):
            bucket.append(expr.restrict(a, b).values(ts))
    return np.concatenate(times), [np.concatenate(bucket) for bucket in values]


def sample(expr: CoefficientExpr, lo: float, hi: float, density: Optional[float] = None,
           max_samples: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    times, (vals,) = sample_joint([expr], lo, hi, density, max_samples)
    return times, vals


def ess_bounds(expr: CoefficientExpr, lo: float, hi: float, density: Optional[float] = None,
               max_samples: Optional[int] = None) -> EssBounds:
    """
    Essential infimum and supremum on [lo, hi]. Exact for constants, sinusoids of a
    single frequency, polynomials and piecewise constants; otherwise a dense lattice
    scan, reported with rigorous=False.
    """
    if not lo < hi:
        raise ValueError(f"ess_bounds requires lo < hi, got [{lo}, {hi}]")
    exact = _exact_bounds(expr, lo, hi)
    if exact is not None:
        return EssBounds(float(exact[0]), float(exact[1]), True)
    _, vals = sample(expr, lo, hi, density, max_samples)
    return EssBounds(float(np.min(vals)), float(np.max(vals)), False)


@dataclass(frozen=True)
class PartSplit:
    """b = b+ - b-, evaluable as the positive part"""
    positive: CoefficientExpr
    negative: CoefficientExpr

    def __call__(self, t: float, side: Optional[str] = None) -> float:
        return self.positive.value(t, side)

    def negative_at(self, t: float, side: Optional[str] = None) -> float:
        return self.negative.value(t, side)


def positive_part(expr: CoefficientExpr) -> PartSplit:
    return PartSplit(Pos(expr), Neg(expr))


def validate_period(expr: CoefficientExpr, omega: float, samples: int = 64, start: float = 0.0) -> bool:
    """Spot-check expr(t + omega) == expr(t) on [start, start + 2 omega]."""
    if omega <= 0 or samples < 16:
        raise ValueError("validate_period needs omega > 0 and at least 16 samples")
    ts = np.linspace(start, start + 2.0 * omega, samples)
    cuts = set(expr.breakpoints())
    if cuts:
        ts = np.array([t for t in ts if t not in cuts and (t + omega) not in cuts])
    here = expr.values(ts)
    there = expr.values(ts + omega)
    rtol = DEFAULT_SETTINGS['period_rtol']
    return bool(np.all(np.abs(there - here) <= rtol * (1.0 + np.abs(here))))


# ---------------------------------------------------------------------------
# Equations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EquationSpec:
    """x'' + a(t) x' + b(t) x = f(t) on [t_start, inf), optionally omega-periodic"""
    a: CoefficientExpr
    b: CoefficientExpr
    f: Optional[CoefficientExpr] = None
    t_start: float = 0.0
    period: Optional[float] = None
    label: str = ''

    def __post_init__(self):
        if self.t_start < 0:
            raise ValueError(f"t_start must be >= 0, got {self.t_start}")
        if self.period is not None:
            if self.period <= 0:
                raise ValueError(f"period must be > 0, got {self.period}")
            for name in ('a', 'b'):
                if not validate_period(getattr(self, name), self.period, start=self.t_start):
                    raise ValueError(f"coefficient {name} of '{self.label}' is not {self.period}-periodic")

    @property
    def homogeneous(self) -> bool:
        return self.f is None

    def without_forcing(self) -> 'EquationSpec':
        return self if self.f is None else replace(self, f=None)

    def coefficients(self) -> List[CoefficientExpr]:
        return [e for e in (self.a, self.b, self.f) if e is not None]

    def breakpoints_in(self, lo: float, hi: float) -> List[float]:
        cuts = set()
        for expr in self.coefficients():
            cuts.update(expr.breakpoints_in(lo, hi))
        return sorted(cuts)

    def p_coefficient(self) -> CoefficientExpr:
        """p = b - a^2/4 - a'/2 from the damping-removing substitution"""
        return p_coefficient(self)

    def to_dict(self) -> Dict[str, Any]:
        data = {'label': self.label, 'a': self.a.to_dict(), 'b': self.b.to_dict(), 't_start': self.t_start}
        if self.f is not None:
            data['f'] = self.f.to_dict()
        if self.period is not None:
            data['period'] = self.period
        return data


def p_coefficient(eq: EquationSpec) -> CoefficientExpr:
    return Sum((eq.b, Scale(-0.25, Prod((eq.a, eq.a))), Scale(-0.5, eq.a.derivative())))


# ---------------------------------------------------------------------------
# JSON schema
# ---------------------------------------------------------------------------

_NODE_KEYS = {
    'const': {'kind', 'value'},
    'sin': {'kind', 'amp', 'freq', 'phase'},
    'cos': {'kind', 'amp', 'freq', 'phase'},
    'poly': {'kind', 'coeffs'},
    'pw_const': {'kind', 'breaks', 'values'},
    'sum': {'kind', 'args'},
    'prod': {'kind', 'args'},
    'quot': {'kind', 'args'},
    'scale': {'kind', 'factor', 'arg'},
    'pos': {'kind', 'arg'},
    'neg': {'kind', 'arg'},
}


def parse_number(raw: Any, pointer: str, parameters: Dict[str, float]) -> float:
    if isinstance(raw, dict) and set(raw) == {'param'}:
        name = raw['param']
        if name not in parameters:
            raise ProblemSchemaError(pointer, f"unknown parameter {name!r}")
        return float(parameters[name])
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise ProblemSchemaError(pointer, "expected a number or {\"param\": name}")
    if not math.isfinite(raw):
        raise ProblemSchemaError(pointer, "expected a finite number")
    return float(raw)


def parse_numbers(raw: Any, pointer: str, parameters: Dict[str, float]) -> Tuple[float, ...]:
    if not isinstance(raw, list):
        raise ProblemSchemaError(pointer, "expected an array of numbers")
    return tuple(parse_number(item, f"{pointer}/{i}", parameters) for i, item in enumerate(raw))


def from_dict(data: Any, parameters: Optional[Dict[str, float]] = None, pointer: str = '') -> CoefficientExpr:
    """Build an expression from its tagged-node JSON form, validating as it goes."""
    parameters = parameters or {}
    if not isinstance(data, dict):
        raise ProblemSchemaError(pointer, "expected an expression object")
    kind = data.get('kind')
    if kind not in _NODE_KEYS:
        raise ProblemSchemaError(f"{pointer}/kind", f"unknown expression kind {kind!r}")
    unknown = set(data) - _NODE_KEYS[kind]
    if unknown:
        raise ProblemSchemaError(f"{pointer}/{sorted(unknown)[0]}", "unknown key")

    def required(key):
        if key not in data:
            raise ProblemSchemaError(f"{pointer}/{key}", "missing required key")
        return data[key]

    try:
        if kind == 'const':
            return Const(parse_number(required('value'), f"{pointer}/value", parameters))
        if kind in ('sin', 'cos'):
            node = Sin if kind == 'sin' else Cos
            return node(parse_number(required('amp'), f"{pointer}/amp", parameters),
                        parse_number(data.get('freq', 1.0), f"{pointer}/freq", parameters),
                        parse_number(data.get('phase', 0.0), f"{pointer}/phase", parameters))
        if kind == 'poly':
            coeffs = parse_numbers(required('coeffs'), f"{pointer}/coeffs", parameters)
            if not coeffs:
                raise ProblemSchemaError(f"{pointer}/coeffs", "polynomial needs at least one coefficient")
            return Poly(coeffs)
        if kind == 'pw_const':
            return PwConst(parse_numbers(required('breaks'), f"{pointer}/breaks", parameters),
                           parse_numbers(required('values'), f"{pointer}/values", parameters))
        if kind == 'scale':
            return Scale(parse_number(required('factor'), f"{pointer}/factor", parameters),
                         from_dict(required('arg'), parameters, f"{pointer}/arg"))
        if kind in ('pos', 'neg'):
            inner = from_dict(required('arg'), parameters, f"{pointer}/arg")
            return Pos(inner) if kind == 'pos' else Neg(inner)
        args = required('args')
        if not isinstance(args, list) or not args:
            raise ProblemSchemaError(f"{pointer}/args", "expected a non-empty array of expressions")
        children = tuple(from_dict(arg, parameters, f"{pointer}/args/{i}") for i, arg in enumerate(args))
        if kind == 'sum':
            return Sum(children)
        if kind == 'prod':
            return Prod(children)
        if len(children) != 2:
            raise ProblemSchemaError(f"{pointer}/args", "quot takes exactly two arguments")
        return Quot(children[0], children[1])
    except ProblemSchemaError:
        raise
    except ValueError as e:
        raise ProblemSchemaError(pointer, str(e))


def const(c: Number) -> Const:
    return Const(float(c))
