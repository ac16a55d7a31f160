"""
Floquet Agent
Monodromy, characteristic multipliers and their classification for periodic
equations, guarded by the zero-spacing evidence and the nonoscillation zones
of p = b - a^2/4 - a'/2.
"""

import math
import cmath
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from coefficients import EquationSpec, ess_bounds, integrate, p_coefficient
from integrator import IntegrationError, find_zeros, parallel_map, propagate_matrix, solve_ivp

logger = logging.getLogger(__name__)

REAL_MULTIPLIER_CAVEAT = (
    "Positive mean damping alone does not give exponential stability when the multipliers are real: "
    "x'' + a x' + b x = 0 with a = (2 sin^2 t + cos t sin t)/(1 + cos t sin t) has the fundamental system "
    "exp(-t) cos t, sin t and the mean of a over a period is positive, yet sin t does not decay."
)


class FloquetClass(str, Enum):
    EXP_STABLE = 'EXP_STABLE'
    UNSTABLE_GROWING = 'UNSTABLE_GROWING'
    BOUNDED_MARGINAL = 'BOUNDED_MARGINAL'
    REAL_ROOT_GUARD_FAILED = 'REAL_ROOT_GUARD_FAILED'
    UNDECIDED = 'UNDECIDED'


@dataclass
class ZoneResult:
    in_zone: bool
    k: Optional[int]
    applicable: bool = True
    near_boundary: bool = False


@dataclass
class ZeroSpacing:
    min_gap: float
    max_gap: float
    oscillatory: bool
    gaps: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0))
    overflowed: int = 0


@dataclass
class FloquetResult:
    omega: float
    x1_w: float
    x2_w: float
    x1p_w: float
    x2p_w: float
    W_direct: float
    W_liouville: float
    multipliers: Optional[Tuple[complex, complex]] = None
    classification: FloquetClass = FloquetClass.UNDECIDED
    zone: Optional[ZoneResult] = None
    spacing: Optional[ZeroSpacing] = None
    P: Optional[float] = None
    Q: Optional[float] = None
    mean_damping: Optional[float] = None
    growth_ratios: List[float] = field(default_factory=list)
    caveat: Optional[str] = None
    notes: List[str] = field(default_factory=list)

    @property
    def trace(self) -> float:
        return self.x1_w + self.x2p_w

    @property
    def W(self) -> float:
        """Wronskian the multipliers are built from"""
        return self.W_liouville

    def to_dict(self) -> Dict[str, Any]:
        lambdas = [{'mod': abs(m), 'arg': cmath.phase(m)} for m in self.multipliers] if self.multipliers else []
        return {
            'omega': self.omega,
            'monodromy': [[self.x1_w, self.x2_w], [self.x1p_w, self.x2p_w]],
            'trace': self.trace,
            'W_direct': self.W_direct,
            'W_liouville': self.W_liouville,
            'lambda': lambdas,
            'classification': self.classification.value,
            'guard': {
                'zone_k': self.zone.k if self.zone else None,
                'near_boundary': self.zone.near_boundary if self.zone else False,
                'min_gap': self.spacing.min_gap if self.spacing else None,
                'max_gap': self.spacing.max_gap if self.spacing else None,
                'oscillatory': self.spacing.oscillatory if self.spacing else None,
            },
            'P': self.P,
            'Q': self.Q,
            'mean_damping': self.mean_damping,
            'growth_ratios': list(self.growth_ratios),
            'caveat': self.caveat,
            'notes': list(self.notes),
        }


def multipliers(trace: float, W: float) -> Tuple[complex, complex]:
    """Roots of lambda^2 - trace lambda + W = 0; complex pair as sqrt(W) exp(+-i theta), real pair by modulus."""
    if W <= 0:
        raise ValueError(f"Wronskian must be positive, got {W!r}")
    disc = trace * trace - 4.0 * W
    if disc < 0:
        r = math.sqrt(W)
        theta = math.acos(max(-1.0, min(1.0, trace / (2.0 * r))))
        return cmath.rect(r, theta), cmath.rect(r, -theta)
    q = 0.5 * (trace + math.copysign(math.sqrt(disc), trace))
    return complex(q), complex(W / q)


def zone_check(P: float, Q: float, omega: float, kmax: int = 5, rtol: float = 1e-6) -> ZoneResult:
    """
    omega in (0, pi/(2 sqrt Q)] or in ((k-1)/2 pi/sqrt P, k pi/(2 sqrt Q)) for some
    k <= kmax with (k-1)/k < sqrt(P/Q).
    """
    if P <= 0:
        return ZoneResult(False, None, applicable=False)
    if Q < P:
        raise ValueError(f"zone check needs P <= Q, got P={P!r}, Q={Q!r}")
    ratio = math.sqrt(P / Q)
    near = False
    for k in range(1, kmax + 1):
        hi = k * math.pi / (2.0 * math.sqrt(Q))
        if k == 1:
            lo = 0.0
            inside = 0.0 < omega <= hi
        else:
            if not (k - 1) / k < ratio:
                continue
            lo = 0.5 * (k - 1) * math.pi / math.sqrt(P)
            inside = lo < omega < hi
        near = near or any(edge > 0 and abs(omega - edge) <= rtol * omega for edge in (lo, hi))
        if inside:
            return ZoneResult(True, k, near_boundary=near)
    return ZoneResult(False, None, near_boundary=near)


class FloquetAgent:
    """Monodromy analysis of x'' + a x' + b x = 0 with a, b of period omega"""

    DEFAULTS = {
        'tol': 1e-10,
        'monodromy_tol': 1e-12,
        'horizon': 200.0,
        'fan_size': 32,
        'guard_margin': 0.01,
        'kmax': 5,
        'density': 1e4,
        'max_samples': 2_000_000,
        'mean_tol': 1e-9,
        'vieta_rtol': 1e-8,
        'wronskian_rtol': 1e-8,
        'boundary_rtol': 1e-6,
    }

    def __init__(self, config: Optional[Dict] = None):
        self.settings = {**self.DEFAULTS, **(config or {})}

    @staticmethod
    def _period(eq: EquationSpec) -> float:
        if eq.period is None:
            raise ValueError(f"equation '{eq.label}' has no declared period")
        return eq.period

    def monodromy(self, eq: EquationSpec, tol: Optional[float] = None) -> FloquetResult:
        omega = self._period(eq)
        tol = tol or min(self.settings['tol'], self.settings['monodromy_tol'])
        lo = eq.t_start
        M = propagate_matrix(eq.without_forcing(), lo, lo + omega, tol)
        W_direct = float(M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0])
        W_liouville = math.exp(-integrate(eq.a, lo, lo + omega, self.settings['tol']))
        result = FloquetResult(omega, float(M[0, 0]), float(M[0, 1]), float(M[1, 0]), float(M[1, 1]),
                               W_direct, W_liouville)
        mismatch = abs(W_direct - W_liouville) / W_liouville
        if mismatch > self.settings['wronskian_rtol']:
            message = f"Wronskian routes differ by {mismatch:.3e} (relative) over one period"
            logger.warning(f"'{eq.label}': {message}")
            result.notes.append(message)
        return result

    def _fan(self, eq: EquationSpec, horizon: float) -> List[Optional[Any]]:
        homogeneous = eq.without_forcing()
        n = self.settings['fan_size']
        end = eq.t_start + horizon

        def member(k):
            phi = math.pi * k / n
            try:
                return solve_ivp(homogeneous, eq.t_start, math.cos(phi), math.sin(phi), end, self.settings['tol'])
            except IntegrationError as e:
                logger.info(f"'{eq.label}': fan member {k} stopped at t = {e.last_t:.6g}")
                return None

        return parallel_map(member, range(n))

    def _spacing(self, eq: EquationSpec, fan: List, horizon: float) -> ZeroSpacing:
        omega = self._period(eq)
        zero_lists = [find_zeros(traj) for traj in fan if traj is not None]
        gaps = np.concatenate([np.diff(z) for z in zero_lists]) if zero_lists else np.empty(0)
        overflowed = sum(traj is None for traj in fan)
        if gaps.size == 0:
            return ZeroSpacing(math.inf, math.inf, False, gaps, overflowed)
        window = max(2.0 * omega, float(gaps.max()))
        end = eq.t_start + horizon
        oscillatory = overflowed == 0 and all(
            len(z) >= 2 and z[0] - eq.t_start <= window and end - z[-1] <= window for z in zero_lists
        )
        return ZeroSpacing(float(gaps.min()), float(gaps.max()), oscillatory, gaps, overflowed)

    def zero_spacing(self, eq: EquationSpec, horizon: Optional[float] = None) -> ZeroSpacing:
        """Adjacent-zero gaps over a fan of solutions started at (cos phi, sin phi)."""
        omega = self._period(eq)
        horizon = horizon or max(self.settings['horizon'], 10.0 * omega)
        if horizon < 10.0 * omega:
            raise ValueError(f"horizon {horizon} must cover at least ten periods ({10.0 * omega})")
        return self._spacing(eq, self._fan(eq, horizon), horizon)

    def _growth_ratios(self, eq: EquationSpec, fan: List) -> List[float]:
        ratios = []
        for traj in fan:
            if traj is None:
                ratios.append(math.inf)
                continue
            early = float(np.linalg.norm(traj.state(eq.t_start + eq.period)))
            late = float(np.linalg.norm(traj.state(traj.T)))
            ratios.append(late / early if early > 0 else math.inf)
        return ratios

    def classify(self, eq: EquationSpec, horizon: Optional[float] = None) -> FloquetResult:
        omega = self._period(eq)
        horizon = horizon or max(self.settings['horizon'], 10.0 * omega)
        result = self.monodromy(eq)
        result.multipliers = multipliers(result.trace, result.W)
        self._check_vieta(eq, result)

        lo, hi = eq.t_start, eq.t_start + omega
        p_bounds = ess_bounds(p_coefficient(eq.without_forcing()), lo, hi,
                              self.settings['density'], self.settings['max_samples'])
        result.P, result.Q = p_bounds.inf_val, p_bounds.sup_val
        result.mean_damping = integrate(eq.a, lo, hi, self.settings['tol'])
        result.zone = zone_check(result.P, result.Q, omega, self.settings['kmax'], self.settings['boundary_rtol'])
        if result.zone.near_boundary:
            result.notes.append("omega lies within tolerance of a zone boundary")

        fan = self._fan(eq, horizon)
        result.spacing = self._spacing(eq, fan, horizon)
        result.growth_ratios = self._growth_ratios(eq, fan)

        two_omega = 2.0 * omega
        gaps = result.spacing.gaps
        clear_of_two_omega = gaps.size > 0 and float(np.min(np.abs(gaps - two_omega))) > \
            self.settings['guard_margin'] * two_omega
        empirical_guard = result.spacing.oscillatory and clear_of_two_omega
        real_roots = result.multipliers[0].imag == 0.0

        if real_roots or not (result.zone.in_zone or empirical_guard):
            result.classification = FloquetClass.REAL_ROOT_GUARD_FAILED
            result.caveat = REAL_MULTIPLIER_CAVEAT
            if real_roots:
                result.notes.append("multipliers are real")
            else:
                result.notes.append("neither the zone test nor the zero-spacing guard passed")
        elif result.mean_damping > self.settings['mean_tol']:
            result.classification = FloquetClass.EXP_STABLE
        elif result.mean_damping < -self.settings['mean_tol']:
            result.classification = FloquetClass.UNSTABLE_GROWING
        else:
            result.classification = FloquetClass.BOUNDED_MARGINAL

        if result.classification is FloquetClass.EXP_STABLE and max(result.growth_ratios) > 1.0:
            result.classification = FloquetClass.UNDECIDED
            result.notes.append(f"a fanned solution grew by {max(result.growth_ratios):.6g} over the horizon")
            logger.warning(f"'{eq.label}': stability verdict withdrawn after growth check")

        logger.info(f"'{eq.label}': omega={omega:.6g}, |lambda|={[abs(m) for m in result.multipliers]}, "
                    f"{result.classification.value}")
        return result

    def _check_vieta(self, eq: EquationSpec, result: FloquetResult) -> None:
        l1, l2 = result.multipliers
        rtol = self.settings['vieta_rtol']
        product_err = abs(l1 * l2 - result.W) / result.W
        sum_err = abs(l1 + l2 - result.trace) / max(1.0, abs(result.trace))
        if product_err > rtol or sum_err > rtol:
            message = f"Vieta mismatch: product {product_err:.3e}, sum {sum_err:.3e}"
            logger.warning(f"'{eq.label}': {message}")
            result.notes.append(message)
