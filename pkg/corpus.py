"""
Reference equations: the four worked periodic examples and the constant-coefficient
equations whose Cauchy functions are known in closed form.
"""

import math
import os
from typing import Dict, List, Optional

from coefficients import Const, Cos, EquationSpec, Quot, Sin, Sum
from problem_integration import ProblemFile, parse_problem

PROBLEM_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'problems')

PROBLEM_FILES = {
    'example1': 'example1_damping_threshold.json',
    'example2': 'example2_perturbed_constant.json',
    'example3': 'example3_stiffness_threshold.json',
    'example4': 'example4_real_multipliers.json',
}

TWO_PI = 2.0 * math.pi


def load_problem(name: str) -> ProblemFile:
    return parse_problem(os.path.join(PROBLEM_DIR, PROBLEM_FILES[name]))


def constant(a: float, b: float, period: Optional[float] = None, label: Optional[str] = None) -> EquationSpec:
    return EquationSpec(Const(a), Const(b), period=period, label=label or f"const(a={a:g}, b={b:g})")


def example1(a: float = 2.0) -> EquationSpec:
    """x'' + a x' + (1 + 0.99 sin t) x = 0; stable once a^2 > 3.98"""
    return EquationSpec(Const(a), Sum((Const(1.0), Sin(0.99))), period=TWO_PI, label=f"example1(a={a:g})")


def example2() -> EquationSpec:
    return EquationSpec(Sum((Const(10.0), Sin(1.0))), Sum((Const(26.0), Cos(1.0))), period=TWO_PI,
                        label='example2')


def example3(b: float = 4.3) -> EquationSpec:
    """x'' + x' + (b + sin t) x = 0; the constant-pair perturbation test passes once b > 4.25"""
    return EquationSpec(Const(1.0), Sum((Const(b), Sin(1.0))), period=TWO_PI, label=f"example3(b={b:g})")


def example4() -> EquationSpec:
    """
    Fundamental system exp(-t) cos t, sin t: positive mean damping over the
    period pi, yet not exponentially stable.
    """
    den = Sum((Const(1.0), Sin(0.5, 2.0)))
    a = Quot(Sum((Const(1.0), Cos(-1.0, 2.0), Sin(0.5, 2.0))), den)
    b = Quot(Sum((Const(0.5), Cos(-0.5, 2.0), Sin(-0.5, 2.0))), den)
    return EquationSpec(a, b, period=math.pi, label='example4')


def golden() -> Dict[str, EquationSpec]:
    """Equations every certificate claim is cross-checked against."""
    equations = [
        constant(3.0, 2.0),
        constant(2.0, 1.0),
        constant(2.0, 2.0),
        constant(0.0, 1.0),
        constant(1.0, 1.0),
        example1(2.0),
        example1(1.9),
        example2(),
        example3(4.3),
        example3(4.2),
    ]
    return {eq.label: eq for eq in equations}


def golden_labels() -> List[str]:
    return list(golden())
