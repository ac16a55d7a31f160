"""
Problem Integration Layer
Loads, validates and writes problem files: the equation in tagged-node JSON,
named parameters, and the command settings every agent reads.
"""

import copy
import json
import math
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, IO, Optional, Tuple, Union

import numpy as np

from coefficients import (CoefficientExpr, EquationSpec, ProblemSchemaError, from_dict, parse_number,
                          parse_numbers)

logger = logging.getLogger(__name__)

COMMAND_DEFAULTS = {
    'tol': 1e-10,
    'horizon': 200.0,
    'grid': 50,
    'margin': 1e-9,
    'density': 1e4,
    'max_samples': 2_000_000,
    'search_T': 500.0,
    'search_periods': 50,
    'restarts': 5,
    'seed': 20090607,
    'fan_size': 32,
    'guard_margin': 0.01,
    'kmax': 5,
    'gl_nodes': 12,
    'scan_T': 20.0,
}

_SETTING_RULES: Dict[str, Tuple[type, Callable[[Any], bool], str]] = {
    'tol': (float, lambda v: 1e-14 <= v <= 1e-4, "must lie in [1e-14, 1e-4]"),
    'horizon': (float, lambda v: v > 0, "must be positive"),
    'grid': (int, lambda v: v >= 2, "must be at least 2"),
    'margin': (float, lambda v: v >= 0, "must be nonnegative"),
    'density': (float, lambda v: v > 0, "must be positive"),
    'max_samples': (int, lambda v: v >= 1000, "must be at least 1000"),
    'search_T': (float, lambda v: v > 0, "must be positive"),
    'search_periods': (int, lambda v: v >= 1, "must be at least 1"),
    'restarts': (int, lambda v: v >= 1, "must be at least 1"),
    'seed': (int, lambda v: v >= 0, "must be nonnegative"),
    'fan_size': (int, lambda v: v >= 4, "must be at least 4"),
    'guard_margin': (float, lambda v: 0 < v < 0.5, "must lie in (0, 0.5)"),
    'kmax': (int, lambda v: v >= 1, "must be at least 1"),
    'gl_nodes': (int, lambda v: v >= 2, "must be at least 2"),
    'scan_T': (float, lambda v: v > 0, "must be positive"),
}

SIMULATE_DEFAULTS = {'x0': 0.0, 'v0': 1.0, 'T': 20.0, 'points': 2001}

_EQUATION_KEYS = {'label', 'a', 'b', 'f', 't_start', 'period'}
_TOP_KEYS = {'equation', 'parameters', 'commands'}
_BLOCK_KEYS = {
    'simulate': {'x0', 'v0', 'T', 'points'},
    'sweep': {'param', 'from', 'to', 'steps'},
    'witnesses': {'T8', 'T9', 'u', 'v', 'v_omega', 't0'},
}


@dataclass
class ProblemFile:
    """Validated problem; `equation` keeps parameter references so it can be rebuilt for sweeps."""
    equation: Dict[str, Any]
    parameters: Dict[str, float] = field(default_factory=dict)
    commands: Dict[str, Any] = field(default_factory=dict)
    source: Optional[str] = field(default=None, compare=False)

    @property
    def settings(self) -> Dict[str, Any]:
        return {key: self.commands[key] for key in COMMAND_DEFAULTS}

    @property
    def label(self) -> str:
        return self.equation.get('label', '')

    def _merged(self, overrides: Optional[Dict[str, float]]) -> Dict[str, float]:
        return {**self.parameters, **(overrides or {})}

    def build_equation(self, overrides: Optional[Dict[str, float]] = None) -> EquationSpec:
        return build_equation(self.equation, self._merged(overrides))

    def witnesses(self, overrides: Optional[Dict[str, float]] = None) -> Dict[str, Any]:
        return build_witnesses(self.commands.get('witnesses', {}), self._merged(overrides))

    def simulate_options(self) -> Dict[str, Any]:
        return {**SIMULATE_DEFAULTS, **self.commands.get('simulate', {})}

    def with_parameter(self, name: str, value: float) -> 'ProblemFile':
        if name not in self.parameters:
            raise ProblemSchemaError('/parameters', f"unknown parameter {name!r}")
        parameters = {**self.parameters, name: float(value)}
        return ProblemFile(copy.deepcopy(self.equation), parameters, copy.deepcopy(self.commands), self.source)


def build_equation(data: Dict[str, Any], parameters: Dict[str, float], pointer: str = '/equation') -> EquationSpec:
    """EquationSpec from the `equation` block; periodicity is checked against the coefficients."""
    unknown = set(data) - _EQUATION_KEYS
    if unknown:
        raise ProblemSchemaError(f"{pointer}/{sorted(unknown)[0]}", "unknown key")
    for key in ('a', 'b'):
        if key not in data:
            raise ProblemSchemaError(f"{pointer}/{key}", "missing required key")
    a = from_dict(data['a'], parameters, f"{pointer}/a")
    b = from_dict(data['b'], parameters, f"{pointer}/b")
    f = from_dict(data['f'], parameters, f"{pointer}/f") if data.get('f') is not None else None
    t_start = parse_number(data.get('t_start', 0.0), f"{pointer}/t_start", parameters)
    if t_start < 0:
        raise ProblemSchemaError(f"{pointer}/t_start", "must be nonnegative")
    period = None
    if data.get('period') is not None:
        period = parse_number(data['period'], f"{pointer}/period", parameters)
        if period <= 0:
            raise ProblemSchemaError(f"{pointer}/period", "must be positive")
    label = data.get('label', '')
    if not isinstance(label, str):
        raise ProblemSchemaError(f"{pointer}/label", "expected a string")
    try:
        return EquationSpec(a, b, f, t_start, period, label)
    except ValueError as e:
        raise ProblemSchemaError(f"{pointer}/period", str(e))


def build_witnesses(data: Dict[str, Any], parameters: Dict[str, float],
                    pointer: str = '/commands/witnesses') -> Dict[str, Any]:
    witnesses: Dict[str, Any] = {}
    for key in ('T8', 'T9'):
        if key in data:
            pair = parse_numbers(data[key], f"{pointer}/{key}", parameters)
            if len(pair) != 2:
                raise ProblemSchemaError(f"{pointer}/{key}", "expected two numbers")
            witnesses[key] = pair
    for key in ('u', 'v'):
        if key in data:
            witnesses[key] = from_dict(data[key], parameters, f"{pointer}/{key}")
    for key in ('v_omega', 't0'):
        if key in data:
            witnesses[key] = parse_number(data[key], f"{pointer}/{key}", parameters)
    return witnesses


def _setting(key: str, raw: Any, pointer: str) -> Union[int, float]:
    kind, check, message = _SETTING_RULES[key]
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise ProblemSchemaError(pointer, "expected a number")
    if kind is int:
        if isinstance(raw, float) and not raw.is_integer():
            raise ProblemSchemaError(pointer, "expected an integer")
        value = int(raw)
    else:
        value = float(raw)
        if not math.isfinite(value):
            raise ProblemSchemaError(pointer, "expected a finite number")
    if not check(value):
        raise ProblemSchemaError(pointer, f"{key} {message}")
    return value


def _validate_block(name: str, block: Any, parameters: Dict[str, float]) -> Dict[str, Any]:
    pointer = f"/commands/{name}"
    if not isinstance(block, dict):
        raise ProblemSchemaError(pointer, "expected an object")
    unknown = set(block) - _BLOCK_KEYS[name]
    if unknown:
        raise ProblemSchemaError(f"{pointer}/{sorted(unknown)[0]}", "unknown key")
    if name == 'simulate':
        options = {**SIMULATE_DEFAULTS, **block}
        for key in ('x0', 'v0', 'T'):
            parse_number(options[key], f"{pointer}/{key}", parameters)
        if parse_number(options['T'], f"{pointer}/T", parameters) <= 0:
            raise ProblemSchemaError(f"{pointer}/T", "must be positive")
        points = options['points']
        if isinstance(points, bool) or not isinstance(points, int) or points < 2:
            raise ProblemSchemaError(f"{pointer}/points", "expected an integer >= 2")
    elif name == 'sweep':
        for key in ('param', 'from', 'to', 'steps'):
            if key not in block:
                raise ProblemSchemaError(f"{pointer}/{key}", "missing required key")
        if block['param'] not in parameters:
            raise ProblemSchemaError(f"{pointer}/param", f"unknown parameter {block['param']!r}")
        parse_numbers([block['from'], block['to']], pointer, {})
        steps = block['steps']
        if isinstance(steps, bool) or not isinstance(steps, int) or steps < 2:
            raise ProblemSchemaError(f"{pointer}/steps", "expected an integer >= 2")
    else:
        build_witnesses(block, parameters, pointer)
    return block


def parse_problem_data(data: Any, source: Optional[str] = None) -> ProblemFile:
    if not isinstance(data, dict):
        raise ProblemSchemaError('', "expected a JSON object")
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ProblemSchemaError(f"/{sorted(unknown)[0]}", "unknown key")
    if 'equation' not in data:
        raise ProblemSchemaError('/equation', "missing required key")
    if not isinstance(data['equation'], dict):
        raise ProblemSchemaError('/equation', "expected an object")

    raw_parameters = data.get('parameters', {})
    if not isinstance(raw_parameters, dict):
        raise ProblemSchemaError('/parameters', "expected an object")
    parameters = {name: parse_number(value, f"/parameters/{name}", {}) for name, value in raw_parameters.items()}

    raw_commands = data.get('commands', {})
    if not isinstance(raw_commands, dict):
        raise ProblemSchemaError('/commands', "expected an object")
    commands: Dict[str, Any] = dict(COMMAND_DEFAULTS)
    for key, raw in raw_commands.items():
        if key in _SETTING_RULES:
            commands[key] = _setting(key, raw, f"/commands/{key}")
        elif key in _BLOCK_KEYS:
            commands[key] = copy.deepcopy(_validate_block(key, raw, parameters))
        else:
            raise ProblemSchemaError(f"/commands/{key}", "unknown key")

    equation = copy.deepcopy(data['equation'])
    build_equation(equation, parameters)
    problem = ProblemFile(equation, parameters, commands, source)
    logger.info(f"Loaded problem '{problem.label}'" + (f" from {source}" if source else ''))
    return problem


def parse_problem(path: str) -> ProblemFile:
    """Read and validate a problem file; schema errors carry a JSON pointer."""
    try:
        with open(path, 'r') as f:
            data = json.load(f)
    except FileNotFoundError:
        logger.error(f"Problem file not found: {path}")
        raise
    except json.JSONDecodeError:
        logger.error(f"Invalid JSON in problem file: {path}")
        raise
    return parse_problem_data(data, path)


def serialize_problem(problem: ProblemFile) -> Dict[str, Any]:
    """Inverse of parse_problem_data: parse_problem_data(serialize_problem(p)) == p"""
    return {
        'equation': copy.deepcopy(problem.equation),
        'parameters': dict(problem.parameters),
        'commands': copy.deepcopy(problem.commands),
    }


def problem_from_equation(eq: EquationSpec, commands: Optional[Dict[str, Any]] = None,
                          parameters: Optional[Dict[str, float]] = None) -> ProblemFile:
    return parse_problem_data({'equation': eq.to_dict(), 'parameters': parameters or {},
                               'commands': commands or {}})


# ---------------------------------------------------------------------------
# JSON output
# ---------------------------------------------------------------------------

def convert_numpy_types(obj: Any) -> Any:
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if math.isnan(value):
            return 'nan'
        if math.isinf(value):
            return 'inf' if value > 0 else '-inf'
        return value
    if isinstance(obj, np.ndarray):
        return [convert_numpy_types(item) for item in obj.tolist()]
    if isinstance(obj, complex):
        return {'re': convert_numpy_types(obj.real), 'im': convert_numpy_types(obj.imag)}
    if isinstance(obj, CoefficientExpr):
        return obj.to_dict()
    return obj


def convert_dict(d: Any) -> Any:
    if isinstance(d, dict):
        return {str(k): convert_dict(v) for k, v in d.items()}
    if isinstance(d, (list, tuple)):
        return [convert_dict(item) for item in d]
    return convert_numpy_types(d)


def dumps(data: Any) -> str:
    """Deterministic JSON: sorted keys, shortest round-trip floats, non-finite values as strings."""
    return json.dumps(convert_dict(data), indent=2, sort_keys=True, allow_nan=False) + '\n'


def write_json(data: Any, target: Union[str, IO[str]]) -> None:
    text = dumps(data)
    if isinstance(target, str):
        with open(target, 'w') as f:
            f.write(text)
        logger.info(f"Report written to {target}")
    else:
        target.write(text)
