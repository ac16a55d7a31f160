"""
oscillint command line: certify, floquet, simulate, oracle and sweep over one problem file.

    python app.py certify problems/example2_perturbed_constant.json --json report.json
"""

import logging
import sys
from typing import Any, Dict, List, Optional, Sequence, Tuple

import click
import numpy as np
import pandas as pd

from integrator import parallel_map, solve_ivp
from problem_integration import ProblemFile, dumps, parse_problem, write_json
from agents import FloquetAgent, OracleAgent, certify_all

logger = logging.getLogger(__name__)

COMMANDS = ('certify', 'floquet', 'simulate', 'oracle', 'sweep')

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INAPPLICABLE = 2

FLOAT_FORMAT = '%.17g'


class OscillintAPI:
    """
    Runs the agents for one problem file and returns (exit code, artifact).
    Artifacts are dicts for the JSON commands and DataFrames for the grid commands.
    """

    def __init__(self, problem: ProblemFile):
        self.problem = problem
        self.settings = problem.settings
        self.equation = problem.build_equation()

    def certify(self, only: Optional[Sequence[str]] = None) -> Tuple[int, Dict[str, Any]]:
        report = certify_all(self.equation, self.settings, self.problem.witnesses(), only)
        code = EXIT_INAPPLICABLE if report.inapplicable_only else EXIT_OK
        return code, report.to_dict()

    def floquet(self) -> Tuple[int, Dict[str, Any]]:
        result = FloquetAgent(self.settings).classify(self.equation)
        return EXIT_OK, result.to_dict()

    def oracle(self) -> Tuple[int, Dict[str, Any]]:
        return EXIT_OK, OracleAgent(self.settings).oracle_report(self.equation)

    def simulate(self, x0: Optional[float] = None, v0: Optional[float] = None, T: Optional[float] = None,
                 points: Optional[int] = None) -> Tuple[int, pd.DataFrame, List[float]]:
        """Trajectory on an even grid of `points` times in [t_start, T], plus its zeros."""
        options = self.problem.simulate_options()
        x0 = options['x0'] if x0 is None else x0
        v0 = options['v0'] if v0 is None else v0
        T = options['T'] if T is None else T
        points = options['points'] if points is None else points
        t0 = self.equation.t_start
        traj = solve_ivp(self.equation, t0, float(x0), float(v0), float(T), self.settings['tol'])
        frame = traj.to_frame(np.linspace(t0, T, int(points)))
        logger.info(f"'{self.equation.label}': simulated [{t0}, {T}], {len(traj.zeros)} zeros")
        return EXIT_OK, frame, list(traj.zeros)

    def _sweep_axis(self, param: Optional[str], start: Optional[float], stop: Optional[float],
                    steps: Optional[int]) -> Tuple[str, np.ndarray]:
        axis = dict(self.problem.commands.get('sweep', {}))
        for key, value in (('param', param), ('from', start), ('to', stop), ('steps', steps)):
            if value is not None:
                axis[key] = value
        missing = [key for key in ('param', 'from', 'to', 'steps') if key not in axis]
        if missing:
            raise click.UsageError(f"sweep needs {', '.join(missing)} (options or the problem's sweep block)")
        if int(axis['steps']) < 2:
            raise click.UsageError("sweep needs at least 2 steps")
        return axis['param'], np.linspace(float(axis['from']), float(axis['to']), int(axis['steps']))

    def _sweep_point(self, name: str, value: float, only: Optional[Sequence[str]], decay: bool) -> Dict[str, Any]:
        problem = self.problem.with_parameter(name, value)
        eq = problem.build_equation()
        report = certify_all(eq, self.settings, problem.witnesses(), only)
        row: Dict[str, Any] = {name: value, 'summary': report.summary, 'supporting': ' '.join(report.supporting)}
        for cert in report.certificates:
            row[cert.criterion] = cert.verdict.value
        if decay:
            try:
                row['lambda_fit'] = OracleAgent(self.settings).empirical_decay_rate(eq).rate
            except Exception as e:
                logger.error(f"Error in decay fit at {name}={value!r}: {e}")
                row['lambda_fit'] = np.nan
        return row

    def sweep(self, param: Optional[str] = None, start: Optional[float] = None, stop: Optional[float] = None,
              steps: Optional[int] = None, only: Optional[Sequence[str]] = None,
              decay: bool = True) -> Tuple[int, pd.DataFrame]:
        """One row per parameter point, in point order, with every verdict and the fitted decay rate."""
        name, values = self._sweep_axis(param, start, stop, steps)
        rows = parallel_map(lambda value: self._sweep_point(name, float(value), only, decay), values)
        frame = pd.DataFrame(rows)
        leading = [name, 'summary', 'supporting'] + (['lambda_fit'] if decay else [])
        frame = frame[leading + [c for c in frame.columns if c not in leading]]
        logger.info(f"'{self.equation.label}': swept {name} over {len(values)} points")
        return EXIT_OK, frame


def write_frame(frame: pd.DataFrame, target: Optional[str]) -> None:
    if target:
        frame.to_csv(target, index=False, float_format=FLOAT_FORMAT)
        logger.info(f"Grid written to {target}")
    else:
        click.echo(frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator='\n'), nl=False)


def _emit_json(data: Any, target: Optional[str]) -> None:
    if target:
        write_json(data, target)
    else:
        click.echo(dumps(data), nl=False)


def run(command: str, problem: ProblemFile, out: Optional[str] = None, **options) -> int:
    """Dispatch one command; returns the exit code. Every failure is logged and mapped to 1."""
    if command not in COMMANDS:
        raise click.UsageError(f"unknown command {command!r}")
    try:
        api = OscillintAPI(problem)
        if command == 'certify':
            code, data = api.certify(options.get('only'))
            _emit_json(data, out)
        elif command == 'floquet':
            code, data = api.floquet()
            _emit_json(data, out)
        elif command == 'oracle':
            code, data = api.oracle()
            _emit_json(data, out)
        elif command == 'simulate':
            zeros_out = options.pop('zeros', None)
            code, frame, zeros = api.simulate(**options)
            write_frame(frame, out)
            if zeros_out:
                write_json({'label': problem.label, 'zeros': zeros}, zeros_out)
        else:
            code, frame = api.sweep(**options)
            write_frame(frame, out)
        return code
    except click.UsageError:
        raise
    except Exception as e:
        logger.error(f"Error in {command} for '{problem.label}': {e}")
        click.echo(f"error: {e}", err=True)
        return EXIT_ERROR


def _load(path: str) -> ProblemFile:
    try:
        return parse_problem(path)
    except Exception as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(EXIT_ERROR)


def _only(value: Optional[str]) -> Optional[List[str]]:
    return [name.strip() for name in value.split(',') if name.strip()] if value else None


@click.group(name='oscillint')
@click.option('--log-level', default='INFO', show_default=True,
              type=click.Choice(['DEBUG', 'INFO', 'WARNING', 'ERROR'], case_sensitive=False))
def cli(log_level: str) -> None:
    """Nonoscillation and exponential stability certificates for x'' + a(t)x' + b(t)x = f(t)."""
    logging.basicConfig(level=getattr(logging, log_level.upper()), stream=sys.stderr,
                        format='%(levelname)s %(name)s: %(message)s', force=True)


@cli.command()
@click.argument('problem_file', type=click.Path(dir_okay=False))
@click.option('--json', 'out', type=click.Path(dir_okay=False), help="Write the report here instead of stdout.")
@click.option('--only', help="Comma-separated criteria, e.g. T7,T8.")
def certify(problem_file: str, out: Optional[str], only: Optional[str]) -> None:
    """Run every applicable criterion and print the certification report."""
    sys.exit(run('certify', _load(problem_file), out, only=_only(only)))


@cli.command()
@click.argument('problem_file', type=click.Path(dir_okay=False))
@click.option('--json', 'out', type=click.Path(dir_okay=False))
def floquet(problem_file: str, out: Optional[str]) -> None:
    """Monodromy matrix, multipliers and stability class of a periodic equation."""
    sys.exit(run('floquet', _load(problem_file), out))


@cli.command()
@click.argument('problem_file', type=click.Path(dir_okay=False))
@click.option('--x0', type=float)
@click.option('--v0', type=float)
@click.option('--T', 'T', type=float, help="End time.")
@click.option('--points', type=click.IntRange(min=2))
@click.option('--out', type=click.Path(dir_okay=False), help="CSV file for t, x, xdot.")
@click.option('--zeros', type=click.Path(dir_okay=False), help="JSON file for the zeros of x.")
def simulate(problem_file: str, x0: Optional[float], v0: Optional[float], T: Optional[float],
             points: Optional[int], out: Optional[str], zeros: Optional[str]) -> None:
    """Integrate one initial value problem and write the trajectory as CSV."""
    sys.exit(run('simulate', _load(problem_file), out, x0=x0, v0=v0, T=T, points=points, zeros=zeros))


@cli.command()
@click.argument('problem_file', type=click.Path(dir_okay=False))
@click.option('--json', 'out', type=click.Path(dir_okay=False))
def oracle(problem_file: str, out: Optional[str]) -> None:
    """Numerical cross-checks: decay fit, positivity scan, integral bounds."""
    sys.exit(run('oracle', _load(problem_file), out))


@cli.command()
@click.argument('problem_file', type=click.Path(dir_okay=False))
@click.option('--param')
@click.option('--from', 'start', type=float)
@click.option('--to', 'stop', type=float)
@click.option('--steps', type=int)
@click.option('--only', help="Comma-separated criteria.")
@click.option('--no-decay', is_flag=True, help="Skip the fitted decay rate column.")
@click.option('--out', type=click.Path(dir_okay=False))
def sweep(problem_file: str, param: Optional[str], start: Optional[float], stop: Optional[float],
          steps: Optional[int], only: Optional[str], no_decay: bool, out: Optional[str]) -> None:
    """Certify over a parameter grid; one CSV row per point."""
    sys.exit(run('sweep', _load(problem_file), out, param=param, start=start, stop=stop, steps=steps,
                 only=_only(only), decay=not no_decay))


if __name__ == '__main__':
    cli()
