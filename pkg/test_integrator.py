import math

import numpy as np
import pytest
from scipy.integrate import simpson

import corpus
from coefficients import Const, EquationSpec, PwConst, Sin
from integrator import (BVPNotSolvableError, GreenKernel, IntegrationError, cauchy_row, classify_zeros, find_zeros,
                        fundamental_function, fundamental_system, green_kernel, integro_fundamental, parallel_map,
                        propagate_matrix, row_integral, solve_ivp, thread_count)


def overdamped_cauchy(t, s):
    d = t - s
    return math.exp(-d) - math.exp(-2.0 * d)


def test_solve_ivp_harmonic(harmonic):
    traj = solve_ivp(harmonic, 0.0, 0.0, 1.0, 20.0)
    ts = np.linspace(0.0, 20.0, 201)
    np.testing.assert_allclose(traj.x(ts), np.sin(ts), atol=1e-8)
    np.testing.assert_allclose(traj.xdot(ts), np.cos(ts), atol=1e-8)


def test_solve_ivp_rejects_bad_input(harmonic):
    with pytest.raises(ValueError):
        solve_ivp(harmonic, 1.0, 0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        solve_ivp(harmonic, 0.0, 0.0, 1.0, 1.0, tol=1e-2)


def test_forced_response():
    # x'' + 3x' + 2x = 2 from rest: 1 - 2e^-t + e^-2t
    eq = EquationSpec(Const(3.0), Const(2.0), Const(2.0))
    traj = solve_ivp(eq, 0.0, 0.0, 0.0, 5.0)
    assert traj.x(5.0) == pytest.approx(1.0 - 2.0 * math.exp(-5.0) + math.exp(-10.0), abs=1e-8)


def test_piecewise_coefficients_restart_at_breakpoints():
    # b = 1 on [0, 1), 4 afterwards; state is continuous across t = 1
    eq = EquationSpec(Const(0.0), PwConst((1.0,), (1.0, 4.0)))
    traj = solve_ivp(eq, 0.0, 0.0, 1.0, 2.0)
    x1, v1 = math.sin(1.0), math.cos(1.0)
    expected = x1 * math.cos(2.0) + v1 / 2.0 * math.sin(2.0)
    assert traj.x(2.0) == pytest.approx(expected, abs=1e-8)


def test_overflow_raises_integration_error():
    eq = EquationSpec(Const(-40.0), Const(0.0))
    with pytest.raises(IntegrationError) as excinfo:
        solve_ivp(eq, 0.0, 0.0, 1.0, 50.0)
    assert excinfo.value.last_t < 50.0


def test_fundamental_system_wronskian_routes_agree():
    eq = corpus.example1(2.0)
    pair = fundamental_system(eq, 0.0, 2.0 * math.pi)
    direct, liouville = pair.wronskian(2.0 * math.pi), pair.liouville_wronskian(2.0 * math.pi)
    assert direct == pytest.approx(liouville, rel=1e-8)
    assert liouville == pytest.approx(math.exp(-4.0 * math.pi), rel=1e-12)


def test_fundamental_function_is_zero_before_start(overdamped):
    traj = fundamental_function(overdamped, 1.0, 6.0)
    assert traj.x(0.5) == 0.0
    assert traj.x(4.0) == pytest.approx(overdamped_cauchy(4.0, 1.0), abs=1e-9)


def test_cauchy_row_matches_closed_form(overdamped):
    row = cauchy_row(overdamped, 5.0, 0.0)
    ss = np.linspace(0.0, 5.0, 11)
    expected = [overdamped_cauchy(5.0, s) for s in ss]
    np.testing.assert_allclose(row.X(ss), expected, atol=1e-9)
    assert row.X(6.0) == 0.0


def test_cauchy_row_agrees_with_forward_solution():
    eq = corpus.example1(2.0)
    row = cauchy_row(eq, 8.0, 0.0)
    for s in (0.5, 3.0, 7.0):
        assert row.X(s) == pytest.approx(fundamental_function(eq, s, 8.0).x(8.0), abs=1e-8)


def test_row_integral_of_cauchy_function(overdamped):
    # int_0^T X(T, s) ds = 1/2 - e^-T + e^-2T / 2
    T = 5.0
    expected = 0.5 - math.exp(-T) + 0.5 * math.exp(-2.0 * T)
    assert row_integral(overdamped, T, 0.0) == pytest.approx(expected, abs=1e-8)
    assert row_integral(overdamped, T, T) == 0.0


def test_row_integral_absolute_bounds_signed(harmonic):
    signed = row_integral(harmonic, 4.0, 0.0)
    absolute = row_integral(harmonic, 4.0, 0.0, absolute=True)
    assert signed == pytest.approx(1.0 - math.cos(4.0), abs=1e-8)
    assert absolute >= abs(signed)


def test_row_integral_unknown_kernel(harmonic):
    with pytest.raises(ValueError):
        row_integral(harmonic, 1.0, 0.0, kernel='Z')


def test_integro_fundamental_constant_damping(overdamped):
    # Y(t, s) solves y' = -z, z' = b y - a z; for constant a, Y(t, 0) = x1(t)
    y = integro_fundamental(overdamped, 0.0, 4.0)
    x1 = solve_ivp(overdamped, 0.0, 1.0, 0.0, 4.0)
    ts = np.linspace(0.0, 4.0, 9)
    np.testing.assert_allclose(y.x(ts), x1.x(ts), atol=1e-8)


def test_propagate_matrix_harmonic(harmonic):
    M = propagate_matrix(harmonic, 0.0, 1.0)
    expected = np.array([[math.cos(1.0), math.sin(1.0)], [-math.sin(1.0), math.cos(1.0)]])
    np.testing.assert_allclose(M, expected, atol=1e-10)


def test_find_zeros_of_sine(harmonic):
    zeros = find_zeros(solve_ivp(harmonic, 0.0, 0.0, 1.0, 10.0))
    np.testing.assert_allclose(zeros, [math.pi, 2.0 * math.pi, 3.0 * math.pi], atol=1e-9)


def test_touching_zero_is_not_a_crossing():
    # x = 1 - cos t touches zero at 2 pi without changing sign
    eq = EquationSpec(Const(0.0), Const(1.0), Const(1.0))
    crossings, _ = classify_zeros(solve_ivp(eq, 0.0, 0.0, 0.0, 7.0))
    assert crossings == []


def test_green_kernel_negative_on_nonoscillation_interval(overdamped):
    kernel = GreenKernel(overdamped, 1.0)
    grid = kernel.grid(np.linspace(0.1, 0.9, 5), np.linspace(0.1, 0.9, 5))
    assert np.all(grid < 0.0)
    assert kernel(0.5, 0.3) == pytest.approx(grid[2, 1], rel=1e-10)
    assert green_kernel(overdamped, 1.0, 0.5, 0.3) == pytest.approx(grid[2, 1], rel=1e-10)


def test_green_kernel_of_x_double_prime():
    # x'' = f, x(0) = x(1) = 0: G(t, s) = (t - 1) s for s <= t, t (s - 1) otherwise
    eq = EquationSpec(Const(0.0), Const(0.0))
    kernel = GreenKernel(eq, 1.0)
    assert kernel(0.7, 0.2) == pytest.approx((0.7 - 1.0) * 0.2, abs=1e-9)
    assert kernel(0.2, 0.7) == pytest.approx(0.2 * (0.7 - 1.0), abs=1e-9)


def test_green_kernel_unsolvable_at_resonance(harmonic):
    with pytest.raises(BVPNotSolvableError):
        GreenKernel(harmonic, math.pi)


def test_parallel_map_keeps_order(monkeypatch):
    monkeypatch.setenv('OSCILLINT_THREADS', '3')
    assert thread_count() == 3
    assert parallel_map(lambda k: k * k, range(8)) == [k * k for k in range(8)]


def test_thread_count_ignores_garbage(monkeypatch):
    monkeypatch.setenv('OSCILLINT_THREADS', 'many')
    assert thread_count() == 1


def test_trajectory_frame_columns(harmonic):
    frame = solve_ivp(harmonic, 0.0, 0.0, 1.0, 1.0).to_frame([0.0, 0.5, 1.0])
    assert list(frame.columns) == ['t', 'x', 'xdot']
    assert frame['x'].iloc[1] == pytest.approx(math.sin(0.5), abs=1e-9)


def test_example4_second_solution_is_sine():
    traj = solve_ivp(corpus.example4(), 0.0, 0.0, 1.0, 20.0)
    ts = np.linspace(0.0, 20.0, 401)
    np.testing.assert_allclose(traj.x(ts), np.sin(ts), atol=1e-6)


def test_sinusoidal_damping_fundamental_pair():
    eq = EquationSpec(Sin(0.5), Const(1.0))
    pair = fundamental_system(eq, 0.0, 3.0)
    assert pair.liouville_mismatch < 1e-8
    assert pair.matrix(0.0).tolist() == [[1.0, 0.0], [0.0, 1.0]]


def test_forced_solution_is_the_cauchy_convolution():
    # zero initial data: x(T) = int_0^T X(T, s) f(s) ds
    eq = EquationSpec(Const(3.0), Const(2.0), Sin(1.0))
    T = 6.0
    ss = np.linspace(0.0, T, 481)
    kernel = [fundamental_function(eq, s, T).x(T) for s in ss[:-1]] + [0.0]
    convolution = simpson(np.array(kernel) * np.sin(ss), x=ss)
    assert solve_ivp(eq, 0.0, 0.0, 0.0, T).x(T) == pytest.approx(convolution, abs=1e-7)


CLOSED_FORMS = [
    ('harmonic', corpus.constant(0.0, 1.0), (0.0, 1.0), 20.0, np.sin),
    ('overdamped', corpus.constant(3.0, 2.0), (1.0, -1.0), 10.0, lambda t: np.exp(-t)),
    ('example4', corpus.example4(), (0.0, 1.0), 20.0, np.sin),
]


@pytest.mark.parametrize('name, eq, start, T, exact', CLOSED_FORMS, ids=[case[0] for case in CLOSED_FORMS])
def test_tolerance_governs_accuracy_without_step_cap(name, eq, start, T, exact):
    ts = np.linspace(0.0, T, 401)

    def max_error(tol):
        traj = solve_ivp(eq, 0.0, *start, T, tol=tol, max_step=math.inf)
        return float(np.max(np.abs(traj.x(ts) - exact(ts))))

    loose, tight = max_error(1e-5), max_error(1e-9)
    assert tight <= 1e-6
    assert loose >= 2.0 * tight


def test_default_step_cap_keeps_round_off_accuracy(harmonic):
    ts = np.linspace(0.0, 20.0, 401)
    for tol in (1e-4, 1e-10):
        assert np.max(np.abs(solve_ivp(harmonic, 0.0, 0.0, 1.0, 20.0, tol=tol).x(ts) - np.sin(ts))) <= 1e-10
