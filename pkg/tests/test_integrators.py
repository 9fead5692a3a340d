import math

import numpy as np
import pytest

from magnex.integrators import (KW3_A, KW3_B, KW3_C, euler_step,
                                fast_evals_per_step, kw3_step, mri_kw3_step,
                                rk4_step, substeps_per_phase)


def test_kw3_tableau_order_conditions():
    b1, b2, b3 = KW3_B
    c1, c2, c3 = KW3_C
    assert b1 + b2 + b3 == pytest.approx(1.0, abs=1e-15)
    assert b1 * c1 + b2 * c2 + b3 * c3 == pytest.approx(0.5, abs=1e-15)
    assert b1 * c1**2 + b2 * c2**2 + b3 * c3**2 == pytest.approx(1.0 / 3.0, abs=1e-15)
    # sum_i b_i sum_j a_ij c_j = 1/6
    s = b2 * (KW3_A[1][0] * c1) + b3 * (KW3_A[2][0] * c1 + KW3_A[2][1] * c2)
    assert s == pytest.approx(1.0 / 6.0, abs=1e-15)
    # consistency: row sums equal c
    assert KW3_A[1][0] == pytest.approx(c2, abs=1e-15)
    assert KW3_A[2][0] + KW3_A[2][1] == pytest.approx(c3, abs=1e-15)


def _observed_order(stepper, dts, t_end, lam=-1.7):
    errs = []
    for dt in dts:
        y, t = 1.0, 0.0
        n = round(t_end / dt)
        for _ in range(n):
            y = stepper(y, t, dt, lambda tt, yy: lam * yy)
            t += dt
        errs.append(abs(y - math.exp(lam * t_end)))
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(len(errs) - 1)]
    return orders


def test_euler_first_order():
    orders = _observed_order(euler_step, [0.02, 0.01, 0.005], 1.0)
    assert all(abs(p - 1.0) < 0.1 for p in orders)


def test_rk4_fourth_order():
    orders = _observed_order(rk4_step, [0.1, 0.05, 0.025, 0.0125], 1.0)
    assert abs(orders[-1] - 4.0) < 0.1, orders
    assert all(abs(p - 4.0) < 0.25 for p in orders), orders


def test_kw3_third_order():
    orders = _observed_order(kw3_step, [0.1, 0.05, 0.025], 1.0)
    assert all(abs(p - 3.0) < 0.1 for p in orders)


def test_rk4_time_quadrature_is_simpson():
    # on y' = f(t) the scheme reduces to Simpson's rule, exact for cubics
    y = rk4_step(0.0, 0.0, 1.0, lambda t, _y: 3.0 * t * t)
    assert y == pytest.approx(1.0, abs=1e-15)


def test_mri_empty_fast_matches_single_rate():
    rng = np.random.default_rng(11)
    y0 = rng.normal(size=6)
    A = rng.normal(size=(6, 6)) * 0.8

    def rhs(t, y):
        return A @ y

    y_kw3, y_mri, t = y0, y0, 0.0
    for _ in range(20):
        y_kw3 = kw3_step(y_kw3, t, 0.05, rhs)
        y_mri = mri_kw3_step(y_mri, t, 0.05, rhs, None, theta=0.1)
        t += 0.05
    assert np.allclose(y_mri, y_kw3, rtol=1e-13, atol=1e-15)


def test_mri_zero_fast_function_matches_single_rate():
    # an explicitly-zero fast term exercises the subcycling path; the
    # constant-forcing phases must still telescope to the slow stages
    def rhs(t, y):
        return -1.3 * y

    def zero(t, y):
        return 0.0 * y

    y_kw3 = y_mri = 1.0
    t = 0.0
    for _ in range(10):
        y_kw3 = kw3_step(y_kw3, t, 0.1, rhs)
        y_mri = mri_kw3_step(y_mri, t, 0.1, rhs, zero, theta=0.1)
        t += 0.1
    assert y_mri == pytest.approx(y_kw3, rel=1e-12)


def test_mri_empty_fast_third_order():
    orders = _observed_order(
        lambda y, t, dt, rhs: mri_kw3_step(y, t, dt, rhs, None),
        [0.1, 0.05, 0.025], 1.0)
    assert all(abs(p - 3.0) < 0.1 for p in orders)


def test_mri_split_system_third_order():
    # slow/fast additive split of a linear problem: y' = (ls + lf) y
    ls, lf = -0.7, -8.0
    t_end = 1.0
    errs = []
    for dt in (0.05, 0.025, 0.0125):
        y, t = 1.0, 0.0
        for _ in range(round(t_end / dt)):
            y = mri_kw3_step(y, t, dt,
                             lambda tt, yy: ls * yy,
                             lambda tt, yy: lf * yy, theta=0.1)
            t += dt
        errs.append(abs(y - math.exp((ls + lf) * t_end)))
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(len(errs) - 1)]
    assert abs(orders[-1] - 3.0) < 0.1, (orders, errs)
    assert all(abs(p - 3.0) < 0.2 for p in orders), (orders, errs)


def test_mri_stabilizes_stiff_fast_term():
    # single-rate at the slow step is unstable, the subcycled split is not
    ls, lf = -0.5, -40.0
    dt = 0.45  # |1 + dt*lf| > 1 for Euler; KW3 stability also exceeded

    y = 1.0
    for _ in range(40):
        y = kw3_step(y, 0.0, dt, lambda t, v: (ls + lf) * v)
    assert abs(y) > 10.0  # blew up

    y = 1.0
    for _ in range(40):
        y = mri_kw3_step(y, 0.0, dt, lambda t, v: ls * v,
                         lambda t, v: lf * v, theta=0.05)
    assert abs(y) < 1e-3  # decayed like the true solution


def test_substep_counts():
    assert substeps_per_phase(0.1) == (4, 5, 3)
    assert fast_evals_per_step(0.1) == 36
    assert substeps_per_phase(1.0) == (1, 1, 1)
    assert fast_evals_per_step(1.0) == 9
    assert substeps_per_phase(0.25) == (2, 2, 1)
    with pytest.raises(ValueError, match="fast-step ratio"):
        substeps_per_phase(0.0)


def test_time_arguments_seen_by_rhs():
    seen = []

    def rhs(t, y):
        seen.append(t)
        return 0.0 * y

    rk4_step(np.zeros(2), 10.0, 2.0, rhs)
    assert seen == [10.0, 11.0, 11.0, 12.0]

    seen.clear()
    kw3_step(np.zeros(2), 0.0, 1.0, rhs)
    assert seen == [0.0, KW3_C[1], KW3_C[2]]

    seen.clear()
    slow_seen = []

    def slow(t, y):
        slow_seen.append(t)
        return 0.0 * y

    mri_kw3_step(np.zeros(2), 0.0, 1.0, slow, rhs, theta=1.0)
    assert slow_seen == [0.0, KW3_C[1], KW3_C[2]]
    # one subcycle step per phase, three inner stages each, clocked from the
    # phase start times
    assert len(seen) == 9
    assert seen[0] == 0.0 and seen[3] == pytest.approx(KW3_C[1]) \
        and seen[6] == pytest.approx(KW3_C[2])
