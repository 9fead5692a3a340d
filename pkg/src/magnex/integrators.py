"""Fixed-step explicit time integrators.

Array-level kernels: the state is any ndarray (or float), a right-hand side
is a callable ``rhs(t, y) -> dy/dt``. The optional ``post_stage`` hook is
applied to every intermediate stage state before it feeds a derivative
evaluation (the magnetization renormalization plugs in here); the caller owns
whatever happens after the completed step.

The multirate step advances a slow/fast splitting: the slow derivative is
evaluated at the three stages of the Knoth-Wolke method, and between
consecutive slow stages the fast system is subcycled with the same three-stage
method under a piecewise-constant slow forcing. The forcing weights are the
telescoped stage increments of the slow tableau divided by the stage interval,
so with a zero fast term every phase reproduces the corresponding slow-stage
update exactly and the scheme collapses to the plain single-rate method.
"""

from __future__ import annotations

import math

__all__ = [
    "euler_step", "rk4_step", "kw3_step", "mri_kw3_step",
    "substeps_per_phase", "fast_evals_per_step",
    "KW3_C", "KW3_A", "KW3_B",
]

# three-stage, third-order explicit Knoth-Wolke tableau
KW3_C = (0.0, 1.0 / 3.0, 3.0 / 4.0)
KW3_A = ((0.0, 0.0, 0.0),
         (1.0 / 3.0, 0.0, 0.0),
         (-3.0 / 16.0, 15.0 / 16.0, 0.0))
KW3_B = (1.0 / 6.0, 3.0 / 10.0, 8.0 / 15.0)

# slow-stage interval widths delta-c and the per-phase forcing weights on the
# already-computed slow derivatives f_1..f_j
_MRI_DC = (1.0 / 3.0, 5.0 / 12.0, 1.0 / 4.0)
_MRI_W = ((1.0,),
          (-5.0 / 4.0, 9.0 / 4.0),
          (17.0 / 12.0, -51.0 / 20.0, 32.0 / 15.0))


def euler_step(y, t, dt, rhs):
    """One forward-Euler step."""
    return y + dt * rhs(t, y)


def rk4_step(y, t, dt, rhs, post_stage=None):
    """One classical fourth-order Runge-Kutta step (4 derivative evals)."""
    half = 0.5 * dt
    k1 = rhs(t, y)
    y2 = y + half * k1
    if post_stage is not None:
        y2 = post_stage(y2)
    k2 = rhs(t + half, y2)
    y3 = y + half * k2
    if post_stage is not None:
        y3 = post_stage(y3)
    k3 = rhs(t + half, y3)
    y4 = y + dt * k3
    if post_stage is not None:
        y4 = post_stage(y4)
    k4 = rhs(t + dt, y4)
    return y + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)


def kw3_step(y, t, dt, rhs, post_stage=None):
    """One step of the three-stage third-order scheme (3 derivative evals)."""
    k1 = rhs(t, y)
    y2 = y + (dt * KW3_A[1][0]) * k1
    if post_stage is not None:
        y2 = post_stage(y2)
    k2 = rhs(t + KW3_C[1] * dt, y2)
    y3 = y + dt * (KW3_A[2][0] * k1 + KW3_A[2][1] * k2)
    if post_stage is not None:
        y3 = post_stage(y3)
    k3 = rhs(t + KW3_C[2] * dt, y3)
    return y + dt * (KW3_B[0] * k1 + KW3_B[1] * k2 + KW3_B[2] * k3)


def substeps_per_phase(theta: float) -> tuple[int, int, int]:
    """Fast substep counts per slow-stage interval for fast step ~ theta*dt.

    Each interval delta-c is divided into ceil(delta-c / theta) uniform
    substeps, so the realized fast step never exceeds theta*dt.
    """
    if not 0.0 < theta <= 1.0:
        raise ValueError(f"fast-step ratio must be in (0, 1], got {theta}")
    return tuple(math.ceil(dc / theta - 1e-12) for dc in _MRI_DC)


def fast_evals_per_step(theta: float) -> int:
    """Fast-partition derivative evaluations in one multirate step."""
    return 3 * sum(substeps_per_phase(theta))


def mri_kw3_step(y, t, dt, rhs_slow, rhs_fast, theta=0.1, post_stage=None):
    """One multirate step: 3 slow evals, subcycled fast system in between.

    ``rhs_fast=None`` means an empty fast partition: each phase then advances
    under the constant forcing alone, which telescopes to the single-rate
    three-stage step on the slow system.
    """
    nsub = substeps_per_phase(theta)
    fs = [rhs_slow(t, y)]
    v = y
    for phase in range(3):
        w = _MRI_W[phase]
        r = w[0] * fs[0]
        for j in range(1, len(w)):
            r = r + w[j] * fs[j]
        span = _MRI_DC[phase] * dt
        t0 = t + KW3_C[phase] * dt
        if rhs_fast is None:
            v = v + span * r
            if post_stage is not None:
                v = post_stage(v)
        else:
            n = nsub[phase]
            h = span / n
            forced = lambda tt, vv, r=r: rhs_fast(tt, vv) + r
            for s in range(n):
                v = kw3_step(v, t0 + s * h, h, forced, post_stage)
                if post_stage is not None:
                    v = post_stage(v)
        if phase < 2:
            fs.append(rhs_slow(t + KW3_C[phase + 1] * dt, v))
    return v
