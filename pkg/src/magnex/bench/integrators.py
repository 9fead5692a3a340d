"""Integrator cost accounting on a stiff thin-film setup: empirically bisect
the largest stable step for the single-rate and multirate methods, then tally
wall time and per-term derivative evaluations over a fixed interval.

The setup mirrors the switching benchmark's film but at 0.78125 nm cells,
which makes exchange the stiff term; desk scale shrinks the in-plane extent.
The multirate method keeps demagnetization (and the bias) on the slow scale
and subcycles exchange at one tenth of the step, so it buys its stability
with cheap stencil evaluations instead of Fourier transforms.

Cost rows are reported at the published reference steps (2.5e-14 s single
rate vs 1.25e-13 s multirate over a 1.25e-13 s interval: 5 steps vs 1), so
the evaluation counts are exact integers; the bisected maxima validate that
those steps are actually stable on this setup.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..demag import DemagKernel
from ..grid import GridSpec, MaterialMap, VectorField3
from ..llg import (FAST, IntegrationBlowup, IntegratorSpec, PartitionedRHS,
                   SimState, Simulation, StopCondition)
from .common import CheckList, ensure_out_dir, uniform_state, write_csv
from .std4 import FIELD_1

DT_RK4_REF = 2.5e-14
DT_MRI_REF = 1.25e-13
INTERVAL_REF = 1.25e-13


@dataclass(frozen=True)
class IntegratorBenchParams:
    Ms: float = 8e5
    A: float = 1.3e-11
    alpha: float = 0.02
    prep_alpha: float = 0.5
    dx: float = 0.78125e-9
    nx: int = 160
    ny: int = 40
    nz: int = 1
    bias: tuple = FIELD_1
    theta: float = 0.1
    duration: float = INTERVAL_REF
    test_steps: int = 40          # steps a candidate dt must survive
    dt_floor: float = 4e-15
    dt_cap: float = 1e-11
    prep_time: float = 2e-11


class BenchSetup:
    """Grid, kernel, and a mildly non-uniform start state shared by every
    candidate run, so stability trials differ only in method and step."""

    def __init__(self, params: IntegratorBenchParams, workers: int = 1):
        p = params
        self.p = p
        self.grid = GridSpec(p.nx, p.ny, p.nz, p.dx, p.dx, p.dx)
        self.kernel = DemagKernel.build(self.grid, workers=workers)
        prep_mat = MaterialMap(self.grid, Ms=p.Ms, A=p.A, alpha=p.prep_alpha)
        rhs = PartitionedRHS(prep_mat, exchange=True, demag=self.kernel)
        state = SimState(m=uniform_state(self.grid, prep_mat, (1.0, 0.0, 0.0)))
        sim = Simulation(state, rhs, IntegratorSpec("rk4", 1e-14),
                         sample_every=10_000_000, energy_in_samples=False)
        sim.run_until(StopCondition(max_time=p.prep_time))
        self.m0 = state.m
        self.mat = MaterialMap(self.grid, Ms=p.Ms, A=p.A, alpha=p.alpha)

    def rhs(self) -> PartitionedRHS:
        return PartitionedRHS(self.mat, exchange=True, demag=self.kernel,
                              bias=np.asarray(self.p.bias, dtype=np.float64))

    def survives(self, method: str, dt: float) -> bool:
        state = SimState(m=VectorField3(self.grid, self.m0.data.copy()))
        sim = Simulation(state, self.rhs(),
                         IntegratorSpec(method, dt, theta=self.p.theta),
                         sample_every=10_000_000, energy_in_samples=False)
        try:
            sim.run_until(StopCondition(max_steps=self.p.test_steps))
        except IntegrationBlowup:
            return False
        return True

    def max_stable_dt(self, method: str, rel_tol: float = 5e-3) -> float:
        """Geometric scan up from dt_floor, then bisection in log space."""
        p = self.p
        lo = p.dt_floor
        if not self.survives(method, lo):
            raise RuntimeError(f"{method} unstable even at dt = {lo:g} s")
        hi = lo
        while True:
            cand = hi * 2.0
            if cand > p.dt_cap:
                return hi
            if self.survives(method, cand):
                hi = cand
            else:
                break
        lo, hi = hi, hi * 2.0
        while hi / lo > 1.0 + rel_tol:
            mid = (lo * hi) ** 0.5
            if self.survives(method, mid):
                lo = mid
            else:
                hi = mid
        return lo

    def cost_row(self, method: str, dt: float, duration: float) -> dict:
        rhs = self.rhs()
        state = SimState(m=VectorField3(self.grid, self.m0.data.copy()))
        sim = Simulation(state, rhs, IntegratorSpec(method, dt, theta=self.p.theta),
                         sample_every=10_000_000, energy_in_samples=False)
        t0 = time.perf_counter()
        sim.run_until(StopCondition(max_time=duration))
        wall = time.perf_counter() - t0
        steps = state.step
        return {"method": method, "dt": dt, "steps": steps,
                "wall_s": wall,
                "demag_evals": rhs.counters.get("demag", 0),
                "exchange_evals": rhs.counters.get("exchange", 0),
                "demag_per_step": rhs.counters.get("demag", 0) / max(steps, 1),
                "exchange_per_step": rhs.counters.get("exchange", 0) / max(steps, 1)}


def run_bench(params: IntegratorBenchParams | None = None, *, workers: int = 1,
              duration: float | None = None, out_dir=None, emit=print):
    p = params or IntegratorBenchParams()
    duration = p.duration if duration is None else duration
    setup = BenchSetup(p, workers=workers)

    dt_rk4 = setup.max_stable_dt("rk4")
    emit(f"rk4: max stable dt = {dt_rk4:.3e} s")
    dt_mri = setup.max_stable_dt("mri-kw3")
    emit(f"mri-kw3: max stable dt = {dt_mri:.3e} s")
    ratio = dt_mri / dt_rk4

    rows, checks = [], CheckList()
    checks.add("multirate/single-rate stable-step ratio at least 4",
               ratio >= 4.0, f"{dt_mri:.3e} / {dt_rk4:.3e} = {ratio:.2f}")
    checks.add("published single-rate reference step is stable",
               dt_rk4 >= DT_RK4_REF, f"bisected {dt_rk4:.3e} vs {DT_RK4_REF:g}")
    checks.add("published multirate reference step is stable",
               dt_mri >= DT_MRI_REF, f"bisected {dt_mri:.3e} vs {DT_MRI_REF:g}")

    try:
        row_rk4 = setup.cost_row("rk4", DT_RK4_REF, duration)
        row_mri = setup.cost_row("mri-kw3", DT_MRI_REF, duration)
    except IntegrationBlowup as err:
        checks.add("cost rows complete at the reference steps", False, str(err))
        row_rk4 = row_mri = None
    if row_rk4 is not None:
        row_rk4["max_stable_dt"] = dt_rk4
        row_mri["max_stable_dt"] = dt_mri
        rows = [row_rk4, row_mri]
        scale = duration / INTERVAL_REF
        checks.add("single-rate demag evaluations over the interval",
                   row_rk4["demag_evals"] == round(20 * scale),
                   f"{row_rk4['demag_evals']} (expected {round(20 * scale)})")
        checks.add("multirate demag evaluations over the interval",
                   row_mri["demag_evals"] == round(3 * scale),
                   f"{row_mri['demag_evals']} (expected {round(3 * scale)})")
        wall_ratio = row_mri["wall_s"] / row_rk4["wall_s"]
        checks.add("multirate wall time at most 0.8x single rate",
                   wall_ratio <= 0.8,
                   f"{row_mri['wall_s']:.4f} s / {row_rk4['wall_s']:.4f} s "
                   f"= {wall_ratio:.2f}")
        for row in rows:
            emit(f"{row['method']}: dt {row['dt']:.3e} s, {row['steps']} steps, "
                 f"{row['demag_evals']} demag / {row['exchange_evals']} exchange "
                 f"evals, wall {row['wall_s']:.4f} s")

    if out_dir is not None and rows:
        out = ensure_out_dir(out_dir)
        cols = ["method", "max_stable_dt", "dt", "steps", "wall_s",
                "demag_per_step", "exchange_per_step", "demag_evals",
                "exchange_evals"]
        write_csv(out / "cost_table.csv", cols, rows)
    return rows, checks
