"""Thin-prism hysteresis: sweep a diagonal field and extract remanence and
coercivity as a function of the prism size in exchange lengths.

The prism has aspect ratio L:d:t = 5:1:0.1 on a fixed 50 x 10 x 1 grid of
cubic cells, so the physical size enters only through d/lex. The applied
field steps from +0.08 Ms to -0.08 Ms per component along (1,1,1) and back,
equilibrating at every increment until the average normalized magnetization
moves less than 1e-9 per component per step. The precession term is disabled
(it cannot change the fixed points) and each increment warm-starts from the
previous equilibrium, which is what makes the loop hysteretic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..demag import DemagKernel
from ..grid import GridSpec, MaterialMap
from ..llg import IntegratorSpec, PartitionedRHS, SimState, Simulation, StopCondition
from .common import (CheckList, ensure_out_dir, exchange_length, stable_dt,
                     uniform_state, write_csv)

GRID_CELLS = (50, 10, 1)
DIAG = np.array([1.0, 1.0, 1.0]) / math.sqrt(3.0)


@dataclass(frozen=True)
class Std2Params:
    Ms: float = 8e5
    A: float = 1.005154e-11
    alpha: float = 0.5
    h_max_frac: float = 0.08     # field sweep amplitude per component, in Ms
    increments: int = 100        # per direction; the published protocol uses 1000
    tol: float = 1e-9
    cap_per_increment: float = 4e-9
    dt_safety: float = 0.5

    @property
    def lex(self) -> float:
        return exchange_length(self.A, self.Ms)


@dataclass
class BranchResult:
    name: str
    rows: list = field(default_factory=list)
    rem_mx: float = float("nan")
    rem_my: float = float("nan")
    rem_mz: float = float("nan")
    hc_mag_over_ms: float = float("nan")


@dataclass
class HysteresisResult:
    d_over_lex: float
    forward: BranchResult
    reverse: BranchResult
    antisymmetry: float = float("nan")


class EquilibrationError(RuntimeError):
    def __init__(self, branch: str, index: int, residual: float):
        super().__init__(f"{branch} branch increment {index} failed to "
                         f"equilibrate (residual {residual:.2e})")
        self.branch = branch
        self.index = index


def prism_setup(d_over_lex: float, params: Std2Params):
    p = params
    cell = d_over_lex * p.lex / GRID_CELLS[1]     # d spans the 10-cell width
    grid = GridSpec(*GRID_CELLS, cell, cell, cell)
    mat = MaterialMap(grid, Ms=p.Ms, A=p.A, alpha=p.alpha)
    return grid, mat


def sweep_values(params: Std2Params) -> np.ndarray:
    """Per-component field values of the forward branch: +h .. -h inclusive."""
    h0 = params.h_max_frac * params.Ms
    n = params.increments
    return h0 * (1.0 - 2.0 * np.arange(n + 1) / n)


def run_branch(sim: Simulation, mat: MaterialMap, values: np.ndarray,
               name: str, params: Std2Params) -> BranchResult:
    br = BranchResult(name=name)
    for k, hc in enumerate(values):
        sim.rhs.set_bias(np.array([hc, hc, hc]))
        traj = sim.run_until(StopCondition(
            max_time=sim.state.t + params.cap_per_increment,
            equilibrium_tol=params.tol))
        if traj.stop_reason != "equilibrated":
            raise EquilibrationError(name, k, traj.final_residual)
        row = traj.samples[-1]
        m = np.array([row["mx"], row["my"], row["mz"]])
        br.rows.append({
            "branch": name, "increment": k,
            "h_comp_over_ms": hc / params.Ms,
            "mx": m[0], "my": m[1], "mz": m[2],
            "m_proj": float(m @ DIAG),
            "e_total": row["e_total"],
            "steps": sim.state.step})
    finalize_branch(br, params)
    return br


def finalize_branch(br: BranchResult, params: Std2Params) -> None:
    """Remanence at H = 0 and coercivity where the projection flips."""
    h = np.array([r["h_comp_over_ms"] for r in br.rows])
    proj = np.array([r["m_proj"] for r in br.rows])
    # Branches are sampled on a monotone h grid; interpolate on increasing h.
    order = np.argsort(h)
    hs = h[order]
    for comp in ("mx", "my", "mz"):
        vals = np.array([r[comp] for r in br.rows])[order]
        setattr(br, f"rem_{comp}", float(np.interp(0.0, hs, vals)))
    ps = proj[order]
    crossings = np.nonzero(np.sign(ps[:-1]) * np.sign(ps[1:]) < 0)[0]
    if crossings.size:
        i = crossings[0]
        f = ps[i] / (ps[i] - ps[i + 1])
        hc_comp = hs[i] + f * (hs[i + 1] - hs[i])
        br.hc_mag_over_ms = abs(hc_comp) * math.sqrt(3.0)


def run_hysteresis(d_over_lex: float, params: Std2Params | None = None, *,
                   workers: int = 1, emit=print) -> HysteresisResult:
    p = params or Std2Params()
    grid, mat = prism_setup(d_over_lex, p)
    kernel = DemagKernel.build(grid, workers=workers)
    rhs = PartitionedRHS(mat, exchange=True, demag=kernel,
                         bias=np.zeros(3), precession=False)
    dt = stable_dt(grid.dx, p.A, p.Ms, p.dt_safety)
    state = SimState(m=uniform_state(grid, mat, DIAG))
    sim = Simulation(state, rhs, IntegratorSpec("rk4", dt),
                     sample_every=10_000_000, energy_in_samples=True)

    values = sweep_values(p)
    forward = run_branch(sim, mat, values, "forward", p)
    reverse = run_branch(sim, mat, -values, "reverse", p)
    res = HysteresisResult(d_over_lex=d_over_lex, forward=forward,
                           reverse=reverse)
    res.antisymmetry = branch_antisymmetry(forward, reverse)
    emit(f"d/lex={d_over_lex:g}: remanence (mx, my) = "
         f"({forward.rem_mx:.4f}, {forward.rem_my:.4f}), "
         f"|Hc|/Ms = {forward.hc_mag_over_ms:.4f}, "
         f"anti-symmetry {res.antisymmetry:.2e}")
    return res


def branch_antisymmetry(forward: BranchResult, reverse: BranchResult) -> float:
    """max |reverse(m)(H) + forward(m)(-H)| over increments and components.

    The protocol is point-symmetric, so the reverse branch must mirror the
    forward branch through the origin once both are fully equilibrated.
    """
    n = len(forward.rows) - 1
    worst = 0.0
    for k, rrow in enumerate(reverse.rows):
        frow = forward.rows[n - k]
        for comp in ("mx", "my", "mz"):
            worst = max(worst, abs(rrow[comp] + frow[comp]))
    return worst


def run_std2(d_over_lex_list, params: Std2Params | None = None, *,
             workers: int = 1, out_dir=None, emit=print):
    p = params or Std2Params()
    out = ensure_out_dir(out_dir) if out_dir is not None else None
    results, checks = [], CheckList()
    summary_rows = []
    for d in d_over_lex_list:
        try:
            res = run_hysteresis(d, p, workers=workers, emit=emit)
        except EquilibrationError as err:
            checks.add(f"d/lex={d:g} sweep equilibrated", False, str(err))
            continue
        results.append(res)
        checks.add(f"d/lex={d:g} loop anti-symmetry below 1e-3",
                   res.antisymmetry < 1e-3, f"{res.antisymmetry:.2e}")
        hc_f, hc_r = res.forward.hc_mag_over_ms, res.reverse.hc_mag_over_ms
        checks.add(f"d/lex={d:g} coercivity symmetric across branches",
                   math.isfinite(hc_f) and math.isfinite(hc_r)
                   and abs(hc_f - hc_r) <= 0.01 * max(hc_f, hc_r),
                   f"forward {hc_f:.4f}, reverse {hc_r:.4f}")
        mnorm = max(math.hypot(r["mx"], math.hypot(r["my"], r["mz"]))
                    for r in res.forward.rows + res.reverse.rows)
        checks.add(f"d/lex={d:g} mean normalized magnetization within the unit ball",
                   mnorm <= 1.0 + 1e-12, f"max |<m>| = {mnorm:.6f}")
        summary_rows.append({
            "d_over_lex": d,
            "rem_mx": res.forward.rem_mx, "rem_my": res.forward.rem_my,
            "rem_mz": res.forward.rem_mz,
            "hc_mag_over_ms": res.forward.hc_mag_over_ms,
            "rev_rem_mx": res.reverse.rem_mx, "rev_rem_my": res.reverse.rem_my,
            "rev_hc_mag_over_ms": res.reverse.hc_mag_over_ms,
            "antisymmetry": res.antisymmetry})
        if out is not None:
            rows = res.forward.rows + res.reverse.rows
            write_csv(out / f"hysteresis_d{d:g}.csv", list(rows[0].keys()), rows)
    if results and len(results) > 1:
        rem = [r.forward.rem_mx for r in results]
        checks.add("mx remanence decreasing with size",
                   all(b <= a + 1e-9 for a, b in zip(rem, rem[1:])),
                   " -> ".join(f"{v:.3f}" for v in rem))
    if out is not None and summary_rows:
        write_csv(out / "summary.csv", list(summary_rows[0].keys()), summary_rows)
    return results, checks
