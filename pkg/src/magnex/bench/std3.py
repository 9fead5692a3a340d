"""Cubic-particle energy crossover: find the cube edge L (in exchange
lengths) where the flower and vortex states have equal total energy.

Protocol per cube size: seed each state, relax with RK4 until the average
normalized magnetization stops moving (tolerance 1e-9 per component per
step, hard cap 2 ns), and compare total energy densities. The crossover is
root-found on the energy gap with a bracketing solver. Results for grid
refinements N = 10, 20, 40 feed a Richardson extrapolation to N -> infinity.

The demag kernel for an N^3 grid of cubic cells is scale-invariant (the
dimensionless tensor depends only on cell aspect ratios), so one kernel per
N serves every candidate L. Relaxations warm-start from the previously
converged state of the same class, and refined grids seed from the coarse
solution, which keeps the root-find cheap.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from ..demag import DemagKernel
from ..fields import EnergyBreakdown
from ..grid import GridSpec, MaterialMap, VectorField3, renormalize
from ..llg import IntegratorSpec, PartitionedRHS
from .common import (CheckList, ensure_out_dir, exchange_length,
                     magnetostatic_energy_density, relax, stable_dt, write_csv)


@dataclass(frozen=True)
class Std3Params:
    Ms: float = 8e5
    A: float = 1.005154e-11
    ku_frac: float = 0.1          # Ku = ku_frac * Km, easy axis +z
    alpha: float = 0.5
    dt_safety: float = 0.5
    tol: float = 1e-9
    relax_cap: float = 2e-9
    bracket: tuple = (7.5, 9.0)   # in lex
    xtol: float = 1e-3            # in lex
    gap_tol: float = 1e-4         # in Km at the reported L*

    @property
    def lex(self) -> float:
        return exchange_length(self.A, self.Ms)

    @property
    def km(self) -> float:
        return magnetostatic_energy_density(self.Ms)

    @property
    def ku(self) -> float:
        return self.ku_frac * self.km


@dataclass
class StatePoint:
    """One relaxed state at one (N, L)."""
    energies: EnergyBreakdown
    mean: np.ndarray
    equilibrated: bool
    residual: float


@dataclass
class CrossoverPoint:
    n: int
    l_star: float                 # in lex
    gap: float                    # |e_flower - e_vortex| at l_star, in Km
    flower: StatePoint
    vortex: StatePoint


@dataclass
class CrossoverResult:
    points: list
    order: float | None = None    # observed refinement order
    l_inf: float | None = None    # Richardson-extrapolated crossover


def seed_flower(grid: GridSpec, mat: MaterialMap) -> VectorField3:
    """Uniform magnetization along (1,1,1)/sqrt(3)."""
    m = VectorField3(grid)
    m.data[:] = mat.Ms / math.sqrt(3.0)
    return m


def seed_vortex(grid: GridSpec, mat: MaterialMap) -> VectorField3:
    """+Ms x-hat in the lower half in x, -Ms x-hat in the upper half, plus a
    5% uniform y tilt (renormalized).

    The pure half/half seed is a stationary saddle of the symmetric
    head-to-head wall: it curls into the vortex only once rounding noise
    accumulates (observed > 1 ns of dead time), and its average magnetization
    meanwhile sits numb at zero. The tilt breaks the symmetry
    deterministically and selects the +y core branch.
    """
    m = VectorField3(grid)
    X, _, _ = grid.cell_centers()
    xmid = grid.origin[0] + 0.5 * grid.nx * grid.dx
    m.data[0] = np.where(X < xmid, mat.Ms, -mat.Ms)
    m.data[1] = 0.05 * mat.Ms
    renormalize(m, mat)
    return m


def classify_state(mean: np.ndarray) -> str:
    """Flower states stay near the +z easy axis; vortex states curl with a
    small core moment."""
    return "flower" if abs(mean[2]) > 0.7 else "vortex"


def refine_double(m: VectorField3, fine_grid: GridSpec) -> VectorField3:
    """Nearest-neighbour upsampling by 2x in every direction."""
    data = m.data.repeat(2, axis=1).repeat(2, axis=2).repeat(2, axis=3)
    return VectorField3(fine_grid, data)


class CubeSolver:
    """Relaxes flower/vortex states on an N^3 cube for varying edge length,
    reusing one demag kernel and warm-starting from earlier solutions."""

    def __init__(self, n: int, params: Std3Params, workers: int = 1):
        self.n = n
        self.p = params
        self.workers = workers
        self.kernel = DemagKernel.build(self._grid(8.0), workers=workers)
        self._warm: dict[str, np.ndarray] = {}
        self.evaluations: list[dict] = []

    def _grid(self, l_lex: float) -> GridSpec:
        d = l_lex * self.p.lex / self.n
        return GridSpec(self.n, self.n, self.n, d, d, d)

    def _material(self, grid: GridSpec) -> MaterialMap:
        p = self.p
        return MaterialMap(grid, Ms=p.Ms, A=p.A, Ku=p.ku, eK=(0.0, 0.0, 1.0),
                           alpha=p.alpha)

    def seed_from_coarse(self, coarse: "CubeSolver") -> None:
        """Adopt a 2x-refined copy of the coarse solver's warm states."""
        if coarse.n * 2 != self.n:
            raise ValueError(f"refinement must double N ({coarse.n} -> {self.n})")
        fine, half = self._grid(8.0), coarse._grid(8.0)
        for label, data in coarse._warm.items():
            m = VectorField3(half, data.copy())
            self._warm[label] = refine_double(m, fine).data

    def relax_state(self, label: str, l_lex: float) -> StatePoint:
        p = self.p
        grid = self._grid(l_lex)
        mat = self._material(grid)
        if label in self._warm:
            m0 = VectorField3(grid, self._warm[label].copy())
            burn_in = 0.0
        else:
            m0 = seed_flower(grid, mat) if label == "flower" else seed_vortex(grid, mat)
            burn_in = 0.25 * p.relax_cap
        rhs = PartitionedRHS(mat, exchange=True, anisotropy=True,
                             demag=self.kernel)
        dt = stable_dt(grid.dx, p.A, p.Ms, p.dt_safety)
        res = relax(grid, mat, m0, rhs, IntegratorSpec("rk4", dt),
                    tol=p.tol, max_time=p.relax_cap, burn_in=burn_in)
        if not res.equilibrated:
            warnings.warn(f"{label} at N={self.n}, L={l_lex:.4f} lex did not "
                          f"equilibrate within {p.relax_cap:g} s "
                          f"(residual {res.residual:.2e})")
        got = classify_state(res.mean)
        if got != label:
            raise RuntimeError(
                f"seed failure: the {label} seed at N={self.n}, "
                f"L={l_lex:.4f} lex relaxed to a {got} state "
                f"(mean normalized m = {np.round(res.mean, 4)})")
        self._warm[label] = res.m.data
        e = rhs.energies(res.t, res.m)
        point = StatePoint(energies=e, mean=res.mean,
                           equilibrated=res.equilibrated, residual=res.residual)
        self.evaluations.append({
            "n": self.n, "l_lex": l_lex, "state": label,
            "e_total_km": e.e_total / p.km, "e_demag_km": e.e_demag / p.km,
            "e_exch_km": e.e_exch / p.km, "e_anis_km": e.e_anis / p.km,
            "mx": res.mean[0], "my": res.mean[1], "mz": res.mean[2],
            "steps": res.steps, "equilibrated": int(res.equilibrated)})
        return point

    def energy_gap(self, l_lex: float) -> float:
        """(e_flower - e_vortex) / Km at edge length l_lex."""
        fl = self.relax_state("flower", l_lex)
        vx = self.relax_state("vortex", l_lex)
        return (fl.energies.e_total - vx.energies.e_total) / self.p.km


def widen_bracket(gap, lo: float, hi: float, step: float = 0.5,
                  limit: tuple = (4.0, 16.0)):
    """Expand [lo, hi] until gap changes sign; returns bounds and endpoint
    values. Raises if no sign change within the limit."""
    flo, fhi = gap(lo), gap(hi)
    while flo * fhi > 0:
        if lo <= limit[0] and hi >= limit[1]:
            raise RuntimeError(
                f"no flower/vortex energy crossover in L = [{lo}, {hi}] lex "
                f"(gap {flo:.4e} .. {fhi:.4e} Km)")
        if lo > limit[0]:
            lo = max(lo - step, limit[0])
            flo = gap(lo)
        if flo * fhi > 0 and hi < limit[1]:
            hi = min(hi + step, limit[1])
            fhi = gap(hi)
        warnings.warn(f"crossover bracket widened to [{lo}, {hi}] lex")
    return lo, hi, flo, fhi


def find_crossover(solver: CubeSolver) -> CrossoverPoint:
    p = solver.p
    cache: dict[float, float] = {}

    def gap(l_lex: float) -> float:
        if l_lex not in cache:
            cache[l_lex] = solver.energy_gap(l_lex)
        return cache[l_lex]

    lo, hi, _, _ = widen_bracket(gap, *p.bracket)
    l_star = brentq(gap, lo, hi, xtol=p.xtol)
    g = gap(l_star)
    # The invariant is on the energy gap, not the abscissa: tighten until the
    # reported states are degenerate to gap_tol.
    xtol = p.xtol
    while abs(g) > p.gap_tol and xtol > 1e-6:
        xtol /= 4.0
        span = max(4 * xtol, 2 * p.xtol)
        l_star = brentq(gap, l_star - span, l_star + span, xtol=xtol)
        g = gap(l_star)
    flower = solver.relax_state("flower", l_star)
    vortex = solver.relax_state("vortex", l_star)
    return CrossoverPoint(n=solver.n, l_star=float(l_star), gap=abs(g),
                          flower=flower, vortex=vortex)


def richardson(l10: float, l20: float, l40: float) -> tuple[float, float]:
    """Observed order p = log2((l10-l20)/(l20-l40)) and the extrapolated
    limit l40 + (l40-l20)/(2^p - 1)."""
    p = math.log2((l10 - l20) / (l20 - l40))
    return p, l40 + (l40 - l20) / (2.0 ** p - 1.0)


def run_crossover(ns=(10,), params: Std3Params | None = None, workers: int = 1,
                  out_dir=None, emit=print) -> tuple[CrossoverResult, CheckList]:
    p = params or Std3Params()
    result = CrossoverResult(points=[])
    evaluations: list[dict] = []
    prev: CubeSolver | None = None
    for n in ns:
        solver = CubeSolver(n, p, workers=workers)
        if prev is not None and n == prev.n * 2:
            solver.seed_from_coarse(prev)
        point = find_crossover(solver)
        result.points.append(point)
        evaluations.extend(solver.evaluations)
        emit(f"N={n}: L* = {point.l_star:.4f} lex  "
             f"(flower e = {point.flower.energies.e_total / p.km:.4f} Km, "
             f"vortex e = {point.vortex.energies.e_total / p.km:.4f} Km, "
             f"gap {point.gap:.2e} Km)")
        prev = solver

    by_n = {pt.n: pt for pt in result.points}
    if {10, 20, 40} <= set(by_n):
        result.order, result.l_inf = richardson(
            by_n[10].l_star, by_n[20].l_star, by_n[40].l_star)
        emit(f"extrapolated: order {result.order:.2f}, "
             f"L*(infinity) = {result.l_inf:.4f} lex")

    checks = CheckList()
    for pt in result.points:
        checks.add(f"N={pt.n} energy gap at L* below {p.gap_tol:g} Km",
                   pt.gap < p.gap_tol, f"gap {pt.gap:.2e}")
        checks.add(f"N={pt.n} both states settled",
                   (pt.flower.equilibrated or pt.flower.residual < 1e-5)
                   and (pt.vortex.equilibrated or pt.vortex.residual < 1e-5))
        checks.add(f"N={pt.n} distinct states at L*",
                   classify_state(pt.flower.mean) == "flower"
                   and classify_state(pt.vortex.mean) == "vortex",
                   f"flower mz {pt.flower.mean[2]:.3f}, "
                   f"vortex mz {pt.vortex.mean[2]:.3f}")

    if out_dir is not None:
        out = ensure_out_dir(out_dir)
        rows = []
        for pt in result.points:
            fl, vx = pt.flower, pt.vortex
            rows.append({
                "n": pt.n, "l_star_lex": pt.l_star,
                "e_total_km": fl.energies.e_total / p.km,
                "flower_e_demag_km": fl.energies.e_demag / p.km,
                "flower_e_exch_km": fl.energies.e_exch / p.km,
                "flower_e_anis_km": fl.energies.e_anis / p.km,
                "flower_mz": fl.mean[2],
                "vortex_e_demag_km": vx.energies.e_demag / p.km,
                "vortex_e_exch_km": vx.energies.e_exch / p.km,
                "vortex_e_anis_km": vx.energies.e_anis / p.km,
                "vortex_my": vx.mean[1],
                "gap_km": pt.gap})
        write_csv(out / "crossover.csv", list(rows[0].keys()), rows)
        write_csv(out / "evaluations.csv", list(evaluations[0].keys()), evaluations)
        if result.l_inf is not None:
            write_csv(out / "extrapolation.csv", ["order", "l_inf_lex"],
                      [{"order": result.order, "l_inf_lex": result.l_inf}])
    return result, checks
