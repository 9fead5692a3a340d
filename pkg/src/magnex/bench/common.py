"""Shared helpers for the benchmark drivers.

Every driver follows the same conventions: deterministic CSV output
(shortest round-trip float formatting, wall-clock columns exempt from the
determinism contract), relaxation through ``Simulation.run_until`` with an
equilibration tolerance plus a hard time cap, and a per-command check list
whose failures set a non-zero exit code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..grid import MU0, GridSpec, MaterialMap, VectorField3, mean_normalized
from ..io import _fmt
from ..llg import IntegratorSpec, PartitionedRHS, SimState, Simulation, StopCondition

# Empirical single-rate stability scale for exchange-limited stepping on the
# thin-film benchmark material (Ms = 8e5 A/m, A = 1.3e-11 J/m): the largest
# stable step observed at 0.78125 nm cells, scaled by cell area. Drivers that
# integrate blind (no bisection) take a 0.5 safety factor on top.
RK4_DT_REF = 2.5e-14
DX_REF = 0.78125e-9


def magnetostatic_energy_density(Ms: float) -> float:
    """Km = mu0 Ms^2 / 2, the natural energy-density unit of the benchmarks."""
    return 0.5 * MU0 * Ms * Ms


def exchange_length(A: float, Ms: float) -> float:
    """lex = sqrt(A / Km)."""
    return math.sqrt(A / magnetostatic_energy_density(Ms))


def stable_dt(dx: float, A: float, Ms: float, safety: float = 0.5) -> float:
    """Heuristic stable RK4 step for exchange-limited dynamics.

    The exchange stiffness scales as A/(Ms dx^2); the reference point is the
    empirically bisected step for the film material at 0.78125 nm.
    """
    ref_stiffness = 1.3e-11 / 8e5
    stiffness = A / Ms
    return safety * RK4_DT_REF * (dx / DX_REF) ** 2 * (ref_stiffness / stiffness)


def uniform_state(grid: GridSpec, mat: MaterialMap, direction) -> VectorField3:
    """Saturated state along ``direction`` (normalized internally), Ms-scaled."""
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    m = VectorField3(grid)
    for c in range(3):
        m.data[c] = d[c] * mat.Ms
    m.data *= mat.mask
    return m


@dataclass
class RelaxResult:
    m: VectorField3
    t: float
    steps: int
    equilibrated: bool
    residual: float
    mean: np.ndarray


def relax(grid: GridSpec, mat: MaterialMap, m0: VectorField3, rhs: PartitionedRHS,
          ispec: IntegratorSpec, *, tol: float = 1e-9, max_time: float,
          burn_in: float = 0.0, sample_every: int = 10_000_000) -> RelaxResult:
    """Advance until every component of the average normalized magnetization
    changes by less than ``tol`` over one step, or the time cap is hit.

    ``burn_in`` delays the tolerance: seeds placed near unstable symmetric
    configurations barely move the *average* magnetization at first and would
    otherwise satisfy the tolerance while still far from a minimum.
    """
    state = SimState(m=m0)
    sim = Simulation(state, rhs, ispec, sample_every=sample_every,
                     energy_in_samples=False)
    if burn_in > 0.0 and burn_in < max_time:
        sim.run_until(StopCondition(max_time=burn_in))
    traj = sim.run_until(StopCondition(max_time=max_time, equilibrium_tol=tol))
    return RelaxResult(m=state.m, t=state.t, steps=state.step,
                       equilibrated=traj.stop_reason == "equilibrated",
                       residual=traj.final_residual,
                       mean=mean_normalized(state.m, mat))


def radial_bin_profile(m: VectorField3, mat: MaterialMap, *, component: int = 2,
                       bin_width: float | None = None,
                       center: tuple[float, float] | None = None):
    """Azimuthally binned radial profile of one normalized component.

    Averages m_c/Ms over annuli of width ``bin_width`` (default: dx) around
    the in-plane domain center, magnetic cells only. Returns (r_centers,
    profile) with empty bins dropped.
    """
    g = m.grid
    bw = float(bin_width if bin_width is not None else g.dx)
    X, Y, _ = g.cell_centers()
    if center is None:
        cx = g.origin[0] + 0.5 * g.nx * g.dx
        cy = g.origin[1] + 0.5 * g.ny * g.dy
    else:
        cx, cy = center
    r = np.sqrt((X - cx) ** 2 + (Y - cy) ** 2)
    mask = mat.mask
    with np.errstate(invalid="ignore", divide="ignore"):
        mn = np.where(mask, m.data[component] / np.where(mask, mat.Ms, 1.0), 0.0)
    idx = np.floor(r / bw).astype(np.int64)
    nbin = int(idx[mask].max()) + 1 if np.any(mask) else 0
    sums = np.bincount(idx[mask], weights=mn[mask], minlength=nbin)
    counts = np.bincount(idx[mask], minlength=nbin)
    keep = counts > 0
    centers = (np.arange(nbin) + 0.5) * bw
    return centers[keep], sums[keep] / counts[keep]


def ray_profile(m: VectorField3, mat: MaterialMap, *, component: int = 2):
    """Normalized component along the +x ray from the in-plane center
    (middle y-row, middle z-plane), magnetic cells only."""
    g = m.grid
    j, k = g.ny // 2, g.nz // 2
    i0 = g.nx // 2
    row_mask = mat.mask[k, j, i0:]
    vals = m.data[component, k, j, i0:]
    ms = mat.Ms[k, j, i0:]
    with np.errstate(invalid="ignore", divide="ignore"):
        prof = np.where(row_mask, vals / np.where(row_mask, ms, 1.0), np.nan)
    r = (np.arange(i0, g.nx) + 0.5 - 0.5 * g.nx) * g.dx
    return r[row_mask], prof[row_mask]


def count_sign_changes(profile: np.ndarray, threshold: float = 1e-3) -> int:
    """Sign changes of a radial profile, ignoring near-zero dwell values."""
    signs = np.sign(profile[np.abs(profile) > threshold])
    if signs.size == 0:
        return 0
    return int(np.count_nonzero(np.diff(signs) != 0))


def first_zero_crossing(r: np.ndarray, profile: np.ndarray) -> float | None:
    """Linear interpolation of the first sign change of profile(r)."""
    s = np.sign(profile)
    for i in range(len(profile) - 1):
        if s[i] != 0 and s[i + 1] != 0 and s[i] != s[i + 1]:
            f = profile[i] / (profile[i] - profile[i + 1])
            return float(r[i] + f * (r[i + 1] - r[i]))
        if s[i + 1] == 0 and s[i] != 0:
            return float(r[i + 1])
    return None


def write_csv(path, fieldnames: list[str], rows: list[dict]) -> None:
    """Deterministic CSV: ints verbatim, floats via shortest round-trip repr,
    everything else str()."""
    def cell(v):
        if isinstance(v, str):
            return v
        return _fmt(v)
    lines = [",".join(fieldnames)]
    for row in rows:
        lines.append(",".join(cell(row[c]) for c in fieldnames))
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv_columns(path) -> dict[str, np.ndarray]:
    """Read a write_csv product back into float column arrays."""
    lines = Path(path).read_text().strip().splitlines()
    if not lines or not lines[0].strip():
        raise ValueError(f"{path}: empty CSV")
    header = lines[0].split(",")
    data = [line.split(",") for line in lines[1:]]
    cols = {}
    for i, name in enumerate(header):
        try:
            cols[name] = np.array([float(row[i]) for row in data])
        except ValueError:
            cols[name] = np.array([row[i] for row in data])
    return cols


@dataclass
class CheckList:
    """Per-command validation results; any failure makes the command exit
    non-zero."""
    checks: list = field(default_factory=list)

    def add(self, name: str, ok: bool, detail: str = "") -> bool:
        self.checks.append((name, bool(ok), detail))
        return bool(ok)

    @property
    def all_ok(self) -> bool:
        return all(ok for _, ok, _ in self.checks)

    def report(self, emit=print) -> None:
        for name, ok, detail in self.checks:
            tail = f"  ({detail})" if detail else ""
            emit(f"[{'PASS' if ok else 'FAIL'}] {name}{tail}")


def ensure_out_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
