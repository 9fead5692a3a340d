"""Chiral-texture relaxation in a nanodot: classify the stable state by the
ring count of its out-of-plane profile and measure the texture radius.

A thin cylindrical dot (radius R, one 0.25 nm cell thick, in-plane cells of
0.78125 nm) of high-anisotropy material with interfacial DMI is relaxed from
radially symmetric seeds winding the polar angle k*pi from core to rim
(k = 0 quasi-uniform, 1 skyrmion, 2 and 3 multi-ring states). The dot is an
Ms mask on the rectangular grid; demagnetization is disabled in this suite.

Classification counts sign changes of mz along a radial ray; the texture
radius R_s interpolates the first zero of the azimuthally binned mz(r).
The damping used for the relaxation is configurable: the fixed points of
the flow do not depend on alpha, and the benchmark's physical
alpha = 0.05 converges impractically slowly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..grid import GridSpec, MaterialMap, VectorField3
from ..llg import IntegratorSpec, PartitionedRHS
from .common import (CheckList, count_sign_changes, ensure_out_dir,
                     first_zero_crossing, radial_bin_profile, ray_profile,
                     relax, stable_dt, write_csv)

# Critical DMI constant: the benchmark's reported value. The nominal formula
# 4*sqrt(A*Ku)/pi with this suite's A and Ku gives 3.777e-3 J/m^2 instead;
# both are exposed, the reported literal is the default sweep scale.
DC_REPORTED = 3.6371e-3

SEED_NAMES = {0: "uniform", 1: "skyrmion", 2: "2pi", 3: "3pi"}
SEED_BY_NAME = {v: k for k, v in SEED_NAMES.items()}


def critical_dmi(A: float, Ku: float) -> float:
    """4 sqrt(A Ku) / pi, the confinement-free critical DMI strength."""
    return 4.0 * math.sqrt(A * Ku) / math.pi


@dataclass(frozen=True)
class SkyrmionParams:
    Ms: float = 1.1e6
    A: float = 16e-12
    Ku: float = 5.5e5
    alpha: float = 0.05           # physical damping (recorded in output)
    relax_alpha: float = 1.0      # damping used to reach the fixed point
    D: float = 4.5e-3
    R: float = 50e-9
    dx: float = 0.78125e-9
    dz: float = 0.25e-9
    chirality: int = 1            # sign of the radial in-plane component
    tol: float = 1e-9
    relax_cap: float = 5e-9
    dt_safety: float = 0.5


def nanodot_setup(params: SkyrmionParams, *, D: float | None = None,
                  R: float | None = None):
    """Grid and material for one dot: Ms masked to a centred disc."""
    p = params
    R = p.R if R is None else R
    n = 2 * math.ceil(R / p.dx)
    grid = GridSpec(n, n, 1, p.dx, p.dx, p.dz)
    X, Y, _ = grid.cell_centers()
    cx = 0.5 * n * p.dx
    inside = (X - cx) ** 2 + (Y - cx) ** 2 <= R * R
    mat = MaterialMap(grid, Ms=np.where(inside, p.Ms, 0.0), A=p.A, Ku=p.Ku,
                      eK=(0.0, 0.0, 1.0), D=p.D if D is None else D,
                      alpha=p.relax_alpha)
    return grid, mat


def seed_state(grid: GridSpec, mat: MaterialMap, k: int,
               chirality: int = 1) -> VectorField3:
    """Radially symmetric seed winding the polar angle k*pi over the radius.

    theta(r) = k*pi*(1 - r/R) puts the rim along +z and the core along
    (-1)^k z; the in-plane part is radial (hedgehog) with the given sign.
    """
    if k not in SEED_NAMES:
        raise ValueError(f"seed winding must be one of {sorted(SEED_NAMES)}")
    X, Y, _ = grid.cell_centers()
    cx = grid.origin[0] + 0.5 * grid.nx * grid.dx
    cy = grid.origin[1] + 0.5 * grid.ny * grid.dy
    rx, ry = X - cx, Y - cy
    r = np.sqrt(rx * rx + ry * ry)
    rmax = r[mat.mask].max() if np.any(mat.mask) else 1.0
    theta = k * math.pi * np.clip(1.0 - r / rmax, 0.0, 1.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        ux = np.where(r > 0, rx / np.where(r > 0, r, 1.0), 0.0)
        uy = np.where(r > 0, ry / np.where(r > 0, r, 1.0), 0.0)
    m = VectorField3(grid)
    m.data[0] = chirality * np.sin(theta) * ux * mat.Ms
    m.data[1] = chirality * np.sin(theta) * uy * mat.Ms
    m.data[2] = np.cos(theta) * mat.Ms
    m.data *= mat.mask
    return m


@dataclass
class SkyrmionResult:
    seed: str
    state: str                    # classified relaxed state
    crossings: int
    r_s: float | None             # first zero of binned mz(r), metres
    mean: np.ndarray
    equilibrated: bool
    residual: float
    profile_r: np.ndarray
    profile_mz: np.ndarray


def classify(m: VectorField3, mat: MaterialMap) -> tuple[int, str]:
    _, prof = ray_profile(m, mat)
    n = count_sign_changes(prof)
    return n, SEED_NAMES.get(n, f"{n}-ring")


def relax_dot(params: SkyrmionParams, *, D: float | None = None,
              R: float | None = None, seed_k: int = 1) -> tuple:
    p = params
    grid, mat = nanodot_setup(p, D=D, R=R)
    m0 = seed_state(grid, mat, seed_k, p.chirality)
    rhs = PartitionedRHS(mat, exchange=True, anisotropy=True, dmi=True)
    dt = stable_dt(p.dx, p.A, p.Ms, p.dt_safety)
    res = relax(grid, mat, m0, rhs, IntegratorSpec("rk4", dt),
                tol=p.tol, max_time=p.relax_cap)
    return grid, mat, res


def run_skyrmion(seed: str = "skyrmion", params: SkyrmionParams | None = None, *,
                 D: float | None = None, R: float | None = None,
                 out_dir=None, tag: str = "", emit=print):
    p = params or SkyrmionParams()
    seed_k = SEED_BY_NAME[seed] if isinstance(seed, str) else int(seed)
    grid, mat, res = relax_dot(p, D=D, R=R, seed_k=seed_k)
    r, mz = radial_bin_profile(res.m, mat)
    crossings, state = classify(res.m, mat)
    r_s = first_zero_crossing(r, mz)
    result = SkyrmionResult(seed=SEED_NAMES[seed_k], state=state,
                            crossings=crossings, r_s=r_s, mean=res.mean,
                            equilibrated=res.equilibrated, residual=res.residual,
                            profile_r=r, profile_mz=mz)
    d_eff = p.D if D is None else D
    emit(f"D={d_eff:.4g} J/m^2, R={(p.R if R is None else R) * 1e9:.0f} nm, "
         f"seed {result.seed}: relaxed to {state} ({crossings} ring"
         f"{'s' if crossings != 1 else ''}), "
         f"R_s = {'-' if r_s is None else f'{r_s * 1e9:.2f} nm'}")

    checks = CheckList()
    checks.add("relaxation settled", res.equilibrated or res.residual < 1e-6,
               f"residual {res.residual:.2e}")
    if seed_k >= 1 and crossings >= 1:
        checks.add("core and rim polarities oppose",
                   np.sign(mz[0]) != np.sign(mz[-1]),
                   f"mz(0) {mz[0]:+.3f}, mz(rim) {mz[-1]:+.3f}")

    if out_dir is not None:
        out = ensure_out_dir(out_dir)
        theta = np.degrees(np.arccos(np.clip(mz, -1.0, 1.0)))
        rows = [{"r_m": float(rr), "mz": float(vv), "theta_deg": float(th)}
                for rr, vv, th in zip(r, mz, theta)]
        stem = tag or f"profile_{result.seed}"
        write_csv(out / f"{stem}.csv", ["r_m", "mz", "theta_deg"], rows)
    return result, checks


def run_sweep(params: SkyrmionParams | None = None, *,
              d_over_dc=(0.6, 0.8667, 1.1333, 1.4), dc: float | None = None,
              R: float | None = None, out_dir=None, emit=print):
    """Texture radius versus DMI strength at fixed dot radius."""
    p = params or SkyrmionParams()
    dc = DC_REPORTED if dc is None else dc
    emit(f"sweep scale Dc = {dc:.4e} J/m^2 "
         f"(formula 4*sqrt(A*Ku)/pi = {critical_dmi(p.A, p.Ku):.4e})")
    rows, results = [], []
    checks = CheckList()
    for frac in d_over_dc:
        D = frac * dc
        result, sub = run_skyrmion("skyrmion", p, D=D, R=R,
                                   out_dir=out_dir,
                                   tag=f"profile_sweep_d{frac:g}", emit=emit)
        results.append(result)
        for name, ok, detail in sub.checks:
            checks.add(f"D/Dc={frac:g}: {name}", ok, detail)
        rows.append({"d_over_dc": frac, "d_jm2": D,
                     "r_s_m": float("nan") if result.r_s is None else result.r_s,
                     "state": result.state, "crossings": result.crossings})
    radii = [row["r_s_m"] for row in rows]
    checks.add("texture radius defined at every sweep point",
               all(math.isfinite(v) for v in radii))
    if all(math.isfinite(v) for v in radii):
        checks.add("texture radius monotone in DMI strength",
                   all(b > a for a, b in zip(radii, radii[1:])),
                   " -> ".join(f"{v * 1e9:.1f}nm" for v in radii))
    if out_dir is not None:
        write_csv(ensure_out_dir(out_dir) / "sweep.csv",
                  ["d_over_dc", "d_jm2", "r_s_m", "state", "crossings"], rows)
    return results, checks
