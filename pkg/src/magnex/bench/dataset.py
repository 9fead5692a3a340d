"""Training-set generation for the demagnetization surrogate: evolve a
prepared base state under randomly sampled in-plane bias fields and snapshot
(M, H_demag) pairs at a fixed stride.

Two scenarios are supported. "film" starts from the switching benchmark's
S-state and integrates with forward Euler at 5e-15 s (the published recipe:
400,000 steps, snapshots every 20,000 — desk scale shortens the run but
keeps exactly 20 frame pairs). "nanodot" starts from a relaxed chiral
texture with demagnetization enabled and uses RK4 at 2.5e-14 s, which divides
the 0.05 ps reporting times of the surrogate verification snapshots.

Bias sampling: field magnitude uniform in [25, 40] mT, direction uniform on
the unit sphere projected into the film plane and renormalized, so Hz = 0
and the in-plane azimuth stays uniform. Each run draws from an independent
child of the master seed; the manifest is bitwise reproducible.
"""

from __future__ import annotations

import json
import shutil
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..demag import DemagKernel
from ..grid import MU0, MaterialMap, VectorField3
from ..io import read_magf_field, write_magf
from ..llg import IntegratorSpec, PartitionedRHS, SimState, Simulation, StopCondition
from .common import CheckList, ensure_out_dir, relax, stable_dt, write_csv
from .skyrmion import SkyrmionParams, nanodot_setup, seed_state
from .std4 import Std4Params, make_setup, prepare_s_state

FRAMES_PER_RUN = 20


@dataclass(frozen=True)
class DatasetParams:
    scenario: str = "film"
    runs: int = 2
    steps: int = 20_000           # published protocol: 400,000
    snap_every: int = 1_000       # published protocol: 20,000
    b_min: float = 25e-3          # tesla
    b_max: float = 40e-3
    dt_film: float = 5e-15
    dt_nanodot: float = 2.5e-14

    def __post_init__(self):
        if self.scenario not in ("film", "nanodot"):
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.steps % self.snap_every != 0 or \
                self.steps // self.snap_every != FRAMES_PER_RUN:
            raise ValueError(
                f"steps/snap_every must give exactly {FRAMES_PER_RUN} frames, "
                f"got {self.steps}/{self.snap_every}")


def paper_scale_params(scenario: str = "film") -> DatasetParams:
    return DatasetParams(scenario=scenario, runs=1000, steps=400_000,
                         snap_every=20_000)


def sample_bias(rng: np.random.Generator, p: DatasetParams) -> np.ndarray:
    """In-plane field vector in A/m with |mu0 H| uniform in [b_min, b_max]."""
    b = rng.uniform(p.b_min, p.b_max)
    v = rng.normal(size=3)
    v[2] = 0.0
    n = np.hypot(v[0], v[1])
    while n == 0.0:                # measure-zero; keep the stream deterministic
        v = rng.normal(size=3)
        v[2] = 0.0
        n = np.hypot(v[0], v[1])
    return (b / MU0) * (v / n)


def _film_base(out: Path, workers: int, emit):
    p4 = Std4Params()
    grid, mat = make_setup("coarse", p4, alpha=p4.alpha)
    kernel = DemagKernel.build(grid, workers=workers)
    m0 = prepare_s_state("coarse", p4, workers=workers,
                         cache_path=out / "base_state.magf", kernel=kernel,
                         emit=emit)
    return grid, mat, kernel, m0


def _with_alpha(mat: MaterialMap, alpha: float) -> MaterialMap:
    return MaterialMap(mat.grid, Ms=mat.Ms, A=mat.A, Ku=mat.Ku, eK=mat.eK,
                       D=mat.D, alpha=alpha, gamma=mat.gamma)


def _nanodot_base(out: Path, workers: int, emit):
    ps = SkyrmionParams()
    grid, mat = nanodot_setup(ps)
    kernel = DemagKernel.build(grid, workers=workers)
    cache = out / "base_state.magf"
    if cache.exists():
        cached_grid, m0 = read_magf_field(cache)
        if cached_grid == grid:
            return grid, _with_alpha(mat, ps.alpha), kernel, m0
    rhs = PartitionedRHS(mat, exchange=True, anisotropy=True, dmi=True,
                         demag=kernel)
    dt = stable_dt(ps.dx, ps.A, ps.Ms, ps.dt_safety)
    res = relax(grid, mat, seed_state(grid, mat, 1, ps.chirality), rhs,
                IntegratorSpec("rk4", dt), tol=ps.tol, max_time=ps.relax_cap)
    emit(f"nanodot base state: relaxed {res.steps} steps, "
         f"residual {res.residual:.2e}")
    write_magf(cache, res.m)
    return grid, _with_alpha(mat, ps.alpha), kernel, res.m


def estimate_bytes(p: DatasetParams, ncells: int) -> int:
    frame = 88 + 3 * 8 * ncells
    return p.runs * FRAMES_PER_RUN * 2 * frame


def run_gen_dataset(out_dir, seed: int, params: DatasetParams | None = None, *,
                    workers: int = 1, emit=print):
    p = params or DatasetParams()
    out = ensure_out_dir(out_dir)

    if p.scenario == "film":
        grid, mat, kernel, base = _film_base(out, workers, emit)
        ispec = IntegratorSpec("euler", p.dt_film)
        physics = dict(exchange=True)
    else:
        grid, mat, kernel, base = _nanodot_base(out, workers, emit)
        ispec = IntegratorSpec("rk4", p.dt_nanodot)
        physics = dict(exchange=True, anisotropy=True, dmi=True)

    need = estimate_bytes(p, grid.n_cells)
    free = shutil.disk_usage(out).free
    if need > free * 0.9:
        raise RuntimeError(f"dataset needs ~{need / 1e9:.1f} GB but only "
                           f"{free / 1e9:.1f} GB are free under {out}")

    children = np.random.SeedSequence(seed).spawn(p.runs)
    manifest_rows = []
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        h_bias = sample_bias(rng, p)
        run_dir = ensure_out_dir(out / f"run{i:04d}")
        rhs = PartitionedRHS(mat, demag=kernel, bias=h_bias, **physics)
        state = SimState(m=VectorField3(grid, base.data.copy()))

        def on_sample(st, row, run_dir=run_dir, h_bias=h_bias, i=i, rhs=rhs):
            if st.step == 0 or st.step % p.snap_every != 0:
                return
            frame = st.step // p.snap_every
            m_file = f"m_{st.step:06d}.magf"
            h_file = f"h_{st.step:06d}.magf"
            write_magf(run_dir / m_file, st.m)
            write_magf(run_dir / h_file,
                       VectorField3(grid, rhs.demag_quiet(st.m.data)))
            manifest_rows.append({
                "run": i, "seed": seed, "frame": frame, "step": st.step,
                "t": st.t,
                "hx": h_bias[0], "hy": h_bias[1], "hz": h_bias[2],
                "b_mt": float(np.linalg.norm(h_bias) * MU0 * 1e3),
                "m_file": f"run{i:04d}/{m_file}",
                "h_file": f"run{i:04d}/{h_file}"})

        sim = Simulation(state, rhs, ispec, sample_every=p.snap_every,
                         sample_callback=on_sample, energy_in_samples=False)
        sim.run_until(StopCondition(max_steps=p.steps))
        emit(f"run {i}: |mu0 H| = {np.linalg.norm(h_bias) * MU0 * 1e3:.2f} mT, "
             f"{p.steps} steps")

    cols = ["run", "seed", "frame", "step", "t", "hx", "hy", "hz", "b_mt",
            "m_file", "h_file"]
    write_csv(out / "manifest.csv", cols, manifest_rows)
    meta = {"scenario": p.scenario, "runs": p.runs, "steps": p.steps,
            "snap_every": p.snap_every, "frames_per_run": FRAMES_PER_RUN,
            "dt": p.dt_film if p.scenario == "film" else p.dt_nanodot,
            "method": ispec.method, "seed": seed,
            "grid": [grid.nx, grid.ny, grid.nz],
            "cell": [grid.dx, grid.dy, grid.dz],
            "b_range_mt": [p.b_min * 1e3, p.b_max * 1e3]}
    (out / "dataset.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    checks = CheckList()
    per_run = {i: 0 for i in range(p.runs)}
    for row in manifest_rows:
        per_run[row["run"]] += 1
    checks.add(f"every run produced exactly {FRAMES_PER_RUN} frame pairs",
               all(v == FRAMES_PER_RUN for v in per_run.values()),
               f"counts {sorted(set(per_run.values()))}")
    b_ok = all(p.b_min - 1e-12 <= row["b_mt"] / 1e3 <= p.b_max + 1e-12
               for row in manifest_rows)
    checks.add("sampled |mu0 H| within [25, 40] mT", b_ok)
    checks.add("bias fields are in-plane",
               all(row["hz"] == 0.0 for row in manifest_rows))
    return manifest_rows, checks
