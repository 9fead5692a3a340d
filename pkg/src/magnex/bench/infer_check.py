"""Verification harness for a trained demagnetization surrogate.

Four independent probes, each optional from the CLI:

* parity      -- re-run the weight file's embedded input/output pair through
                 this engine and report the relative L-infinity error (the
                 loader enforces <= 1e-5; here the number is also printed).
* pairs       -- score stored (M, H_demag) snapshot pairs (a gen-dataset run
                 directory or any folder of m_*/h_* field files) by relative
                 L2 error of the prediction against the exact field.
* e2e         -- repeat the film switching measurement (field 1, coarse grid)
                 once with the exact convolution backend and once with the
                 surrogate, and compare the averaged-magnetization traces.
* topology    -- evolve the relaxed chiral nanodot with both backends and
                 require the ring count (sign changes of m_z along the +x
                 ray) to agree at three checkpoint times.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..demag import DemagKernel
from ..fno import FnoDemag, FnoModel, load_model, read_magw
from ..grid import VectorField3
from ..io import read_magf_field
from ..llg import IntegratorSpec, PartitionedRHS, SimState, Simulation, StopCondition
from .common import CheckList, ensure_out_dir, read_csv_columns, write_csv
from .dataset import DatasetParams, _nanodot_base
from .skyrmion import classify
from .std4 import (Std4Params, compare_traces, make_setup, prepare_s_state,
                   run_std4)

RMS_TOL = 0.05          # per-component tolerance on the averaged traces
PAIR_TOL = 0.05         # relative L2 tolerance per stored snapshot pair
TOPOLOGY_TIMES = (5.05e-12, 10.05e-12, 20.05e-12)


def parity_error(model_path) -> tuple[float, FnoModel]:
    """Relative L-infinity error of the embedded parity pair, recomputed."""
    mf = read_magw(model_path)
    model = FnoModel.from_tensors(mf.tensors, activation=mf.activation)
    pin = np.asarray(mf.parity_in, np.float64)
    pout = np.asarray(mf.parity_out, np.float64)
    got = model.infer(pin)
    scale = max(float(np.max(np.abs(pout))), np.finfo(np.float64).tiny)
    return float(np.max(np.abs(got - pout)) / scale), model


def discover_pairs(pairs_dir) -> list[tuple[Path, Path]]:
    """(m, h) file pairs from a manifest, else by matching file stems."""
    root = Path(pairs_dir)
    manifest = root / "manifest.csv"
    if manifest.exists():
        cols = read_csv_columns(manifest)
        return [(root / m, root / h)
                for m, h in zip(cols["m_file"], cols["h_file"])]
    pairs = []
    for m_path in sorted(root.rglob("m_*.magf")):
        h_path = m_path.with_name("h" + m_path.name[1:])
        if h_path.exists():
            pairs.append((m_path, h_path))
    if not pairs:
        raise FileNotFoundError(f"no (m, h) snapshot pairs under {root}")
    return pairs


def pair_errors(model: FnoModel, pairs: list[tuple[Path, Path]]) -> list[dict]:
    rows = []
    for m_path, h_path in pairs:
        _, m = read_magf_field(m_path)
        _, h = read_magf_field(h_path)
        pred = model.infer(m.data[:, 0])
        ref = h.data[:, 0]
        scale = max(float(np.linalg.norm(ref)), np.finfo(np.float64).tiny)
        rows.append({"m_file": str(m_path), "h_file": str(h_path),
                     "rel_l2": float(np.linalg.norm(pred - ref) / scale)})
    return rows


def check_parity(model_path, checks: CheckList, emit=print) -> FnoModel | None:
    try:
        err, model = parity_error(model_path)
    except Exception as exc:  # malformed file: report, do not crash the CLI
        checks.add("weight file loads and passes its embedded parity pair",
                   False, str(exc))
        return None
    emit(f"parity: relative L-inf error {err:.3e}")
    checks.add("weight file loads and passes its embedded parity pair",
               err <= 1e-5, f"rel L-inf {err:.3e}")
    return model.freeze()


def check_pairs(model: FnoModel, pairs_dir, checks: CheckList, *,
                out_dir=None, emit=print) -> list[dict]:
    rows = pair_errors(model, discover_pairs(pairs_dir))
    worst = max(r["rel_l2"] for r in rows)
    mean = float(np.mean([r["rel_l2"] for r in rows]))
    emit(f"pairs: {len(rows)} snapshots, mean rel L2 {mean:.3e}, "
         f"worst {worst:.3e}")
    if out_dir is not None:
        write_csv(ensure_out_dir(out_dir) / "pair_errors.csv",
                  ["m_file", "h_file", "rel_l2"], rows)
    checks.add(f"every stored snapshot pair predicted to rel L2 <= {PAIR_TOL}",
               worst <= PAIR_TOL, f"worst {worst:.3e}")
    return rows


def check_e2e(model_path, checks: CheckList, *, out_dir, workers: int = 1,
              params: Std4Params | None = None, emit=print) -> dict:
    p = params or Std4Params()
    out = ensure_out_dir(out_dir)
    grid, mat = make_setup("coarse", p, alpha=p.alpha)
    kernel = DemagKernel.build(grid, workers=workers)
    s_state = prepare_s_state("coarse", p, workers=workers,
                              cache_path=out / "s_state_coarse.magf",
                              kernel=kernel, emit=emit)
    ref, _ = run_std4(1, "coarse", p, workers=workers, out_dir=out,
                      s_state=s_state, demag=kernel, tag="e2e_fft", emit=emit)
    surrogate = FnoDemag(load_model(model_path), grid)
    nn, _ = run_std4(1, "coarse", p, workers=workers, out_dir=out,
                     s_state=s_state, demag=surrogate, tag="e2e_nn", emit=emit)

    ta, tb = ref.trajectory.column("t"), nn.trajectory.column("t")
    ma = {c: ref.trajectory.column(c) for c in ("mx", "my", "mz")}
    mb = {c: nn.trajectory.column(c) for c in ("mx", "my", "mz")}
    metrics = compare_traces(ta, ma, tb, mb)
    for c, m in metrics.items():
        emit(f"e2e {c}: rms {m['rms']:.4f}, max {m['max_abs']:.4f}")
        checks.add(f"e2e <{c}> trace rms <= {RMS_TOL}",
                   m["rms"] <= RMS_TOL, f"rms {m['rms']:.4f}")
    return metrics


def check_topology(model_path, checks: CheckList, *, out_dir, workers: int = 1,
                   emit=print) -> dict:
    out = ensure_out_dir(out_dir)
    grid, mat, kernel, base = _nanodot_base(out, workers, emit)
    surrogate = FnoDemag(load_model(model_path), grid)
    dt = DatasetParams().dt_nanodot
    step_targets = []
    for t in TOPOLOGY_TIMES:
        n = t / dt
        if abs(n - round(n)) > 1e-9:
            raise ValueError(f"checkpoint {t:g} s is not a multiple of dt {dt:g}")
        step_targets.append(int(round(n)))

    counts: dict[str, list[int]] = {}
    for name, backend in (("fft", kernel), ("nn", surrogate)):
        rhs = PartitionedRHS(mat, exchange=True, anisotropy=True, dmi=True,
                             demag=backend)
        state = SimState(m=VectorField3(grid, base.data.copy()))
        sim = Simulation(state, rhs, IntegratorSpec("rk4", dt),
                         sample_every=10_000_000, energy_in_samples=False)
        seen = []
        done = 0
        for target in step_targets:
            sim.run_until(StopCondition(max_steps=target - done))
            done = target
            seen.append(classify(state.m, mat)[0])
        counts[name] = seen
        emit(f"topology ({name}): ring counts {seen} at "
             f"{[f'{t * 1e12:.2f} ps' for t in TOPOLOGY_TIMES]}")

    for i, t in enumerate(TOPOLOGY_TIMES):
        checks.add(f"ring count agrees between backends at {t * 1e12:.2f} ps",
                   counts["fft"][i] == counts["nn"][i],
                   f"fft {counts['fft'][i]}, nn {counts['nn'][i]}")
    return counts


def run_infer_check(model_path, *, pairs_dir=None, e2e: bool = False,
                    topology: bool = False, out_dir, workers: int = 1,
                    params: Std4Params | None = None,
                    emit=print) -> CheckList:
    checks = CheckList()
    model = check_parity(model_path, checks, emit=emit)
    if model is not None and pairs_dir is not None:
        check_pairs(model, pairs_dir, checks, out_dir=out_dir, emit=emit)
    if model is not None and e2e:
        check_e2e(model_path, checks, out_dir=out_dir, workers=workers,
                  params=params, emit=emit)
    if model is not None and topology:
        check_topology(model_path, checks, out_dir=out_dir, workers=workers,
                       emit=emit)
    return checks
