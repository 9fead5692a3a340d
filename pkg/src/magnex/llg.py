"""Magnetization dynamics: damped-precession right-hand side, slow/fast
term partitioning with evaluation counters, and the fixed-step driver.

The torque law advanced here is

    dM/dt = mu0*gL*(M x H_eff) + (alpha*mu0*gL/Ms)*M x (M x H_eff),

with gL = gamma/(1 + alpha^2). Both torque terms are linear in H_eff, so
splitting the effective field across two partitions splits the right-hand
side exactly; the multirate integrator exploits that.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .fields import (AnisotropyOperator, DmiOperator, ExchangeOperator,
                     _StencilPlan, energy_breakdown)
from .grid import MU0, MaterialMap, VectorField3, mean_normalized, renormalize
from .integrators import euler_step, mri_kw3_step, rk4_step
from . import io as mio

__all__ = [
    "SLOW_EXPLICIT", "FAST", "SLOW_IMPLICIT", "TERMS",
    "llg_rhs", "PartitionedRHS", "IntegratorSpec", "StopCondition",
    "SimState", "Trajectory", "Simulation", "IntegrationBlowup",
    "BLOWUP_DRIFT",
]

TERMS = ("exchange", "anisotropy", "dmi", "demag", "bias")

SLOW_EXPLICIT = "slow-explicit"
FAST = "fast"
# reserved so configuration files can name the third slot of the splitting;
# no integrator here consumes it
SLOW_IMPLICIT = "slow-implicit"

DEFAULT_PARTITION = {
    "exchange": FAST,
    "anisotropy": SLOW_EXPLICIT,
    "dmi": SLOW_EXPLICIT,
    "demag": SLOW_EXPLICIT,
    "bias": SLOW_EXPLICIT,
}

# a step whose pre-renormalization |M| drifts off Ms by more than this
# fraction (or goes non-finite) is declared blown up
BLOWUP_DRIFT = 0.10


class IntegrationBlowup(RuntimeError):
    def __init__(self, step: int, t: float, drift: float):
        super().__init__(
            f"integration blew up at step {step} (t = {t:.6e} s): "
            f"pre-renormalization |M| drift {drift:.3g} exceeds {BLOWUP_DRIFT:g}")
        self.step = step
        self.t = t
        self.drift = drift


def _llg_rhs_arrays(mdata: np.ndarray, h: np.ndarray, mat: MaterialMap,
                    precession: bool = True, damping: bool = True) -> np.ndarray:
    gl = MU0 * mat.gamma_L()
    mxh = np.cross(mdata, h, axisa=0, axisb=0, axisc=0)
    out = np.zeros_like(mdata)
    if precession:
        out += gl * mxh
    if damping:
        coef = np.where(mat.mask, gl * mat.alpha / np.where(mat.mask, mat.Ms, 1.0), 0.0)
        out += coef * np.cross(mdata, mxh, axisa=0, axisb=0, axisc=0)
    return out


def llg_rhs(m: VectorField3, h_eff: VectorField3, mat: MaterialMap,
            precession: bool = True, damping: bool = True) -> VectorField3:
    """dM/dt of the damped precession law; vacuum cells stay zero."""
    return VectorField3(m.grid, _llg_rhs_arrays(m.data, h_eff.data, mat,
                                                precession, damping))


class PartitionedRHS:
    """Effective-field assembly split into slow-explicit and fast partitions.

    Each enabled term belongs to exactly one partition and carries a counter
    that increments once per derivative evaluation requested by an integrator.
    Diagnostics go through the ``*_quiet`` methods, which leave the counters
    alone.

    ``demag`` accepts anything with a ``field(mdata) -> h`` method (the FFT
    kernel or a learned surrogate) or a bare callable. ``bias`` accepts a
    3-vector, or a callable ``t -> 3-vector`` / ``t -> (3, nz, ny, nx)`` for
    time-dependent or spatially varying applied fields.
    """

    def __init__(self, mat: MaterialMap, *, exchange: bool = True,
                 anisotropy: bool = False, dmi: bool = False,
                 demag=None, bias=None, partition: dict | None = None,
                 precession: bool = True, damping: bool = True,
                 ghost_mode: str | None = None):
        self.mat = mat
        self.precession = precession
        self.damping = damping

        if ghost_mode is None:
            ghost_mode = "dmi" if dmi else "neumann"
        self.ghost_mode = ghost_mode
        self.plan = _StencilPlan(mat, ghost_mode)

        self._ops = {}
        if exchange:
            self._ops["exchange"] = ExchangeOperator(mat, plan=self.plan)
        if anisotropy:
            self._ops["anisotropy"] = AnisotropyOperator(mat)
        if dmi:
            self._ops["dmi"] = DmiOperator(mat, plan=self.plan)
        if demag is not None:
            fn = demag.field if hasattr(demag, "field") else demag
            self._ops["demag"] = lambda mdata: fn(mdata)
        if bias is not None:
            self.set_bias(bias)
        else:
            self._bias = None

        self.partition = dict(DEFAULT_PARTITION)
        for term, part in (partition or {}).items():
            if term not in TERMS:
                raise ValueError(f"unknown field term {term!r}")
            if part == SLOW_IMPLICIT:
                raise ValueError(
                    "the slow-implicit partition is reserved and has no integrator")
            if part not in (SLOW_EXPLICIT, FAST):
                raise ValueError(f"unknown partition {part!r} for term {term!r}")
            self.partition[term] = part

        self.counters = {term: 0 for term in self.enabled_terms()}

    def set_bias(self, bias) -> None:
        self._bias = bias if callable(bias) else np.asarray(bias, dtype=np.float64)
        if hasattr(self, "counters") and "bias" not in self.counters:
            self.counters["bias"] = 0

    def enabled_terms(self) -> tuple[str, ...]:
        terms = list(self._ops)
        if getattr(self, "_bias", None) is not None:
            terms.append("bias")
        return tuple(terms)

    def terms_in(self, part: str) -> tuple[str, ...]:
        return tuple(t for t in self.enabled_terms() if self.partition[t] == part)

    def bias_at(self, t: float) -> np.ndarray | None:
        if self._bias is None:
            return None
        b = self._bias(t) if callable(self._bias) else self._bias
        return np.asarray(b, dtype=np.float64)

    def _add_term(self, term: str, t: float, mdata: np.ndarray, h: np.ndarray,
                  count: bool) -> None:
        if term == "bias":
            b = self.bias_at(t)
            h += b.reshape(3, 1, 1, 1) if b.shape == (3,) else b
        else:
            h += self._ops[term](mdata)
        if count:
            self.counters[term] += 1

    def field_of(self, terms, t: float, mdata: np.ndarray,
                 count: bool = True) -> np.ndarray:
        h = np.zeros_like(mdata)
        for term in terms:
            self._add_term(term, t, mdata, h, count)
        return h

    # --- integrator-facing derivative evaluations (counted) ---

    def rhs_total(self, t: float, mdata: np.ndarray) -> np.ndarray:
        h = self.field_of(self.enabled_terms(), t, mdata)
        return _llg_rhs_arrays(mdata, h, self.mat, self.precession, self.damping)

    def rhs_slow(self, t: float, mdata: np.ndarray) -> np.ndarray:
        h = self.field_of(self.terms_in(SLOW_EXPLICIT), t, mdata)
        return _llg_rhs_arrays(mdata, h, self.mat, self.precession, self.damping)

    def rhs_fast(self, t: float, mdata: np.ndarray) -> np.ndarray:
        h = self.field_of(self.terms_in(FAST), t, mdata)
        return _llg_rhs_arrays(mdata, h, self.mat, self.precession, self.damping)

    # --- diagnostics (not counted) ---

    def h_total_quiet(self, t: float, mdata: np.ndarray) -> np.ndarray:
        return self.field_of(self.enabled_terms(), t, mdata, count=False)

    def demag_quiet(self, mdata: np.ndarray) -> np.ndarray | None:
        if "demag" not in self._ops:
            return None
        return self._ops["demag"](mdata)

    def energies(self, t: float, m: VectorField3):
        return energy_breakdown(m, self.mat, h_demag=self.demag_quiet(m.data),
                                h_bias=self.bias_at(t), plan=self.plan)


@dataclass
class IntegratorSpec:
    """Method selection for the driver: slow step dt, fast-step ratio theta
    (fast step = theta*dt), and whether stage states are renormalized."""

    method: str
    dt: float
    theta: float = 0.1
    renorm_each_stage: bool = True

    def __post_init__(self):
        if self.method not in ("euler", "rk4", "mri-kw3"):
            raise ValueError(f"unknown method {self.method!r}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not 0.0 < self.theta <= 1.0:
            raise ValueError(f"theta must be in (0, 1], got {self.theta}")


@dataclass
class StopCondition:
    """Stop on elapsed simulated time, step count, or equilibration
    (every component of the average normalized magnetization changes by less
    than ``equilibrium_tol`` over one step)."""

    max_time: float | None = None
    max_steps: int | None = None
    equilibrium_tol: float | None = None

    def __post_init__(self):
        if self.max_time is None and self.max_steps is None:
            raise ValueError("need max_time or max_steps as a hard cap")


@dataclass
class SimState:
    m: VectorField3
    t: float = 0.0
    step: int = 0


@dataclass
class Trajectory:
    samples: list = field(default_factory=list)
    stop_reason: str = ""
    counters: dict = field(default_factory=dict)
    wall_s: float = 0.0
    # Largest per-component change of the average normalized magnetization
    # over the final step taken; the quantity the equilibrium tolerance tests.
    final_residual: float = float("nan")

    def column(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.samples])

    def write_csv(self, path) -> None:
        mio.write_timeseries_csv(path, self.samples)


class Simulation:
    """Fixed-step driver binding a state, a partitioned RHS, and a method.

    Successive ``run_until`` calls continue from the current state with
    accumulated counters, so field sweeps reuse one instance. Samples are
    appended every ``sample_every`` steps (plus the initial and final state);
    ``sample_callback(state, row)`` sees each appended row.
    """

    def __init__(self, state: SimState, rhs: PartitionedRHS, ispec: IntegratorSpec,
                 sample_every: int = 1, sample_callback=None,
                 energy_in_samples: bool = True):
        self.state = state
        self.rhs = rhs
        self.ispec = ispec
        self.sample_every = max(int(sample_every), 1)
        self.sample_callback = sample_callback
        self.energy_in_samples = energy_in_samples
        self._wall = 0.0
        if ispec.method == "mri-kw3":
            if not rhs.terms_in(FAST):
                raise ValueError("multirate stepping needs a non-empty fast partition")
            if not rhs.terms_in(SLOW_EXPLICIT):
                raise ValueError("multirate stepping needs a non-empty slow partition")
        grid, mat = state.m.grid, rhs.mat

        def renorm_hook(y):
            f = VectorField3(grid, y)
            renormalize(f, mat)
            return f.data

        self._hook = renorm_hook

    def _advance(self, y: np.ndarray, t: float) -> np.ndarray:
        sp = self.ispec
        hook = self._hook if sp.renorm_each_stage else None
        if sp.method == "euler":
            return euler_step(y, t, sp.dt, self.rhs.rhs_total)
        if sp.method == "rk4":
            return rk4_step(y, t, sp.dt, self.rhs.rhs_total, hook)
        return mri_kw3_step(y, t, sp.dt, self.rhs.rhs_slow, self.rhs.rhs_fast,
                            sp.theta, hook)

    def _sample_row(self, state: SimState) -> dict:
        mbar = mean_normalized(state.m, self.rhs.mat)
        row = {"t": state.t, "mx": mbar[0], "my": mbar[1], "mz": mbar[2],
               "e_demag": 0.0, "e_exch": 0.0, "e_anis": 0.0, "e_total": 0.0,
               "n_demag_evals": self.rhs.counters.get("demag", 0),
               "n_exch_evals": self.rhs.counters.get("exchange", 0),
               "wall_s": self._wall}
        if self.energy_in_samples:
            e = self.rhs.energies(state.t, state.m)
            row.update(e_demag=e.e_demag, e_exch=e.e_exch, e_anis=e.e_anis,
                       e_total=e.e_total)
        return row

    def run_until(self, stop: StopCondition) -> Trajectory:
        state, rhs, sp = self.state, self.rhs, self.ispec
        mat = rhs.mat
        traj = Trajectory()

        def emit():
            row = self._sample_row(state)
            traj.samples.append(row)
            if self.sample_callback is not None:
                self.sample_callback(state, row)

        t0, step0 = state.t, state.step
        n_total = None
        if stop.max_time is not None:
            n_total = max(int(round((stop.max_time - t0) / sp.dt)), 0)
        if stop.max_steps is not None:
            n_total = stop.max_steps if n_total is None else min(n_total, stop.max_steps)

        start = time.perf_counter()
        wall_base = self._wall
        emit()
        prev_mean = mean_normalized(state.m, mat)
        reason = "max_time" if stop.max_time is not None else "max_steps"
        if n_total is not None and stop.max_steps is not None and n_total == stop.max_steps:
            reason = "max_steps"
        k = 0
        while k < n_total:
            y = self._advance(state.m.data, state.t)
            norms = np.sqrt(np.einsum("cijk,cijk->ijk", y, y))[mat.mask]
            drift = float(np.max(np.abs(norms / mat.Ms[mat.mask] - 1.0))) \
                if norms.size else 0.0
            if not np.isfinite(drift) or drift > BLOWUP_DRIFT:
                raise IntegrationBlowup(state.step + 1, state.t + sp.dt,
                                        drift if np.isfinite(drift) else float("inf"))
            state.m = VectorField3(state.m.grid, y)
            renormalize(state.m, mat)
            k += 1
            state.t = t0 + k * sp.dt
            state.step = step0 + k
            self._wall = wall_base + (time.perf_counter() - start)

            cur_mean = mean_normalized(state.m, mat)
            traj.final_residual = float(np.max(np.abs(cur_mean - prev_mean)))
            equilibrated = (stop.equilibrium_tol is not None and
                            traj.final_residual < stop.equilibrium_tol)
            prev_mean = cur_mean
            if equilibrated:
                reason = "equilibrated"
            if k % self.sample_every == 0 or k == n_total or equilibrated:
                emit()
            if equilibrated:
                break
        else:
            if stop.equilibrium_tol is not None:
                reason = "not_converged"

        traj.stop_reason = reason
        traj.counters = dict(rhs.counters)
        traj.wall_s = self._wall
        return traj
