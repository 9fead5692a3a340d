"""Local effective-field terms and energy densities.

All terms return H in A/m on the full grid with vacuum cells zeroed.
Stencil terms (exchange, DMI) use second-order central differences; at
domain boundaries and against interior vacuum cells the missing neighbor is
replaced by the ghost value of the active boundary mode ("neumann" zero-flux
by default, "dmi" when the DMI tilt condition applies, "periodic" for
analysis/tests). Energies are densities in J/m^3 averaged over magnetic
cells.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import MU0, GridSpec, MaterialMap, VectorField3, _dmi_slope

GHOST_MODES = ("neumann", "dmi", "periodic")


def _shift(arr: np.ndarray, cell_axis: int, step: int, periodic: bool) -> np.ndarray:
    """Neighbor values along a cell axis (0=z,1=y,2=x of the trailing 3 dims).

    For non-periodic runs the exposed face rows are edge-replicated; callers
    mask them off via the validity mask and substitute boundary values.
    """
    ax = arr.ndim - 3 + cell_axis
    if periodic:
        return np.roll(arr, -step, axis=ax)
    out = np.empty_like(arr)
    src = [slice(None)] * arr.ndim
    dst = [slice(None)] * arr.ndim
    if step > 0:
        dst[ax] = slice(None, -1)
        src[ax] = slice(1, None)
        edge_dst, edge_src = slice(-1, None), slice(-1, None)
    else:
        dst[ax] = slice(1, None)
        src[ax] = slice(None, -1)
        edge_dst, edge_src = slice(0, 1), slice(0, 1)
    out[tuple(dst)] = arr[tuple(src)]
    dst[ax], src[ax] = edge_dst, edge_src
    out[tuple(dst)] = arr[tuple(src)]
    return out


class _StencilPlan:
    """Precomputed neighbor-validity masks and face exchange coefficients."""

    def __init__(self, mat: MaterialMap, ghost_mode: str):
        if ghost_mode not in GHOST_MODES:
            raise ValueError(f"unknown ghost mode {ghost_mode!r}")
        self.mat = mat
        self.mode = ghost_mode
        periodic = ghost_mode == "periodic"
        mask = mat.mask
        self.valid = {}
        self.a_face = {}
        for k, cell_axis in ((0, 2), (1, 1), (2, 0)):  # cartesian k -> array axis
            for step in (+1, -1):
                nb_mask = _shift(mask, cell_axis, step, periodic)
                if not periodic:
                    ax = cell_axis
                    edge = [slice(None)] * 3
                    edge[ax] = slice(-1, None) if step > 0 else slice(0, 1)
                    nb_mask = nb_mask.copy()
                    nb_mask[tuple(edge)] = False
                self.valid[(k, step)] = nb_mask
                A_nb = _shift(mat.A, cell_axis, step, periodic)
                with np.errstate(invalid="ignore", divide="ignore"):
                    harm = np.where(mat.A + A_nb > 0.0,
                                    2.0 * mat.A * A_nb / np.where(mat.A + A_nb > 0.0,
                                                                  mat.A + A_nb, 1.0),
                                    0.0)
                self.a_face[(k, step)] = np.where(nb_mask, harm, mat.A)

    def neighbor(self, mdata: np.ndarray, k: int, step: int) -> np.ndarray:
        """Effective neighbor field along cartesian axis k (+1/-1 direction)."""
        cell_axis = 2 - k
        periodic = self.mode == "periodic"
        nb = _shift(mdata, cell_axis, step, periodic)
        if periodic:
            return nb
        valid = self.valid[(k, step)]
        if self.mode == "neumann":
            bc = mdata
        else:  # dmi tilt, sign follows the outward displacement
            d = (self.mat.grid.dx, self.mat.grid.dy, self.mat.grid.dz)[k]
            bc = mdata + step * d * _dmi_slope(mdata, self.mat.D, self.mat.A, k)
        return np.where(valid, nb, bc)


def _field_pref(mat: MaterialMap) -> np.ndarray:
    """2 / (mu0 Ms^2) on magnetic cells, 0 in vacuum."""
    Ms = mat.Ms
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(mat.mask, 2.0 / (MU0 * np.where(mat.mask, Ms, 1.0) ** 2), 0.0)


class ExchangeOperator:
    """H_exch = (2/(mu0 Ms^2)) div(A grad M), flux form with harmonic-mean
    face coefficients (reduces to A * Laplacian for uniform A)."""

    def __init__(self, mat: MaterialMap, ghost_mode: str = "neumann",
                 plan: _StencilPlan | None = None):
        self.mat = mat
        self.plan = plan or _StencilPlan(mat, ghost_mode)
        self.pref = _field_pref(mat)

    def __call__(self, mdata: np.ndarray) -> np.ndarray:
        g = self.mat.grid
        deltas = (g.dx, g.dy, g.dz)
        # singleton axes contribute zero net flux in every ghost mode
        axes = [k for k, n in enumerate((g.nx, g.ny, g.nz)) if n > 1]
        acc = np.zeros_like(mdata)
        for k in axes:
            d = deltas[k]
            nb_p = self.plan.neighbor(mdata, k, +1)
            nb_m = self.plan.neighbor(mdata, k, -1)
            flux_p = self.plan.a_face[(k, +1)] * (nb_p - mdata)
            flux_m = self.plan.a_face[(k, -1)] * (mdata - nb_m)
            acc += (flux_p - flux_m) / (d * d)
        h = self.pref * acc
        h[:, ~self.mat.mask] = 0.0
        return h


class DmiOperator:
    """Interfacial DMI field (in-plane derivatives only):

    H = -(2 D/(mu0 Ms^2)) [ (dMx/dx + dMy/dy) e_z - (dMz/dx, dMz/dy, 0) ]
    """

    def __init__(self, mat: MaterialMap, ghost_mode: str = "dmi",
                 plan: _StencilPlan | None = None):
        self.mat = mat
        self.plan = plan or _StencilPlan(mat, ghost_mode)
        self.pref = _field_pref(mat) * mat.D

    def __call__(self, mdata: np.ndarray) -> np.ndarray:
        g = self.mat.grid
        ddx = (self.plan.neighbor(mdata, 0, +1) - self.plan.neighbor(mdata, 0, -1)) / (2 * g.dx)
        ddy = (self.plan.neighbor(mdata, 1, +1) - self.plan.neighbor(mdata, 1, -1)) / (2 * g.dy)
        h = np.empty_like(mdata)
        h[0] = self.pref * ddx[2]
        h[1] = self.pref * ddy[2]
        h[2] = -self.pref * (ddx[0] + ddy[1])
        h[:, ~self.mat.mask] = 0.0
        return h


class AnisotropyOperator:
    """Uniaxial anisotropy field H = (2 Ku/(mu0 Ms^2)) (M . eK) eK."""

    def __init__(self, mat: MaterialMap):
        self.mat = mat
        self.pref = _field_pref(mat) * mat.Ku

    def __call__(self, mdata: np.ndarray) -> np.ndarray:
        proj = np.einsum("cijk,cijk->ijk", mdata, self.mat.eK)
        return (self.pref * proj) * self.mat.eK


def exchange_field(m: VectorField3, mat: MaterialMap, ghost_mode: str = "neumann") -> np.ndarray:
    return ExchangeOperator(mat, ghost_mode)(m.data)


def dmi_field(m: VectorField3, mat: MaterialMap, ghost_mode: str = "dmi") -> np.ndarray:
    return DmiOperator(mat, ghost_mode)(m.data)


def anisotropy_field(m: VectorField3, mat: MaterialMap) -> np.ndarray:
    return AnisotropyOperator(mat)(m.data)


def uniform_bias(vec) -> np.ndarray:
    return np.asarray(vec, dtype=np.float64)


@dataclass
class EnergyBreakdown:
    """Energy densities in J/m^3, averaged over magnetic cells."""

    e_demag: float
    e_exch: float
    e_anis: float
    e_zeeman: float

    @property
    def e_total(self) -> float:
        return self.e_demag + self.e_exch + self.e_anis + self.e_zeeman


def _mean_over_mask(density: np.ndarray, mask: np.ndarray) -> float:
    return float(density[mask].sum() / np.count_nonzero(mask))


def energy_breakdown(m: VectorField3, mat: MaterialMap, h_demag: np.ndarray | None = None,
                     h_bias: np.ndarray | None = None, ghost_mode: str = "neumann",
                     plan: _StencilPlan | None = None) -> EnergyBreakdown:
    """Energy densities of the current state.

    e_demag = -(mu0/2) M.H_demag        (needs the demag field of this M)
    e_exch  = A |grad m|^2              (normalized m, central differences)
    e_anis  = Ku (1 - (eK.m)^2)
    e_zee   = -mu0 M.H_bias
    """
    mask = mat.mask
    if not np.any(mask):
        raise ValueError("energy_breakdown: no magnetic cells")
    g = m.grid

    e_dem = 0.0
    if h_demag is not None:
        e_dem = _mean_over_mask(-0.5 * MU0 * np.einsum("cijk,cijk->ijk", m.data, h_demag), mask)

    with np.errstate(invalid="ignore", divide="ignore"):
        mn = np.where(mask, m.data / np.where(mask, mat.Ms, 1.0), 0.0)
    plan = plan or _StencilPlan(mat, ghost_mode)
    grad2 = np.zeros(g.shape)
    deltas = (g.dx, g.dy, g.dz)
    for k, n in enumerate((g.nx, g.ny, g.nz)):
        if n == 1 and plan.mode != "dmi":
            continue
        dk = (plan.neighbor(mn, k, +1) - plan.neighbor(mn, k, -1)) / (2 * deltas[k])
        grad2 += np.einsum("cijk,cijk->ijk", dk, dk)
    e_ex = _mean_over_mask(mat.A * grad2, mask)

    proj = np.einsum("cijk,cijk->ijk", mn, mat.eK)
    e_an = _mean_over_mask(mat.Ku * (1.0 - proj**2), mask)

    e_ze = 0.0
    if h_bias is not None:
        hb = np.asarray(h_bias, dtype=np.float64)
        if hb.shape == (3,):
            hb = hb.reshape(3, 1, 1, 1)
        e_ze = _mean_over_mask(-MU0 * np.einsum("cijk,cijk->ijk", m.data,
                                                np.broadcast_to(hb, m.data.shape)), mask)

    return EnergyBreakdown(e_dem, e_ex, e_an, e_ze)
