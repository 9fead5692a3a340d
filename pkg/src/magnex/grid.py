"""Structured-grid state for finite-difference micromagnetics.

Everything lives on a regular cell-centered (nx, ny, nz) lattice. Vector
fields are stored component-major as float64 arrays of shape (3, nz, ny, nx),
C-contiguous, so each component is one contiguous plane with x fastest:
flat index ``i + nx*(j + ny*k)``. Cells with Ms == 0 are vacuum: they carry
zero magnetization and are excluded from averages and energies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

MU0 = 4.0e-7 * math.pi  # vacuum permeability, T*m/A
GAMMA = -1.759e11  # electron gyromagnetic ratio, C/kg


class GridError(ValueError):
    pass


class RenormalizeError(ValueError):
    """Raised when a magnetic cell holds a zero vector and cannot be rescaled."""


@dataclass(frozen=True)
class GridSpec:
    """Regular grid geometry: cell counts, spacings (m) and origin (m)."""

    nx: int
    ny: int
    nz: int
    dx: float
    dy: float
    dz: float
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if min(self.nx, self.ny, self.nz) < 1:
            raise GridError(f"cell counts must be >= 1, got {(self.nx, self.ny, self.nz)}")
        if min(self.dx, self.dy, self.dz) <= 0.0:
            raise GridError(f"cell sizes must be > 0, got {(self.dx, self.dy, self.dz)}")

    @property
    def shape(self) -> tuple[int, int, int]:
        """Array shape (nz, ny, nx) of one component plane."""
        return (self.nz, self.ny, self.nx)

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny * self.nz

    @property
    def cell_volume(self) -> float:
        return self.dx * self.dy * self.dz

    @property
    def extent(self) -> tuple[float, float, float]:
        return (self.nx * self.dx, self.ny * self.dy, self.nz * self.dz)

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Coordinate arrays X, Y, Z of shape (nz, ny, nx), cell centers in m."""
        ox, oy, oz = self.origin
        x = ox + (np.arange(self.nx) + 0.5) * self.dx
        y = oy + (np.arange(self.ny) + 0.5) * self.dy
        z = oz + (np.arange(self.nz) + 0.5) * self.dz
        Z, Y, X = np.meshgrid(z, y, x, indexing="ij")
        return X, Y, Z


class VectorField3:
    """A 3-component cell field; ``data`` has shape (3, nz, ny, nx), float64."""

    __slots__ = ("grid", "data")

    def __init__(self, grid: GridSpec, data: np.ndarray | None = None):
        self.grid = grid
        if data is None:
            data = np.zeros((3,) + grid.shape)
        else:
            data = np.ascontiguousarray(data, dtype=np.float64)
            if data.shape != (3,) + grid.shape:
                raise GridError(
                    f"field shape {data.shape} does not match grid {(3,) + grid.shape}"
                )
        self.data = data

    @classmethod
    def zeros(cls, grid: GridSpec) -> "VectorField3":
        return cls(grid)

    @classmethod
    def from_uniform(cls, grid: GridSpec, vec) -> "VectorField3":
        f = cls(grid)
        for c in range(3):
            f.data[c] = vec[c]
        return f

    def copy(self) -> "VectorField3":
        return VectorField3(self.grid, self.data.copy())

    def norm(self) -> np.ndarray:
        """Per-cell Euclidean magnitude, shape (nz, ny, nx)."""
        return np.sqrt(np.einsum("cijk,cijk->ijk", self.data, self.data))


def _broadcast_cell(value, shape, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        return np.full(shape, float(arr))
    if arr.shape != shape:
        raise GridError(f"{name} has shape {arr.shape}, expected scalar or {shape}")
    return np.ascontiguousarray(arr)


class MaterialMap:
    """Per-cell material parameters plus the global constants mu0 and gamma.

    Ms [A/m] (0 marks vacuum), A [J/m], Ku [J/m^3], D [J/m^2], alpha [-] are
    per-cell arrays of shape (nz, ny, nx); scalars broadcast. eK is the unit
    easy axis, shape (3, nz, ny, nx).
    """

    def __init__(self, grid: GridSpec, Ms, A=0.0, Ku=0.0, eK=(0.0, 0.0, 1.0),
                 D=0.0, alpha=0.0, gamma: float = GAMMA):
        shape = grid.shape
        self.grid = grid
        self.Ms = _broadcast_cell(Ms, shape, "Ms")
        self.A = _broadcast_cell(A, shape, "A")
        self.Ku = _broadcast_cell(Ku, shape, "Ku")
        self.D = _broadcast_cell(D, shape, "D")
        self.alpha = _broadcast_cell(alpha, shape, "alpha")
        self.gamma = float(gamma)

        eK = np.asarray(eK, dtype=np.float64)
        if eK.shape == (3,):
            ek = np.empty((3,) + shape)
            for c in range(3):
                ek[c] = eK[c]
        elif eK.shape == (3,) + shape:
            ek = np.ascontiguousarray(eK)
        else:
            raise GridError(f"eK has shape {eK.shape}, expected (3,) or {(3,) + shape}")
        n = np.sqrt(np.einsum("cijk,cijk->ijk", ek, ek))
        bad = (n == 0.0) & (self.Ku != 0.0)
        if np.any(bad):
            raise GridError("eK must be nonzero wherever Ku != 0")
        with np.errstate(invalid="ignore", divide="ignore"):
            ek = np.where(n > 0.0, ek / n, 0.0)
        self.eK = ek

        if np.any(self.Ms < 0.0):
            raise GridError("Ms must be >= 0")
        if np.any((self.D != 0.0) & (self.A <= 0.0) & (self.Ms > 0.0)):
            raise GridError("DMI requires A > 0 in every magnetic cell (boundary tilt ~ D/A)")

    @property
    def mask(self) -> np.ndarray:
        """Boolean (nz, ny, nx), True on magnetic cells."""
        return self.Ms > 0.0

    @property
    def n_magnetic(self) -> int:
        return int(np.count_nonzero(self.mask))

    def gamma_L(self) -> np.ndarray:
        """Per-cell gamma / (1 + alpha^2)."""
        return self.gamma / (1.0 + self.alpha**2)

    def masked(self, per_cell: np.ndarray) -> np.ndarray:
        """Zero a per-cell quantity on vacuum cells (returns a new array)."""
        return np.where(self.mask, per_cell, 0.0)


def renormalize(m: VectorField3, mat: MaterialMap) -> None:
    """Rescale M in place so |M| = Ms per cell; vacuum cells are zeroed.

    A magnetic cell holding an exactly zero vector has no direction to keep
    and raises RenormalizeError (listing one offending flat cell index).
    """
    norm2 = np.einsum("cijk,cijk->ijk", m.data, m.data)
    mask = mat.mask
    dead = mask & (norm2 == 0.0)
    if np.any(dead):
        k, j, i = (int(v[0]) for v in np.nonzero(dead))
        g = m.grid
        raise RenormalizeError(
            f"cell (i={i}, j={j}, k={k}) [flat {i + g.nx * (j + g.ny * k)}] has Ms > 0 but |M| = 0"
        )
    ms2 = mat.Ms * mat.Ms
    # leave cells already on the sphere untouched (|norm^2/Ms^2 - 1| within a
    # couple of ulp) so that re-application is an exact no-op
    stale = mask & (np.abs(norm2 - ms2) > 1e-15 * ms2)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(stale, mat.Ms / np.sqrt(np.where(stale, norm2, 1.0)), 1.0)
        scale = np.where(mask, scale, 0.0)
    m.data *= scale


def mean_normalized(m: VectorField3, mat: MaterialMap) -> np.ndarray:
    """Average of M/Ms over magnetic cells; returns array [mx, my, mz]."""
    mask = mat.mask
    n = int(np.count_nonzero(mask))
    if n == 0:
        raise GridError("mean_normalized: no magnetic cells (all Ms == 0)")
    with np.errstate(invalid="ignore", divide="ignore"):
        mn = m.data / np.where(mask, mat.Ms, 1.0)
    out = np.empty(3)
    for c in range(3):
        out[c] = mn[c][mask].sum() / n
    return out


def _dmi_slope(mb: np.ndarray, mat_D: np.ndarray, mat_A: np.ndarray, axis: int) -> np.ndarray:
    """dM/dx_k at a boundary from the DMI natural condition.

    dM/dx_k = -(D / 2A) (e_z x e_k) x M, which is (up to the prefactor)
    (Mz, 0, -Mx) for k = x, (0, Mz, -My) for k = y, and 0 for k = z.
    ``mb`` is the boundary-cell field slab, shape (3, ...).
    """
    out = np.zeros_like(mb)
    if axis == 2:  # z faces: e_z x e_z = 0
        return out
    with np.errstate(invalid="ignore", divide="ignore"):
        pref = np.where(mat_A > 0.0, -mat_D / (2.0 * mat_A), 0.0)
    if axis == 0:  # x
        out[0] = pref * mb[2]
        out[2] = -pref * mb[0]
    else:  # y
        out[1] = pref * mb[2]
        out[2] = -pref * mb[1]
    return out


def ghost_fill(m: VectorField3, mat: MaterialMap, mode: str = "neumann") -> np.ndarray:
    """Return M padded by one ghost layer per face, shape (3, nz+2, ny+2, nx+2).

    mode "neumann":  zero-flux, ghost = adjacent interior value.
    mode "dmi":      ghost = interior +/- delta * dM/dx_k with the slope from the
                     DMI natural boundary condition (sign follows the outward
                     displacement: +delta on the + face, -delta on the - face).
    mode "periodic": ghost = wrap-around value.

    Only face ghosts are filled (stencils never read edge/corner ghosts).
    """
    if mode not in ("neumann", "dmi", "periodic"):
        raise GridError(f"unknown ghost mode {mode!r}")
    g = m.grid
    out = np.zeros((3, g.nz + 2, g.ny + 2, g.nx + 2))
    out[:, 1:-1, 1:-1, 1:-1] = m.data

    deltas = (g.dx, g.dy, g.dz)
    # axis index into the (z, y, x) array layout for cartesian axis k
    array_axis = {0: 3, 1: 2, 2: 1}
    for k in range(3):
        ax = array_axis[k]
        lo_int = [slice(None)] * 4
        hi_int = [slice(None)] * 4
        lo_gho = [slice(None)] * 4
        hi_gho = [slice(None)] * 4
        # interior slabs adjacent to the faces, and the ghost slabs
        lo_int[ax] = slice(1, 2)
        hi_int[ax] = slice(-2, -1)
        lo_gho[ax] = slice(0, 1)
        hi_gho[ax] = slice(-1, None)
        # trim the other two padded axes to the interior
        for other in array_axis.values():
            if other != ax:
                for s in (lo_int, hi_int, lo_gho, hi_gho):
                    s[other] = slice(1, -1)
        lo_int, hi_int, lo_gho, hi_gho = map(tuple, (lo_int, hi_int, lo_gho, hi_gho))

        if mode == "periodic":
            out[lo_gho] = out[hi_int]
            out[hi_gho] = out[lo_int]
            continue

        mb_lo = out[lo_int]
        mb_hi = out[hi_int]
        if mode == "neumann":
            out[lo_gho] = mb_lo
            out[hi_gho] = mb_hi
            continue

        # dmi: material slabs at the faces (same cells as mb_*)
        cell_ax = ax - 1  # axis in (nz, ny, nx) arrays
        sl_lo = [slice(None)] * 3
        sl_hi = [slice(None)] * 3
        sl_lo[cell_ax] = slice(0, 1)
        sl_hi[cell_ax] = slice(-1, None)
        D_lo, A_lo = mat.D[tuple(sl_lo)], mat.A[tuple(sl_lo)]
        D_hi, A_hi = mat.D[tuple(sl_hi)], mat.A[tuple(sl_hi)]
        out[lo_gho] = mb_lo - deltas[k] * _dmi_slope(mb_lo, D_lo, A_lo, k)
        out[hi_gho] = mb_hi + deltas[k] * _dmi_slope(mb_hi, D_hi, A_hi, k)
    return out
