"""Demagnetizing field of a uniformly-magnetized-cell grid.

The cell-pair tensor uses the analytic prism-pair formulas (Newell-type
f/g corner sums). The 64-corner alternating sum factorizes into a second
difference per axis, so f and g are evaluated once on a (2n+1)^3 displacement
lattice and differenced — 64x fewer special-function calls than the naive
corner loop. Lengths are normalized by the cell-volume cube root before
evaluation (the tensor only depends on shape ratios).

Beyond 60 cell diagonals the corner-sum cancellation noise exceeds the
point-dipole truncation error, so elements switch to the dipole form there.

H = N * M is evaluated either by zero-padded FFT convolution (wrap-around
displacement indexing on a 2n-per-axis padded grid, r2c transforms) or by the
O(N^2) direct sum over source cells, which uses the same tensor elements and
serves as the oracle for the FFT path.
"""

from __future__ import annotations

import hashlib

import numpy as np
import scipy.fft as sfft

from .grid import GridSpec, VectorField3
from . import io as mio

DIPOLE_SWITCH_DIAGONALS = 60.0
DIRECT_SUM_CELL_LIMIT = 4096

# component order in all 6-slot arrays
XX, XY, XZ, YY, YZ, ZZ = range(6)
_MIX = ((XX, XY, XZ), (XY, YY, YZ), (XZ, YZ, ZZ))


def newell_f(x, y, z):
    """Antiderivative kernel for the diagonal tensor elements (even in all args)."""
    x, y, z = np.abs(x), np.abs(y), np.abs(z)
    x2, y2, z2 = x * x, y * y, z * z
    r = np.sqrt(x2 + y2 + z2)
    sxz = np.sqrt(x2 + z2)
    sxy = np.sqrt(x2 + y2)
    with np.errstate(invalid="ignore", divide="ignore"):
        t1 = 0.5 * y * (z2 - x2) * np.arcsinh(np.where(sxz > 0, y / np.where(sxz > 0, sxz, 1), 0))
        t2 = 0.5 * z * (y2 - x2) * np.arcsinh(np.where(sxy > 0, z / np.where(sxy > 0, sxy, 1), 0))
        xr = x * r
        t3 = -x * y * z * np.arctan(np.where(xr > 0, y * z / np.where(xr > 0, xr, 1), 0))
    t4 = (2 * x2 - y2 - z2) * r / 6.0
    return t1 + t2 + t3 + t4


def newell_g(x, y, z):
    """Antiderivative kernel for the off-diagonal elements (odd in x and y)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    z = np.abs(z)
    x2, y2, z2 = x * x, y * y, z * z
    r = np.sqrt(x2 + y2 + z2)
    sxy = np.sqrt(x2 + y2)
    syz = np.sqrt(y2 + z2)
    sxz = np.sqrt(x2 + z2)

    def safe_div(num, den):
        # den may be negative (e.g. y*r for y < 0); guard only the zeros
        nz_ = den != 0
        return np.where(nz_, num / np.where(nz_, den, 1), 0.0)

    with np.errstate(invalid="ignore", divide="ignore"):
        t1 = x * y * z * np.arcsinh(safe_div(z, sxy))
        t2 = (y / 6.0) * (3 * z2 - y2) * np.arcsinh(safe_div(x, syz))
        t3 = (x / 6.0) * (3 * z2 - x2) * np.arcsinh(safe_div(y, sxz))
        t4 = -(z2 * z / 6.0) * np.arctan(safe_div(x * y, z * r))
        t5 = -(z * y2 / 2.0) * np.arctan(safe_div(x * z, y * r))
        t6 = -(z * x2 / 2.0) * np.arctan(safe_div(y * z, x * r))
    t7 = -x * y * r / 3.0
    return t1 + t2 + t3 + t4 + t5 + t6 + t7


def _second_diff(a: np.ndarray, axis: int) -> np.ndarray:
    lo = [slice(None)] * a.ndim
    mid = [slice(None)] * a.ndim
    hi = [slice(None)] * a.ndim
    lo[axis] = slice(0, -2)
    mid[axis] = slice(1, -1)
    hi[axis] = slice(2, None)
    return a[tuple(hi)] - 2.0 * a[tuple(mid)] + a[tuple(lo)]


def tensor_elements(nx: int, ny: int, nz: int, dx: float, dy: float, dz: float) -> np.ndarray:
    """Cell-pair tensor on the displacement lattice.

    Returns shape (6, 2nz-1, 2ny-1, 2nx-1); index (c, n_z-1+k, n_y-1+j, n_x-1+i)
    holds N_c for cell displacement (i, j, k). Self trace N_xx+N_yy+N_zz at
    zero displacement is -1.
    """
    s = (dx * dy * dz) ** (1.0 / 3.0)
    ux, uy, uz = dx / s, dy / s, dz / s
    X = np.arange(-nx, nx + 1) * ux
    Y = np.arange(-ny, ny + 1) * uy
    Z = np.arange(-nz, nz + 1) * uz
    Zg, Yg, Xg = np.meshgrid(Z, Y, X, indexing="ij")

    comps = (
        (newell_f, (Xg, Yg, Zg)),  # xx
        (newell_g, (Xg, Yg, Zg)),  # xy
        (newell_g, (Xg, Zg, Yg)),  # xz
        (newell_f, (Yg, Zg, Xg)),  # yy
        (newell_g, (Yg, Zg, Xg)),  # yz
        (newell_f, (Zg, Xg, Yg)),  # zz
    )
    out = np.empty((6, 2 * nz - 1, 2 * ny - 1, 2 * nx - 1))
    for c, (fn, args) in enumerate(comps):
        F = fn(*args)
        for ax in (0, 1, 2):
            F = _second_diff(F, ax)
        out[c] = F / (4.0 * np.pi)

    _apply_dipole_far_field(out, nx, ny, nz, ux, uy, uz)
    return out


def _apply_dipole_far_field(n6: np.ndarray, nx, ny, nz, ux, uy, uz) -> None:
    diag = np.sqrt(ux * ux + uy * uy + uz * uz)
    X = np.arange(-(nx - 1), nx) * ux
    Y = np.arange(-(ny - 1), ny) * uy
    Z = np.arange(-(nz - 1), nz) * uz
    Zg, Yg, Xg = np.meshgrid(Z, Y, X, indexing="ij")
    r2 = Xg * Xg + Yg * Yg + Zg * Zg
    far = r2 > (DIPOLE_SWITCH_DIAGONALS * diag) ** 2
    if not np.any(far):
        return
    xf, yf, zf, r2f = Xg[far], Yg[far], Zg[far], r2[far]
    r5 = r2f ** 2.5
    c = 1.0 / (4.0 * np.pi)  # normalized cell volume is 1
    n6[XX][far] = c * (3 * xf * xf - r2f) / r5
    n6[YY][far] = c * (3 * yf * yf - r2f) / r5
    n6[ZZ][far] = c * (3 * zf * zf - r2f) / r5
    n6[XY][far] = c * 3 * xf * yf / r5
    n6[XZ][far] = c * 3 * xf * zf / r5
    n6[YZ][far] = c * 3 * yf * zf / r5


def self_demag_tensor(dx: float, dy: float, dz: float) -> np.ndarray:
    """3x3 self-interaction tensor of a single cell (trace is -1)."""
    n6 = tensor_elements(1, 1, 1, dx, dy, dz)[:, 0, 0, 0]
    return np.array([[n6[XX], n6[XY], n6[XZ]],
                     [n6[XY], n6[YY], n6[YZ]],
                     [n6[XZ], n6[YZ], n6[ZZ]]])


def _padded_dims(grid: GridSpec) -> tuple[int, int, int]:
    return (2 * grid.nz if grid.nz > 1 else 1,
            2 * grid.ny if grid.ny > 1 else 1,
            2 * grid.nx if grid.nx > 1 else 1)


def _pack_wraparound(n6: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Scatter displacement-indexed elements into the padded wrap-around layout."""
    pz, py, px = _padded_dims(grid)
    packed = np.zeros((6, pz, py, px))
    iz = np.arange(-(grid.nz - 1), grid.nz) % pz
    iy = np.arange(-(grid.ny - 1), grid.ny) % py
    ix = np.arange(-(grid.nx - 1), grid.nx) % px
    packed[np.ix_(range(6), iz, iy, ix)] = n6
    return packed


class DemagKernel:
    """Precomputed spectral kernel plus scratch buffers for one grid.

    Not safe for concurrent use: each worker thread/process needs its own
    instance (build once, then `copy_workspace()` is cheap).
    """

    def __init__(self, grid: GridSpec, spectra: np.ndarray, workers: int = 1):
        self.grid = grid
        self.padded = _padded_dims(grid)
        self.spectra = spectra  # (6, pz, py, px//2+1) complex
        self.workers = workers
        self._mpad = np.zeros((3,) + self.padded)

    @classmethod
    def build(cls, grid: GridSpec, workers: int = 1) -> "DemagKernel":
        packed = _pack_wraparound(tensor_elements(grid.nx, grid.ny, grid.nz,
                                                  grid.dx, grid.dy, grid.dz), grid)
        return cls.from_packed(grid, packed, workers)

    @classmethod
    def from_packed(cls, grid: GridSpec, packed: np.ndarray, workers: int = 1) -> "DemagKernel":
        spectra = np.stack([sfft.rfftn(packed[c], s=packed.shape[1:], workers=workers)
                            for c in range(6)])
        k = cls(grid, spectra, workers)
        k._packed = packed  # kept for the cache writer
        return k

    def copy_workspace(self) -> "DemagKernel":
        k = DemagKernel(self.grid, self.spectra, self.workers)
        if hasattr(self, "_packed"):
            k._packed = self._packed
        return k

    def field(self, mdata: np.ndarray) -> np.ndarray:
        """H_demag (A/m) of the magnetization array, shape (3, nz, ny, nx)."""
        g = self.grid
        w = self.workers
        self._mpad[:] = 0.0
        self._mpad[:, :g.nz, :g.ny, :g.nx] = mdata
        mhat = [sfft.rfftn(self._mpad[c], s=self.padded, workers=w) for c in range(3)]
        h = np.empty_like(mdata)
        for a in range(3):
            acc = self.spectra[_MIX[a][0]] * mhat[0]
            acc += self.spectra[_MIX[a][1]] * mhat[1]
            acc += self.spectra[_MIX[a][2]] * mhat[2]
            h[a] = sfft.irfftn(acc, s=self.padded, workers=w)[:g.nz, :g.ny, :g.nx]
        return h


def demag_field_fft(m: VectorField3, kernel: DemagKernel) -> np.ndarray:
    if m.grid.shape != kernel.grid.shape:
        raise ValueError(f"kernel built for {kernel.grid.shape}, field is {m.grid.shape}")
    return kernel.field(m.data)


def demag_field_direct(m: VectorField3, grid: GridSpec) -> np.ndarray:
    """Brute-force O(N^2) sum over source cells (same tensor elements).

    Oracle for the FFT path; refuses grids above DIRECT_SUM_CELL_LIMIT cells.
    """
    if grid.n_cells > DIRECT_SUM_CELL_LIMIT:
        raise ValueError(
            f"direct sum limited to {DIRECT_SUM_CELL_LIMIT} cells, grid has {grid.n_cells}")
    n6 = tensor_elements(grid.nx, grid.ny, grid.nz, grid.dx, grid.dy, grid.dz)
    nx, ny, nz = grid.nx, grid.ny, grid.nz
    h = np.zeros((3, nz, ny, nx))
    for qz in range(nz):
        for qy in range(ny):
            for qx in range(nx):
                mq = m.data[:, qz, qy, qx]
                if mq[0] == 0.0 and mq[1] == 0.0 and mq[2] == 0.0:
                    continue
                blk = n6[:, nz - 1 - qz: 2 * nz - 1 - qz,
                         ny - 1 - qy: 2 * ny - 1 - qy,
                         nx - 1 - qx: 2 * nx - 1 - qx]
                for a in range(3):
                    h[a] += (blk[_MIX[a][0]] * mq[0] + blk[_MIX[a][1]] * mq[1]
                             + blk[_MIX[a][2]] * mq[2])
    return h


def kernel_cache_name(grid: GridSpec) -> str:
    key = f"{grid.nx},{grid.ny},{grid.nz},{grid.dx:.17g},{grid.dy:.17g},{grid.dz:.17g}"
    return "demag-" + hashlib.sha256(key.encode()).hexdigest()[:16] + ".magf"


def save_kernel(path, kernel: DemagKernel) -> None:
    """Persist the packed real-space kernel (MAGF container, 6 components).

    The container grid carries the padded dims with the original cell sizes;
    original dims are recovered as p//2 (p>1) or 1.
    """
    if not hasattr(kernel, "_packed"):
        raise ValueError("kernel was built without its real-space representation")
    g = kernel.grid
    pz, py, px = kernel.padded
    pgrid = GridSpec(px, py, pz, g.dx, g.dy, g.dz)
    mio.write_magf(path, kernel._packed, pgrid)


def load_kernel(path, grid: GridSpec, workers: int = 1) -> DemagKernel:
    pgrid, packed = mio.read_magf(path)
    if packed.shape[0] != 6:
        raise mio.MagfError(f"{path}: kernel cache must hold 6 components")
    if (pgrid.nx, pgrid.ny, pgrid.nz) != _padded_dims(grid)[::-1] or \
            (pgrid.dx, pgrid.dy, pgrid.dz) != (grid.dx, grid.dy, grid.dz):
        raise mio.MagfError(f"{path}: cached kernel does not match the requested grid")
    return DemagKernel.from_packed(grid, packed, workers)
