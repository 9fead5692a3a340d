"""MAGF field-snapshot files and the time-series CSV schema.

MAGF layout (all integers and floats little-endian):

    offset  size  field
    0       4     magic b"MAGF"
    4       1     format version (1)
    5       1     dtype code (1 = float64 LE)
    6       2     reserved, zero
    8       24    u64 nx, ny, nz
    32      24    f64 dx, dy, dz              [m]
    56      24    f64 origin x, y, z          [m]
    80      8     u64 component count
    88      ...   components, concatenated; each component is nx*ny*nz f64
                  values with x fastest (i + nx*(j + ny*k))

The same container stores 3-component fields, single scalars, and the
6-component demag kernel cache.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .grid import GridSpec, VectorField3

MAGF_MAGIC = b"MAGF"
MAGF_VERSION = 1
MAGF_DTYPE_F64 = 1

_HEADER = struct.Struct("<4sBBH3Q3d3dQ")  # 88 bytes

CSV_COLUMNS = ["t", "mx", "my", "mz", "e_demag", "e_exch", "e_anis", "e_total",
               "n_demag_evals", "n_exch_evals", "wall_s"]


class MagfError(ValueError):
    pass


def write_magf(path, data: np.ndarray | VectorField3, grid: GridSpec | None = None) -> None:
    """Write components to a MAGF file.

    ``data`` is a VectorField3 or an array of shape (ncomp, nz, ny, nx).
    """
    if isinstance(data, VectorField3):
        grid = data.grid
        arr = data.data
    else:
        if grid is None:
            raise MagfError("grid required when writing a bare array")
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim != 4 or arr.shape[1:] != grid.shape:
            raise MagfError(f"array shape {arr.shape} does not match grid {grid.shape}")
    header = _HEADER.pack(
        MAGF_MAGIC, MAGF_VERSION, MAGF_DTYPE_F64, 0,
        grid.nx, grid.ny, grid.nz,
        grid.dx, grid.dy, grid.dz,
        grid.origin[0], grid.origin[1], grid.origin[2],
        arr.shape[0],
    )
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(arr).tobytes())


def read_magf(path) -> tuple[GridSpec, np.ndarray]:
    """Read a MAGF file; returns (grid, data) with data shaped (ncomp, nz, ny, nx)."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise MagfError(f"{path}: truncated header ({len(raw)} bytes)")
    (magic, version, dtype, _res, nx, ny, nz,
     dx, dy, dz, ox, oy, oz, ncomp) = _HEADER.unpack_from(raw)
    if magic != MAGF_MAGIC:
        raise MagfError(f"{path}: bad magic {magic!r}")
    if version != MAGF_VERSION:
        raise MagfError(f"{path}: unsupported version {version}")
    if dtype != MAGF_DTYPE_F64:
        raise MagfError(f"{path}: unsupported dtype code {dtype}")
    grid = GridSpec(nx, ny, nz, dx, dy, dz, origin=(ox, oy, oz))
    expect = _HEADER.size + ncomp * grid.n_cells * 8
    if len(raw) != expect:
        raise MagfError(f"{path}: payload is {len(raw)} bytes, expected {expect}")
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(
        (ncomp, nz, ny, nx)).copy()
    return grid, data


def read_magf_field(path) -> tuple[GridSpec, VectorField3]:
    """Read a MAGF file that must hold exactly 3 components."""
    grid, data = read_magf(path)
    if data.shape[0] != 3:
        raise MagfError(f"{path}: expected 3 components, found {data.shape[0]}")
    return grid, VectorField3(grid, data)


def write_timeseries_csv(path, rows: list[dict]) -> None:
    """Write sampled trajectory rows using the fixed column schema."""
    lines = [",".join(CSV_COLUMNS)]
    for r in rows:
        lines.append(",".join(_fmt(r[c]) for c in CSV_COLUMNS))
    Path(path).write_text("\n".join(lines) + "\n")


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def read_timeseries_csv(path) -> dict[str, np.ndarray]:
    """Read a schema CSV back into column arrays (column name -> array)."""
    text = Path(path).read_text().strip().splitlines()
    header = text[0].split(",")
    if header != CSV_COLUMNS:
        raise MagfError(f"{path}: unexpected CSV columns {header}")
    vals = np.array([[float(x) for x in line.split(",")] for line in text[1:]])
    if vals.size == 0:
        vals = vals.reshape(0, len(CSV_COLUMNS))
    return {c: vals[:, i] for i, c in enumerate(CSV_COLUMNS)}
