import struct

import numpy as np
import pytest

from magnex.grid import GridSpec, VectorField3
from magnex.io import (CSV_COLUMNS, MagfError, read_magf, read_magf_field,
                       read_timeseries_csv, write_magf, write_timeseries_csv)

rng = np.random.default_rng(7)


def test_magf_roundtrip_bitwise(tmp_path):
    g = GridSpec(5, 3, 2, 1.5e-9, 2e-9, 2.5e-9, origin=(1e-9, 0.0, -1e-9))
    f = VectorField3(g, rng.normal(size=(3,) + g.shape))
    p = tmp_path / "m.magf"
    write_magf(p, f)
    g2, f2 = read_magf_field(p)
    assert g2 == g
    assert np.array_equal(f2.data, f.data)
    # writing the read-back field reproduces the file byte for byte
    p2 = tmp_path / "m2.magf"
    write_magf(p2, f2)
    assert p.read_bytes() == p2.read_bytes()


def test_magf_header_layout(tmp_path):
    g = GridSpec(2, 1, 1, 1e-9, 2e-9, 3e-9)
    f = VectorField3.zeros(g)
    f.data[0, 0, 0, 0] = 1.0
    f.data[0, 0, 0, 1] = 2.0
    p = tmp_path / "h.magf"
    write_magf(p, f)
    raw = p.read_bytes()
    assert raw[0:4] == b"MAGF"
    assert raw[4] == 1  # version
    assert raw[5] == 1  # dtype code: little-endian float64
    assert raw[6:8] == b"\x00\x00"
    assert struct.unpack_from("<3Q", raw, 8) == (2, 1, 1)
    assert struct.unpack_from("<3d", raw, 32) == (1e-9, 2e-9, 3e-9)
    assert struct.unpack_from("<3d", raw, 56) == (0.0, 0.0, 0.0)
    assert struct.unpack_from("<Q", raw, 80) == (3,)
    assert len(raw) == 88 + 3 * 2 * 8
    # x-fastest payload: first component holds [1.0, 2.0]
    assert struct.unpack_from("<2d", raw, 88) == (1.0, 2.0)


def test_magf_multicomponent_array(tmp_path):
    g = GridSpec(3, 2, 1, 1e-9, 1e-9, 1e-9)
    arr = rng.normal(size=(6,) + g.shape)
    p = tmp_path / "k.magf"
    write_magf(p, arr, g)
    g2, arr2 = read_magf(p)
    assert arr2.shape == (6,) + g.shape
    assert np.array_equal(arr, arr2)
    with pytest.raises(MagfError, match="3 components"):
        read_magf_field(p)


def test_magf_error_paths(tmp_path):
    g = GridSpec(2, 2, 1, 1e-9, 1e-9, 1e-9)
    f = VectorField3.zeros(g)
    p = tmp_path / "bad.magf"
    write_magf(p, f)
    raw = bytearray(p.read_bytes())

    q = tmp_path / "trunc.magf"
    q.write_bytes(raw[:40])
    with pytest.raises(MagfError, match="truncated"):
        read_magf(q)

    q.write_bytes(raw[:-8])
    with pytest.raises(MagfError, match="payload"):
        read_magf(q)

    bad = bytearray(raw)
    bad[0:4] = b"NOPE"
    q.write_bytes(bad)
    with pytest.raises(MagfError, match="magic"):
        read_magf(q)

    bad = bytearray(raw)
    bad[4] = 9
    q.write_bytes(bad)
    with pytest.raises(MagfError, match="version"):
        read_magf(q)

    bad = bytearray(raw)
    bad[5] = 2
    q.write_bytes(bad)
    with pytest.raises(MagfError, match="dtype"):
        read_magf(q)


def test_timeseries_csv_schema_and_roundtrip(tmp_path):
    rows = []
    for i in range(3):
        rows.append({"t": i * 1e-12, "mx": 0.1 * i, "my": -0.5, "mz": 0.25,
                     "e_demag": 1.5, "e_exch": 2.5, "e_anis": 0.0, "e_total": 4.0,
                     "n_demag_evals": 4 * i, "n_exch_evals": 4 * i, "wall_s": 0.01 * i})
    p = tmp_path / "ts.csv"
    write_timeseries_csv(p, rows)
    header = p.read_text().splitlines()[0]
    assert header == ",".join(CSV_COLUMNS)
    cols = read_timeseries_csv(p)
    assert np.allclose(cols["t"], [0.0, 1e-12, 2e-12])
    assert np.allclose(cols["n_demag_evals"], [0, 4, 8])
