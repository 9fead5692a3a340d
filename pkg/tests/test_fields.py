import numpy as np
import pytest

from magnex.grid import MU0, GridSpec, MaterialMap, VectorField3
from magnex.fields import (anisotropy_field, dmi_field, energy_breakdown,
                           exchange_field)

rng = np.random.default_rng(11)


def test_anisotropy_easy_axis_field():
    # H = (2 Ku/(mu0 Ms^2)) (M.eK) eK; with Ku = 0.1*(mu0 Ms^2/2) and M = Ms e_z
    # this is 0.1 Ms along z
    g = GridSpec(2, 2, 1, 3e-9, 3e-9, 3e-9)
    ms, ku = 8e5, 4.021216e4
    mat = MaterialMap(g, Ms=ms, Ku=ku, eK=(0, 0, 1))
    m = VectorField3.from_uniform(g, (0, 0, ms))
    h = anisotropy_field(m, mat)
    expect = 2 * ku / (MU0 * ms)
    assert np.allclose(h[2], expect, rtol=1e-13)
    assert expect == pytest.approx(0.1 * ms, rel=1e-5)
    assert np.all(h[:2] == 0.0)

    # M perpendicular to the axis: no field
    m = VectorField3.from_uniform(g, (ms, 0, 0))
    assert np.all(anisotropy_field(m, mat) == 0.0)


def test_exchange_two_cell_stencil():
    # two cells along x: H_1 = (2A/(mu0 Ms^2)) (M_2 - M_1)/dx^2
    g = GridSpec(2, 1, 1, 3e-9, 3e-9, 3e-9)
    ms, A = 8e5, 1.3e-11
    mat = MaterialMap(g, Ms=ms, A=A)
    m = VectorField3.zeros(g)
    m1 = np.array([ms, 0.0, 0.0])
    m2 = np.array([0.0, ms, 0.0])
    m.data[:, 0, 0, 0] = m1
    m.data[:, 0, 0, 1] = m2
    h = exchange_field(m, mat)
    pref = 2 * A / (MU0 * ms**2)
    assert np.allclose(h[:, 0, 0, 0], pref * (m2 - m1) / g.dx**2, rtol=1e-12)
    assert np.allclose(h[:, 0, 0, 1], pref * (m1 - m2) / g.dx**2, rtol=1e-12)


def test_exchange_helix_eigenvalue_periodic():
    # M = Ms (cos kx, sin kx, 0) on a periodic ring is an eigenvector of the
    # 3-point Laplacian: H = -(2A/(mu0 Ms^2)) (2-2cos(k dx))/dx^2 * M
    nx, dx = 16, 2e-9
    g = GridSpec(nx, 1, 1, dx, dx, dx)
    ms, A = 8e5, 1.005154e-11
    mat = MaterialMap(g, Ms=ms, A=A)
    k = 2 * np.pi * 3 / (nx * dx)  # 3 full turns fit the ring
    x = (np.arange(nx) + 0.5) * dx
    m = VectorField3.zeros(g)
    m.data[0, 0, 0, :] = ms * np.cos(k * x)
    m.data[1, 0, 0, :] = ms * np.sin(k * x)
    h = exchange_field(m, mat, ghost_mode="periodic")
    lam = -(2 * A / (MU0 * ms**2)) * (2 - 2 * np.cos(k * dx)) / dx**2
    assert np.allclose(h, lam * m.data, rtol=1e-10, atol=1e-6)


def test_exchange_uniform_field_is_zero_and_linear():
    g = GridSpec(5, 4, 3, 2e-9, 3e-9, 4e-9)
    mat = MaterialMap(g, Ms=8e5, A=1.3e-11)
    m = VectorField3.from_uniform(g, (3e5, -4e5, 1e5))
    assert np.allclose(exchange_field(m, mat), 0.0, atol=1e-20)

    a = rng.normal(size=(3,) + g.shape)
    b = rng.normal(size=(3,) + g.shape)
    ha = exchange_field(VectorField3(g, a), mat)
    hb = exchange_field(VectorField3(g, b), mat)
    hab = exchange_field(VectorField3(g, 2.0 * a - 0.5 * b), mat)
    assert np.allclose(hab, 2.0 * ha - 0.5 * hb, rtol=1e-12, atol=1e-9)


def test_exchange_self_adjoint_periodic():
    # <u, L v> = <L u, v> for the periodic uniform-A exchange operator
    g = GridSpec(6, 5, 4, 2e-9, 2.5e-9, 3e-9)
    mat = MaterialMap(g, Ms=8e5, A=1.3e-11)
    u = rng.normal(size=(3,) + g.shape)
    v = rng.normal(size=(3,) + g.shape)
    Lu = exchange_field(VectorField3(g, u), mat, ghost_mode="periodic")
    Lv = exchange_field(VectorField3(g, v), mat, ghost_mode="periodic")
    assert np.dot(u.ravel(), Lv.ravel()) == pytest.approx(
        np.dot(Lu.ravel(), v.ravel()), rel=1e-10)


def test_exchange_vacuum_island_isolates_cells():
    # magnetic | vacuum | magnetic along x: the survivors see no neighbors,
    # so any per-cell-uniform M gives zero exchange field
    g = GridSpec(3, 1, 1, 2e-9, 2e-9, 2e-9)
    ms = np.array([[[8e5, 0.0, 8e5]]])
    mat = MaterialMap(g, Ms=ms, A=1.3e-11)
    m = VectorField3.zeros(g)
    m.data[0, 0, 0, 0] = 8e5
    m.data[1, 0, 0, 2] = 8e5
    h = exchange_field(m, mat)
    assert np.allclose(h, 0.0)

    # same M without the vacuum gap couples the outer cells via the middle
    mat2 = MaterialMap(g, Ms=8e5, A=1.3e-11)
    m.data[2, 0, 0, 1] = 8e5
    assert not np.allclose(exchange_field(m, mat2), 0.0)


def dmi_reference(mdata, mat, g):
    """Loop implementation of the interfacial DMI stencil (test oracle)."""
    pref = 2.0 * mat.D / (MU0 * mat.Ms**2)
    nz, ny, nx = g.shape
    h = np.zeros_like(mdata)

    def nb(c, k, j, i, axis, step):
        jj = [k, j, i]
        jj[axis] += step
        d = (g.dx, g.dy)[2 - axis]
        if 0 <= jj[axis] < (nz, ny, nx)[axis] and mat.mask[jj[0], jj[1], jj[2]]:
            return mdata[c, jj[0], jj[1], jj[2]]
        # ghost: M_c +/- d * slope, slope = -(D/2A)(e_z x e_k) x M
        mc = mdata[:, k, j, i]
        s = -(mat.D[k, j, i] / (2 * mat.A[k, j, i]))
        if axis == 2:  # x
            slope = np.array([s * mc[2], 0.0, -s * mc[0]])
        else:  # y
            slope = np.array([0.0, s * mc[2], -s * mc[1]])
        return (mc + step * d * slope)[c]

    for k in range(nz):
        for j in range(ny):
            for i in range(nx):
                if not mat.mask[k, j, i]:
                    continue
                dx_mx = (nb(0, k, j, i, 2, +1) - nb(0, k, j, i, 2, -1)) / (2 * g.dx)
                dy_my = (nb(1, k, j, i, 1, +1) - nb(1, k, j, i, 1, -1)) / (2 * g.dy)
                dx_mz = (nb(2, k, j, i, 2, +1) - nb(2, k, j, i, 2, -1)) / (2 * g.dx)
                dy_mz = (nb(2, k, j, i, 1, +1) - nb(2, k, j, i, 1, -1)) / (2 * g.dy)
                p = pref[k, j, i]
                h[0, k, j, i] = p * dx_mz
                h[1, k, j, i] = p * dy_mz
                h[2, k, j, i] = -p * (dx_mx + dy_my)
    return h


def test_dmi_field_matches_loop_oracle():
    g = GridSpec(4, 3, 1, 1e-9, 1.5e-9, 0.5e-9)
    ms, A, D = 1.1e6, 16e-12, 4.5e-3
    mat = MaterialMap(g, Ms=ms, A=A, D=D)
    m = VectorField3(g, rng.normal(size=(3,) + g.shape) * ms)
    h = dmi_field(m, mat)
    href = dmi_reference(m.data, mat, g)
    assert np.allclose(h, href, rtol=1e-12, atol=1e-3)


def test_dmi_zero_d_matches_no_dmi():
    g = GridSpec(4, 4, 1, 1e-9, 1e-9, 1e-9)
    mat = MaterialMap(g, Ms=1.1e6, A=16e-12, D=0.0)
    m = VectorField3(g, rng.normal(size=(3,) + g.shape) * 1.1e6)
    assert np.all(dmi_field(m, mat) == 0.0)
    # ghost mode degenerates to zero-flux, so exchange is unaffected
    assert np.allclose(exchange_field(m, mat, "dmi"), exchange_field(m, mat, "neumann"))


def test_energy_breakdown_basics():
    g = GridSpec(3, 3, 2, 2e-9, 2e-9, 2e-9)
    ms, A, ku = 8e5, 1.005154e-11, 4.021216e4
    mat = MaterialMap(g, Ms=ms, A=A, Ku=ku, eK=(0, 0, 1))
    m = VectorField3.from_uniform(g, (0, 0, ms))
    e = energy_breakdown(m, mat)
    assert e.e_exch == 0.0
    assert e.e_anis == pytest.approx(0.0, abs=1e-20)
    assert e.e_demag == 0.0 and e.e_zeeman == 0.0

    # M perpendicular to the easy axis costs the full Ku
    m = VectorField3.from_uniform(g, (ms, 0, 0))
    e = energy_breakdown(m, mat)
    assert e.e_anis == pytest.approx(ku, rel=1e-12)

    # Zeeman: -mu0 M.H
    h = np.array([1e5, 0.0, 0.0])
    e = energy_breakdown(m, mat, h_bias=h)
    assert e.e_zeeman == pytest.approx(-MU0 * ms * 1e5, rel=1e-12)
    assert e.e_total == pytest.approx(e.e_anis + e.e_zeeman, rel=1e-12)


def test_energy_exchange_helix_density():
    # helix of pitch k: continuum density A k^2; central differences give
    # A (sin(k dx)/dx)^2 -- frozen discrete value
    nx, dx = 32, 2e-9
    g = GridSpec(nx, 1, 1, dx, dx, dx)
    ms, A = 8e5, 1.005154e-11
    mat = MaterialMap(g, Ms=ms, A=A)
    k = 2 * np.pi / (nx * dx)
    x = (np.arange(nx) + 0.5) * dx
    m = VectorField3.zeros(g)
    m.data[0, 0, 0, :] = ms * np.cos(k * x)
    m.data[1, 0, 0, :] = ms * np.sin(k * x)
    e = energy_breakdown(m, mat, ghost_mode="periodic")
    expect = A * (np.sin(k * dx) / dx) ** 2
    assert e.e_exch == pytest.approx(expect, rel=1e-10)
    assert e.e_exch == pytest.approx(A * k**2, rel=0.02)  # second-order accurate
