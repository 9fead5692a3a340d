"""Spectral-operator demag surrogate: MAGW weight files and native inference.

The network maps a magnetization field to its demagnetizing field on a
thin-film grid (nz = 1): per-pixel lift 3 -> width channels, four spectral
blocks (truncated-mode filter plus a per-pixel linear bypass, GELU between
blocks, identity after the last), per-pixel projection back to 3 channels.
Inputs and outputs pass through a per-channel Gaussian normalizer.  All
arithmetic runs in float64 so results are deterministic and reproducible
across the exporting framework and this engine.

MAGW layout (all integers little-endian):

    offset  size  field
    0       4     magic b"MAGW"
    4       2     u16 format version (1)
    6       1     u8 activation code (0 = GELU, 1 = ReLU)
    7       1     reserved, zero
    8       4     u32 tensor count
    12      ...   tensors: u16 name length, UTF-8 name, u8 rank,
                  rank x u64 dims, u8 dtype code (0 = f32, 1 = complex64
                  as interleaved re/im f32 pairs), raw little-endian data
    ...     ...   trailer: two more tensors in the same encoding, named
                  "parity_in" and "parity_out" (not in the tensor count)

The trailer pair is a reference input field and its expected output, both
shaped (3, H, W) channels-first; loading re-runs the forward pass on it and
rejects the file when the relative L-inf error exceeds 1e-5, so any drift
between the exporter's arithmetic conventions and this engine is caught at
load time rather than mid-simulation.

Spectral convention for real input: along the first in-plane axis (rows, ny)
both the low-positive and the mirrored negative frequency blocks are
retained; along the second (columns, nx) the low block of the half spectrum.
Each retained block carries its own complex filter of shape
(in_ch, out_ch, modes1, modes2).

Required tensor names: lift.weight (width, 3), lift.bias (width,),
block{0..3}.spectral.pos/.neg (width, width, m1, m2) complex,
block{0..3}.local.weight (width, width), block{0..3}.local.bias (width,),
proj.weight (3, width), proj.bias (3,), norm.in_mean/in_std/out_mean/out_std
(3,).  Unrecognized extra tensors are ignored.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from scipy.special import erf

from .grid import GridSpec, MaterialMap, VectorField3

MAGW_MAGIC = b"MAGW"
MAGW_VERSION = 1
ACT_GELU = 0
ACT_RELU = 1
PARITY_RTOL = 1e-5

_HEADER = struct.Struct("<4sHBBI")  # 12 bytes
_DTYPE_F32 = 0
_DTYPE_C64 = 1
_N_BLOCKS = 4


class MagwError(ValueError):
    pass


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact (erf-form) GELU."""
    return 0.5 * x * (1 + erf(x / np.sqrt(2)))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


_ACTIVATIONS = {ACT_GELU: gelu, ACT_RELU: relu}


# --- container --------------------------------------------------------------

class MagwFile:
    """Decoded container: activation code, tensor table, parity pair."""

    __slots__ = ("activation", "tensors", "parity_in", "parity_out")

    def __init__(self, activation, tensors, parity_in, parity_out):
        self.activation = activation
        self.tensors = tensors
        self.parity_in = parity_in
        self.parity_out = parity_out


def _encode_tensor(name: str, arr: np.ndarray) -> bytes:
    if np.iscomplexobj(arr):
        payload = np.ascontiguousarray(arr, dtype="<c8")
        code = _DTYPE_C64
    else:
        payload = np.ascontiguousarray(arr, dtype="<f4")
        code = _DTYPE_F32
    raw = name.encode("utf-8")
    out = [struct.pack("<H", len(raw)), raw, struct.pack("<B", payload.ndim)]
    out += [struct.pack("<Q", d) for d in payload.shape]
    out += [struct.pack("<B", code), payload.tobytes()]
    return b"".join(out)


def write_magw(path, tensors: dict[str, np.ndarray], *, parity_in, parity_out,
               activation: int = ACT_GELU) -> None:
    """Write a weight container; arrays are stored f32 / complex64."""
    if activation not in _ACTIVATIONS:
        raise MagwError(f"unknown activation code {activation}")
    blob = [_HEADER.pack(MAGW_MAGIC, MAGW_VERSION, activation, 0, len(tensors))]
    for name, arr in tensors.items():
        blob.append(_encode_tensor(name, arr))
    blob.append(_encode_tensor("parity_in", parity_in))
    blob.append(_encode_tensor("parity_out", parity_out))
    Path(path).write_bytes(b"".join(blob))


class _Cursor:
    def __init__(self, raw: bytes, source: str):
        self.raw = raw
        self.pos = 0
        self.source = source

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.raw):
            raise MagwError(f"{self.source}: truncated reading {what} "
                            f"(need {n} bytes at offset {self.pos}, have "
                            f"{len(self.raw) - self.pos})")
        out = self.raw[self.pos:self.pos + n]
        self.pos += n
        return out


def _decode_tensor(cur: _Cursor) -> tuple[str, np.ndarray]:
    (nlen,) = struct.unpack("<H", cur.take(2, "tensor name length"))
    name = cur.take(nlen, "tensor name").decode("utf-8")
    (rank,) = struct.unpack("<B", cur.take(1, f"tensor '{name}' rank"))
    dims = struct.unpack(f"<{rank}Q", cur.take(8 * rank, f"tensor '{name}' dims"))
    (code,) = struct.unpack("<B", cur.take(1, f"tensor '{name}' dtype"))
    if code == _DTYPE_F32:
        dt, size = np.dtype("<f4"), 4
    elif code == _DTYPE_C64:
        dt, size = np.dtype("<c8"), 8
    else:
        raise MagwError(f"{cur.source}: tensor '{name}' has unknown dtype code {code}")
    count = int(np.prod(dims, dtype=np.int64)) if dims else 1
    raw = cur.take(count * size, f"tensor '{name}' data")
    arr = np.frombuffer(raw, dtype=dt).reshape(dims).copy()
    return name, arr


def read_magw(path) -> MagwFile:
    """Decode a weight container (no model validation beyond the framing)."""
    source = str(path)
    cur = _Cursor(Path(path).read_bytes(), source)
    magic, version, activation, _res, count = _HEADER.unpack(
        cur.take(_HEADER.size, "header"))
    if magic != MAGW_MAGIC:
        raise MagwError(f"{source}: bad magic {magic!r}")
    if version != MAGW_VERSION:
        raise MagwError(f"{source}: unsupported version {version}")
    tensors = {}
    for _ in range(count):
        name, arr = _decode_tensor(cur)
        if name in tensors:
            raise MagwError(f"{source}: duplicate tensor '{name}'")
        tensors[name] = arr
    trailer = {}
    for _ in range(2):
        name, arr = _decode_tensor(cur)
        trailer[name] = arr
    if set(trailer) != {"parity_in", "parity_out"}:
        raise MagwError(f"{source}: trailer must hold parity_in/parity_out, "
                        f"found {sorted(trailer)}")
    if cur.pos != len(cur.raw):
        raise MagwError(f"{source}: {len(cur.raw) - cur.pos} trailing bytes")
    return MagwFile(activation, tensors, trailer["parity_in"], trailer["parity_out"])


# --- building blocks ----------------------------------------------------------

class ChannelNormalizer:
    """Per-channel affine (x - mean) / std for inputs and outputs."""

    __slots__ = ("in_mean", "in_std", "out_mean", "out_std")

    def __init__(self, in_mean, in_std, out_mean, out_std):
        self.in_mean = np.asarray(in_mean, np.float64)
        self.in_std = np.asarray(in_std, np.float64)
        self.out_mean = np.asarray(out_mean, np.float64)
        self.out_std = np.asarray(out_std, np.float64)
        for v in (self.in_mean, self.in_std, self.out_mean, self.out_std):
            if v.shape != (3,):
                raise ValueError(f"normalizer entries have shape (3,), got {v.shape}")
        if np.any(self.in_std <= 0) or np.any(self.out_std <= 0):
            raise ValueError("normalizer std must be positive per channel")

    def normalize_in(self, x):
        return (x - self.in_mean[:, None, None]) / self.in_std[:, None, None]

    def denormalize_in(self, x):
        return x * self.in_std[:, None, None] + self.in_mean[:, None, None]

    def normalize_out(self, y):
        return (y - self.out_mean[:, None, None]) / self.out_std[:, None, None]

    def denormalize_out(self, y):
        return y * self.out_std[:, None, None] + self.out_mean[:, None, None]


class LayoutAdapter:
    """Solver layout (3, nz, ny, nx) <-> model tensor (batch, H, W, channel)."""

    @staticmethod
    def to_tensor(data: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(np.moveaxis(data, 0, -1))

    @staticmethod
    def from_tensor(tensor: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(np.moveaxis(tensor, -1, 0))


def spectral_conv(x: np.ndarray, w_pos: np.ndarray, w_neg: np.ndarray) -> np.ndarray:
    """Filter the retained Fourier modes of a (channels, H, W) field.

    ``w_pos`` acts on rows 0..m1-1 of the half spectrum, ``w_neg`` on the
    mirrored rows -m1..-1; columns 0..m2-1 in both.  Both weights have shape
    (in_ch, out_ch, m1, m2), complex.
    """
    x = np.asarray(x, np.float64)
    if x.ndim != 3:
        raise MagwError(f"spectral_conv expects (channels, H, W), got {x.shape}")
    c, H, W = x.shape
    if w_pos.shape != w_neg.shape or w_pos.ndim != 4 or w_pos.shape[0] != c:
        raise MagwError(f"filter shapes {w_pos.shape}/{w_neg.shape} do not match "
                        f"{c} input channels")
    ci, co, m1, m2 = w_pos.shape
    if H < 2 * m1 or W < 2 * m2:
        raise MagwError(f"grid {H}x{W} has insufficient spectral extent for "
                        f"modes ({m1}, {m2}); needs at least {2 * m1}x{2 * m2}")
    xf = np.fft.rfft2(x)
    out = np.zeros((co, H, W // 2 + 1), np.complex128)
    out[:, :m1, :m2] = np.einsum("ixy,ioxy->oxy", xf[:, :m1, :m2], w_pos)
    out[:, -m1:, :m2] = np.einsum("ixy,ioxy->oxy", xf[:, -m1:, :m2], w_neg)
    return np.fft.irfft2(out, s=(H, W))


# --- model --------------------------------------------------------------------

_NORM_NAMES = ("norm.in_mean", "norm.in_std", "norm.out_mean", "norm.out_std")


def _required_names():
    names = ["lift.weight", "lift.bias"]
    for k in range(_N_BLOCKS):
        names += [f"block{k}.spectral.pos", f"block{k}.spectral.neg",
                  f"block{k}.local.weight", f"block{k}.local.bias"]
    names += ["proj.weight", "proj.bias", *_NORM_NAMES]
    return tuple(names)


REQUIRED_TENSORS = _required_names()


class FnoModel:
    """Loaded surrogate: float64 weights, fixed activation, pure inference."""

    def __init__(self, *, lift_w, lift_b, spec_pos, spec_neg, loc_w, loc_b,
                 proj_w, proj_b, norm: ChannelNormalizer, activation: int):
        self.lift_w, self.lift_b = lift_w, lift_b
        self.spec_pos, self.spec_neg = spec_pos, spec_neg
        self.loc_w, self.loc_b = loc_w, loc_b
        self.proj_w, self.proj_b = proj_w, proj_b
        self.norm = norm
        self.activation = activation
        self._act = _ACTIVATIONS[activation]

    @property
    def width(self) -> int:
        return self.lift_w.shape[0]

    @property
    def modes(self) -> tuple[int, int]:
        return self.spec_pos[0].shape[2:]

    @classmethod
    def from_tensors(cls, tensors: dict[str, np.ndarray],
                     activation: int = ACT_GELU) -> "FnoModel":
        if activation not in _ACTIVATIONS:
            raise MagwError(f"unknown activation code {activation}")
        for name in REQUIRED_TENSORS:
            if name not in tensors:
                raise MagwError(f"missing tensor '{name}'")

        def real(name, shape):
            arr = tensors[name]
            if np.iscomplexobj(arr) or arr.shape != shape:
                raise MagwError(f"tensor '{name}' must be real with shape "
                                f"{shape}, got {arr.dtype} {arr.shape}")
            return np.asarray(arr, np.float64)

        lw = tensors["lift.weight"]
        if lw.ndim != 2 or lw.shape[1] != 3:
            raise MagwError(f"tensor 'lift.weight' must have shape (width, 3), "
                            f"got {lw.shape}")
        width = lw.shape[0]
        sp0 = tensors["block0.spectral.pos"]
        if sp0.ndim != 4 or sp0.shape[:2] != (width, width):
            raise MagwError(f"tensor 'block0.spectral.pos' must have shape "
                            f"({width}, {width}, m1, m2), got {sp0.shape}")
        m1, m2 = sp0.shape[2:]

        def cplx(name):
            arr = tensors[name]
            if not np.iscomplexobj(arr) or arr.shape != (width, width, m1, m2):
                raise MagwError(f"tensor '{name}' must be complex with shape "
                                f"{(width, width, m1, m2)}, got {arr.dtype} {arr.shape}")
            return np.asarray(arr, np.complex128)

        spec_pos, spec_neg, loc_w, loc_b = [], [], [], []
        for k in range(_N_BLOCKS):
            spec_pos.append(cplx(f"block{k}.spectral.pos"))
            spec_neg.append(cplx(f"block{k}.spectral.neg"))
            loc_w.append(real(f"block{k}.local.weight", (width, width)))
            loc_b.append(real(f"block{k}.local.bias", (width,)))

        norms = {n: real(n, (3,)) for n in _NORM_NAMES}
        if np.any(norms["norm.in_std"] <= 0) or np.any(norms["norm.out_std"] <= 0):
            raise MagwError("normalizer std must be positive per channel")

        model = cls(lift_w=real("lift.weight", (width, 3)),
                    lift_b=real("lift.bias", (width,)),
                    spec_pos=spec_pos, spec_neg=spec_neg,
                    loc_w=loc_w, loc_b=loc_b,
                    proj_w=real("proj.weight", (3, width)),
                    proj_b=real("proj.bias", (3,)),
                    norm=ChannelNormalizer(norms["norm.in_mean"],
                                           norms["norm.in_std"],
                                           norms["norm.out_mean"],
                                           norms["norm.out_std"]),
                    activation=activation)
        for name, arr in model._arrays():
            if not np.all(np.isfinite(arr)):
                raise MagwError(f"tensor '{name}' has non-finite values")
        return model

    def _arrays(self):
        yield "lift.weight", self.lift_w
        yield "lift.bias", self.lift_b
        for k in range(_N_BLOCKS):
            yield f"block{k}.spectral.pos", self.spec_pos[k]
            yield f"block{k}.spectral.neg", self.spec_neg[k]
            yield f"block{k}.local.weight", self.loc_w[k]
            yield f"block{k}.local.bias", self.loc_b[k]
        yield "proj.weight", self.proj_w
        yield "proj.bias", self.proj_b
        yield "norm.in_mean", self.norm.in_mean
        yield "norm.in_std", self.norm.in_std
        yield "norm.out_mean", self.norm.out_mean
        yield "norm.out_std", self.norm.out_std

    def freeze(self) -> "FnoModel":
        for _, arr in self._arrays():
            arr.flags.writeable = False
        return self

    def infer(self, x: np.ndarray) -> np.ndarray:
        """Forward pass on a raw (3, H, W) field; returns (3, H, W)."""
        # contiguous so FFT/einsum rounding cannot depend on input strides
        x = np.ascontiguousarray(x, np.float64)
        if x.ndim != 3 or x.shape[0] != 3:
            raise MagwError(f"input must have shape (3, H, W), got {x.shape}")
        m1, m2 = self.modes
        H, W = x.shape[1:]
        if H < 2 * m1 or W < 2 * m2:
            raise MagwError(f"grid {H}x{W} has insufficient spectral extent "
                            f"for modes ({m1}, {m2}); needs at least "
                            f"{2 * m1}x{2 * m2}")
        v = (np.einsum("oc,chw->ohw", self.lift_w, self.norm.normalize_in(x))
             + self.lift_b[:, None, None])
        for k in range(_N_BLOCKS):
            s = spectral_conv(v, self.spec_pos[k], self.spec_neg[k])
            local = (np.einsum("oc,chw->ohw", self.loc_w[k], v)
                     + self.loc_b[k][:, None, None])
            v = s + local
            if k < _N_BLOCKS - 1:
                v = self._act(v)
        y = np.einsum("oc,chw->ohw", self.proj_w, v) + self.proj_b[:, None, None]
        return self.norm.denormalize_out(y)


def load_model(path) -> FnoModel:
    """Read, validate, and parity-check a MAGW file."""
    mf = read_magw(path)
    model = FnoModel.from_tensors(mf.tensors, activation=mf.activation)
    pin = np.asarray(mf.parity_in, np.float64)
    pout = np.asarray(mf.parity_out, np.float64)
    if pin.ndim != 3 or pin.shape[0] != 3 or pout.shape != pin.shape:
        raise MagwError(f"{path}: parity pair must be (3, H, W) fields, got "
                        f"{pin.shape} and {pout.shape}")
    got = model.infer(pin)
    scale = np.max(np.abs(pout))
    err = np.max(np.abs(got - pout)) / max(scale, np.finfo(np.float64).tiny)
    if not err <= PARITY_RTOL:
        raise MagwError(f"{path}: embedded parity check failed "
                        f"(relative L-inf error {err:.3e} > {PARITY_RTOL:g}); "
                        "exporter and engine disagree")
    return model.freeze()


def infer_demag(m: VectorField3, model: FnoModel) -> VectorField3:
    """Predict the demagnetizing field of a thin-film magnetization."""
    grid = m.grid
    if grid.nz != 1:
        raise MagwError(f"the 2-D surrogate needs nz = 1, got nz = {grid.nz}")
    tensor = LayoutAdapter.to_tensor(m.data)           # (1, ny, nx, 3)
    y = model.infer(np.moveaxis(tensor[0], -1, 0))     # (3, ny, nx)
    data = LayoutAdapter.from_tensor(np.moveaxis(y, 0, -1)[None])
    return VectorField3(grid, data)


class FnoDemag:
    """Demag backend wrapping a loaded model for a fixed thin-film grid."""

    def __init__(self, model: FnoModel, grid: GridSpec):
        if grid.nz != 1:
            raise MagwError(f"the 2-D surrogate needs nz = 1, got nz = {grid.nz}")
        m1, m2 = model.modes
        if grid.ny < 2 * m1 or grid.nx < 2 * m2:
            raise MagwError(f"grid {grid.ny}x{grid.nx} has insufficient spectral "
                            f"extent for modes ({m1}, {m2}); needs at least "
                            f"{2 * m1}x{2 * m2}")
        self.model = model
        self.grid = grid

    @classmethod
    def load(cls, path, mat: MaterialMap) -> "FnoDemag":
        return cls(load_model(path), mat.grid)

    def field(self, mdata: np.ndarray) -> np.ndarray:
        out = self.model.infer(mdata[:, 0])
        return np.ascontiguousarray(out[:, None])
