"""Binary FBO container and plain-text debug dump.

Layout (all little-endian):
    b"ZKAM", version u32,
    model header: n u32, lambda f64, k_max u32, d_k u32 * (k_max + 1),
    frequency header: d u32, n_max u32,
    block count u64,
    per block: l i64 * d, k u32, k' u32, d_k * d_k' complex entries as f64 pairs (row-major).
Only nonzero blocks are written, in lattice order of l and then (k, k').
"""
from __future__ import annotations

import struct

import numpy as np

from .errors import ContainerError
from .fbo import FBO, TOL_HERM
from .spectral import SpectralModel, build_circle, build_sphere

MAGIC = b"ZKAM"
VERSION = 1


def encode_fbo(a: FBO) -> bytes:
    m = a.model
    parts = [MAGIC, struct.pack("<I", VERSION),
             struct.pack("<IdI", m.n, float(m.lambda_shift), m.k_max),
             struct.pack(f"<{m.n_clusters}I", *[int(x) for x in m.dims]),
             struct.pack("<II", a.d, a.n_max)]
    blocks = list(a.blocks())
    parts.append(struct.pack("<Q", len(blocks)))
    for l, k, kp, b in blocks:
        parts.append(struct.pack(f"<{a.d}q", *l))
        parts.append(struct.pack("<II", k, kp))
        b = np.ascontiguousarray(b, dtype="<c16")
        parts.append(b.tobytes(order="C"))
    return b"".join(parts)


def save_fbo(path, a: FBO) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_fbo(a))


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, fmt: str, what: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise ContainerError(f"truncated file while reading {what}", self.pos)
        out = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return out

    def raw(self, size: int, what: str) -> bytes:
        if self.pos + size > len(self.data):
            raise ContainerError(f"truncated file while reading {what}", self.pos)
        out = self.data[self.pos:self.pos + size]
        self.pos += size
        return out


def model_from_header(n: int, lam: float, k_max: int, dims: tuple) -> SpectralModel:
    """Rebuild a circle or sphere model from container header fields."""
    if n == 1 and lam == 0.0 and dims == tuple([1] + [2] * k_max):
        return build_circle(k_max)
    if n == 2 and lam == 0.5 and dims == tuple(2 * k + 1 for k in range(k_max + 1)):
        return build_sphere(k_max)
    raise ContainerError("header describes a custom model; pass the model explicitly")


def decode_fbo(data: bytes, model: SpectralModel | None = None) -> FBO:
    r = _Reader(data)
    magic = r.raw(4, "magic")
    if magic != MAGIC:
        raise ContainerError(f"bad magic {magic!r}", 0)
    (version,) = r.take("<I", "version")
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version}", 4)
    n, lam, k_max = r.take("<IdI", "model header")
    dims = r.take(f"<{k_max + 1}I", "cluster dimensions")
    if model is None:
        model = model_from_header(n, lam, k_max, tuple(dims))
    elif model.header() != (n, lam, k_max, tuple(dims)):
        raise ContainerError("model header does not match the supplied model", 8)
    d, n_max = r.take("<II", "frequency header")
    (count,) = r.take("<Q", "block count")
    out = FBO.zeros(model, d, n_max, hermitian=False)
    for _ in range(count):
        start = r.pos
        l = r.take(f"<{d}q", "block mode")
        k, kp = r.take("<II", "block clusters")
        if k > k_max or kp > k_max or any(abs(x) > n_max for x in l):
            raise ContainerError(f"block key {(l, k, kp)} outside the declared lattice", start)
        dk, dkp = dims[k], dims[kp]
        buf = r.raw(16 * dk * dkp, "block entries")
        b = np.frombuffer(buf, dtype="<c16").reshape(dk, dkp)
        idx = tuple(x + n_max for x in l)
        out.coef[idx][model.block_slice(k), model.block_slice(kp)] = b
    if r.pos != len(data):
        raise ContainerError("trailing bytes after the last block", r.pos)
    out.hermitian = out.hermitian_defect() <= TOL_HERM * max(1.0, out.max_abs())
    return out


def load_fbo(path, model: SpectralModel | None = None) -> FBO:
    with open(path, "rb") as fh:
        return decode_fbo(fh.read(), model)


def debug_dump(a: FBO) -> str:
    """One line per nonzero block: l, k, k', then row-major entries as 're im' pairs."""
    lines = []
    for l, k, kp, b in a.blocks():
        ent = " ".join(f"{float(z.real)!r} {float(z.imag)!r}" for z in b.ravel())
        lines.append(f"{' '.join(map(str, l))} {k} {kp} {ent}")
    return "\n".join(lines) + ("\n" if lines else "")


__all__ = ["encode_fbo", "decode_fbo", "save_fbo", "load_fbo", "debug_dump"]
