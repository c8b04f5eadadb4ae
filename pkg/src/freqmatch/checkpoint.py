"""Binary checkpoint container.

Layout (little-endian)::

    b"FAMCK" + b"1"                 magic, trailing digit is the format version
    u32 len, utf-8 INI              config snapshot
    u64                             iteration counter
    u32                             number of tensor records
    records:
        u8  kind                    0 = parameter, 1 = momentum buffer
        u16 len, utf-8 name
        u32 ndim, u32 * ndim dims
        float32 * prod(dims)
"""
from __future__ import annotations

import struct

import numpy as np

from .config import TrainConfig
from .errors import ParseError, UnsupportedVersion

MAGIC = b"FAMCK"
VERSION = 1
PARAM, MOMENTUM = 0, 1


def encode_checkpoint(cfg: TrainConfig, params: dict, momentum: dict, iteration: int) -> bytes:
    out = [MAGIC + str(VERSION).encode()]
    text = cfg.to_ini().encode("utf-8")
    out += [struct.pack("<I", len(text)), text, struct.pack("<Q", iteration)]
    records = [(PARAM, k, v) for k, v in params.items()] + [(MOMENTUM, k, v) for k, v in momentum.items()]
    out.append(struct.pack("<I", len(records)))
    for kind, name, arr in records:
        arr = np.asarray(arr, dtype="<f4", order="C")
        nb = name.encode("utf-8")
        out.append(struct.pack("<BH", kind, len(nb)) + nb)
        out.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        out.append(arr.tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, buf):
        self.buf, self.off = buf, 0

    def take(self, n, what):
        if self.off + n > len(self.buf):
            raise ParseError(f"truncated checkpoint while reading {what}", offset=self.off)
        chunk = self.buf[self.off:self.off + n]
        self.off += n
        return chunk

    def unpack(self, fmt, what):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size, what))


def decode_checkpoint(buf: bytes):
    """Return ``(config, params, momentum, iteration)``; arrays are float32."""
    r = _Reader(buf)
    head = r.take(6, "magic")
    if head[:5] != MAGIC:
        raise ParseError("bad checkpoint magic", offset=0)
    if head[5:] != str(VERSION).encode():
        raise UnsupportedVersion(f"unsupported checkpoint version {head[5:]!r}", offset=5)
    (n,) = r.unpack("<I", "config length")
    cfg = TrainConfig.from_ini(r.take(n, "config").decode("utf-8"))
    (iteration,) = r.unpack("<Q", "iteration")
    (count,) = r.unpack("<I", "record count")
    params, momentum = {}, {}
    for _ in range(count):
        kind, nlen = r.unpack("<BH", "record header")
        name = r.take(nlen, "tensor name").decode("utf-8")
        (ndim,) = r.unpack("<I", "ndim")
        dims = r.unpack(f"<{ndim}I", "shape") if ndim else ()
        size = int(np.prod(dims)) if dims else 1
        arr = np.frombuffer(r.take(4 * size, f"data of {name}"), dtype="<f4").reshape(dims).astype(np.float32)
        if kind == PARAM:
            params[name] = arr
        elif kind == MOMENTUM:
            momentum[name] = arr
        else:
            raise ParseError(f"unknown record kind {kind}", offset=r.off)
    if r.off != len(buf):
        raise ParseError(f"{len(buf) - r.off} trailing bytes", offset=r.off)
    return cfg, params, momentum, iteration


def save_checkpoint(path, cfg, params, momentum, iteration):
    with open(path, "wb") as fh:
        fh.write(encode_checkpoint(cfg, params, momentum, iteration))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return decode_checkpoint(fh.read())
