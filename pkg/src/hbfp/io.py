"""Binary file formats.

HBT1, a dense FP32 tensor::

    b"HBT1" | u8 dtype (0 = FP32) | u8 rank | rank x u32 dims | FP32 payload

HBQ1, a quantized tensor::

    b"HBQ1"
    u8 mantissa_bits | u32 block_size | u8 exponent_bits
    u8 blocking kind (0 = 1d, 1 = 2d) | u32 block_rows | u32 block_cols
    u8 axis | u8 rank | rank x u32 logical dims
    u32 padding_count
    per block: i16 shared exponent (-32768 = all zero) | block_size x i8 mantissas

HBC1, a model checkpoint: ``b"HBC1" | u32 header length | JSON header``
followed by the HBT1 records listed in the header, in order.

All integers and floats are little endian; payloads are row-major.
"""

from __future__ import annotations

import io
import json
import os
import struct
import tempfile
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .core import Blocking, BfpTensor, QuantConfig, as_tensor

__all__ = [
    "FormatError",
    "write_hbt", "read_hbt", "dump_hbt", "load_hbt",
    "write_hbq", "read_hbq", "dump_hbq", "load_hbq",
    "save_checkpoint", "load_checkpoint",
    "atomic_write_bytes",
]

HBT_MAGIC = b"HBT1"
HBQ_MAGIC = b"HBQ1"
HBC_MAGIC = b"HBC1"
DTYPE_FP32 = 0
_KINDS = {"1d": 0, "2d": 1}


class FormatError(ValueError):
    """Raised for malformed or mismatched binary files."""


def _read_exact(f: BinaryIO, n: int) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError("truncated file")
    return buf


def _unpack(f: BinaryIO, fmt: str):
    return struct.unpack(fmt, _read_exact(f, struct.calcsize(fmt)))


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- HBT1 ---------------------------------------------------------------

def write_hbt(f: BinaryIO, x) -> None:
    x = as_tensor(x)
    if x.ndim > 255:
        raise FormatError("rank too large")
    f.write(HBT_MAGIC)
    f.write(struct.pack("<BB", DTYPE_FP32, x.ndim))
    f.write(struct.pack(f"<{x.ndim}I", *x.shape))
    f.write(np.ascontiguousarray(x, dtype="<f4").tobytes())


def read_hbt(f: BinaryIO) -> np.ndarray:
    if _read_exact(f, 4) != HBT_MAGIC:
        raise FormatError("bad magic, expected HBT1")
    dtype, rank = _unpack(f, "<BB")
    if dtype != DTYPE_FP32:
        raise FormatError(f"unsupported dtype code {dtype}")
    shape = _unpack(f, f"<{rank}I")
    count = int(np.prod(shape, dtype=np.int64))
    data = np.frombuffer(_read_exact(f, 4 * count), dtype="<f4")
    return as_tensor(data.reshape(shape))


def dump_hbt(path, x) -> None:
    buf = io.BytesIO()
    write_hbt(buf, x)
    atomic_write_bytes(path, buf.getvalue())


def load_hbt(path) -> np.ndarray:
    with open(path, "rb") as f:
        x = read_hbt(f)
        if f.read(1):
            raise FormatError("trailing bytes after HBT1 payload")
    return x


# -- HBQ1 ---------------------------------------------------------------

def write_hbq(f: BinaryIO, q: BfpTensor) -> None:
    cfg, blk = q.config, q.blocking
    if blk.kind == "1d":
        dims, axis = (1, cfg.block_size), blk.axis
    else:
        side = int(round(cfg.block_size ** 0.5))
        dims, axis = (side, side), 0
    f.write(HBQ_MAGIC)
    f.write(struct.pack("<BIB", cfg.mantissa_bits, cfg.block_size, cfg.exponent_bits))
    f.write(struct.pack("<BII", _KINDS[blk.kind], *dims))
    rank = len(q.logical_shape)
    f.write(struct.pack("<BB", axis, rank))
    f.write(struct.pack(f"<{rank}I", *q.logical_shape))
    f.write(struct.pack("<I", q.padding_count))
    rec = np.zeros(q.n_blocks, dtype=[("e", "<i2"), ("m", "i1", (cfg.block_size,))])
    rec["e"] = q.exponents
    rec["m"] = q.mantissas
    f.write(rec.tobytes())


def read_hbq(f: BinaryIO) -> BfpTensor:
    if _read_exact(f, 4) != HBQ_MAGIC:
        raise FormatError("bad magic, expected HBQ1")
    mbits, bsize, ebits = _unpack(f, "<BIB")
    kind_code, rows, cols = _unpack(f, "<BII")
    kinds = {v: k for k, v in _KINDS.items()}
    if kind_code not in kinds:
        raise FormatError(f"unknown blocking kind {kind_code}")
    if rows * cols != bsize:
        raise FormatError("block dims do not match block_size")
    axis, rank = _unpack(f, "<BB")
    shape = tuple(_unpack(f, f"<{rank}I"))
    (pad,) = _unpack(f, "<I")
    try:
        cfg = QuantConfig(mbits, bsize, ebits)
        kind = kinds[kind_code]
        blocking = Blocking(kind, axis) if kind == "1d" else Blocking("2d")
    except ValueError as exc:
        raise FormatError(str(exc)) from exc
    n_blocks, rem = divmod(int(np.prod(shape, dtype=np.int64)) + pad, bsize)
    if rem:
        raise FormatError("padding_count inconsistent with shape")
    dt = np.dtype([("e", "<i2"), ("m", "i1", (bsize,))])
    rec = np.frombuffer(_read_exact(f, dt.itemsize * n_blocks), dtype=dt)
    return BfpTensor(shape, cfg, blocking, rec["e"].astype(np.int64),
                     rec["m"].astype(np.int8), pad)


def dump_hbq(path, q: BfpTensor) -> None:
    buf = io.BytesIO()
    write_hbq(buf, q)
    atomic_write_bytes(path, buf.getvalue())


def load_hbq(path) -> BfpTensor:
    with open(path, "rb") as f:
        q = read_hbq(f)
        if f.read(1):
            raise FormatError("trailing bytes after HBQ1 payload")
    return q


# -- HBC1 checkpoints ---------------------------------------------------

def save_checkpoint(path, tensors: dict[str, np.ndarray], meta: dict) -> None:
    names = list(tensors)
    header = json.dumps({"meta": meta, "tensors": names}, sort_keys=True).encode()
    buf = io.BytesIO()
    buf.write(HBC_MAGIC)
    buf.write(struct.pack("<I", len(header)))
    buf.write(header)
    for name in names:
        write_hbt(buf, tensors[name])
    atomic_write_bytes(path, buf.getvalue())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as f:
        if _read_exact(f, 4) != HBC_MAGIC:
            raise FormatError("bad magic, expected HBC1")
        (n,) = _unpack(f, "<I")
        try:
            header = json.loads(_read_exact(f, n))
        except json.JSONDecodeError as exc:
            raise FormatError("corrupt checkpoint header") from exc
        tensors = {name: read_hbt(f) for name in header["tensors"]}
    return tensors, header["meta"]
