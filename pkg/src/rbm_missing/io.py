"""On-disk formats: IDX image archives, the RBMI incomplete-dataset container,
model checkpoints, metrics CSV and plain binary matrices.

RBMI layout (little-endian)::

    header   4s magic "RBMI" | u16 version | u16 flags | u32 n | u32 N   (16 bytes)
    [flags & HAS_PROVENANCE]  varint length + UTF-8 JSON object
    N records: varint count, count varints of delta-encoded observed indices
               (first index as-is), ceil(count / 8) bytes of values packed
               LSB-first
    [flags & HAS_CHECKSUM]    u32 CRC-32 of every preceding byte

An empty dataset with no provenance is the bare 16-byte header.

Checkpoint layout (little-endian)::

    4s magic "RBMC" | u32 version | u32 n | u32 m | u64 seed | u32 epoch
    float64 b[n] | float64 c[m] | float64 W[n*m] (row-major)
"""

from __future__ import annotations

import csv
import gzip
import io as _io
import json
import math
import struct
import zlib
from pathlib import Path
from typing import Iterable

import numpy as np

from .core import RbmParams
from .dataset import IncompleteDataset, binarize

__all__ = [
    "FormatError",
    "IdxFormatError",
    "read_idx",
    "write_idx",
    "load_idx_images",
    "save_incomplete",
    "load_incomplete",
    "dumps_incomplete",
    "loads_incomplete",
    "Checkpoint",
    "save_checkpoint",
    "load_checkpoint",
    "METRICS_HEADER",
    "write_metrics_csv",
    "read_metrics_csv",
    "load_binary_matrix",
    "save_binary_matrix",
]


class FormatError(ValueError):
    """A file does not follow the expected layout."""


class IdxFormatError(FormatError):
    """Malformed IDX archive; ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


# -- IDX --------------------------------------------------------------------

_IDX_TYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}
_IDX_CODES = {v.newbyteorder("<").kind + str(v.itemsize): k for k, v in _IDX_TYPES.items()}


def _open_maybe_gzip(path):
    path = Path(path)
    with open(path, "rb") as f:
        head = f.read(2)
    if head == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def read_idx(path) -> np.ndarray:
    """Read an IDX archive (optionally gzip-compressed) into an ndarray."""
    with _open_maybe_gzip(path) as f:
        raw = f.read()
    if len(raw) < 4:
        raise IdxFormatError("file too short for the IDX magic number", len(raw))
    zero, code, ndim = struct.unpack(">HBB", raw[:4])
    if zero != 0:
        raise IdxFormatError("magic number must start with two zero bytes", 0)
    if code not in _IDX_TYPES:
        raise IdxFormatError(f"unknown IDX element type 0x{code:02x}", 2)
    if ndim == 0:
        raise IdxFormatError("IDX archive declares zero dimensions", 3)
    hdr_end = 4 + 4 * ndim
    if len(raw) < hdr_end:
        raise IdxFormatError(f"header truncated: expected {hdr_end} bytes", len(raw))
    dims = struct.unpack(f">{ndim}I", raw[4:hdr_end])
    dtype = _IDX_TYPES[code]
    expected = int(np.prod(dims)) * dtype.itemsize
    have = len(raw) - hdr_end
    if have < expected:
        raise IdxFormatError(
            f"payload truncated: expected {expected} bytes of data, found {have}", len(raw)
        )
    if have > expected:
        raise IdxFormatError("trailing bytes after the declared payload", hdr_end + expected)
    data = np.frombuffer(raw, dtype=dtype, count=int(np.prod(dims)), offset=hdr_end)
    return data.reshape(dims).astype(dtype.newbyteorder("="))


def write_idx(path, array) -> None:
    arr = np.asarray(array)
    key = arr.dtype.kind + str(arr.dtype.itemsize)
    if key not in _IDX_CODES:
        raise FormatError(f"dtype {arr.dtype} has no IDX type code")
    code = _IDX_CODES[key]
    header = struct.pack(">HBB", 0, code, arr.ndim) + struct.pack(f">{arr.ndim}I", *arr.shape)
    with open(path, "wb") as f:
        f.write(header)
        f.write(arr.astype(_IDX_TYPES[code]).tobytes())


def load_idx_images(path) -> np.ndarray:
    """Image archive as an (N, pixels) uint8 matrix, one flattened image per row."""
    arr = read_idx(path)
    if arr.ndim < 2:
        raise FormatError("an image archive needs at least two dimensions")
    if arr.dtype != np.uint8:
        raise FormatError(f"expected unsigned byte pixels, got {arr.dtype}")
    return arr.reshape(arr.shape[0], -1)


# -- RBMI -------------------------------------------------------------------

RBMI_MAGIC = b"RBMI"
RBMI_VERSION = 1
HAS_PROVENANCE = 0x1
HAS_CHECKSUM = 0x2
_RBMI_HEADER = struct.Struct("<4sHHII")


def _put_varint(buf: bytearray, value: int) -> None:
    if value < 0:
        raise ValueError("varints are unsigned")
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            buf.append(byte | 0x80)
        else:
            buf.append(byte)
            return


def _get_varint(raw: bytes, pos: int) -> tuple[int, int]:
    value = shift = 0
    while True:
        if pos >= len(raw):
            raise FormatError(f"truncated varint at byte offset {pos}")
        byte = raw[pos]
        pos += 1
        value |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return value, pos
        shift += 7
        if shift > 63:
            raise FormatError(f"varint too long at byte offset {pos}")


def dumps_incomplete(dataset: IncompleteDataset) -> bytes:
    body = bytearray()
    flags = 0
    if dataset.provenance:
        flags |= HAS_PROVENANCE
        meta = json.dumps(dataset.provenance, sort_keys=True, separators=(",", ":")).encode()
        _put_varint(body, len(meta))
        body += meta
    for row_vals, row_obs in zip(dataset.values, dataset.observed):
        idx = np.flatnonzero(row_obs)
        _put_varint(body, idx.size)
        prev = 0
        for k, i in enumerate(idx.tolist()):
            _put_varint(body, i if k == 0 else i - prev)
            prev = i
        body += np.packbits(row_vals[idx], bitorder="little").tobytes()
    if body:
        flags |= HAS_CHECKSUM
    out = bytearray(_RBMI_HEADER.pack(RBMI_MAGIC, RBMI_VERSION, flags, dataset.n, len(dataset)))
    out += body
    if flags & HAS_CHECKSUM:
        out += struct.pack("<I", zlib.crc32(out) & 0xFFFFFFFF)
    return bytes(out)


def loads_incomplete(raw: bytes) -> IncompleteDataset:
    if len(raw) < _RBMI_HEADER.size:
        raise FormatError("file too short for an RBMI header")
    magic, version, flags, n, N = _RBMI_HEADER.unpack_from(raw, 0)
    if magic != RBMI_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {RBMI_MAGIC!r}")
    if version != RBMI_VERSION:
        raise FormatError(f"unsupported RBMI version {version} (this reader handles {RBMI_VERSION})")
    end = len(raw)
    if flags & HAS_CHECKSUM:
        if end < _RBMI_HEADER.size + 4:
            raise FormatError("missing checksum trailer")
        (stored,) = struct.unpack_from("<I", raw, end - 4)
        end -= 4
        if zlib.crc32(raw[:end]) & 0xFFFFFFFF != stored:
            raise FormatError("checksum mismatch: file is corrupted")
    pos = _RBMI_HEADER.size
    provenance = {}
    if flags & HAS_PROVENANCE:
        length, pos = _get_varint(raw, pos)
        provenance = json.loads(raw[pos:pos + length].decode())
        pos += length
    values = np.zeros((N, n), dtype=np.uint8)
    observed = np.zeros((N, n), dtype=bool)
    for row in range(N):
        count, pos = _get_varint(raw, pos)
        if count > n:
            raise FormatError(f"record {row} declares {count} observed entries for n={n}")
        idx = np.empty(count, dtype=np.int64)
        prev = 0
        for k in range(count):
            step, pos = _get_varint(raw, pos)
            prev = step if k == 0 else prev + step
            idx[k] = prev
        if count and (idx[-1] >= n or np.any(np.diff(idx) <= 0)):
            raise FormatError(f"record {row} has invalid observed indices")
        nbytes = (count + 7) // 8
        if pos + nbytes > end:
            raise FormatError(f"record {row} truncated at byte offset {pos}")
        bits = np.unpackbits(np.frombuffer(raw, np.uint8, nbytes, pos), bitorder="little")[:count]
        pos += nbytes
        values[row, idx] = bits
        observed[row, idx] = True
    if pos != end:
        raise FormatError(f"{end - pos} unexpected trailing bytes")
    return IncompleteDataset(n, values, observed, provenance)


def save_incomplete(path, dataset: IncompleteDataset) -> None:
    Path(path).write_bytes(dumps_incomplete(dataset))


def load_incomplete(path) -> IncompleteDataset:
    return loads_incomplete(Path(path).read_bytes())


# -- checkpoints ------------------------------------------------------------

CKPT_MAGIC = b"RBMC"
CKPT_VERSION = 1
_CKPT_HEADER = struct.Struct("<4sIIIQI")


class Checkpoint:
    def __init__(self, params: RbmParams, seed: int, epoch: int):
        self.params = params
        self.seed = seed
        self.epoch = epoch


def save_checkpoint(path, params: RbmParams, seed: int, epoch: int) -> None:
    header = _CKPT_HEADER.pack(CKPT_MAGIC, CKPT_VERSION, params.n, params.m, seed & (2**64 - 1), epoch)
    payload = np.concatenate([params.b, params.c, params.W.ravel()]).astype("<f8").tobytes()
    Path(path).write_bytes(header + payload)


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if len(raw) < _CKPT_HEADER.size:
        raise FormatError("file too short for a checkpoint header")
    magic, version, n, m, seed, epoch = _CKPT_HEADER.unpack_from(raw, 0)
    if magic != CKPT_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {CKPT_MAGIC!r}")
    if version != CKPT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    count = n + m + n * m
    if len(raw) != _CKPT_HEADER.size + 8 * count:
        raise FormatError(f"checkpoint payload should be {8 * count} bytes")
    theta = np.frombuffer(raw, "<f8", count, _CKPT_HEADER.size).astype(np.float64)
    return Checkpoint(RbmParams.from_flat(theta, n, m), seed, epoch)


# -- metrics CSV ------------------------------------------------------------

METRICS_HEADER = ("epoch", "split", "loglik", "grad_norm", "mf_fail_rate", "seconds")


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x) if math.isfinite(x) else ("nan" if math.isnan(x) else repr(x))
    return str(x)


def write_metrics_csv(path, records: Iterable[dict]) -> None:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    for rec in records:
        w.writerow([_fmt(rec[k]) for k in METRICS_HEADER])
    Path(path).write_text(buf.getvalue())


def read_metrics_csv(path) -> list[dict]:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != METRICS_HEADER:
            raise FormatError(f"unexpected metrics header {reader.fieldnames}")
        out = []
        for row in reader:
            out.append({
                "epoch": int(row["epoch"]),
                "split": row["split"],
                "loglik": float(row["loglik"]),
                "grad_norm": float(row["grad_norm"]),
                "mf_fail_rate": float(row["mf_fail_rate"]),
                "seconds": float(row["seconds"]),
            })
        return out


# -- complete binary matrices -----------------------------------------------

def load_binary_matrix(path, threshold: float = 127.5) -> np.ndarray:
    """Complete dataset from .npy, .csv/.txt (0/1 values) or an IDX image archive.

    IDX pixel archives are binarized with ``threshold``; the other formats
    must already hold 0/1 entries.
    """
    path = Path(path)
    suffix = "".join(path.suffixes[-2:]) if path.suffix == ".gz" else path.suffix
    if suffix == ".npy":
        data = np.load(path, allow_pickle=False)
    elif suffix in (".csv", ".txt"):
        data = np.loadtxt(path, delimiter="," if suffix == ".csv" else None, ndmin=2)
    else:
        return binarize(load_idx_images(path), threshold)
    data = np.asarray(data)
    if data.ndim != 2:
        raise FormatError("binary matrix must be two-dimensional")
    if not np.all((data == 0) | (data == 1)):
        raise FormatError("binary matrix has entries other than 0 and 1")
    return data.astype(np.uint8)


def save_binary_matrix(path, data) -> None:
    path = Path(path)
    data = np.asarray(data).astype(np.uint8)
    if path.suffix == ".csv":
        np.savetxt(path, data, fmt="%d", delimiter=",")
    else:
        np.save(path, data, allow_pickle=False)
