"""Binary tensor files and checkpoint directories.

File layout: magic ``ADMT``, version byte 0x01, u8 ndim, ndim little-endian
u32 dims, then the row-major little-endian f64 payload. Checkpoints are a
directory of one ``.admt`` file per named tensor plus a plain-text manifest
listing (name, shape, role).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import TensorFormatError

MAGIC = b"ADMT"
VERSION = 1


def save_tensor(path, array) -> None:
    arr = np.asarray(array, dtype=np.float64)
    if not arr.flags["C_CONTIGUOUS"]:
        # note: ascontiguousarray would promote 0-d arrays to 1-d
        arr = np.ascontiguousarray(arr)
    if arr.ndim > 255:
        raise TensorFormatError(f"ndim {arr.ndim} does not fit the format")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<BB", VERSION, arr.ndim))
        for dim in arr.shape:
            fh.write(struct.pack("<I", dim))
        fh.write(arr.astype("<f8").tobytes())


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise TensorFormatError(f"bad magic {magic!r} in {path}")
        version, ndim = struct.unpack("<BB", fh.read(2))
        if version != VERSION:
            raise TensorFormatError(f"unsupported version {version} in {path}")
        shape = tuple(struct.unpack("<I", fh.read(4))[0] for _ in range(ndim))
        count = int(np.prod(shape)) if shape else 1
        payload = fh.read(8 * count)
        if len(payload) != 8 * count:
            raise TensorFormatError(f"truncated payload in {path}")
        return np.frombuffer(payload, dtype="<f8").reshape(shape).copy()


def _safe_name(name: str) -> str:
    return name.replace("/", "__").replace(".", "_")


def save_checkpoint(directory, tensors: dict, roles: dict | None = None) -> None:
    """Write named arrays plus a manifest; overwrites existing files."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    roles = roles or {}
    lines = []
    for name, value in tensors.items():
        arr = value.data if hasattr(value, "data") else np.asarray(value)
        fname = _safe_name(name) + ".admt"
        save_tensor(directory / fname, arr)
        shape = "x".join(str(d) for d in np.asarray(arr).shape) or "scalar"
        lines.append(f"{name}\t{shape}\t{roles.get(name, 'parameter')}\t{fname}")
    (directory / "manifest.txt").write_text("\n".join(lines) + "\n")


def load_checkpoint(directory) -> dict:
    """Read every tensor named in the manifest back into numpy arrays."""
    directory = Path(directory)
    manifest = directory / "manifest.txt"
    if not manifest.exists():
        raise TensorFormatError(f"no manifest in {directory}")
    out = {}
    for line in manifest.read_text().splitlines():
        if not line.strip():
            continue
        name, _shape, _role, fname = line.split("\t")
        out[name] = load_tensor(directory / fname)
    return out
