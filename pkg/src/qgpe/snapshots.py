"""Binary field snapshots (physical-space samples) with checkpoint/restart.

Layout (little-endian): magic "QGPE", version u32 = 1, n1 n2 n3 as u32,
box period L as f64, component count u32 = 4, simulation time f64, then
the physical samples as f64, component-major, x3 fastest (C order of a
(4, n1, n2, n3) array).  Files are written atomically (temp + rename).
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

from .grid import Grid, SpectralField4, forward_transform, inverse_transform

MAGIC = b"QGPE"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIdId")


def write_snapshot(path: str, f: SpectralField4, time: float) -> None:
    g = f.grid
    phys = inverse_transform(f)
    header = _HEADER.pack(MAGIC, VERSION, g.n1, g.n2, g.n3,
                          g.box_length, 4, float(time))
    d = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".snap-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(header)
            fh.write(np.ascontiguousarray(phys, dtype="<f8").tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_snapshot(path: str) -> tuple[SpectralField4, float]:
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        if len(raw) != _HEADER.size:
            raise ValueError(f"{path}: truncated snapshot header")
        magic, version, n1, n2, n3, L, ncomp, time = _HEADER.unpack(raw)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        if ncomp != 4:
            raise ValueError(f"{path}: expected 4 components, got {ncomp}")
        count = ncomp * n1 * n2 * n3
        payload = fh.read(count * 8)
        if len(payload) != count * 8:
            raise ValueError(f"{path}: truncated snapshot payload")
        data = np.frombuffer(payload, dtype="<f8")
    grid = Grid(n1, n2, n3, box_length=L)
    phys = data.reshape(4, n1, n2, n3).astype(float)
    return forward_transform(grid, phys), time
