"""Binary grid dumps and CSV export.

Dump layout (all little-endian)::

    b"FXPD"                    magic
    u32 version                currently 1
    u32 flags                  bit 0: metadata block present, bit 1: complex samples
    u32 ndim                   number of array axes
    u64 * ndim                 array shape
    f64 * ndim                 spacing per axis (0.0 for component axes)
    [u32 nbytes, utf-8 JSON]   metadata block, if flagged
    f64 * ...                  row-major samples; complex data interleaves re, im

Reloading a dump reproduces the array bit for bit.
"""

from __future__ import annotations

import csv
import io
import json
import struct
from pathlib import Path

import numpy as np

from .grid import AXIS_NAMES, SpaceTimeGrid

MAGIC = b"FXPD"
VERSION = 1
FLAG_META = 1
FLAG_COMPLEX = 2


def dump_array(path, array: np.ndarray, spacings=None, meta: dict | None = None) -> None:
    array = np.asarray(array)
    is_complex = np.iscomplexobj(array)
    ndim = array.ndim
    if spacings is None:
        spacings = [0.0] * ndim
    spacings = [float(s) for s in spacings]
    if len(spacings) != ndim:
        raise ValueError("need one spacing per axis")
    flags = (FLAG_META if meta is not None else 0) | (FLAG_COMPLEX if is_complex else 0)
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<III", VERSION, flags, ndim))
    buf.write(struct.pack(f"<{ndim}Q", *array.shape))
    buf.write(struct.pack(f"<{ndim}d", *spacings))
    if meta is not None:
        blob = json.dumps(meta, sort_keys=True).encode()
        buf.write(struct.pack("<I", len(blob)))
        buf.write(blob)
    if is_complex:
        data = np.ascontiguousarray(array, dtype="<c16").view("<f8")
    else:
        data = np.ascontiguousarray(array, dtype="<f8")
    buf.write(data.tobytes(order="C"))
    Path(path).write_bytes(buf.getvalue())


def load_array(path):
    """Return ``(array, spacings, meta)`` from a dump written by :func:`dump_array`."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not an FXPD dump")
    version, flags, ndim = struct.unpack_from("<III", raw, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported dump version {version}")
    off = 16
    shape = struct.unpack_from(f"<{ndim}Q", raw, off)
    off += 8 * ndim
    spacings = struct.unpack_from(f"<{ndim}d", raw, off)
    off += 8 * ndim
    meta = None
    if flags & FLAG_META:
        (n,) = struct.unpack_from("<I", raw, off)
        off += 4
        meta = json.loads(raw[off:off + n].decode())
        off += n
    data = np.frombuffer(raw, dtype="<f8", offset=off)
    if flags & FLAG_COMPLEX:
        arr = data.view("<c16").reshape(shape)
    else:
        arr = data.reshape(shape)
    return arr.copy(), tuple(spacings), meta


def dump_field(path, field: np.ndarray, grid: SpaceTimeGrid, meta: dict | None = None) -> None:
    """Dump a component-major field ``(comp, t, x, ...)`` with grid spacings."""
    lead = field.ndim - grid.ndim
    dump_array(path, field, [0.0] * lead + list(grid.spacings), meta)


def field_csv(field: np.ndarray, grid: SpaceTimeGrid, interior: bool = True) -> str:
    """CSV text with one row per cell and component: t,x[,y,z],component,value."""
    if field.ndim == grid.ndim:
        field = field[None]
    if interior:
        field = field[(slice(None),) + grid.interior]
    coords = np.meshgrid(*[grid.centers(k)[: field.shape[k + 1]] for k in range(grid.ndim)],
                         indexing="ij")
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(list(AXIS_NAMES[: grid.ndim]) + ["component", "value"])
    flat = [c.ravel() for c in coords]
    for j in range(field.shape[0]):
        vals = field[j].ravel()
        for i in range(vals.size):
            w.writerow([repr(float(c[i])) for c in flat] + [j + 1, repr(float(vals[i]))])
    return out.getvalue()


def write_field_csv(path, field: np.ndarray, grid: SpaceTimeGrid, interior: bool = True) -> None:
    Path(path).write_text(field_csv(field, grid, interior))
