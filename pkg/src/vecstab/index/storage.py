"""Versioned binary persistence for IVF and graph indexes.

Layout (all little-endian)::

    magic      8 bytes   b"VSLIDX1\\0"
    version    u32
    kind       u32       1 = IVF, 2 = graph
    metric     u32 code, f64 p
    nsections  u32
    table      nsections x (name 16s, dtype 4s, rows u64, cols u64, offset u64)
    payload    raw arrays at their offsets

Every array is stored 2-D; scalars travel in an ``int64`` ``params`` section.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .. import _kernels as K
from ..vectors import Metric
from .graph import GraphIndex
from .ivf import IvfIndex
from .results import SearchIndexError

MAGIC = b"VSLIDX1\0"
VERSION = 1
KIND_IVF = 1
KIND_GRAPH = 2

_HEADER = struct.Struct("<8sIIIdI")
_ENTRY = struct.Struct("<16s4sQQQ")
_DTYPES = {"<f8": np.dtype("<f8"), "<i8": np.dtype("<i8")}

_METRIC_CODES = {K.L1: (lambda p: Metric.lp(1.0)), K.L2: (lambda p: Metric.lp(2.0)),
                 K.LP: Metric.lp, K.COSINE: (lambda p: Metric.cosine())}


def _sections(index) -> tuple[int, dict]:
    if isinstance(index, IvfIndex):
        sizes = np.array([len(x) for x in index.lists], dtype=np.int64)
        ids = np.concatenate(index.lists) if index.lists else np.empty(0, np.int64)
        return KIND_IVF, {
            "data": index.data,
            "centroids": index.centroids,
            "list_sizes": sizes,
            "list_ids": ids,
        }
    if isinstance(index, GraphIndex):
        params = np.array([index.M, index.ef_construction, index.entry, int(index.heuristic)], dtype=np.int64)
        return KIND_GRAPH, {
            "params": params,
            "data": index.data,
            "levels": index.levels,
            "nbr0": index.nbr0,
            "dist0": index.dist0,
            "deg0": index.deg0,
            "up_start": index.up_start,
            "nbr_up": index.nbr_up,
            "dist_up": index.dist_up,
            "deg_up": index.deg_up,
        }
    raise SearchIndexError(f"cannot persist {type(index).__name__}")


def save_index(index, path) -> None:
    kind, secs = _sections(index)
    arrays = []
    for name, arr in secs.items():
        arr = np.asarray(arr)
        arr = arr.astype("<f8" if arr.dtype.kind == "f" else "<i8")
        arrays.append((name, arr.reshape(arr.shape[0], -1) if arr.ndim else arr.reshape(1, 1)))
    offset = _HEADER.size + _ENTRY.size * len(arrays)
    table, blobs = [], []
    for name, arr in arrays:
        blob = np.ascontiguousarray(arr).tobytes()
        table.append(_ENTRY.pack(name.encode(), arr.dtype.str.encode(), arr.shape[0], arr.shape[1], offset))
        blobs.append(blob)
        offset += len(blob)
    m = index.metric
    with open(Path(path), "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, kind, m.code, m.p, len(arrays)))
        fh.writelines(table)
        fh.writelines(blobs)


def _read_sections(buf: bytes) -> tuple[int, Metric, dict]:
    if len(buf) < _HEADER.size:
        raise SearchIndexError("index file truncated")
    magic, version, kind, code, p, nsec = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise SearchIndexError("not a vecstab index file (bad magic)")
    if version != VERSION:
        raise SearchIndexError(f"index format version {version} unsupported (expected {VERSION})")
    if code not in _METRIC_CODES:
        raise SearchIndexError(f"unknown metric code {code}")
    secs = {}
    for s in range(nsec):
        pos = _HEADER.size + s * _ENTRY.size
        if pos + _ENTRY.size > len(buf):
            raise SearchIndexError("index section table truncated")
        name, dt, rows, cols, off = _ENTRY.unpack_from(buf, pos)
        dtype = _DTYPES.get(dt.rstrip(b"\0").decode("ascii", "replace"))
        if dtype is None:
            raise SearchIndexError(f"unknown section dtype {dt!r}")
        label = name.rstrip(b"\0").decode("ascii", "replace")
        if off + rows * cols * dtype.itemsize > len(buf):
            raise SearchIndexError(f"section {label} truncated")
        secs[label] = np.frombuffer(buf, dtype, rows * cols, off).reshape(rows, cols).copy()
    return kind, _METRIC_CODES[code](p), secs


def load_index(path):
    """Read an index written by :func:`save_index`; rejects other format versions."""
    kind, metric, s = _read_sections(Path(path).read_bytes())
    try:
        data = s["data"]
        norms = K.row_norms(data)
        if kind == KIND_IVF:
            bounds = np.concatenate([[0], np.cumsum(s["list_sizes"].ravel())])
            ids = s["list_ids"].ravel()
            lists = [ids[bounds[c] : bounds[c + 1]] for c in range(bounds.size - 1)]
            index = IvfIndex(s["centroids"], lists, metric, data, norms)
        elif kind == KIND_GRAPH:
            M, efc, entry, heuristic = (int(x) for x in s["params"].ravel())
            index = GraphIndex(
                data, norms, metric, M, efc, s["levels"].ravel(), entry,
                s["nbr0"], s["dist0"], s["deg0"].ravel(), s["up_start"].ravel(),
                s["nbr_up"], s["dist_up"], s["deg_up"].ravel(), bool(heuristic),
            )
        else:
            raise SearchIndexError(f"unknown index kind {kind}")
    except KeyError as exc:
        raise SearchIndexError(f"index file lacks section {exc.args[0]!r}") from exc
    index.check()
    return index
