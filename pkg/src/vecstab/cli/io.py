"""Dataset readers and writers.

Dense collections use the native ``VSD1`` container, or ``.fvecs`` when the
file extension says so. Sparse vectors, vector sets and attribute lists are
JSON Lines.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..vectors import SparseVector, VectorError

VSD_MAGIC = b"VSD1"
VSD_VERSION = 1
_VSD_HEADER = struct.Struct("<4sIQI")


class DataError(ValueError):
    """Unreadable, truncated or invariant-violating input data."""


def is_fvecs(path) -> bool:
    return Path(path).suffix.lower() == ".fvecs"


# ---------------------------------------------------------------------------
# dense


def write_dense(path, vectors) -> None:
    """Store rows as little-endian float32, in ``VSD1`` or ``fvecs`` by extension."""
    a = np.asarray(vectors, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] == 0 or a.shape[1] == 0:
        raise DataError(f"need a non-empty (n, m) collection, got shape {a.shape}")
    f32 = a.astype("<f4")
    n, m = f32.shape
    with open(path, "wb") as fh:
        if is_fvecs(path):
            rec = np.empty((n, m + 1), dtype="<f4")
            rec[:, 1:] = f32
            rec.view("<i4")[:, 0] = m
            fh.write(rec.tobytes())
        else:
            fh.write(_VSD_HEADER.pack(VSD_MAGIC, VSD_VERSION, n, m))
            fh.write(f32.tobytes())


def _read_fvecs(buf: bytes, path) -> np.ndarray:
    if len(buf) < 4:
        raise DataError(f"{path}: empty or truncated fvecs file")
    m = struct.unpack_from("<i", buf, 0)[0]
    if m <= 0:
        raise DataError(f"{path}: invalid fvecs dimension {m}")
    rec = 4 * (m + 1)
    if len(buf) % rec:
        raise DataError(f"{path}: fvecs size {len(buf)} is not a multiple of the record size {rec}")
    raw = np.frombuffer(buf, dtype="<f4").reshape(-1, m + 1)
    dims = raw.view("<i4")[:, 0]
    bad = np.flatnonzero(dims != m)
    if bad.size:
        raise DataError(f"{path}: record {int(bad[0])} has dimension {int(dims[bad[0]])}, expected {m}")
    return raw[:, 1:].astype(np.float64)


def _read_vsd(buf: bytes, path) -> np.ndarray:
    if len(buf) < _VSD_HEADER.size:
        raise DataError(f"{path}: empty or truncated VSD1 file")
    magic, version, n, m = _VSD_HEADER.unpack_from(buf, 0)
    if magic != VSD_MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}, expected {VSD_MAGIC!r}")
    if version != VSD_VERSION:
        raise DataError(f"{path}: unsupported VSD1 version {version}")
    if n == 0 or m == 0:
        raise DataError(f"{path}: empty collection")
    need = _VSD_HEADER.size + 4 * n * m
    if len(buf) != need:
        raise DataError(f"{path}: expected {need} bytes for {n} x {m} floats, found {len(buf)}")
    return np.frombuffer(buf, dtype="<f4", offset=_VSD_HEADER.size).reshape(n, m).astype(np.float64)


def read_dense(path) -> np.ndarray:
    """Read a dense collection as an ``(n, m)`` float64 array."""
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from exc
    out = _read_fvecs(buf, path) if is_fvecs(path) else _read_vsd(buf, path)
    if not np.all(np.isfinite(out)):
        raise DataError(f"{path}: non-finite values")
    return out


# ---------------------------------------------------------------------------
# JSON Lines


def _lines(path) -> Iterable[tuple[int, dict]]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from exc
    n = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
        if not isinstance(obj, dict):
            raise DataError(f"{path}:{lineno}: expected a JSON object")
        n += 1
        yield lineno, obj
    if n == 0:
        raise DataError(f"{path}: no records")


def _require(obj: dict, keys: set, optional: set, where: str) -> None:
    missing = keys - obj.keys()
    if missing:
        raise DataError(f"{where}: missing field(s) {sorted(missing)}")
    extra = obj.keys() - keys - optional
    if extra:
        raise DataError(f"{where}: unknown field(s) {sorted(extra)}")


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _write_lines(path, objs) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for obj in objs:
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")


def read_sparse(path) -> tuple[list[SparseVector], list]:
    """Read sparse vectors and their ids (``None`` when a line has no id)."""
    vecs, ids = [], []
    for lineno, obj in _lines(path):
        where = f"{path}:{lineno}"
        _require(obj, {"dim", "indices", "values"}, {"id"}, where)
        if not _is_int(obj["dim"]):
            raise DataError(f"{where}: dim must be an integer")
        idx, val = obj["indices"], obj["values"]
        if not isinstance(idx, list) or not all(_is_int(i) for i in idx):
            raise DataError(f"{where}: indices must be an array of integers")
        if not isinstance(val, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in val):
            raise DataError(f"{where}: values must be an array of numbers")
        try:
            vecs.append(SparseVector(obj["dim"], np.array(idx, dtype=np.int64), np.array(val, dtype=np.float64)))
        except VectorError as exc:
            raise DataError(f"{where}: {exc}") from exc
        ids.append(obj.get("id"))
    return vecs, ids


def write_sparse(path, vectors: Sequence[SparseVector], ids: Sequence | None = None) -> None:
    def rows():
        for i, v in enumerate(vectors):
            obj = {"dim": int(v.dim), "indices": v.indices.tolist(), "values": v.values.tolist()}
            if ids is not None:
                obj["id"] = ids[i]
            yield obj

    _write_lines(path, rows())


def read_sets(path) -> tuple[list[np.ndarray], list]:
    """Read ``{"id", "vectors"}`` records; every vector in the file shares one dimension."""
    sets, ids, dim = [], [], None
    seen = set()
    for lineno, obj in _lines(path):
        where = f"{path}:{lineno}"
        _require(obj, {"id", "vectors"}, set(), where)
        vs = obj["vectors"]
        if not isinstance(vs, list) or not vs or not all(isinstance(v, list) and v for v in vs):
            raise DataError(f"{where}: vectors must be a non-empty array of non-empty arrays")
        lens = {len(v) for v in vs}
        if len(lens) != 1:
            raise DataError(f"{where}: ragged inner dimensions {sorted(lens)}")
        m = lens.pop()
        if dim is None:
            dim = m
        elif m != dim:
            raise DataError(f"{where}: dimension {m} differs from earlier sets ({dim})")
        try:
            arr = np.array(vs, dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise DataError(f"{where}: vectors must hold numbers") from exc
        if not np.all(np.isfinite(arr)):
            raise DataError(f"{where}: non-finite values")
        key = json.dumps(obj["id"])
        if key in seen:
            raise DataError(f"{where}: duplicate id {obj['id']!r}")
        seen.add(key)
        sets.append(arr)
        ids.append(obj["id"])
    return sets, ids


def write_sets(path, sets: Sequence, ids: Sequence | None = None) -> None:
    ids = list(range(len(sets))) if ids is None else ids
    _write_lines(path, ({"id": i, "vectors": np.asarray(s).tolist()} for i, s in zip(ids, sets)))


def read_attrs(path) -> dict:
    """Map each id to its frozenset of attribute tokens."""
    out = {}
    for lineno, obj in _lines(path):
        where = f"{path}:{lineno}"
        _require(obj, {"id", "attrs"}, set(), where)
        attrs = obj["attrs"]
        if not isinstance(attrs, list) or not all(isinstance(a, str) and a for a in attrs):
            raise DataError(f"{where}: attrs must be an array of non-empty strings")
        key = obj["id"]
        if not isinstance(key, (int, str)) or isinstance(key, bool):
            raise DataError(f"{where}: id must be an integer or string")
        if key in out:
            raise DataError(f"{where}: duplicate id {key!r}")
        out[key] = frozenset(attrs)
    return out


def write_attrs(path, ids: Sequence, attrs: Sequence) -> None:
    _write_lines(path, ({"id": i, "attrs": sorted(a)} for i, a in zip(ids, attrs)))


def join_attrs(ids: Sequence, attrs: dict) -> list[frozenset]:
    """Attribute sets aligned with ``ids``; every id on either side must match."""
    id_set = set(ids)
    unknown = [k for k in attrs if k not in id_set]
    if unknown:
        raise DataError(f"attrs reference unknown id {unknown[0]!r}")
    missing = [i for i in ids if i not in attrs]
    if missing:
        raise DataError(f"no attrs record for id {missing[0]!r}")
    return [attrs[i] for i in ids]
