"""On-disk formats for problem instances.

Instance directory layout::

    meta.txt          key = value lines (kind, reg, c, optional extras)
    <name>.bin        dense matrix: one ASCII header line "rows cols f64"
                      followed by little-endian values, row major
    <name>.indptr.bin / <name>.indices.bin / <name>.data.bin
                      CSR triple for sparse matrices (headers i64/i64/f64)

Vectors are stored as single-column matrices.  The same module holds the
LIBSVM text reader/writer used for logistic datasets.
"""

from __future__ import annotations

import os
from typing import Dict, Tuple

import numpy as np
import scipy.sparse as sp

from .errors import ParseError

_DTYPES = {"f64": np.dtype("<f8"), "i64": np.dtype("<i8")}


def write_array(path, arr) -> None:
    arr = np.asarray(arr)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)  # vectors are single-column matrices
    if arr.dtype.kind in "iu":
        tag, dtype = "i64", _DTYPES["i64"]
    else:
        tag, dtype = "f64", _DTYPES["f64"]
    with open(path, "wb") as fh:
        fh.write(f"{arr.shape[0]} {arr.shape[1]} {tag}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(arr, dtype=dtype).tobytes())


def read_array(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        if len(header) != 3 or header[2] not in _DTYPES:
            raise ParseError(f"bad array header in {path}: {header}")
        rows, cols = int(header[0]), int(header[1])
        data = np.frombuffer(fh.read(), dtype=_DTYPES[header[2]])
    if data.size != rows * cols:
        raise ParseError(f"{path}: expected {rows * cols} values, got {data.size}")
    out = data.reshape(rows, cols)
    return out[:, 0].copy() if cols == 1 else out.copy()


def write_csr(path_prefix, mat) -> None:
    mat = sp.csr_matrix(mat)
    write_array(path_prefix + ".indptr.bin", mat.indptr.astype(np.int64))
    write_array(path_prefix + ".indices.bin", mat.indices.astype(np.int64))
    write_array(path_prefix + ".data.bin", mat.data.astype(float))


def read_csr(path_prefix, shape) -> sp.csr_matrix:
    indptr = np.asarray(read_array(path_prefix + ".indptr.bin"), dtype=np.int64)
    indices = np.asarray(read_array(path_prefix + ".indices.bin"), dtype=np.int64)
    data = np.asarray(read_array(path_prefix + ".data.bin"), dtype=float)
    return sp.csr_matrix((data, indices, indptr), shape=shape)


def write_meta(path, meta: Dict[str, str]) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for key, val in meta.items():
            fh.write(f"{key} = {val}\n")


def read_meta(path) -> Dict[str, str]:
    meta = {}
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParseError(f"expected 'key = value' in {path}", line=lineno)
            key, _, val = line.partition("=")
            meta[key.strip()] = val.strip()
    return meta


def write_instance_dir(path, meta: Dict[str, str], mats: Dict[str, object]) -> None:
    os.makedirs(path, exist_ok=True)
    meta = dict(meta)
    for name, mat in mats.items():
        if sp.issparse(mat):
            mat = sp.csr_matrix(mat)
            write_csr(os.path.join(path, name), mat)
            meta[f"{name}.storage"] = "csr"
            meta[f"{name}.shape"] = f"{mat.shape[0]} {mat.shape[1]}"
        else:
            write_array(os.path.join(path, name + ".bin"), mat)
            meta[f"{name}.storage"] = "dense"
    write_meta(os.path.join(path, "meta.txt"), meta)


def read_instance_dir(path) -> Tuple[Dict[str, str], Dict[str, object]]:
    meta = read_meta(os.path.join(path, "meta.txt"))
    mats = {}
    for key, val in meta.items():
        if not key.endswith(".storage"):
            continue
        name = key[: -len(".storage")]
        if val == "csr":
            rows, cols = (int(t) for t in meta[f"{name}.shape"].split())
            mats[name] = read_csr(os.path.join(path, name), (rows, cols))
        else:
            mats[name] = read_array(os.path.join(path, name + ".bin"))
    return meta, mats


# ---------------------------------------------------------------------------
# LIBSVM text format


def parse_libsvm_text(path):
    """Parse ``label idx:val ...`` lines (1-based indices).

    Returns ``(labels, data, indices, indptr, n)`` with 0-based CSR
    arrays.  Labels 0/1 are mapped to -1/+1; anything outside
    {-1, 0, +1} is rejected.  Malformed lines raise :class:`ParseError`
    with their line number.
    """
    labels = []
    data, indices, indptr = [], [], [0]
    n = 0
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            fields = line.split()
            try:
                raw = float(fields[0])
            except ValueError as exc:
                raise ParseError(f"bad label {fields[0]!r}", line=lineno) from exc
            if raw in (1.0, -1.0):
                labels.append(raw)
            elif raw == 0.0:
                labels.append(-1.0)
            else:
                raise ParseError(f"label {raw} not in {{-1, 0, +1}}", line=lineno)
            for tok in fields[1:]:
                idx, colon, val = tok.partition(":")
                if not colon:
                    raise ParseError(f"expected idx:val, got {tok!r}", line=lineno)
                try:
                    j = int(idx)
                    v = float(val)
                except ValueError as exc:
                    raise ParseError(f"bad feature {tok!r}", line=lineno) from exc
                if j < 1:
                    raise ParseError(f"index {j} must be >= 1", line=lineno)
                indices.append(j - 1)
                data.append(v)
                n = max(n, j)
            indptr.append(len(data))
    return (
        np.asarray(labels),
        np.asarray(data, dtype=float),
        np.asarray(indices, dtype=np.int64),
        np.asarray(indptr, dtype=np.int64),
        n,
    )


def dump_libsvm_text(path, Y, labels) -> None:
    """Write rows of ``Y`` with their labels; zeros are skipped and values
    use full float precision so a read/write round trip is exact."""
    Y = sp.csr_matrix(Y)
    with open(path, "w", encoding="ascii") as fh:
        for j, label in enumerate(labels):
            row = Y.getrow(j)
            feats = " ".join(
                "%d:%.17g" % (idx + 1, val)
                for idx, val in zip(row.indices, row.data)
                if val != 0.0
            )
            fh.write("%+d %s\n" % (int(label), feats) if feats else "%+d\n" % int(label))
