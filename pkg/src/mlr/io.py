"""File formats.

``MLR1`` binary layout (little endian)::

    b"MLR1"  u32 L  u32 p_0..p_{L-1}
    per level: u64 row block sizes, then u64 column block sizes
    u64 r_0..r_{L-1}   u8 kind (0 general, 1 symmetric, 2 psd)
    u32 row_perm[m]  u32 col_perm[n]
    per level, per block: B_{l,k} then C_{l,k} as column-major f64
    symmetric kinds: per level, per block f64 signs[r_l]

``DMAT`` dense matrix: b"DMAT", u64 m, u64 n, row-major f64.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .core import HierPartition, MlrMatrix, validate

KIND_CODES = {"general": 0, "symmetric": 1, "psd": 2}
CODE_KINDS = {v: k for k, v in KIND_CODES.items()}


def write_mlr(path, mlr: MlrMatrix) -> None:
    validate(mlr)
    part = mlr.partition
    L = mlr.num_levels
    out = [b"MLR1", struct.pack("<I", L)]
    out.append(np.asarray([part.num_blocks(l) for l in range(L)], dtype="<u4").tobytes())
    for l in range(L):
        out.append(np.asarray(part.row_blocks[l], dtype="<u8").tobytes())
        out.append(np.asarray(part.col_blocks[l], dtype="<u8").tobytes())
    out.append(np.asarray(mlr.ranks, dtype="<u8").tobytes())
    out.append(struct.pack("<B", KIND_CODES[mlr.kind]))
    out.append(part.row_perm.astype("<u4").tobytes())
    out.append(part.col_perm.astype("<u4").tobytes())
    for l in range(L):
        cs = mlr.level_slice(l)
        for _, rs, cl in part.blocks(l):
            out.append(np.asarray(mlr.B[rs, cs], dtype="<f8").tobytes(order="F"))
            out.append(np.asarray(mlr.C[cl, cs], dtype="<f8").tobytes(order="F"))
    if mlr.signs is not None:
        for s in mlr.signs:
            out.append(np.asarray(s, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(out))


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, dtype, count):
        dt = np.dtype(dtype)
        end = self.pos + dt.itemsize * count
        if end > len(self.data):
            raise ValueError("truncated file")
        arr = np.frombuffer(self.data, dtype=dt, count=count, offset=self.pos)
        self.pos = end
        return arr


def read_mlr(path) -> MlrMatrix:
    rd = _Reader(Path(path).read_bytes())
    if rd.take("S4", 1)[0] != b"MLR1":
        raise ValueError("not an MLR1 file")
    L = int(rd.take("<u4", 1)[0])
    p = rd.take("<u4", L).astype(int)
    rows, cols = [], []
    for l in range(L):
        rows.append(rd.take("<u8", p[l]).astype(int).tolist())
        cols.append(rd.take("<u8", p[l]).astype(int).tolist())
    ranks = rd.take("<u8", L).astype(np.int64)
    kind = CODE_KINDS[int(rd.take("u1", 1)[0])]
    m, n = sum(rows[0]), sum(cols[0])
    row_perm = rd.take("<u4", m).astype(np.int64)
    col_perm = rd.take("<u4", n).astype(np.int64)
    part = HierPartition(rows, cols, row_perm, col_perm)
    mlr = MlrMatrix.zeros(part, ranks, kind)
    for l in range(L):
        cs = mlr.level_slice(l)
        r = int(ranks[l])
        for _, rs, cl in part.blocks(l):
            mk, nk = rs.stop - rs.start, cl.stop - cl.start
            mlr.B[rs, cs] = rd.take("<f8", mk * r).reshape((mk, r), order="F")
            mlr.C[cl, cs] = rd.take("<f8", nk * r).reshape((nk, r), order="F")
    if mlr.signs is not None:
        for l in range(L):
            mlr.signs[l][:] = rd.take("<f8", mlr.signs[l].size).reshape(mlr.signs[l].shape)
    validate(mlr)
    return mlr


def mlr_to_json(mlr: MlrMatrix) -> dict:
    """JSON-compatible mirror of the binary format (factors as nested lists)."""
    d = mlr.partition.to_dict()
    d.update(kind=mlr.kind, ranks=[int(r) for r in mlr.ranks],
             B=mlr.B.tolist(), C=mlr.C.tolist())
    if mlr.signs is not None:
        d["signs"] = [s.tolist() for s in mlr.signs]
    return d


def mlr_from_json(d: dict) -> MlrMatrix:
    part = HierPartition.from_dict(d)
    signs = [np.asarray(s, dtype=np.float64) for s in d["signs"]] if "signs" in d else None
    mlr = MlrMatrix(part, np.asarray(d["ranks"], dtype=np.int64),
                    np.asarray(d["B"], dtype=np.float64).reshape(part.shape[0], -1),
                    np.asarray(d["C"], dtype=np.float64).reshape(part.shape[1], -1),
                    d.get("kind", "general"), signs)
    validate(mlr)
    return mlr


def write_dmat(path, A) -> None:
    A = np.ascontiguousarray(A, dtype="<f8")
    if A.ndim != 2:
        raise ValueError("DMAT holds a matrix")
    Path(path).write_bytes(b"DMAT" + struct.pack("<QQ", *A.shape) + A.tobytes())


def read_dmat(path) -> np.ndarray:
    rd = _Reader(Path(path).read_bytes())
    if rd.take("S4", 1)[0] != b"DMAT":
        raise ValueError("not a DMAT file")
    m, n = (int(x) for x in rd.take("<u8", 2))
    return rd.take("<f8", m * n).reshape(m, n).astype(np.float64)


def write_csv(path, A) -> None:
    np.savetxt(path, np.asarray(A, dtype=np.float64), delimiter=",", fmt="%.17g")


def read_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


def load_matrix(path) -> np.ndarray:
    """Read a DMAT, ``.npy`` or CSV file (chosen by magic bytes, then extension)."""
    path = Path(path)
    with path.open("rb") as fh:
        magic = fh.read(4)
    if magic == b"DMAT":
        return read_dmat(path)
    if path.suffix == ".npy":
        return np.load(path)
    return read_csv(path)


def save_matrix(path, A) -> None:
    path = Path(path)
    if path.suffix == ".csv":
        write_csv(path, A)
    elif path.suffix == ".npy":
        np.save(path, A)
    else:
        write_dmat(path, A)


def write_partition(path, part: HierPartition) -> None:
    Path(path).write_text(json.dumps(part.to_dict()))


def read_partition(path) -> HierPartition:
    return HierPartition.from_dict(json.loads(Path(path).read_text()))
