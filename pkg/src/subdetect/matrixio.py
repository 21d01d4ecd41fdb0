"""Matrix and graph files.

Matrix file: little-endian header (magic b"SMDX", p: uint32, t: int32 with
-1 for a real matrix, seed: uint64), then p*p row-major int64 mantissas or
float64 entries. Graph files: an edge list text format ("N [kappa]" header
with the planted labels on the second line when present, then "i j" per
edge) and a packed binary format (magic b"SMDG", N: uint32, kappa: uint32,
kappa uint32 labels, then the packed bit rows).
"""

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .model import QuantizedMatrix, as_array
from .plantedclique import AdjacencyMatrix

MATRIX_MAGIC = b"SMDX"
GRAPH_MAGIC = b"SMDG"
_MATRIX_HEADER = struct.Struct("<4sIiQ")
_GRAPH_HEADER = struct.Struct("<4sII")
REAL = -1


def write_matrix(path, X, seed=0):
    path = Path(path)
    if isinstance(X, QuantizedMatrix):
        header = _MATRIX_HEADER.pack(MATRIX_MAGIC, X.p, X.t, seed)
        body = X.mantissas.astype("<i8").tobytes()
    else:
        X = as_array(X)
        header = _MATRIX_HEADER.pack(MATRIX_MAGIC, X.shape[0], REAL, seed)
        body = X.astype("<f8").tobytes()
    with open(path, "wb") as f:
        f.write(header)
        f.write(body)


def read_matrix(path):
    """Returns (matrix, seed); the matrix is a QuantizedMatrix or a float array."""
    data = Path(path).read_bytes()
    if len(data) < _MATRIX_HEADER.size:
        raise FormatError(f"{path}: file too short for a matrix header")
    magic, p, t, seed = _MATRIX_HEADER.unpack_from(data)
    if magic != MATRIX_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    body = data[_MATRIX_HEADER.size:]
    if len(body) != 8 * p * p:
        raise FormatError(f"{path}: expected {8 * p * p} bytes of entries, got {len(body)}")
    if t == REAL:
        return np.frombuffer(body, dtype="<f8").reshape(p, p).astype(np.float64), seed
    if t < 0:
        raise FormatError(f"{path}: bad scale {t}")
    return QuantizedMatrix(t, np.frombuffer(body, dtype="<i8").reshape(p, p).astype(np.int64)), seed


def write_csv(path, X):
    if isinstance(X, QuantizedMatrix):
        np.savetxt(path, X.mantissas, fmt="%d", delimiter=",", header=f"mantissas at scale t={X.t}")
    else:
        np.savetxt(path, as_array(X), fmt="%.17g", delimiter=",")


def write_edge_list(path, A):
    dense = A.dense()
    i, j = np.nonzero(np.triu(dense, 1))
    with open(path, "w") as f:
        if not A.planted:
            f.write(f"{A.N}\n")
        else:
            f.write(f"{A.N} {len(A.planted)}\n")
            f.write(" ".join(str(v) for v in sorted(A.planted)) + "\n")
        for a, b in zip(i + 1, j + 1):
            f.write(f"{a} {b}\n")


def read_edge_list(path):
    with open(path, "r") as f:
        lines = [line.split() for line in f if line.strip() and not line.startswith("#")]
    if not lines:
        raise FormatError(f"{path}: empty graph file")
    try:
        header = [int(x) for x in lines[0]]
        N = header[0]
        planted = None
        body = lines[1:]
        if len(header) > 1:
            planted = [int(v) for v in lines[1]]
            if len(planted) != header[1]:
                raise FormatError(f"{path}: header announces {header[1]} planted vertices, found {len(planted)}")
            body = lines[2:]
        edges = np.array([[int(a), int(b)] for a, b in body], dtype=np.intp).reshape(-1, 2)
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from e
    if len(edges) and (edges.min() < 1 or edges.max() > N):
        raise FormatError(f"{path}: edge endpoints outside [1, {N}]")
    bits = np.zeros((N, N), dtype=bool)
    bits[edges[:, 0] - 1, edges[:, 1] - 1] = True
    bits |= bits.T
    return AdjacencyMatrix.from_dense(bits, planted)


def write_packed(path, A):
    planted = sorted(A.planted) if A.planted is not None else []
    with open(path, "wb") as f:
        f.write(_GRAPH_HEADER.pack(GRAPH_MAGIC, A.N, len(planted)))
        f.write(np.asarray(planted, dtype="<u4").tobytes())
        f.write(np.ascontiguousarray(A.rows).tobytes())


def read_packed(path):
    data = Path(path).read_bytes()
    magic, N, kappa = _GRAPH_HEADER.unpack_from(data)
    if magic != GRAPH_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    offset = _GRAPH_HEADER.size
    planted = np.frombuffer(data, dtype="<u4", count=kappa, offset=offset)
    offset += 4 * kappa
    width = (N + 7) // 8
    if len(data) - offset != N * width:
        raise FormatError(f"{path}: expected {N * width} bytes of rows, got {len(data) - offset}")
    rows = np.frombuffer(data, dtype=np.uint8, offset=offset).reshape(N, width)
    bits = np.unpackbits(rows, axis=1, count=N)
    return AdjacencyMatrix.from_dense(bits, [int(v) for v in planted] if kappa else None)


def read_graph(path):
    path = Path(path)
    with open(path, "rb") as f:
        magic = f.read(4)
    return read_packed(path) if magic == GRAPH_MAGIC else read_edge_list(path)


def write_graph(path, A):
    path = Path(path)
    if path.suffix in (".bin", ".smdg"):
        write_packed(path, A)
    else:
        write_edge_list(path, A)
