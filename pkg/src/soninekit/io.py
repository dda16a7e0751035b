"""CSV and JSON formats shared by the command-line tools.

Sampled functions are written as CSV with header ``t,m11,m12,...``: the
upper triangle of each symmetric matrix in row-major order, or
``t,v1,...,vN`` for vector paths. Floats use ``repr`` (shortest decimal
that round-trips). Nodes without a value, such as ``t = 0`` for a
function singular there, are omitted and restored as NaN on reading.
"""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .errors import DomainError
from .kernels import MatrixKernel
from .quadconv import SampledMatrixFunction, TimeGrid, make_grid


def matrix_header(dim: int) -> list[str]:
    return ["t"] + [f"m{i + 1}{j + 1}" for i in range(dim) for j in range(i, dim)]


def vector_header(dim: int) -> list[str]:
    return ["t"] + [f"v{i + 1}" for i in range(dim)]


def _fmt(x: float) -> str:
    return repr(float(x))


def samples_to_csv(nodes: np.ndarray, values: np.ndarray) -> str:
    """CSV text for matrix samples ``(n+1, d, d)`` or vectors ``(n+1, d)``."""
    values = np.asarray(values, dtype=float)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if values.ndim == 3:
        d = values.shape[1]
        iu = np.triu_indices(d)
        w.writerow(matrix_header(d))
        rows = values[:, iu[0], iu[1]]
    else:
        w.writerow(vector_header(values.shape[1]))
        rows = values
    for t, row in zip(nodes, rows):
        if np.isnan(row).any():
            continue
        w.writerow([_fmt(t)] + [_fmt(x) for x in row])
    return buf.getvalue()


def infer_grid(nodes: np.ndarray) -> TimeGrid:
    """Rebuild a graded grid from its nodes when they follow ``t_end (i/n)^gamma``."""
    nodes = np.asarray(nodes, dtype=float)
    n = nodes.size - 1
    if n >= 2 and nodes[0] == 0.0 and nodes[1] > 0:
        gamma = float(np.log(nodes[1] / nodes[-1]) / np.log(1.0 / n))
        for g in (round(gamma, 6), gamma):
            if g >= 1:
                cand = make_grid(float(nodes[-1]), n, g)
                if np.allclose(cand.nodes, nodes, rtol=1e-12, atol=0.0):
                    return cand
    return TimeGrid(nodes)


def read_csv_samples(text: str):
    """Parse CSV text; returns ``(grid, values, singular)``.

    Matrix files are detected from the ``m`` column names. A missing
    ``t = 0`` row is restored as NaN and flags the function as singular.
    """
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DomainError("empty CSV file") from None
    if not header or header[0] != "t":
        raise DomainError("CSV header must start with 't'")
    try:
        rows = np.array([[float(x) for x in r] for r in reader if r], dtype=float)
    except ValueError as exc:
        raise DomainError(f"non-numeric CSV entry: {exc}") from None
    if rows.ndim != 2 or rows.shape[1] != len(header):
        raise DomainError("CSV rows do not match the header")
    t, data = rows[:, 0], rows[:, 1:]
    singular = t[0] != 0.0
    if singular:
        t = np.concatenate([[0.0], t])
        data = np.vstack([np.full((1, data.shape[1]), np.nan), data])
    if header[1].startswith("m"):
        m = data.shape[1]
        d = int(round((np.sqrt(8 * m + 1) - 1) / 2))
        if d * (d + 1) // 2 != m or header != matrix_header(d):
            raise DomainError("matrix CSV header must be t,m11,m12,... (upper triangle)")
        values = np.zeros((t.size, d, d))
        iu = np.triu_indices(d)
        values[:, iu[0], iu[1]] = data
        values[:, iu[1], iu[0]] = data
    else:
        values = data
    return infer_grid(t), values, bool(singular)


def read_sampled_function(path) -> SampledMatrixFunction:
    grid, values, singular = read_csv_samples(read_text(path))
    return SampledMatrixFunction(grid, values, singular)


def read_text(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror or exc}") from None


def read_json(path):
    try:
        return json.loads(read_text(path))
    except json.JSONDecodeError as exc:
        raise DomainError(f"{path}: invalid JSON ({exc})") from None


def read_kernel(path) -> MatrixKernel:
    return MatrixKernel.from_dict(read_json(path))


def parse_matrix(data, dim: int | None = None) -> np.ndarray:
    """Matrix from a bare nested list, ``{"matrix": ...}``, a scalar multiple
    of the identity (``{"scalar": c}``, needs ``dim``) or
    ``{"tensor21": [...]}`` (21 rank-4 constants, upper-triangle order)."""
    from .viscoelastic import from_tensor21

    if isinstance(data, dict):
        if "tensor21" in data:
            return from_tensor21(data["tensor21"])
        if "matrix" in data:
            data = data["matrix"]
        elif "scalar" in data:
            if dim is None:
                raise DomainError("a scalar matrix needs a dimension")
            return float(data["scalar"]) * np.eye(dim)
        else:
            raise DomainError("matrix JSON needs 'matrix', 'scalar' or 'tensor21'")
    try:
        m = np.asarray(data, dtype=float)
    except (TypeError, ValueError):
        raise DomainError("matrix entries must be numbers") from None
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DomainError("expected a square matrix")
    if dim is not None and m.shape[0] != dim:
        raise DomainError(f"expected a {dim}x{dim} matrix, got {m.shape[0]}x{m.shape[0]}")
    return m


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"
