"""Finite-sample checks for complete monotonicity and related properties.

A function is completely monotone when ``(-1)^n f^(n) >= 0`` for all n.
From samples this can only be tested through necessary conditions: the
divided difference of order n over any n+1 points equals ``f^(n)(xi)/n!``
for some intermediate ``xi``, so its sign must alternate as well. Every
check here projects matrix functions onto probe vectors ``v`` and tests
the scalar ``v^T f v``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError
from .kernels import TOL_PSD, MatrixKernel
from .quadconv import SampledMatrixFunction, TimeGrid, convolve_pair, default_grid

PROBE_SEED = 0xC0FFEE
N_RANDOM_PROBES = 8
CM_TOL = 1e-9
PAIR_TOL = 1e-2
GEOMETRIC_RATIO = 1.25
DEFAULT_RANGE = (1e-2, 10.0)


@dataclass
class CheckReport:
    """Outcome of one property check.

    ``worst_violation`` is scale-normalized (see :func:`alternation`) for
    sign checks and an absolute max-norm for residual checks; ``passed``
    holds exactly when it does not exceed ``tolerance``.
    """

    name: str
    passed: bool
    worst_violation: float
    witness: dict = field(default_factory=dict)
    tolerance: float = CM_TOL

    def to_dict(self) -> dict:
        return asdict(self)


def reports_to_json(reports, **extra) -> str:
    return json.dumps({"checks": [r.to_dict() for r in reports], **extra}, indent=2)


def probe_vectors(dim: int, seed: int | None = None) -> np.ndarray:
    """Canonical basis plus seeded random unit vectors, as rows."""
    rng = np.random.default_rng(PROBE_SEED if seed is None else seed)
    rand = rng.standard_normal((N_RANDOM_PROBES, dim))
    rand /= np.linalg.norm(rand, axis=1, keepdims=True)
    return np.vstack([np.eye(dim), rand])


def geometric_points(lo: float, hi: float, ratio: float = GEOMETRIC_RATIO) -> np.ndarray:
    if not 0 < lo < hi:
        raise DomainError("check range must satisfy 0 < lo < hi")
    m = max(int(np.ceil(np.log(hi / lo) / np.log(ratio))), 1)
    return np.geomspace(lo, hi, m + 1)


def geometric_subset(nodes: np.ndarray, ratio: float = GEOMETRIC_RATIO) -> np.ndarray:
    """Indices of positive nodes spaced by at least ``ratio`` geometrically."""
    keep = []
    last = 0.0
    for i, t in enumerate(nodes):
        if t > 0 and (not keep or t >= last * ratio):
            keep.append(i)
            last = t
    return np.asarray(keep)


def alternation(x: np.ndarray, f: np.ndarray, max_order: int, first_sign: int = 0,
                min_order: int = 0):
    """Worst scale-normalized violation of ``(-1)^(n+first_sign) D_n >= 0``.

    ``D_n`` are divided differences over consecutive stencils of ``x``.
    Each is compared with ``scale = sum_k |f_k| / prod_{j!=k} |x_k - x_j|``,
    the size of its terms, so rounding noise stays near machine precision.
    Returns ``(violation, order, location)``; violation 0 means none found.
    """
    x = np.asarray(x, dtype=float)
    f = np.asarray(f, dtype=float)
    worst = (0.0, -1, float("nan"))
    table = f.copy()
    for n in range(0, max_order + 1):
        if n > 0:
            if table.size < 2:
                break
            table = (table[1:] - table[:-1]) / (x[n:] - x[:-n])
        if n < min_order:
            continue
        m = table.size
        scale = np.zeros(m)
        for k in range(n + 1):
            denom = np.ones(m)
            for j in range(n + 1):
                if j != k:
                    denom *= np.abs(x[k:k + m] - x[j:j + m])
            scale += np.abs(f[k:k + m]) / denom
        sign = (-1) ** (n + first_sign)
        with np.errstate(invalid="ignore", divide="ignore"):
            viol = np.where(scale > 0, -sign * table / scale, 0.0)
        i = int(np.argmax(viol))
        if viol[i] > worst[0]:
            worst = (float(viol[i]), n, float(np.mean(x[i:i + n + 1])))
    return worst


def _quadratic_forms(values: np.ndarray, probes: np.ndarray) -> np.ndarray:
    """``v^T M v`` for every probe row ``v``; shape ``(probes, samples)``."""
    if values.ndim == 2:
        values = values[:, :, None]
    return np.einsum("pa,iab,pb->pi", probes, values, probes)


def _check_points(grid) -> np.ndarray:
    if grid is None:
        return geometric_points(*DEFAULT_RANGE)
    if isinstance(grid, TimeGrid):
        return grid.nodes[geometric_subset(grid.nodes)]
    lo, hi = grid
    return geometric_points(float(lo), float(hi))


def check_cm(f, grid=None, max_order: int = 4, tol: float = CM_TOL,
             seed: int | None = None) -> CheckReport:
    """Necessary-condition test of complete monotonicity.

    Parameters
    ----------
    f : MatrixKernel or SampledMatrixFunction
        Closed-form kernels are sampled on geometric points spanning
        ``grid`` (a ``(lo, hi)`` pair or a :class:`TimeGrid`); samples are
        thinned to a geometric subset of their own nodes.
    max_order : int
        Highest divided-difference order, at most 6.

    Notes
    -----
    For closed-form input an order-0 failure is refined by root finding,
    so the witness is the sign change of ``v^T f(t) v``.
    """
    if not 0 <= max_order <= 6:
        raise DomainError("max_order must lie in 0..6")
    if isinstance(f, SampledMatrixFunction):
        idx = geometric_subset(f.grid.nodes)
        x = f.grid.nodes[idx]
        values = f.values[idx]
        evaluate = None
    else:
        x = _check_points(grid)
        values = f(x)
        evaluate = f
    probes = probe_vectors(f.dim, seed)
    forms = _quadratic_forms(values, probes)
    worst = CheckReport("cm", True, 0.0, {}, tol)
    for p, row in enumerate(forms):
        viol, order, loc = alternation(x, row, max_order)
        if viol > worst.worst_violation:
            witness = {"t": loc, "order": order, "vector": probes[p].tolist()}
            if order == 0 and evaluate is not None:
                witness["t"] = _sign_change(evaluate, probes[p], x, row)
            worst = CheckReport("cm", viol <= tol, viol, witness, tol)
    return worst


def _sign_change(k, v: np.ndarray, x: np.ndarray, row: np.ndarray) -> float:
    neg = np.flatnonzero(row < 0)
    i = int(neg[0])
    if i == 0:
        return float(x[0])

    def form(t):
        m = k(np.array([t]))[0]
        return float(v @ m @ v) if m.ndim == 2 else float(m)

    return float(brentq(form, x[i - 1], x[i], xtol=1e-12))


def check_psd_samples(values: np.ndarray, tol: float = TOL_PSD):
    """Most negative eigenvalue relative to the largest magnitude."""
    finite = np.flatnonzero(~np.isnan(values).any(axis=tuple(range(1, values.ndim))))
    vals = values[finite]
    if vals.ndim == 2:
        vals = vals[:, :, None]
    eig = np.linalg.eigvalsh(0.5 * (vals + np.swapaxes(vals, 1, 2)))
    scale = max(float(np.max(np.abs(eig))), 1e-300)
    i = int(np.argmin(eig.min(axis=1)))
    return max(0.0, -float(eig[i].min()) / scale), int(finite[i])


def check_bernstein(b, grid=None, max_order: int = 4, tol: float = CM_TOL,
                    seed: int | None = None) -> CheckReport:
    """Necessary-condition test of the Bernstein property.

    ``b`` must be PSD at every node and its first differences must pass
    the complete-monotonicity test. Divided differences of ``b`` of order
    ``n >= 1`` are checked for sign ``(-1)^(n-1)`` up to order
    ``max_order + 1``; the reported order refers to the differences.

    ``b`` is a :class:`SampledMatrixFunction` (node 0 included when
    known), a :class:`BernsteinFn` or any callable of ``t``, the latter
    sampled on ``grid`` (default: the default time grid).
    """
    if isinstance(b, SampledMatrixFunction):
        nodes, values = b.grid.nodes, b.values
    else:
        g = grid if isinstance(grid, TimeGrid) else default_grid()
        nodes = g.nodes
        values = np.asarray(b(nodes), dtype=float)
        if values.ndim == 1:
            values = values[:, None, None]
    psd, at = check_psd_samples(values)
    if psd > TOL_PSD:
        return CheckReport("bernstein", False, psd,
                           {"t": float(nodes[at]), "order": 0, "vector": None}, tol)
    keep = geometric_subset(nodes)
    if not np.isnan(values[0]).any():
        keep = np.concatenate([[0], keep])
    x, vals = nodes[keep], values[keep]
    probes = probe_vectors(vals.shape[1], seed)
    forms = _quadratic_forms(vals, probes)
    worst = CheckReport("bernstein", True, 0.0, {}, tol)
    for p, row in enumerate(forms):
        viol, order, loc = alternation(x, row, max_order + 1, first_sign=1, min_order=1)
        if viol > worst.worst_violation:
            # order n of b is order n-1 of its first differences
            witness = {"t": loc, "order": order - 1, "vector": probes[p].tolist()}
            worst = CheckReport("bernstein", viol <= tol, viol, witness, tol)
    return worst


def check_sonine_pair(k: MatrixKernel, l: MatrixKernel, grid: TimeGrid | None = None,
                      tol: float = PAIR_TOL) -> CheckReport:
    """Max node residual ``||(k * l)(t_i) - I||_inf`` over ``t_i > 0``."""
    if k.dim != l.dim:
        raise DomainError("kernel dimensions differ")
    g = grid if grid is not None else default_grid()
    t = g.nodes[1:]
    res = np.max(np.abs(convolve_pair(k, l, t) - np.eye(k.dim)), axis=(1, 2))
    i = int(np.argmax(res))
    return CheckReport("sonine_pair", bool(res[i] <= tol), float(res[i]), {"t": float(t[i])}, tol)
