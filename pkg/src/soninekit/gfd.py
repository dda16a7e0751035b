"""Generalized fractional derivative and integral for singular kernels.

For a singular LICM kernel ``F`` with Sonine associate ``G`` (``F * G = I``)

    D_F w = F * Dw,        J_F v = G * v,

with ``J_F D_F w = w - w(0)`` and ``D_F J_F v = v``. Both operators use
the product-integration weights ``W`` of ``F`` on the grid; ``J_F v`` is
obtained by marching ``W u = C v`` where ``C`` is the cumulative
rectangle integral, which equals ``G * v`` because ``F * (G * v) = 1 * v``.
No sampling of the singular density ``G`` is needed.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError, HypothesisViolation, NonContractionError
from .kernels import MatrixKernel, is_singular
from .quadconv import ProductWeights, SampledMatrixFunction, TimeGrid, default_grid
from .resolvent import COND_MAX, forward_solve

PICARD_TOL = 1e-10
PICARD_MAX_ITER = 50
PICARD_GROWTH_LIMIT = 5
PICARD_DAMPING = 0.5


@dataclass
class VectorPath:
    """Samples ``w(t_i)`` of a path in ``R^N``, node 0 included.

    ``derivative`` optionally holds samples of ``Dw``; a NaN row in
    ``values`` means the value is not defined at that node.
    """

    grid: TimeGrid
    values: np.ndarray
    derivative: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != self.grid.n + 1:
            raise DomainError("one sample per grid node is required")
        self.values = v
        if self.derivative is not None:
            d = np.asarray(self.derivative, dtype=float).reshape(v.shape)
            self.derivative = d

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def v0(self) -> np.ndarray:
        return self.values[0]

    @classmethod
    def from_function(cls, grid: TimeGrid, fn: Callable, derivative: Callable | None = None):
        """Sample ``fn(t)`` (and optionally its derivative) on ``grid``."""
        t = grid.nodes
        d = None if derivative is None else np.asarray(derivative(t), dtype=float)
        return cls(grid, np.asarray(fn(t), dtype=float), d)


def _require_singular(f: MatrixKernel) -> None:
    if not isinstance(f, MatrixKernel):
        raise DomainError("a closed-form MatrixKernel is required")
    if not is_singular(f):
        raise HypothesisViolation(
            "the kernel is bounded at 0 in some direction; the F-derivative and "
            "F-integral need a singular kernel. For a bounded kernel the inverse "
            "carries an atom at t = 0: solve with resolvent.solve_sonine and add "
            "the atom term explicitly."
        )


def _cell_derivative(w: VectorPath) -> np.ndarray:
    """Cell values of ``Dw``: the average of the two endpoint samples when
    derivative samples are supplied (right node only if the left one is not
    finite), else ``(w_j - w_{j-1}) / h_j``, the exact cell mean of ``Dw``."""
    if w.derivative is not None:
        d = w.derivative.copy()
        left = np.where(np.isfinite(d[:-1]), d[:-1], d[1:])
        d[1:] = 0.5 * (left + d[1:])
    else:
        d = np.zeros_like(w.values)
        d[1:] = np.diff(w.values, axis=0) / w.grid.steps[:, None]
    d[0] = 0.0
    return d


def gfd_derivative(f: MatrixKernel, w: VectorPath, weights: ProductWeights | None = None) -> VectorPath:
    """``D_F w = F * Dw`` at nodes ``t_i >= t_1``; node 0 is left undefined."""
    _require_singular(f)
    if f.dim != w.dim:
        raise DomainError("kernel and path dimensions differ")
    weights = weights if weights is not None else ProductWeights(f, w.grid)
    out = weights.apply(_cell_derivative(w))
    out[0] = np.nan
    return VectorPath(w.grid, out)


def gfd_integral(f: MatrixKernel, v: VectorPath, weights: ProductWeights | None = None) -> VectorPath:
    """``J_F v = G * v`` with ``(J_F v)(0) = 0``."""
    _require_singular(f)
    if f.dim != v.dim:
        raise DomainError("kernel and path dimensions differ")
    weights = weights if weights is not None else ProductWeights(f, v.grid)
    vals = np.where(np.isnan(v.values), 0.0, v.values)
    cum = np.zeros_like(vals)
    cum[1:] = np.cumsum(v.grid.steps[:, None] * vals[1:], axis=0)
    u, _ = forward_solve(np.zeros((f.dim, f.dim)), weights, cum, COND_MAX)
    u[0] = 0.0
    return VectorPath(v.grid, u)


@dataclass
class RelaxationProblem:
    """``D_F Sigma = K(Sigma, E)``, i.e. ``Sigma = Sigma(0) + G * K(Sigma, E)``.

    Parameters
    ----------
    f : MatrixKernel
        Singular LICM kernel of dimension ``N``.
    rhs : callable
        ``K(sigma, e) -> array`` with the shape of ``sigma0``.
    sigma0 : array
        Initial state, a vector of length ``N``; when ``N = 6`` a symmetric
        3x3 matrix is also accepted and handled through its Mandel vector.
    strain : array or callable, optional
        ``E(t_i)`` per node (first axis) or a function of ``t``.
    """

    f: MatrixKernel
    rhs: Callable
    sigma0: np.ndarray
    strain: object = None
    grid: TimeGrid | None = None

    def __post_init__(self):
        if self.grid is None:
            self.grid = default_grid()
        self.sigma0 = np.asarray(self.sigma0, dtype=float)

    def strain_at(self, i: int):
        if self.strain is None:
            return None
        if callable(self.strain):
            return self.strain(self.grid.nodes[i])
        return np.asarray(self.strain)[i]


@dataclass
class RelaxationPath(SampledMatrixFunction):
    """Solution samples plus the Picard iteration count of every node."""

    iterations: np.ndarray | None = None


def _state_codec(p: RelaxationProblem):
    shape = p.sigma0.shape
    n = p.f.dim
    if p.sigma0.size == n:
        return (lambda s: s.reshape(n)), (lambda x: x.reshape(shape))
    if shape == (3, 3) and n == 6:
        from .viscoelastic import mandel_matrix, mandel_vector
        return mandel_vector, mandel_matrix
    raise DomainError(f"state of shape {shape} does not match kernel dimension {n}")


def solve_relaxation(p: RelaxationProblem, tol: float = PICARD_TOL,
                     max_iter: int = PICARD_MAX_ITER) -> RelaxationPath:
    """March ``W (Sigma - Sigma0) = C K(Sigma, E)`` node by node.

    At node ``i`` the implicit relation

        W_ii (S_i - S_0) = h_i K(S_i, E_i) + sum_{j<i} [h_j K_j - W_ij (S_j - S_0)]

    is solved by Picard iteration from ``S_{i-1}``. The update is damped by
    0.5 once the residual fails to decrease, and the march aborts when the
    residual grows for 5 consecutive iterations or does not reach ``tol``
    (relative to ``max(1, |S_i|)``) within ``max_iter`` iterations.
    """
    _require_singular(p.f)
    encode, decode = _state_codec(p)
    grid = p.grid
    n, dim = grid.n, p.f.dim
    weights = ProductWeights(p.f, grid)
    h = grid.steps
    s0 = encode(p.sigma0)
    dev = np.zeros((n + 1, dim))
    kvals = np.zeros((n + 1, dim))
    iters = np.zeros(n + 1, dtype=int)
    hist_k = np.zeros(dim)

    def k_of(x, i):
        return encode(np.asarray(p.rhs(decode(s0 + x), p.strain_at(i)), dtype=float))

    kvals[0] = k_of(dev[0], 0)
    for i in range(1, n + 1):
        wii = weights.diagonal(i)
        base = hist_k - weights.history(i, dev)
        x = dev[i - 1].copy()
        omega = 1.0
        prev = np.inf
        growth = 0
        for it in range(1, max_iter + 1):
            kx = k_of(x, i)
            target = np.linalg.solve(wii, base + h[i - 1] * kx)
            step = target - x
            res = float(np.max(np.abs(step)))
            if res > prev:
                omega = PICARD_DAMPING
                growth += 1
                if growth >= PICARD_GROWTH_LIMIT:
                    raise NonContractionError(
                        f"Picard residual grew for {growth} iterations at t={grid.nodes[i]:.6g}; "
                        "K is not Lipschitz enough for this step size, refine the grid"
                    )
            else:
                growth = 0
            prev = res
            x = x + omega * step
            if res <= tol * max(1.0, float(np.max(np.abs(s0 + x)))):
                break
        else:
            raise NonContractionError(
                f"Picard iteration did not converge in {max_iter} steps at t={grid.nodes[i]:.6g}"
            )
        dev[i] = x
        kvals[i] = k_of(x, i)
        iters[i] = it
        hist_k = hist_k + h[i - 1] * kvals[i]
    states = np.stack([decode(s0 + x) for x in dev])
    return RelaxationPath(grid, states, iterations=iters)
