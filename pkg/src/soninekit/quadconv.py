"""Graded time grids and product-integration convolution quadrature.

Convolutions ``(k * g)(t_i) = int_0^{t_i} k(t_i - s) g(s) ds`` are
discretized with ``g`` piecewise constant on each cell ``(t_{j-1}, t_j]``
(right-node value) and exact kernel moments

    W_ij = A(t_i - t_{j-1}) - A(t_i - t_j),    A(t) = int_0^t k,

so weakly singular kernels are integrated exactly over every cell. The
matrix order ``k(t - s) g(s)`` is preserved throughout.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import Akima1DInterpolator, CubicSpline, PchipInterpolator

from .errors import DomainError
from .kernels import MatrixKernel, as_symmetric


@dataclass(frozen=True)
class TimeGrid:
    """Nodes ``t_i = t_end (i/n)^gamma``, ``i = 0..n``."""

    nodes: np.ndarray
    gamma: float | None = None

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 3 or nodes[0] != 0.0:
            raise DomainError("grid needs at least 3 nodes starting at 0")
        if np.any(np.diff(nodes) <= 0):
            raise DomainError("grid nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def n(self) -> int:
        return self.nodes.size - 1

    @property
    def t_end(self) -> float:
        return float(self.nodes[-1])

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.nodes)

    def refine(self) -> "TimeGrid":
        """Grid with twice as many cells; keeps every node of ``self``."""
        if self.gamma is None:
            raise DomainError("only graded grids can be refined")
        return make_grid(self.t_end, 2 * self.n, self.gamma)

    def __eq__(self, other):
        return isinstance(other, TimeGrid) and np.array_equal(self.nodes, other.nodes)

    def __hash__(self):
        return hash(self.nodes.tobytes())


def make_grid(t_end: float, n: int, gamma: float = 2.0) -> TimeGrid:
    """Graded grid on ``[0, t_end]``; ``gamma = 1`` is uniform."""
    if not t_end > 0 or int(n) != n or n < 2 or not gamma >= 1:
        raise DomainError(f"invalid grid parameters t_end={t_end}, n={n}, gamma={gamma}")
    i = np.arange(int(n) + 1)
    nodes = t_end * (i / n) ** gamma
    nodes[-1] = t_end
    return TimeGrid(nodes, float(gamma))


DEFAULT_GRID = dict(t_end=1.0, n=512, gamma=2.0)


def default_grid(t_end: float = 1.0) -> TimeGrid:
    return make_grid(t_end, DEFAULT_GRID["n"], DEFAULT_GRID["gamma"])


@dataclass
class SampledMatrixFunction:
    """Samples on a grid; ``values[0]`` is NaN when ``singular`` is set.

    ``values`` has shape ``(n+1, d, d)`` for matrix functions or
    ``(n+1, d)`` for vector paths.
    """

    grid: TimeGrid
    values: np.ndarray
    singular: bool = False

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape[0] != self.grid.n + 1:
            raise DomainError("one sample per grid node is required")
        if self.singular:
            v[0] = np.nan
        self.values = v

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.grid.nodes

    def at(self, i: int) -> np.ndarray:
        return self.values[i]

    def __add__(self, other):
        _check_same_grid(self.grid, other.grid)
        return SampledMatrixFunction(self.grid, self.values + other.values,
                                     self.singular or other.singular)

    def __mul__(self, alpha: float):
        return SampledMatrixFunction(self.grid, alpha * self.values, self.singular)

    __rmul__ = __mul__

    def symmetry_defect(self) -> float:
        v = self.values[1:]
        return float(np.max(np.abs(v - np.swapaxes(v, -1, -2)))) if v.ndim == 3 else 0.0


def _check_same_grid(a: TimeGrid, b: TimeGrid):
    if a != b:
        raise DomainError("functions live on different grids")


@dataclass
class MeasureFn:
    """The measure ``atom * upsilon + density(t) dt`` (upsilon: unit atom at 0)."""

    atom: np.ndarray
    density: object = None

    def __post_init__(self):
        self.atom = as_symmetric(self.atom, name="atom")


# ---------------------------------------------------------------------------
# Kernels known through samples of their antiderivative
# ---------------------------------------------------------------------------


_INTERPOLATORS = {
    "cubic": lambda x, y: CubicSpline(x, y, axis=0, extrapolate=False),
    "pchip": lambda x, y: PchipInterpolator(x, y, axis=0, extrapolate=False),
    "makima": lambda x, y: Akima1DInterpolator(x, y, axis=0, method="makima", extrapolate=False),
}


class SampledKernel:
    """Kernel ``K`` given by samples of its antiderivative ``A = int_0^t K``.

    ``A`` is interpolated with a piecewise cubic, so cell moments
    ``A(b) - A(a)`` are available at arbitrary arguments. Used for kernels
    obtained from data, e.g. the derivative of a sampled creep function.
    """

    def __init__(self, times, antiderivative_values, linear: bool = False,
                 method: str = "cubic"):
        times = np.asarray(times, dtype=float)
        vals = np.asarray(antiderivative_values, dtype=float)
        if times[0] != 0.0:
            raise DomainError("antiderivative samples must start at t = 0")
        self.times = times
        self.values = vals - vals[0]
        self.dim = vals.shape[1]
        self.t_max = float(times[-1])
        self._linear = linear
        if not linear:
            self._interp = _INTERPOLATORS[method](times, self.values)
            self._deriv = self._interp.derivative()

    @classmethod
    def from_density(cls, f: SampledMatrixFunction) -> "SampledKernel":
        """Piecewise-constant (right-node) density; exact linear antiderivative."""
        h = f.grid.steps
        cum = np.concatenate([np.zeros((1,) + f.values.shape[1:]),
                              np.cumsum(h[:, None, None] * f.values[1:], axis=0)])
        return cls(f.grid.nodes, cum, linear=True)

    def _check(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.t_max * (1 + 1e-12)):
            raise DomainError("argument outside the sampled range")
        return np.clip(t, 0.0, self.t_max)

    def antiderivative(self, t) -> np.ndarray:
        t = self._check(t)
        if self._linear:
            flat = self.values.reshape(len(self.times), -1)
            out = np.stack([np.interp(t.ravel(), self.times, col) for col in flat.T], axis=-1)
            return out.reshape(t.shape + self.values.shape[1:])
        return self._interp(t)

    def __call__(self, t) -> np.ndarray:
        t = self._check(t)
        if self._linear:
            idx = np.clip(np.searchsorted(self.times, t, side="left"), 1, len(self.times) - 1)
            h = self.times[idx] - self.times[idx - 1]
            return (self.values[idx] - self.values[idx - 1]) / h.reshape(h.shape + (1, 1))
        return self._deriv(t)


# ---------------------------------------------------------------------------
# Product-integration weights
# ---------------------------------------------------------------------------


class ProductWeights:
    """Lower-triangular product-integration weights of a kernel on a grid.

    For a :class:`MatrixKernel` the weights are stored per term as scalar
    ``(n+1, n+1)`` arrays ``w_t[i, j]`` so that ``W_ij = sum_t C_t w_t[i, j]``;
    for other kernels each row is built on demand from the antiderivative.
    Row and column 0 are unused (cells are numbered 1..n).
    """

    def __init__(self, kernel, grid: TimeGrid):
        self.kernel = kernel
        self.grid = grid
        self.dim = kernel.dim
        t = grid.nodes
        if isinstance(kernel, MatrixKernel):
            self.coefs = kernel.coefs
            diff = np.tril(t[:, None] - t[None, :])
            w = np.zeros((len(kernel.terms),) + diff.shape)
            for k, (_, prim) in enumerate(kernel.terms):
                a = np.tril(prim.antiderivative(diff))
                # W_ij = A(t_i - t_{j-1}) - A(t_i - t_j) for 1 <= j <= i
                w[k, :, 1:] = a[:, :-1] - a[:, 1:]
                w[k] = np.tril(w[k])
                w[k, :, 0] = 0.0
            self.scalar = w
        else:
            self.coefs = None
            self.scalar = None

    def row(self, i: int) -> np.ndarray:
        """Blocks ``W_ij`` for ``j = 1..i``, shape ``(i, d, d)``."""
        if self.scalar is not None:
            return np.einsum("tj,tab->jab", self.scalar[:, i, 1:i + 1], self.coefs)
        t = self.grid.nodes
        a = self.kernel.antiderivative(t[i] - t[:i + 1])
        return a[:-1] - a[1:]

    def diagonal(self, i: int) -> np.ndarray:
        if self.scalar is not None:
            return np.einsum("t,tab->ab", self.scalar[:, i, i], self.coefs)
        return self.kernel.antiderivative(self.grid.nodes[i] - self.grid.nodes[i - 1])

    def history(self, i: int, x: np.ndarray) -> np.ndarray:
        """``sum_{j<i} W_ij x_j`` for samples ``x`` of shape ``(n+1, d, ...)``."""
        if i <= 1:
            return np.zeros(x.shape[1:])
        if self.scalar is not None:
            part = np.tensordot(self.scalar[:, i, 1:i], x[1:i], axes=([1], [0]))
            return np.einsum("tab,tb...->a...", self.coefs, part)
        blocks = self.row(i)[:-1]
        return np.einsum("jab,jb...->a...", blocks, x[1:i])

    def apply(self, x: np.ndarray) -> np.ndarray:
        """``(W x)_i = sum_{j<=i} W_ij x_j``; row 0 of the result is zero."""
        out = np.zeros_like(x, dtype=float)
        xs = np.where(np.isnan(x), 0.0, x)
        if self.scalar is not None:
            part = np.einsum("tij,jb...->tib...", self.scalar, xs)
            out = np.einsum("tab,tib...->ia...", self.coefs, part)
            out[0] = 0.0
            return out
        for i in range(1, self.grid.n + 1):
            out[i] = np.einsum("jab,jb...->a...", self.row(i), xs[1:i + 1])
        return out


def _samples(g) -> tuple[TimeGrid, np.ndarray]:
    if isinstance(g, SampledMatrixFunction):
        return g.grid, g.values
    raise DomainError("expected a SampledMatrixFunction")


def convolve(k, g: SampledMatrixFunction, weights: ProductWeights | None = None) -> SampledMatrixFunction:
    """Product-integration approximation of ``k * g`` at the grid nodes.

    The value at ``t_0 = 0`` is the empty integral, zero.
    """
    grid, x = _samples(g)
    if k.dim != x.shape[1]:
        raise DomainError("kernel and samples have different dimensions")
    w = weights if weights is not None else ProductWeights(k, grid)
    return SampledMatrixFunction(grid, w.apply(x))


def convolve_measure(m: MeasureFn, g: SampledMatrixFunction) -> SampledMatrixFunction:
    """``atom g(t_i) + (density * g)(t_i)``."""
    grid, x = _samples(g)
    out = np.einsum("ab,ib...->ia...", m.atom, x)
    if m.density is not None:
        dens = m.density
        if isinstance(dens, SampledMatrixFunction):
            dens = SampledKernel.from_density(dens)
        out = out + convolve(dens, g).values
    return SampledMatrixFunction(grid, out, g.singular)


def cumulative_integral(g: SampledMatrixFunction, initial=None) -> np.ndarray:
    """Right-node rectangle rule ``sum_{j<=i} h_j g_j``; exact for the
    piecewise-constant interpretation of ``g``."""
    grid, x = _samples(g)
    h = grid.steps.reshape((-1,) + (1,) * (x.ndim - 1))
    cum = np.concatenate([np.zeros((1,) + x.shape[1:]), np.cumsum(h * x[1:], axis=0)])
    if initial is not None:
        cum = cum + initial
    return cum


# ---------------------------------------------------------------------------
# Kernel-kernel convolution
# ---------------------------------------------------------------------------


PANEL_RATIO = 0.15
PANEL_LEVELS = 18
PANEL_ORDER = 16


def _graded_rule(ratio: float = PANEL_RATIO, levels: int = PANEL_LEVELS,
                 order: int = PANEL_ORDER) -> tuple[np.ndarray, np.ndarray, float]:
    """Gauss-Legendre on geometric panels ``[r^(k+1), r^k]`` of ``(0, 1]``.

    Converges exponentially for integrands with an algebraic singularity
    at 0. Returns ``(nodes, weights, eps)`` where ``[0, eps]`` is left over.
    """
    x, w = np.polynomial.legendre.leggauss(order)
    nodes, weights = [], []
    for k in range(levels):
        lo, hi = ratio ** (k + 1), ratio**k
        nodes.append(lo + 0.5 * (hi - lo) * (x + 1))
        weights.append(0.5 * (hi - lo) * w)
    return np.concatenate(nodes), np.concatenate(weights), ratio**levels


def _eval_flat(k, t: np.ndarray) -> np.ndarray:
    vals = np.asarray(k(t.ravel()))
    return vals.reshape(t.shape + vals.shape[1:])


def convolve_pair(k, l, times) -> np.ndarray:
    """``(k * l)(t)`` for two kernels known in closed form.

    The integral is split at ``t/2`` so each half has at most one singular
    end: ``int_0^{t/2} k(t-s) l(s) ds + int_0^{t/2} k(u) l(t-u) du``. Each
    half uses geometrically graded Gauss-Legendre panels towards 0; the
    remaining sliver ``[0, eps t/2]`` is integrated exactly against the
    antiderivative. Matrix order ``k`` left of ``l`` is kept.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if k.dim != l.dim:
        raise DomainError("kernel dimensions differ")
    out = np.zeros((times.size, k.dim, k.dim))
    pos = times > 0
    if not np.any(pos):
        return out
    t = times[pos]
    x, w, eps = _graded_rule()
    half = 0.5 * t
    s = half[:, None] * x[None, :]
    wt = half[:, None] * w[None, :]
    far = (t[:, None] - s)
    ks, kf = _eval_flat(k, s), _eval_flat(k, far)
    ls, lf = _eval_flat(l, s), _eval_flat(l, far)
    first = np.einsum("tq,tqab,tqbc->tac", wt, kf, ls)
    second = np.einsum("tq,tqab,tqbc->tac", wt, ks, lf)
    sliver = eps * half
    edge = t - 0.5 * sliver
    first += np.einsum("tab,tbc->tac", _eval_flat(k, edge), _eval_flat(l.antiderivative, sliver))
    second += np.einsum("tab,tbc->tac", _eval_flat(k.antiderivative, sliver), _eval_flat(l, edge))
    out[pos] = first + second
    return out


CELL_ORDER = 8


def _local_exponents(t: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Exponent ``beta_j`` of ``|x| ~ s^beta`` between nodes ``j-1`` and ``j``."""
    m = np.linalg.norm(x.reshape(len(t), -1), axis=1)
    beta = np.ones(len(t))
    with np.errstate(divide="ignore", invalid="ignore"):
        est = np.log(m[2:] / m[1:-1]) / np.log(t[2:] / t[1:-1])
    beta[2:] = est
    # the first cell reuses the exponent of the second
    beta[1] = est[0] if len(est) else 1.0
    bad = ~np.isfinite(beta) | (beta <= -0.99) | (beta > 4.0)
    beta[bad] = 1.0
    return beta


class _PowerInterpolant:
    """Cell-wise ``g_{j-1} + (g_j - g_{j-1}) phi_j(s)`` (see
    :func:`convolve_interpolated`); cells are numbered from 0 here."""

    def __init__(self, t: np.ndarray, x: np.ndarray):
        self.t = t
        self.singular = bool(np.isnan(x[0]).any())
        self.x = np.where(np.isnan(x), 0.0, x)
        self.beta = _local_exponents(t, x)[1:]
        self.tail = (None,) * (x.ndim - 1)

    def __call__(self, j: int, s: np.ndarray) -> np.ndarray:
        lo, hi, b = self.t[j], self.t[j + 1], self.beta[j]
        if j == 0 and self.singular:
            return self.x[1][None] * ((s / hi) ** b)[(...,) + self.tail]
        if b == 1.0 or j == 0:
            phi = (s - lo) / (hi - lo)
        else:
            phi = (s**b - lo**b) / (hi**b - lo**b)
        return self.x[j][None] + (self.x[j + 1] - self.x[j])[None] * phi[(...,) + self.tail]

    def integral_from_zero(self, length: float) -> np.ndarray:
        """``int_0^length g_hat`` for ``length`` inside the first cell."""
        if self.singular:
            b, t1 = self.beta[0], self.t[1]
            return self.x[1] * t1 * (length / t1) ** (b + 1) / (b + 1)
        slope = (self.x[1] - self.x[0]) / self.t[1]
        return self.x[0] * length + 0.5 * slope * length**2


def convolve_interpolated(k, g: SampledMatrixFunction) -> np.ndarray:
    """``(k * g_hat)(t_i)`` for a local power-law interpolant ``g_hat``.

    On cell ``j`` the interpolant is ``g_{j-1} + (g_j - g_{j-1}) phi(s)``
    with ``phi = (s^b - t_{j-1}^b) / (t_j^b - t_{j-1}^b)`` and ``b`` the
    local growth exponent of ``|g|``, so samples of ``c s^b M`` are
    reproduced exactly. When ``g(0)`` is unknown the first cell uses
    ``g_1 (s/t_1)^b``. Interior cells use 8-point Gauss-Legendre; the
    first cell and the cell ending at ``t_i``, where ``g_hat`` or ``k``
    may be singular, use geometrically graded panels. Row 0 is zero.
    """
    grid, x = _samples(g)
    t = grid.nodes
    n = grid.n
    ghat = _PowerInterpolant(t, x)
    xg, wg = np.polynomial.legendre.leggauss(CELL_ORDER)
    xg = 0.5 * (xg + 1)
    wg = 0.5 * wg
    xp, wp, eps = _graded_rule()
    lo, hi = t[:-1], t[1:]
    h = hi - lo
    # interior samples of g_hat for every cell: (n, Q, ...)
    s_reg = lo[:, None] + h[:, None] * xg[None, :]
    g_reg = np.stack([ghat(j, s_reg[j]) for j in range(n)])
    out = np.zeros_like(ghat.x)

    def left_graded(i: int, length: float) -> np.ndarray:
        # int_0^length k(t_i - s) g_hat(s) ds
        s = length * xp
        kv = _eval_flat(k, t[i] - s)
        acc = np.einsum("q,qab,qb...->a...", length * wp, kv, ghat(0, s))
        edge = _eval_flat(k, np.array([t[i] - 0.5 * eps * length]))[0]
        return acc + np.einsum("ab,b...->a...", edge, ghat.integral_from_zero(eps * length))

    def right_graded(i: int, j: int, length: float) -> np.ndarray:
        # int_{t_i - length}^{t_i} k(t_i - s) g_hat(s) ds over cell j
        u = length * xp
        kv = _eval_flat(k, u)
        acc = np.einsum("q,qab,qb...->a...", length * wp, kv, ghat(j, t[i] - u))
        sliver = _eval_flat(k.antiderivative, np.array([eps * length]))[0]
        return acc + np.einsum("ab,b...->a...", sliver, ghat(j, np.array([t[i]]))[0])

    for i in range(1, n + 1):
        if i == 1:
            half = 0.5 * t[1]
            out[1] = left_graded(1, half) + right_graded(1, 0, half)
            continue
        acc = left_graded(i, h[0]) + right_graded(i, i - 1, h[i - 1])
        if i > 2:
            u = t[i] - s_reg[1:i - 1]
            kv = _eval_flat(k, u)
            wt = h[1:i - 1, None] * wg[None, :]
            acc = acc + np.einsum("jq,jqab,jqb...->a...", wt, kv, g_reg[1:i - 1])
        out[i] = acc
    return out
