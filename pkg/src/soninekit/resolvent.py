"""Solver for ``A1 X + F * X = R`` with ``R(t) = t^n/n! I``.

The solution is a measure ``X = atom * upsilon + G(t) dt``. The atom is
the limit ``lim_{p->oo} [p A1 + p F~(p)]^{-1}``: zero when ``A1`` is
positive definite or ``F`` is singular, ``lim_{t->0} F(t)^{-1}`` when
``A1 = 0`` and ``F`` is bounded at 0. The density ``G`` solves

    A1 G(t) + (F * G)(t) = I - F(t) atom

and is marched node by node with product-integration weights, one
symmetric ``dim x dim`` solve per step.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, HypothesisViolation
from .kernels import (
    TOL_PSD,
    BernsteinFn,
    MatrixKernel,
    as_symmetric,
    check_condition_star,
    is_psd,
    limit_inverse,
)
from .quadconv import (
    ProductWeights,
    SampledKernel,
    SampledMatrixFunction,
    TimeGrid,
    convolve_interpolated,
    convolve_pair,
    default_grid,
)

COND_MAX = 1e12


@dataclass
class ResolventProblem:
    a1: np.ndarray
    f: object
    rhs_order: int = 0
    grid: TimeGrid = field(default_factory=default_grid)

    def __post_init__(self):
        self.a1 = as_symmetric(self.a1, self.f.dim, "a1")
        if not is_psd(self.a1):
            raise HypothesisViolation("A1 must be positive semi-definite")
        if int(self.rhs_order) != self.rhs_order or self.rhs_order < 0:
            raise DomainError("rhs order must be a non-negative integer")

    @property
    def dim(self) -> int:
        return self.f.dim

    def rhs(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        n = self.rhs_order
        return (t**n / math.factorial(n))[..., None, None] * np.eye(self.dim)


@dataclass
class ResolventSolution:
    """``X = atom * upsilon + density``.

    ``density`` is a :class:`SampledMatrixFunction`; exact solutions may
    also be supplied as a :class:`MatrixKernel` (used by :func:`residual`).
    """

    atom: np.ndarray
    density: object
    classification: str
    max_condition: float = float("nan")

    @property
    def singular(self) -> bool:
        return bool(getattr(self.density, "singular", False))


def _positive_definite(m: np.ndarray) -> bool:
    w = np.linalg.eigvalsh(m)
    return bool(w.min() > TOL_PSD * max(float(np.max(np.abs(w))), 1e-300))


def sampled_zero_limit(kernel: SampledKernel, growth: float = 0.25):
    """Split a sampled kernel's behaviour at 0 into divergent and bounded parts.

    Returns ``(D, B)`` in the form used by
    :func:`~soninekit.kernels.limit_inverse`: ``D`` projects onto the
    directions where the kernel blows up, ``B`` is the finite limit on the
    rest (see :func:`slope_at_zero`).
    """
    est = slope_at_zero(kernel.times, kernel.values, growth)
    z = est.directions[:, est.divergent]
    return z @ z.T, est.value


def _split(kernel):
    if isinstance(kernel, MatrixKernel):
        d, b = kernel.split_at_zero()
        return d, b
    return sampled_zero_limit(kernel)


def solution_atom(a1: np.ndarray, kernel) -> np.ndarray:
    """``lim_{p->oo} [p A1 + p F~(p)]^{-1}``."""
    d, b = _split(kernel)
    return limit_inverse(a1 + d, b)


def _density_is_singular(a1: np.ndarray, kernel) -> bool:
    d, _ = _split(kernel)
    w, v = np.linalg.eigh(a1)
    z = v[:, w <= TOL_PSD * max(float(np.max(np.abs(w))), 1e-300)]
    if z.shape[1] == 0:
        return False
    return bool(np.max(np.abs(z.T @ d @ z)) > TOL_PSD * max(float(np.max(np.abs(d))), 1e-300))


def _check_kernel(a1: np.ndarray, kernel) -> None:
    if isinstance(kernel, MatrixKernel):
        if not kernel.is_cm_flagged:
            warnings.warn("kernel is not completely monotone; solving anyway", stacklevel=3)
        elif not kernel.is_licm:
            warnings.warn("kernel coefficients are not all PSD", stacklevel=3)
        if not _positive_definite(a1):
            check_condition_star(kernel)
    elif not _positive_definite(a1):
        s = kernel.antiderivative(np.array([kernel.t_max]))[0]
        if not _positive_definite(0.5 * (s + s.T)):
            raise HypothesisViolation("kernel vanishes identically in some direction")


def forward_solve(a1: np.ndarray, weights: ProductWeights, rhs: np.ndarray,
                  cond_max: float = COND_MAX) -> tuple[np.ndarray, float]:
    """Solve ``a1 x_i + sum_{j<=i} W_ij x_j = rhs_i`` for ``i = 1..n``.

    ``rhs`` has shape ``(n+1, d, ...)``; row 0 of the result is NaN.
    Returns the solution and the largest step-matrix condition number.
    """
    n = weights.grid.n
    x = np.zeros_like(rhs, dtype=float)
    worst = 0.0
    for i in range(1, n + 1):
        m = a1 + weights.diagonal(i)
        c = np.linalg.cond(m)
        if not c <= cond_max:
            raise HypothesisViolation(
                f"step matrix at t={weights.grid.nodes[i]:.6g} has condition {c:.3g}; "
                "the kernel vanishes in some direction or its limit at 0 is singular"
            )
        worst = max(worst, c)
        x[i] = np.linalg.solve(m, rhs[i] - weights.history(i, x))
    x[0] = np.nan
    return x, worst


def _kernel_times_atom(kernel, t: np.ndarray, atom: np.ndarray) -> np.ndarray:
    if not np.any(atom):
        return np.zeros((t.size,) + atom.shape)
    return np.einsum("iab,bc->iac", kernel(t), atom)


def _richardson(solve, grid: TimeGrid, richardson: bool | int) -> np.ndarray:
    """Samples from ``solve(grid)``, optionally extrapolated over nested
    refinements. One level uses ``2 x_{2n} - x_n`` to cancel the first-order
    error; two levels use ``(8 x_{4n} - 6 x_{2n} + x_n) / 3`` to cancel the
    first- and second-order terms."""
    levels = int(richardson)
    x = solve(grid)
    if levels == 0:
        return x
    fine = grid.refine()
    x2 = solve(fine)[::2]
    if levels == 1:
        return 2.0 * x2 - x
    x4 = solve(fine.refine())[::4]
    return (8.0 * x4 - 6.0 * x2 + x) / 3.0


def _sonine_density(p: ResolventProblem, atom: np.ndarray, grid: TimeGrid,
                    cond_max: float, info: dict) -> np.ndarray:
    t = grid.nodes
    rhs = np.zeros((t.size, p.dim, p.dim))
    rhs[1:] = np.eye(p.dim) - _kernel_times_atom(p.f, t[1:], atom)
    g, worst = forward_solve(p.a1, ProductWeights(p.f, grid), rhs, cond_max)
    info["cond"] = max(info.get("cond", 0.0), worst)
    return g


def solve_sonine(p: ResolventProblem, cond_max: float = COND_MAX,
                 richardson: bool = False) -> ResolventSolution:
    """Solve ``A1 X + F * X = I`` (``rhs_order`` is ignored here).

    With ``richardson=True`` the density is extrapolated from the grid and
    its refinement, which is second-order accurate away from ``t = 0``.
    """
    _check_kernel(p.a1, p.f)
    atom = solution_atom(p.a1, p.f)
    info: dict = {}
    g = _richardson(lambda grid: _sonine_density(p, atom, grid, cond_max, info),
                    p.grid, richardson)
    singular = _density_is_singular(p.a1, p.f)
    g[0] = np.nan if singular else _density_at_zero(g, p.grid.nodes)
    density = SampledMatrixFunction(p.grid, g, singular=singular)
    return ResolventSolution(atom, density, "LICM", info["cond"])


def _density_at_zero(g: np.ndarray, t: np.ndarray) -> np.ndarray:
    # linear extrapolation from the first two positive nodes
    s = t[1] / (t[2] - t[1])
    return g[1] + s * (g[1] - g[2])


def _trapezoid(x: np.ndarray, grid: TimeGrid, initial) -> np.ndarray:
    h = grid.steps[:, None, None]
    cum = np.cumsum(0.5 * h * (x[1:] + x[:-1]), axis=0)
    return np.concatenate([np.zeros((1,) + x.shape[1:]), cum]) + initial


def solve_rhs(p: ResolventProblem, cond_max: float = COND_MAX,
              richardson: bool = False) -> ResolventSolution:
    """Solve with ``R(t) = t^n/n! I``.

    For ``n >= 1`` the solution is the n-fold integral of the ``n = 0``
    solution, atom included, so ``X(0) = atom`` for ``n = 1``. A bounded
    density is integrated with the trapezoid rule; a density singular at 0
    is avoided by marching the equation with ``R = t I`` directly.
    """
    n = p.rhs_order
    base = solve_sonine(p, cond_max, richardson)
    if n == 0:
        return base
    if base.singular:
        def march(grid):
            t = grid.nodes
            rhs = (t[:, None, None] * np.eye(p.dim)).copy()
            x, _ = forward_solve(p.a1, ProductWeights(p.f, grid), rhs, cond_max)
            x[0] = 0.0
            return x
        x = _richardson(march, p.grid, richardson)
    else:
        x = _trapezoid(base.density.values, p.grid, base.atom)
    for _ in range(n - 1):
        x = _trapezoid(x, p.grid, 0.0)
    kind = "Bernstein" if n == 1 else f"{n}-fold-integral"
    zero = np.zeros_like(base.atom)
    return ResolventSolution(zero, SampledMatrixFunction(p.grid, x), kind, base.max_condition)


@dataclass(frozen=True)
class SlopeAtZero:
    """Estimate of ``B'(0+)`` for samples of ``B`` with ``B(0) = 0``.

    ``exponents`` are the fitted growth rates ``beta`` of ``B'(t) ~ t^-beta``
    along the eigen-directions ``directions`` (columns); a direction is
    divergent when ``beta > growth``. ``value`` is the extrapolated finite
    limit on the complement (zero along divergent directions).
    """

    value: np.ndarray
    directions: np.ndarray
    exponents: np.ndarray
    divergent: np.ndarray

    @property
    def finite(self) -> bool:
        return not bool(np.any(self.divergent))


def slope_at_zero(nodes: np.ndarray, values: np.ndarray, growth: float = 0.25) -> SlopeAtZero:
    """Extrapolate ``B'(0+)`` from the first three cells.

    Cell difference quotients approximate ``B'`` at the cell midpoints; a
    quadratic through them is evaluated at 0. Divergence is judged per
    eigen-direction of the first quotient by the log-slope between the
    first and third midpoints.
    """
    t = np.asarray(nodes, dtype=float)
    b = np.asarray(values, dtype=float)
    h = np.diff(t[:4])
    d = (b[1:4] - b[0:3]) / h[:, None, None]
    d = 0.5 * (d + np.swapaxes(d, 1, 2))
    m = 0.5 * (t[1:4] + t[0:3])
    lag = [np.prod([m[j] / (m[j] - m[i]) for j in range(3) if j != i]) for i in range(3)]
    w, v = np.linalg.eigh(d[0])
    proj = np.einsum("ai,kab,bi->ki", v, d, v)
    beta = np.zeros(len(w))
    for i in range(len(w)):
        s = proj[:, i]
        if s[0] > 0 and s[2] > 0:
            beta[i] = math.log(s[0] / s[2]) / math.log(m[2] / m[0])
    divergent = beta > growth
    limit = sum(lag[k] * d[k] for k in range(3))
    keep = v[:, ~divergent]
    value = keep @ keep.T @ limit @ keep @ keep.T
    return SlopeAtZero(0.5 * (value + value.T), v, beta, divergent)


def _positive_definite_scaled(m: np.ndarray, scale: float, rel: float = 1e-8) -> bool:
    return bool(np.linalg.eigvalsh(m).min() > rel * scale)


def _bernstein_samples(b: SampledMatrixFunction, cond_max: float,
                       richardson: bool) -> ResolventSolution:
    if np.any(np.isnan(b.values[0])):
        raise DomainError("sampled Bernstein input needs its value at t = 0")
    grid, t = b.grid, b.grid.nodes
    vals = 0.5 * (b.values + np.swapaxes(b.values, 1, 2))
    dim = vals.shape[1]
    scale = max(float(np.max(np.abs(vals))), 1e-300)
    b0 = vals[0]
    if np.max(np.abs(b0)) <= 1e-12 * scale:
        b0 = np.zeros_like(b0)
    spline = SampledKernel(t, vals)
    slope = slope_at_zero(t, vals)
    if not np.any(b0) and slope.finite and _positive_definite_scaled(slope.value, scale):
        # B(0) = 0 with invertible B'(0): differentiate once more,
        # B'(0) F + B'' * F = -B''(t) N with N = B'(0)^{-1}.
        y0 = slope.value
        atom = np.linalg.inv(y0)
        atom = 0.5 * (atom + atom.T)
        y = spline(t)
        y[0] = y0
        y = 0.5 * (y + np.swapaxes(y, 1, 2))
        kernel = SampledKernel(t, y - y0)
        info: dict = {}

        def march(g):
            tt = g.nodes
            rhs = np.zeros((tt.size, dim, dim))
            rhs[1:] = -np.einsum("iab,bc->iac", kernel(tt[1:]), atom)
            x, worst = forward_solve(y0, ProductWeights(kernel, g), rhs, cond_max)
            info["cond"] = max(info.get("cond", 0.0), worst)
            return x

        # the second-kind march has a large first-order error constant when
        # N^{-1} is small against F, so a second extrapolation level pays off
        f = _richardson(march, grid, 2 if richardson else 0)
        f[0] = _density_at_zero(f, t)
        return ResolventSolution(atom, SampledMatrixFunction(grid, f), "LICM", info["cond"])
    problem = ResolventProblem(b0, spline, 0, grid)
    return solve_sonine(problem, cond_max, richardson)


def solve_from_bernstein(b, grid: TimeGrid | None = None, cond_max: float = COND_MAX,
                         richardson: bool = False) -> ResolventSolution:
    """Solve ``B * X = t I`` for a Bernstein function ``B``.

    Differentiating gives ``B(0) X + B' * X = I``. ``b`` is either a
    :class:`BernsteinFn` or a :class:`SampledMatrixFunction` holding ``B``
    at every node including ``t = 0``. Sampled input is solved on its own
    grid with ``B`` interpolated by a cubic spline; when ``B(0) = 0`` and
    ``B'(0)`` is finite the equation is differentiated once more so that
    the march is of the second kind.
    """
    try:
        if isinstance(b, SampledMatrixFunction):
            return _bernstein_samples(b, cond_max, richardson)
        if not isinstance(b, BernsteinFn):
            raise DomainError("expected a BernsteinFn or sampled values")
        problem = ResolventProblem(b.b0, b.derivative, 0,
                                   grid if grid is not None else default_grid())
        return solve_sonine(problem, cond_max, richardson)
    except HypothesisViolation as exc:
        raise HypothesisViolation(f"Bernstein function is constant in some direction: {exc}") from None


def residual_profile(p: ResolventProblem, s: ResolventSolution,
                     method: str = "interpolated") -> np.ndarray:
    """Per-node ``||A1 X + F * X - R||_inf`` (entrywise max) for ``t_i > 0``.

    A closed-form density is convolved by :func:`convolve_pair`. Sampled
    densities use ``method``: ``"interpolated"`` integrates a local
    power-law interpolant of the samples accurately (a genuine residual),
    ``"collocation"`` reuses the product-integration weights of the
    solver, so a solver output satisfies it to rounding.
    """
    t = p.grid.nodes[1:]
    if isinstance(s.density, MatrixKernel):
        conv = convolve_pair(p.f, s.density, t)
        dens = s.density(t)
    else:
        vals = np.where(np.isnan(s.density.values), 0.0, s.density.values)
        if method == "interpolated":
            conv = convolve_interpolated(p.f, s.density)[1:]
        elif method == "collocation":
            conv = ProductWeights(p.f, p.grid).apply(vals)[1:]
        else:
            raise DomainError(f"unknown residual method {method!r}")
        dens = vals[1:]
    total = (np.einsum("ab,ibc->iac", p.a1, dens) + conv
             + _kernel_times_atom(p.f, t, s.atom) - p.rhs(t))
    return np.max(np.abs(total), axis=(1, 2))


def residual(p: ResolventProblem, s: ResolventSolution, method: str = "interpolated") -> float:
    """Max-norm residual of the convolution equation over the grid nodes."""
    return float(np.max(residual_profile(p, s, method)))
