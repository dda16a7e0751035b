"""Anisotropic viscoelastic duality between relaxation and creep.

A relaxation law ``(N, F)`` (Newtonian viscosity plus memory kernel) and
a creep function ``C`` are dual when ``N C + F * C = t I`` in the 6x6
Voigt image. Rank-4 tensors with minor and major symmetries map to 6x6
symmetric matrices with the factor ``sqrt(2)`` on the shear indices
(Mandel scaling), which makes the map an isometry of bilinear forms:
``e : T : g = mandel(e) . R . mandel(g)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .kernels import TOL_PSD, MatrixKernel, as_symmetric, f_infinity, is_psd
from .quadconv import SampledKernel, SampledMatrixFunction, TimeGrid, default_grid
from .resolvent import (
    ResolventProblem,
    slope_at_zero,
    solution_atom,
    solve_from_bernstein,
    solve_rhs,
)

# Voigt index I -> tensor index pair (0-based); shear order 23, 13, 12
VOIGT_PAIRS = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))
SCALE = np.array([1.0, 1.0, 1.0, math.sqrt(2.0), math.sqrt(2.0), math.sqrt(2.0)])
SYM_TOL = 1e-12


def _pair_index() -> np.ndarray:
    idx = np.zeros((3, 3), dtype=int)
    for k, (i, j) in enumerate(VOIGT_PAIRS):
        idx[i, j] = idx[j, i] = k
    return idx


PAIR_INDEX = _pair_index()


def check_tensor_symmetry(t: np.ndarray, tol: float = SYM_TOL) -> None:
    t = np.asarray(t, dtype=float)
    if t.shape != (3, 3, 3, 3):
        raise DomainError("rank-4 tensor must have shape (3, 3, 3, 3)")
    scale = max(float(np.max(np.abs(t))), 1.0)
    for perm in ((1, 0, 2, 3), (0, 1, 3, 2), (2, 3, 0, 1)):
        if np.max(np.abs(t - t.transpose(perm))) > tol * scale:
            raise DomainError("tensor lacks the minor/major symmetries T_ijkl = T_jikl = T_klij")


def voigt_map(t: np.ndarray) -> np.ndarray:
    """Rank-4 tensor -> 6x6 matrix ``R_IJ = f(I) f(J) T_{pair(I) pair(J)}``."""
    check_tensor_symmetry(t)
    t = np.asarray(t, dtype=float)
    r = np.empty((6, 6))
    for a, (i, j) in enumerate(VOIGT_PAIRS):
        for b, (k, l) in enumerate(VOIGT_PAIRS):
            r[a, b] = SCALE[a] * SCALE[b] * t[i, j, k, l]
    return r


def voigt_unmap(r: np.ndarray) -> np.ndarray:
    """Inverse of :func:`voigt_map`."""
    r = as_symmetric(r, 6, "Voigt matrix")
    unscaled = r / np.outer(SCALE, SCALE)
    idx = PAIR_INDEX
    return unscaled[idx[:, :, None, None], idx[None, None, :, :]]


def mandel_vector(e: np.ndarray) -> np.ndarray:
    """Symmetric 3x3 matrix -> 6-vector ``(e11, e22, e33, s e23, s e13, s e12)``, ``s = sqrt 2``."""
    e = np.asarray(e, dtype=float)
    if e.shape != (3, 3):
        raise DomainError("expected a 3x3 matrix")
    return np.array([SCALE[a] * e[i, j] for a, (i, j) in enumerate(VOIGT_PAIRS)])


def mandel_matrix(v: np.ndarray) -> np.ndarray:
    """Inverse of :func:`mandel_vector`."""
    v = np.asarray(v, dtype=float).reshape(6)
    return (v / SCALE)[PAIR_INDEX]


def from_tensor21(values) -> np.ndarray:
    """21 tensor components ``T_{pair(I) pair(J)}``, ``I <= J`` row-major,
    to the scaled 6x6 matrix."""
    values = np.asarray(values, dtype=float).ravel()
    if values.size != 21:
        raise DomainError("expected 21 independent constants")
    r = np.zeros((6, 6))
    r[np.triu_indices(6)] = values
    r = r + np.triu(r, 1).T
    return r * np.outer(SCALE, SCALE)


def to_tensor21(r: np.ndarray) -> np.ndarray:
    r = as_symmetric(r, 6, "Voigt matrix")
    return (r / np.outer(SCALE, SCALE))[np.triu_indices(6)]


@dataclass
class RelaxationLaw:
    """``Sigma = N DE + F * DE`` in matrix form (any dimension, 6 for solids)."""

    n_matrix: np.ndarray
    f: MatrixKernel

    def __post_init__(self):
        self.n_matrix = as_symmetric(self.n_matrix, self.f.dim, "N")
        if not is_psd(self.n_matrix):
            raise DomainError("N must be positive semi-definite")

    @property
    def dim(self) -> int:
        return self.f.dim


def creep_from_relaxation(law: RelaxationLaw, grid: TimeGrid | None = None,
                          richardson: bool = True) -> SampledMatrixFunction:
    """Creep function ``C`` solving ``N C + F * C = t I``.

    Richardson extrapolation over the grid and its refinement is on by
    default; the result is a Bernstein-class sampled function including
    ``C(0)``.
    """
    grid = grid if grid is not None else default_grid()
    sol = solve_rhs(ResolventProblem(law.n_matrix, law.f, 1, grid), richardson=richardson)
    return sol.density


@dataclass
class RelaxationEstimate:
    """Relaxation law recovered from creep samples.

    ``regime`` is ``"jump"`` (``C(0)`` positive definite, ``N = 0``),
    ``"newtonian"`` (``C(0) = 0``, ``C'(0)`` finite, ``N = C'(0)^-1``),
    ``"singular-kernel"`` (``C(0) = 0`` and ``C'(0+)`` divergent in every
    direction, ``N = 0`` and ``F`` singular) or ``"mixed"`` otherwise.
    """

    n_matrix: np.ndarray
    f: SampledMatrixFunction
    regime: str
    f_infinity: np.ndarray
    slope_exponents: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def to_dict(self) -> dict:
        return {"n_matrix": self.n_matrix.tolist(), "regime": self.regime,
                "f_infinity": self.f_infinity.tolist(),
                "slope_exponents": self.slope_exponents.tolist()}


def _scale(values: np.ndarray) -> float:
    return max(float(np.nanmax(np.abs(values))), 1e-300)


def _min_eig(m: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(0.5 * (m + m.T)).min())


def _end_slope(c: SampledMatrixFunction) -> np.ndarray:
    t = c.grid.nodes
    spline = SampledKernel(t, c.values)
    d = spline(np.array([t[-1]]))[0]
    return 0.5 * (d + d.T)


def long_time_limit(c: SampledMatrixFunction, rel: float = 1e-3) -> np.ndarray:
    """``F_inf`` estimate: 0 when ``C'(t_end)`` is positive definite, else
    ``C(t_end)^{-1}``."""
    slope = _end_slope(c)
    if _min_eig(slope) > rel * _scale(c.values) / c.grid.t_end:
        return np.zeros_like(slope)
    return np.linalg.inv(c.values[-1])


def relaxation_from_creep(c: SampledMatrixFunction, richardson: bool = True) -> RelaxationEstimate:
    """Recover ``(N, F)`` from creep samples on a graded grid.

    ``X = N upsilon + F`` solves ``C * X = t I`` (see
    :func:`~soninekit.resolvent.solve_from_bernstein`); the atom is ``N``.
    """
    if np.any(np.isnan(c.values[0])):
        raise DomainError("creep samples must include C(0)")
    t = c.grid.nodes
    scale = _scale(c.values)
    c0 = 0.5 * (c.values[0] + c.values[0].T)
    slope = slope_at_zero(t, c.values)
    if _min_eig(c0) > 1e-8 * scale:
        regime = "jump"
    elif np.max(np.abs(c0)) <= 1e-12 * scale and np.all(slope.divergent):
        regime = "singular-kernel"
    elif np.max(np.abs(c0)) <= 1e-12 * scale and slope.finite:
        regime = "newtonian"
    else:
        regime = "mixed"
    sol = solve_from_bernstein(c, richardson=richardson)
    return RelaxationEstimate(sol.atom, sol.density, regime, long_time_limit(c), slope.exponents)


@dataclass
class DiagnosticItem:
    name: str
    applicable: bool
    measured: list | None = None
    predicted: list | None = None
    deviation: float | None = None
    note: str = ""


def _item(name, measured, predicted, note="") -> DiagnosticItem:
    dev = float(np.max(np.abs(measured - predicted)) / max(float(np.max(np.abs(predicted))), 1.0))
    return DiagnosticItem(name, True, np.asarray(measured).tolist(),
                          np.asarray(predicted).tolist(), dev, note)


def limit_diagnostics(law: RelaxationLaw, c: SampledMatrixFunction) -> dict:
    """Compare the measured limits of ``C`` with those implied by ``(N, F)``.

    Items: ``C(0)`` against the solution atom (``0`` or ``F_0``),
    ``C'(0+)`` against ``N^{-1}`` when ``N`` is positive definite,
    ``C(t_end)^{-1}`` against ``F_inf`` and ``C'(t_end)`` against 0 when
    ``F_inf`` is invertible. Deviations are max-norm differences divided
    by ``max(1, |predicted|)``.
    """
    n = law.n_matrix
    d = law.dim
    items = []
    c0_pred = solution_atom(n, law.f)
    items.append(_item("C(0)", c.values[0], c0_pred))
    n_pd = _min_eig(n) > TOL_PSD * max(float(np.max(np.abs(n))), 1e-300)
    slope = slope_at_zero(c.grid.nodes, c.values)
    d_div, _ = law.f.split_at_zero()
    singular_start = (not n_pd and not np.any(c0_pred)
                      and _min_eig(d_div) > TOL_PSD * max(float(np.max(np.abs(d_div))), 1e-300))
    if n_pd:
        items.append(_item("C'(0)", slope.value, np.linalg.inv(n)))
    else:
        items.append(DiagnosticItem("C'(0)", False, note=(
            "divergent initial slope" if singular_start else "N is not positive definite")))
    f_inf = f_infinity(law.f)
    if _min_eig(f_inf) > TOL_PSD * max(float(np.max(np.abs(f_inf))), 1e-300) and not n_pd:
        items.append(_item("C(t_end)^-1", np.linalg.inv(c.values[-1]), f_inf))
        items.append(_item("C'(t_end)", _end_slope(c), np.zeros((d, d)),
                           note="long-time slope of a bounded creep function"))
    else:
        reason = "F_inf is not invertible" if not n_pd else "N > 0: creep is unbounded"
        items.append(DiagnosticItem("C(t_end)^-1", False, note=reason))
        items.append(DiagnosticItem("C'(t_end)", False, note=reason))
    if singular_start:
        start = "vertical creep start"
    elif _min_eig(c0_pred) > 0:
        start = "jump"
    elif n_pd:
        start = "finite initial slope"
    else:
        start = "mixed"
    return {"creep_start": start, "slope_exponents": slope.exponents.tolist(),
            "checks": [vars(i) for i in items]}
