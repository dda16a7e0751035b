import math
import warnings

import numpy as np
import pytest

import oracles
from soninekit import laplace
from soninekit.errors import DomainError, HypothesisViolation
from soninekit.kernels import (
    BernsteinFn,
    BesselK,
    Exponential,
    MatrixKernel,
    PowerLaw,
)
from soninekit.quadconv import SampledMatrixFunction, default_grid, make_grid
from soninekit.resolvent import (
    ResolventProblem,
    ResolventSolution,
    residual,
    residual_profile,
    slope_at_zero,
    solution_atom,
    solve_from_bernstein,
    solve_rhs,
    solve_sonine,
)

K0 = np.array([[2.0, 0.5], [0.5, 1.0]])
Z1 = np.zeros((1, 1))


def _scalar(prim, c=1.0):
    return MatrixKernel.scalar(prim, c)


def test_self_dual_power_law():
    grid = default_grid()
    s = solve_sonine(ResolventProblem(Z1, _scalar(PowerLaw(0.5)), 0, grid))
    t = grid.nodes
    assert np.array_equal(s.atom, Z1)
    assert s.singular and np.isnan(s.density.values[0]).all()
    exact = oracles.INV_SQRT_PI / np.sqrt(t[1:])
    rel = np.abs(s.density.values[1:, 0, 0] / exact - 1)
    assert np.max(rel[t[1:] >= 0.05]) <= 1e-2
    assert s.density.values[-1, 0, 0] == pytest.approx(oracles.INV_SQRT_PI, rel=1e-2)


def test_constant_kernel_gives_pure_atom():
    s = solve_sonine(ResolventProblem(np.zeros((2, 2)), MatrixKernel.single(K0, Exponential(0.0)),
                                      0, make_grid(1.0, 64, 2)))
    np.testing.assert_allclose(s.atom, np.linalg.inv(K0), rtol=1e-12)
    assert np.max(np.abs(s.density.values)) < 1e-10
    assert not s.singular


def test_exponential_kernel_atom_and_constant_density():
    s = solve_sonine(ResolventProblem(Z1, _scalar(Exponential(1.0)), 0, default_grid()))
    np.testing.assert_allclose(s.atom, [[1.0]], rtol=1e-12)
    np.testing.assert_allclose(s.density.values[:, 0, 0], 1.0, atol=1e-8)


def test_positive_a1_gives_no_atom():
    grid = default_grid()
    s = solve_sonine(ResolventProblem(np.eye(1), _scalar(Exponential(1.0)), 0, grid))
    assert np.array_equal(s.atom, Z1)
    exact = 0.5 * (1 + np.exp(-2 * grid.nodes))
    assert np.max(np.abs(s.density.values[:, 0, 0] - exact)) < 2e-3


def test_bernstein_rhs_matrix_exponential():
    grid = default_grid()
    s = solve_rhs(ResolventProblem(np.zeros((2, 2)), MatrixKernel.single(K0, Exponential(1.0)), 1, grid))
    assert s.classification == "Bernstein"
    inv = np.linalg.inv(K0)
    expected = (1 + grid.nodes)[:, None, None] * inv
    assert np.max(np.abs(s.density.values - expected)) < 1e-3
    np.testing.assert_allclose(s.density.values[0], inv, atol=1e-12)


def test_bernstein_rhs_newtonian_creep():
    grid = default_grid()
    s = solve_rhs(ResolventProblem(np.eye(1), _scalar(Exponential(1.0)), 1, grid))
    c = s.density.values[:, 0, 0]
    assert c[0] == 0.0
    assert np.max(np.abs(c - oracles.creep_newtonian_exp(grid.nodes))) < 1e-3


def test_higher_order_rhs_classification():
    s = solve_rhs(ResolventProblem(np.eye(1), _scalar(Exponential(1.0)), 2, make_grid(1.0, 64, 2)))
    assert s.classification == "2-fold-integral"


def test_richardson_improves_accuracy():
    grid = make_grid(1.0, 128, 2)
    p = ResolventProblem(np.eye(1), _scalar(Exponential(1.0)), 0, grid)
    exact = 0.5 * (1 + np.exp(-2 * grid.nodes))
    plain = np.max(np.abs(solve_sonine(p).density.values[:, 0, 0] - exact))
    rich = np.max(np.abs(solve_sonine(p, richardson=True).density.values[:, 0, 0] - exact))
    assert rich < 0.1 * plain


def test_bernstein_linear_is_pure_atom():
    s = solve_from_bernstein(BernsteinFn(Z1, _scalar(Exponential(0.0))), make_grid(1.0, 64, 2))
    np.testing.assert_allclose(s.atom, [[1.0]])
    assert np.max(np.abs(s.density.values)) < 1e-12


def test_bernstein_one_plus_t_gives_decaying_exponential():
    grid = default_grid()
    s = solve_from_bernstein(BernsteinFn(np.eye(1), _scalar(Exponential(0.0))), grid)
    assert np.array_equal(s.atom, Z1)
    assert np.max(np.abs(s.density.values[:, 0, 0] - np.exp(-grid.nodes))) < 1e-3


def test_bernstein_power_law_antiderivative():
    grid = default_grid()
    s = solve_from_bernstein(BernsteinFn(Z1, _scalar(PowerLaw(0.5))), grid)
    assert s.singular
    t = grid.nodes[1:]
    rel = np.abs(s.density.values[1:, 0, 0] * np.sqrt(t) / oracles.INV_SQRT_PI - 1)
    assert np.max(rel[t >= 0.05]) < 1e-2


@pytest.mark.parametrize("fn, atom", [(lambda t: t, 1.0), (lambda t: 1 + t, 0.0)])
def test_bernstein_samples(fn, atom):
    grid = default_grid()
    b = SampledMatrixFunction(grid, fn(grid.nodes)[:, None, None])
    s = solve_from_bernstein(b, richardson=True)
    assert s.atom[0, 0] == pytest.approx(atom, abs=1e-8)


def test_bernstein_constant_direction_rejected():
    # B = diag(t, 0) never grows along e2, so B * X = t I has no solution
    b = BernsteinFn(np.zeros((2, 2)), MatrixKernel.single(np.diag([1.0, 0.0]), Exponential(0.0)))
    with pytest.raises(HypothesisViolation, match="constant"):
        solve_from_bernstein(b, make_grid(1.0, 16, 2))


def test_constant_direction_in_kernel_is_a_hypothesis_violation():
    f = MatrixKernel.single(np.diag([1.0, 0.0]), Exponential(1.0))
    with pytest.raises(HypothesisViolation):
        solve_sonine(ResolventProblem(np.zeros((2, 2)), f, 0, make_grid(1.0, 16, 2)))


def test_condition_bound_is_enforced():
    f = MatrixKernel.single(np.diag([1.0, 1e-14]), Exponential(0.0)) + MatrixKernel.single(
        np.diag([0.0, 1e-14]), PowerLaw(0.5))
    with pytest.raises(HypothesisViolation):
        solve_sonine(ResolventProblem(np.zeros((2, 2)), f, 0, make_grid(1.0, 16, 2)))


def test_non_cm_kernel_warns_but_solves():
    with pytest.warns(UserWarning):
        s = solve_sonine(ResolventProblem(Z1, _scalar(BesselK(0.5)), 0, make_grid(1.0, 64, 2)))
    assert np.all(np.isfinite(s.density.values[1:]))


def test_invalid_problem_inputs():
    with pytest.raises(HypothesisViolation):
        ResolventProblem(-np.eye(1), _scalar(PowerLaw(0.5)))
    with pytest.raises(DomainError):
        ResolventProblem(Z1, _scalar(PowerLaw(0.5)), rhs_order=-1)


def test_residual_of_exact_solution_is_tiny():
    grid = default_grid()
    p = ResolventProblem(np.eye(1), _scalar(Exponential(1.0)), 0, grid)
    exact = _scalar(Exponential(0.0), 0.5) + _scalar(Exponential(2.0), 0.5)
    assert residual(p, ResolventSolution(Z1, exact, "LICM")) <= 1e-10
    p2 = ResolventProblem(Z1, _scalar(PowerLaw(0.5)), 0, grid)
    assert residual(p2, ResolventSolution(Z1, _scalar(PowerLaw(0.5)), "LICM")) <= 1e-10


def test_residual_of_sampled_known_pair():
    grid = default_grid()
    k = _scalar(PowerLaw(0.5))
    vals = np.concatenate([np.full((1, 1, 1), np.nan), k(grid.nodes[1:])])
    s = ResolventSolution(Z1, SampledMatrixFunction(grid, vals, singular=True), "LICM")
    assert residual(ResolventProblem(Z1, k, 0, grid), s) <= 1e-3


def test_solver_output_satisfies_collocation_equations():
    p = ResolventProblem(np.zeros((2, 2)), MatrixKernel.single(K0, PowerLaw(0.5)), 0, default_grid())
    s = solve_sonine(p)
    assert residual(p, s, "collocation") <= 1e-10
    with pytest.raises(DomainError):
        residual_profile(p, s, "nope")


def test_solution_is_symmetric():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((3, 3))
    c = a @ a.T + np.eye(3)
    f = MatrixKernel.single(c, PowerLaw(0.5)) + MatrixKernel.single(np.eye(3), Exponential(2.0))
    s = solve_sonine(ResolventProblem(np.zeros((3, 3)), f, 0, make_grid(1.0, 128, 2)))
    assert s.density.symmetry_defect() <= 1e-10 * np.nanmax(np.abs(s.density.values))


def test_permutation_equivariance():
    rng = np.random.default_rng(4)
    a = rng.standard_normal((3, 3))
    c = a @ a.T + np.eye(3)
    perm = np.eye(3)[[2, 0, 1]]
    grid = make_grid(1.0, 128, 2)
    f = MatrixKernel.single(c, Exponential(1.0)) + MatrixKernel.single(np.eye(3), PowerLaw(0.5))
    fp = MatrixKernel.single(perm @ c @ perm.T, Exponential(1.0)) + MatrixKernel.single(np.eye(3), PowerLaw(0.5))
    x = solve_sonine(ResolventProblem(np.zeros((3, 3)), f, 0, grid)).density.values[1:]
    xp = solve_sonine(ResolventProblem(np.zeros((3, 3)), fp, 0, grid)).density.values[1:]
    back = np.einsum("ab,ibc,dc->iad", perm.T, xp, perm.T)
    assert np.max(np.abs(back - x)) <= 1e-12 * np.max(np.abs(x))


def test_density_agrees_with_laplace_oracle():
    f = MatrixKernel.single(K0, Exponential(1.0)) + MatrixKernel.single(np.eye(2), Exponential(3.0))
    a1 = np.diag([1.0, 0.5])
    grid = default_grid()
    s = solve_sonine(ResolventProblem(a1, f, 0, grid), richardson=True)
    t = np.array([0.1, 0.5, 1.0])
    idx = [int(np.argmin(np.abs(grid.nodes - ti))) for ti in t]
    oracle = laplace.invert(laplace.solution_transform(a1, f), grid.nodes[idx])
    assert np.max(np.abs(s.density.values[idx] - oracle)) < 1e-4


def test_solution_atom_mixed_kernel():
    f = (MatrixKernel.single(np.diag([1.0, 0.0]), PowerLaw(0.5))
         + MatrixKernel.single(np.diag([2.0, 4.0]), Exponential(1.0)))
    np.testing.assert_allclose(solution_atom(np.zeros((2, 2)), f), np.diag([0.0, 0.25]), atol=1e-14)


def test_slope_at_zero_finite_and_divergent():
    grid = default_grid()
    t = grid.nodes
    b = (0.25 + 0.5 * t - 0.25 * np.exp(-2 * t))[:, None, None]
    est = slope_at_zero(t, b - b[0])
    assert est.finite and est.value[0, 0] == pytest.approx(1.0, abs=1e-6)
    est = slope_at_zero(t, np.sqrt(t)[:, None, None])
    # exponents come from cell averages, so only the verdict is sharp
    assert not est.finite and 0.25 < est.exponents[0] < 1.0


def test_exponential_sum_laplace_oracle_scalar():
    # a1 = 0, F = e^-t + 1: X~ = (1/p) / (1/(p+1) + 1/p) = 1/2 + (1/4)/(p + 1/2)
    f = _scalar(Exponential(1.0)) + _scalar(Exponential(0.0))
    s = solve_sonine(ResolventProblem(Z1, f, 0, default_grid()), richardson=True)
    assert s.atom[0, 0] == pytest.approx(0.5, abs=1e-12)
    t = default_grid().nodes
    assert np.max(np.abs(s.density.values[:, 0, 0] - 0.25 * np.exp(-t / 2))) < 1e-4
