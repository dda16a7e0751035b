import math

import numpy as np
import pytest

import oracles
from soninekit.errors import DomainError
from soninekit.kernels import Exponential, MatrixKernel, PowerLaw
from soninekit.quadconv import (
    MeasureFn,
    ProductWeights,
    SampledKernel,
    SampledMatrixFunction,
    convolve,
    convolve_interpolated,
    convolve_measure,
    convolve_pair,
    cumulative_integral,
    default_grid,
    make_grid,
)


@pytest.mark.parametrize("args, nodes", [
    ((1.0, 4, 1), [0, 0.25, 0.5, 0.75, 1.0]),
    ((1.0, 2, 2), [0, 0.25, 1.0]),
    ((2.0, 4, 2), [0, 0.125, 0.5, 1.125, 2.0]),
])
def test_make_grid_examples(args, nodes):
    np.testing.assert_allclose(make_grid(*args).nodes, nodes, rtol=1e-15)


@pytest.mark.parametrize("args", [(0.0, 4, 1), (1.0, 0, 1), (1.0, 4, 0.5), (-1.0, 4, 2)])
def test_make_grid_rejects_invalid(args):
    with pytest.raises(DomainError):
        make_grid(*args)


def test_refine_keeps_nodes():
    g = make_grid(1.0, 8, 2)
    r = g.refine()
    assert r.n == 16
    np.testing.assert_allclose(r.nodes[::2], g.nodes, rtol=1e-15)


def _const(grid, dim=2):
    return SampledMatrixFunction(grid, np.broadcast_to(np.eye(dim), (grid.n + 1, dim, dim)))


def test_convolve_with_unit_kernel_integrates():
    g = make_grid(1.0, 64, 2)
    out = convolve(MatrixKernel.single(np.eye(2), Exponential(0.0)), _const(g))
    np.testing.assert_allclose(out.values, g.nodes[:, None, None] * np.eye(2), atol=1e-14)


def test_convolve_power_law_with_one():
    g = default_grid()
    out = convolve(MatrixKernel.single(np.eye(2), PowerLaw(0.5)), _const(g))
    expected = np.sqrt(g.nodes) * oracles.INV_GAMMA_1_5
    np.testing.assert_allclose(out.values[:, 0, 0], expected, atol=1e-13)
    assert out.values[0, 0, 0] == 0.0


def test_convolve_exponentials():
    g = default_grid()
    t = g.nodes
    gs = SampledMatrixFunction(g, np.exp(-t)[:, None, None] * np.eye(1))
    out = convolve(MatrixKernel.scalar(Exponential(1.0)), gs)
    assert np.max(np.abs(out.values[:, 0, 0] - t * np.exp(-t))) < 5e-3


def test_convolve_dimension_mismatch():
    with pytest.raises(DomainError):
        convolve(MatrixKernel.scalar(PowerLaw(0.5)), _const(make_grid(1.0, 4, 1)))


def test_measure_unit_atom_is_identity():
    g = make_grid(1.0, 16, 2)
    vals = np.random.default_rng(0).standard_normal((17, 2, 2))
    out = convolve_measure(MeasureFn(np.eye(2)), SampledMatrixFunction(g, vals))
    np.testing.assert_array_equal(out.values, vals)


def test_measure_without_atom_matches_convolve():
    g = make_grid(1.0, 32, 2)
    k = MatrixKernel.single(np.eye(2), PowerLaw(0.5))
    f = _const(g)
    a = convolve_measure(MeasureFn(np.zeros((2, 2)), k), f)
    np.testing.assert_allclose(a.values, convolve(k, f).values, atol=1e-15)


def test_measure_atom_plus_constant_density():
    g = make_grid(1.0, 32, 2)
    m = MeasureFn(np.eye(2), MatrixKernel.single(np.eye(2), Exponential(0.0)))
    out = convolve_measure(m, _const(g))
    np.testing.assert_allclose(out.values, (1 + g.nodes)[:, None, None] * np.eye(2), atol=1e-14)


def test_cumulative_integral_of_constant():
    g = make_grid(2.0, 10, 2)
    np.testing.assert_allclose(cumulative_integral(_const(g))[:, 1, 1], g.nodes, atol=1e-15)


def test_product_weights_rows_sum_to_antiderivative():
    g = make_grid(1.0, 20, 2)
    k = MatrixKernel.single(np.array([[2.0, 0.5], [0.5, 1.0]]), PowerLaw(0.3))
    w = ProductWeights(k, g)
    for i in (1, 7, 20):
        np.testing.assert_allclose(w.row(i).sum(axis=0), k.antiderivative(g.nodes[i]), rtol=1e-13)
        np.testing.assert_allclose(w.row(i)[-1], w.diagonal(i))


def test_sampled_kernel_matches_closed_form_weights():
    g = make_grid(1.0, 40, 2)
    k = MatrixKernel.scalar(Exponential(1.0))
    sk = SampledKernel(g.nodes, k.antiderivative(g.nodes))
    w_exact, w_sampled = ProductWeights(k, g), ProductWeights(sk, g)
    np.testing.assert_allclose(w_sampled.row(40), w_exact.row(40), atol=1e-7)
    assert float(sk(np.array([0.5]))[0, 0, 0]) == pytest.approx(math.exp(-0.5), rel=1e-6)


def test_sampled_kernel_range_checked():
    sk = SampledKernel(np.array([0.0, 0.5, 1.0]), np.zeros((3, 1, 1)), linear=True)
    with pytest.raises(DomainError):
        sk.antiderivative(2.0)


def test_convolve_pair_exponential_closed_form():
    k = MatrixKernel.scalar(Exponential(1.0))
    t = np.array([0.5, 1.0, 3.0])
    np.testing.assert_allclose(convolve_pair(k, k, t)[:, 0, 0], t * np.exp(-t), rtol=1e-13)


def test_convolve_pair_power_laws_beta_function():
    k, l = MatrixKernel.scalar(PowerLaw(0.3)), MatrixKernel.scalar(PowerLaw(0.6))
    t = np.array([0.01, 1.0, 4.0])
    np.testing.assert_allclose(convolve_pair(k, l, t)[:, 0, 0], t**-0.1 / math.gamma(0.9), rtol=1e-11)


def test_convolve_interpolated_power_law_exact_samples():
    g = default_grid()
    k = MatrixKernel.scalar(PowerLaw(0.5))
    vals = np.concatenate([np.full((1, 1, 1), np.nan), k(g.nodes[1:])])
    out = convolve_interpolated(k, SampledMatrixFunction(g, vals, singular=True))
    np.testing.assert_allclose(out[1:, 0, 0], 1.0, atol=1e-8)


def test_sampled_function_rejects_wrong_length():
    with pytest.raises(DomainError):
        SampledMatrixFunction(make_grid(1.0, 4, 1), np.zeros((3, 1, 1)))
