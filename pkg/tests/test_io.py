import numpy as np
import pytest

from soninekit import io
from soninekit.errors import DomainError
from soninekit.quadconv import make_grid


def test_csv_round_trip_matrix_with_singular_start():
    g = make_grid(1.0, 8, 2)
    rng = np.random.default_rng(0)
    a = rng.standard_normal((9, 2, 2))
    vals = a + np.swapaxes(a, 1, 2)
    vals[0] = np.nan
    text = io.samples_to_csv(g.nodes, vals)
    assert text.splitlines()[0] == "t,m11,m12,m22"
    grid, back, singular = io.read_csv_samples(text)
    assert singular and grid.gamma == 2.0
    np.testing.assert_array_equal(grid.nodes, g.nodes)
    np.testing.assert_array_equal(back[1:], vals[1:])


def test_csv_vector_round_trip_is_exact():
    g = make_grid(1.0, 5, 1)
    vals = np.column_stack([np.sqrt(g.nodes), 1 / 3 + g.nodes])
    text = io.samples_to_csv(g.nodes, vals)
    assert text.splitlines()[0] == "t,v1,v2"
    _, back, singular = io.read_csv_samples(text)
    assert not singular
    np.testing.assert_array_equal(back, vals)


@pytest.mark.parametrize("text", ["", "x,y\n1,2\n", "t,m11\n0,1\n0.5\n", "t,m11\n0,a\n"])
def test_malformed_csv(text):
    with pytest.raises(DomainError):
        io.read_csv_samples(text)


def test_parse_matrix_forms():
    np.testing.assert_array_equal(io.parse_matrix([[1, 0], [0, 2]]), np.diag([1.0, 2.0]))
    np.testing.assert_array_equal(io.parse_matrix({"scalar": 2.0}, 3), 2 * np.eye(3))
    np.testing.assert_array_equal(io.parse_matrix({"matrix": [[1.0]]}), np.eye(1))
    assert io.parse_matrix({"tensor21": list(range(1, 22))}).shape == (6, 6)
    with pytest.raises(DomainError):
        io.parse_matrix([[1, 2], [3, 4]], 3)
    with pytest.raises(DomainError):
        io.parse_matrix([1, 2])
    with pytest.raises(DomainError):
        io.parse_matrix([["a"]])
    with pytest.raises(DomainError):
        io.parse_matrix({"scalar": 1.0})


def test_missing_file_is_os_error(tmp_path):
    with pytest.raises(OSError):
        io.read_text(tmp_path / "nope.csv")


def test_bad_json(tmp_path):
    p = tmp_path / "k.json"
    p.write_text("{not json")
    with pytest.raises(DomainError):
        io.read_json(p)
