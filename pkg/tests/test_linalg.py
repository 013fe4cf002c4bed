import numpy as np
import pytest

from ndeepc.errors import NumericalError
from ndeepc.linalg import matrix_rank, nullspace_basis, pseudo_inverse


def moore_penrose_residuals(m, pinv):
    return max(
        np.max(np.abs(m @ pinv @ m - m)),
        np.max(np.abs(pinv @ m @ pinv - pinv)),
        np.max(np.abs((m @ pinv).T - m @ pinv)),
        np.max(np.abs((pinv @ m).T - pinv @ m)),
    )


def test_pinv_identity():
    assert np.allclose(pseudo_inverse(np.eye(3), 1e-12), np.eye(3))


def test_pinv_zero_matrix():
    assert np.array_equal(pseudo_inverse(np.zeros((2, 3))), np.zeros((3, 2)))


def test_pinv_rank1_diagonal():
    m = np.array([[1.0, 0.0], [0.0, 0.0]])
    assert np.allclose(pseudo_inverse(m), m)


@pytest.mark.parametrize("shape", [(5, 8), (8, 5), (20, 50), (50, 100)])
def test_pinv_moore_penrose_random(shape):
    rng = np.random.default_rng(hash(shape) % 2**32)
    m = rng.standard_normal(shape)
    assert moore_penrose_residuals(m, pseudo_inverse(m)) < 1e-8


def test_pinv_rank_deficient():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((6, 3))
    m = a @ a.T  # rank 3 in R^6x6
    assert moore_penrose_residuals(m, pseudo_inverse(m)) < 1e-8


def test_nullspace_axis_aligned():
    basis = nullspace_basis(np.array([[1.0, 0.0]]))
    assert basis.shape == (2, 1)
    assert np.allclose(np.abs(basis[:, 0]), [0.0, 1.0])


def test_nullspace_full_column_rank():
    assert nullspace_basis(np.eye(2)).shape == (2, 0)


def test_nullspace_hand_solution():
    basis = nullspace_basis(np.array([[1.0, 1.0]]))
    expected = np.array([1.0, -1.0]) / np.sqrt(2.0)
    assert np.allclose(np.abs(basis[:, 0]), np.abs(expected))
    assert abs(abs(basis[:, 0] @ expected) - 1.0) < 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_nullspace_properties_random(seed):
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((7, 15))
    basis = nullspace_basis(m)
    assert basis.shape == (15, 8)
    assert np.max(np.abs(m @ basis)) < 1e-8
    assert np.max(np.abs(basis.T @ basis - np.eye(8))) < 1e-10


def test_rank():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((9, 4))
    assert matrix_rank(a @ a.T) == 4


def test_empty_rejected():
    with pytest.raises(NumericalError):
        pseudo_inverse(np.zeros((0, 3)))
    with pytest.raises(NumericalError):
        nullspace_basis(np.zeros((0, 3)))
