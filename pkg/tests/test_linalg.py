import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from drls.linalg import as_matrix, bdiag, kron, pinv, spectral_radius, unvec, vec


def _rng_matrices(seed, shapes):
    rng = np.random.default_rng(seed)
    return [rng.standard_normal(s) for s in shapes]


def test_as_matrix_rejects_wrong_rank():
    with pytest.raises(ValueError, match="2-D"):
        as_matrix(np.zeros(3))


def test_as_matrix_rejects_non_finite():
    with pytest.raises(ValueError, match="non-finite"):
        as_matrix(np.array([[1.0, np.nan], [0.0, 1.0]]))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_kron_mixed_product(seed):
    """(A kron B)(C kron D) = (AC) kron (BD)."""
    a, b, c, d = _rng_matrices(seed, [(2, 3), (3, 2), (3, 2), (2, 4)])
    assert_allclose(kron(a, b) @ kron(c, d), kron(a @ c, b @ d), atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 5), st.integers(1, 5))
def test_pinv_penrose_conditions(seed, n, m):
    (a,) = _rng_matrices(seed, [(n, m)])
    ap = pinv(a)
    assert_allclose(a @ ap @ a, a, atol=1e-8)
    assert_allclose(ap @ a @ ap, ap, atol=1e-8)
    assert_allclose((a @ ap).T, a @ ap, atol=1e-8)
    assert_allclose((ap @ a).T, ap @ a, atol=1e-8)


def test_pinv_of_two_node_laplacian():
    """The complete-graph Laplacian on two nodes pseudo-inverts to L/4."""
    lap = np.array([[1.0, -1.0], [-1.0, 1.0]])
    assert_allclose(pinv(lap), lap / 4.0, atol=1e-12)


def test_vec_unvec_roundtrip():
    m = np.arange(12, dtype=float).reshape(3, 4)
    assert_allclose(unvec(vec(m), 3, 4), m)


def test_vec_is_column_stacking():
    m = np.array([[1.0, 3.0], [2.0, 4.0]])
    assert_allclose(vec(m), [1.0, 2.0, 3.0, 4.0])


def test_vec_identity_for_triple_products():
    """vec(R S T) = (T^T kron R) vec(S), the basis of the Lyapunov solve."""
    rng = np.random.default_rng(7)
    r, s, t = rng.standard_normal((3, 4, 4))
    assert_allclose(vec(r @ s @ t), kron(t.T, r) @ vec(s), atol=1e-12)


def test_unvec_rejects_bad_length():
    with pytest.raises(ValueError, match="unvec"):
        unvec(np.zeros(5), 2, 3)


def test_spectral_radius_known_values():
    assert spectral_radius(np.diag([0.3, -0.9])) == pytest.approx(0.9)
    # nilpotent: all eigenvalues zero regardless of entries
    assert spectral_radius(np.array([[0.0, 5.0], [0.0, 0.0]])) == pytest.approx(0.0)
    # rotation: complex pair on the unit circle
    assert spectral_radius(np.array([[0.0, -1.0], [1.0, 0.0]])) == pytest.approx(1.0)


def test_spectral_radius_similarity_invariant():
    rng = np.random.default_rng(11)
    a = rng.standard_normal((5, 5))
    q, _ = np.linalg.qr(rng.standard_normal((5, 5)))
    assert spectral_radius(q @ a @ q.T) == pytest.approx(spectral_radius(a), rel=1e-9)


def test_spectral_radius_requires_square():
    with pytest.raises(ValueError, match="square"):
        spectral_radius(np.zeros((2, 3)))


def test_bdiag_layout():
    out = bdiag([np.eye(2), 3.0 * np.ones((1, 1))])
    expected = np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 3.0]])
    assert_allclose(out, expected)


def test_bdiag_rejects_empty():
    with pytest.raises(ValueError, match="at least one"):
        bdiag([])
