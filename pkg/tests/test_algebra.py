import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bvlimit import SpdMatrix, eig_sym, q_inv_norm, q_norm, spd_from_entries
from bvlimit.errors import DimensionMismatch, NotPositiveDefinite, NotSymmetric


def random_spd(rng, dim, scale=1.0):
    m = rng.standard_normal((dim, dim))
    return spd_from_entries(dim, scale * (m @ m.T) + dim * np.eye(dim))


def test_identity_1x1():
    q = spd_from_entries(1, [1.0])
    assert q.eigenvalues[0] == pytest.approx(1.0)


def test_damping_quarter():
    q = spd_from_entries(1, [0.25])
    assert q.eigenvalues[0] == pytest.approx(0.25)
    assert q.q_norm([1.0]) == pytest.approx(0.5)


def test_indefinite_rejected():
    with pytest.raises(NotPositiveDefinite):
        spd_from_entries(2, [1.0, 2.0, 2.0, 1.0])  # eigenvalues 3, -1


def test_asymmetric_rejected():
    with pytest.raises(NotSymmetric):
        spd_from_entries(2, [[1.0, 0.5], [0.1, 1.0]])


def test_near_symmetric_absorbed():
    base = np.array([[2.0, 0.3], [0.3, 1.0]])
    noisy = base.copy()
    noisy[0, 1] += 1e-14
    q = spd_from_entries(2, noisy)
    assert np.allclose(q.entries, q.entries.T)


def test_q_norm_values():
    assert q_norm(spd_from_entries(1, [4.0]), [1.0]) == pytest.approx(2.0)
    assert q_inv_norm(spd_from_entries(1, [4.0]), [1.0]) == pytest.approx(0.5)
    assert q_inv_norm(spd_from_entries(1, [0.25]), [1.0]) == pytest.approx(2.0)


def test_euclidean_special_case(rng):
    q = SpdMatrix.identity(3)
    z = rng.standard_normal(3)
    assert q_norm(q, z) == pytest.approx(np.linalg.norm(z))
    assert q_inv_norm(q, z) == pytest.approx(np.linalg.norm(z))


def test_dimension_mismatch():
    q = SpdMatrix.identity(2)
    with pytest.raises(DimensionMismatch):
        q.q_norm([1.0, 2.0, 3.0])


def test_eig_sym_diagonal():
    w, v = eig_sym(np.diag([3.0, 1.0]))
    assert np.allclose(w, [1.0, 3.0])
    assert np.allclose(np.abs(v), np.eye(2)[:, ::-1])


def test_eig_sym_reconstruction(rng):
    m = rng.standard_normal((4, 4))
    sym = 0.5 * (m + m.T)
    w, v = eig_sym(sym)
    assert np.abs((v * w) @ v.T - sym).max() < 1e-10
    assert np.abs(v.T @ v - np.eye(4)).max() < 1e-10


def test_eig_sym_rejects_nonsymmetric(rng):
    with pytest.raises(NotSymmetric):
        eig_sym(rng.standard_normal((3, 3)))


@given(seed=st.integers(0, 10_000), dim=st.integers(1, 5))
@settings(max_examples=80, deadline=None)
def test_pairing_bounds(seed, dim):
    """|<z1,z2>| <= |z1|_{Q^-1} |z2|_Q <= (|z1|_{Q^-1}^2 + |z2|_Q^2)/2."""
    rng = np.random.default_rng(seed)
    q = random_spd(rng, dim)
    z1 = rng.standard_normal(dim)
    z2 = rng.standard_normal(dim)
    inner = abs(float(z1 @ z2))
    prod = q.q_inv_norm(z1) * q.q_norm(z2)
    assert inner <= prod * (1 + 1e-10) + 1e-12
    assert prod <= 0.5 * (q.q_inv_norm(z1) ** 2 + q.q_norm(z2) ** 2) * (1 + 1e-10) + 1e-12


@given(seed=st.integers(0, 10_000), dim=st.integers(1, 5))
@settings(max_examples=80, deadline=None)
def test_expansion_identity(seed, dim):
    """|z1 + Q z2|_{Q^-1}^2 = |z1|_{Q^-1}^2 + 2 <z1,z2> + |z2|_Q^2."""
    rng = np.random.default_rng(seed)
    q = random_spd(rng, dim)
    z1 = rng.standard_normal(dim)
    z2 = rng.standard_normal(dim)
    lhs = q.q_inv_norm(z1 + q.matvec(z2)) ** 2
    rhs = q.q_inv_norm(z1) ** 2 + 2 * float(z1 @ z2) + q.q_norm(z2) ** 2
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)


@given(seed=st.integers(0, 10_000), dim=st.integers(1, 5))
@settings(max_examples=50, deadline=None)
def test_principal_root_norm(seed, dim):
    rng = np.random.default_rng(seed)
    q = random_spd(rng, dim)
    z = rng.standard_normal(dim)
    assert q.q_norm(z) == pytest.approx(np.linalg.norm(q.sqrt() @ z), abs=1e-10, rel=1e-10)


def test_factorization_reproduces(rng):
    q = random_spd(rng, 6)
    recon = (q.eigenvectors * q.eigenvalues) @ q.eigenvectors.T
    assert np.abs(recon - q.entries).max() < 1e-10 * np.abs(q.entries).max()
