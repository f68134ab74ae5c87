import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nmlmg import spin_algebra as sa


def dense(op):
    return op.toarray()


def test_single_spin_is_half_pauli():
    alg = sa.build(1)
    np.testing.assert_array_equal(dense(alg.Sx), 0.5 * np.array([[0, 1], [1, 0]]))
    np.testing.assert_array_equal(dense(alg.Sz), np.diag([-0.5, 0.5]))


def test_spin_one_ladder():
    alg = sa.build(2)
    np.testing.assert_array_equal(dense(alg.Sz), np.diag([-1.0, 0.0, 1.0]))
    Sp = dense(alg.Splus)
    np.testing.assert_allclose(np.diag(Sp, -1), [np.sqrt(2), np.sqrt(2)], rtol=0, atol=1e-15)
    assert np.count_nonzero(Sp) == 2


@pytest.mark.parametrize("N", [1, 2, 5, 10, 30])
def test_su2_commutators_and_casimir(N):
    alg = sa.build(N)
    X, Y, Z = (dense(o) for o in (alg.Sx, alg.Sy, alg.Sz))
    scale = max(1.0, N / 2) ** 2
    assert np.max(np.abs(X @ Y - Y @ X - 1j * Z)) < 1e-13 * scale
    assert np.max(np.abs(Y @ Z - Z @ Y - 1j * X)) < 1e-13 * scale
    assert np.max(np.abs(Z @ X - X @ Z - 1j * Y)) < 1e-13 * scale
    J = N / 2
    np.testing.assert_allclose(X @ X + Y @ Y + Z @ Z, J * (J + 1) * np.eye(N + 1), atol=1e-12 * scale)


@pytest.mark.parametrize("N", [1, 4, 7])
def test_reality_and_hermiticity(N):
    alg = sa.build(N)
    X, Y, Z = (dense(o) for o in (alg.Sx, alg.Sy, alg.Sz))
    assert np.all(X.imag == 0) and np.all(Z.imag == 0)
    assert np.all(Y.real == 0)
    for M in (X, Y, Z):
        np.testing.assert_array_equal(M, M.conj().T)


@pytest.mark.parametrize("bad", [0, -3, 2.5, True, "4"])
def test_build_rejects_bad_N(bad):
    with pytest.raises(ValueError):
        sa.build(bad)


def test_build_is_bit_reproducible():
    a, b = sa.build(9), sa.build(9)
    for name in ("Sx", "Sy", "Sz", "Splus", "Sminus"):
        A, B = getattr(a, name), getattr(b, name)
        np.testing.assert_array_equal(A.indices, B.indices)
        np.testing.assert_array_equal(A.data, B.data)


def test_coherent_state_poles():
    alg = sa.build(5)
    north = sa.coherent_state(alg, 0.0, 0.3)
    expected = np.zeros(6)
    expected[5] = 1.0
    np.testing.assert_array_equal(np.abs(north), expected)
    south = sa.coherent_state(alg, np.pi, 1.1)
    assert abs(abs(south[0]) - 1) < 1e-15
    assert np.max(np.abs(south[1:])) < 1e-15


def test_coherent_state_on_x_axis():
    alg = sa.build(6)
    psi = sa.coherent_state(alg, np.pi / 2, 0.0)
    assert abs(np.vdot(psi, alg.Sx @ psi) - 3.0) < 1e-12


@settings(max_examples=60, deadline=None)
@given(N=st.integers(1, 40), theta=st.floats(0, np.pi), phi=st.floats(-10, 10))
def test_coherent_state_points_along_its_axis(N, theta, phi):
    alg = sa.build(N)
    psi = sa.coherent_state(alg, theta, phi)
    assert abs(np.linalg.norm(psi) - 1) < 1e-13
    n = np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])
    proj = sum(c * np.vdot(psi, op @ psi).real for c, op in zip(n, (alg.Sx, alg.Sy, alg.Sz)))
    assert abs(proj - N / 2) < 1e-12 * max(1, N)


def test_vectorized_coherent_states_match_scalar():
    alg = sa.build(7)
    th = np.array([[0.1, 1.2], [2.0, 3.0]])
    ph = np.array([[0.0, 4.0], [-1.0, 2.5]])
    many = sa.coherent_states(alg, th, ph)
    for idx in np.ndindex(th.shape):
        np.testing.assert_allclose(many[idx], sa.coherent_state(alg, th[idx], ph[idx]), atol=1e-14)


@pytest.mark.parametrize("N", [1, 6, 11])
def test_parity_is_rotation_by_pi(N):
    from scipy.linalg import expm

    alg = sa.build(N)
    U = expm(1j * np.pi * (dense(alg.Sz) + N / 2 * np.eye(N + 1)))
    np.testing.assert_allclose(U, np.diag(alg.parity()), atol=1e-12)


def test_lmg_hamiltonian_matches_definition():
    alg = sa.build(6)
    H = dense(sa.lmg_hamiltonian(alg, V=0.7, h=1.3))
    X, Y, Z = (dense(o) for o in (alg.Sx, alg.Sy, alg.Sz))
    np.testing.assert_allclose(H, 0.7 / 6 * (X @ X - Y @ Y) + 1.3 * Z, atol=1e-14)
    assert np.all(H.imag == 0)
