import warnings

import numpy as np
import pytest
import scipy.linalg

from nmlmg import embedding as em, heom, spin_algebra as sa
from nmlmg.model import ModelParams

FIG2 = ModelParams(V=1.25, h=1.0, gamma=10.0, kappa=10.0, omega=10.0, N=2)
GENERIC = ModelParams(V=0.7, h=1.0, gamma=3.0, kappa=1.5, omega=2.0, N=3)


def test_decoupled_hamiltonian_is_a_tensor_sum():
    p = GENERIC.with_(gamma=0.0)
    E = em.build_embedding(p, 5)
    Hs = sa.lmg_hamiltonian(sa.build(3), p.V, p.h).toarray()
    b = em.destroy(5).toarray()
    expected = np.kron(Hs, np.eye(6)) + p.omega * np.kron(np.eye(4), b.conj().T @ b)
    np.testing.assert_allclose(E.H.toarray(), expected, atol=1e-14)


def test_hamiltonian_is_real_symmetric_and_trace_preserved():
    E = em.build_embedding(GENERIC, 6)
    H = E.H.toarray()
    assert np.all(H.imag == 0)
    np.testing.assert_array_equal(H, H.T)
    vec_id = np.eye(E.dim).ravel()
    assert np.max(np.abs(E.L_super.T @ vec_id)) < 1e-12


def test_unique_steady_state_dense():
    E = em.build_embedding(FIG2, 6)
    s = scipy.linalg.svdvals(E.L_super.toarray())
    assert s[-1] < 1e-12 * s[0] and s[-2] > 1e-6 * s[0]


def test_steady_state_has_no_coherence():
    E = em.build_embedding(GENERIC, 8)
    rho, rho_s = em.steady_state_embedding(E)
    for op in (E.a, E.Sx, E.Sy):
        assert abs(np.trace(op @ rho)) < 1e-12
    assert abs(np.trace(rho_s) - 1) < 1e-13
    np.testing.assert_array_equal(rho_s, rho_s.conj().T)


def test_markovian_limit():
    p = ModelParams(V=0.5, h=1.0, gamma=2.0, kappa=500.0, omega=1.0, N=3)
    _, rho_s = em.steady_state_embedding(em.build_embedding(p, 4))
    assert em.trace_distance(rho_s, np.eye(4) / 4) < 1e-2


def test_weak_coupling_vacuum():
    occ = []
    for g in (1e-1, 1e-2, 1e-3):
        E = em.build_embedding(GENERIC.with_(gamma=g), 6)
        rho, _ = em.steady_state_embedding(E)
        occ.append(np.trace(E.a.conj().T @ E.a @ rho).real)
    assert occ[0] > occ[1] > occ[2] and occ[2] < 1e-3


def test_cutoff_guard():
    p = ModelParams(V=-5.0, h=1.0, gamma=200.0, kappa=1.0, omega=1.0, N=2)
    with pytest.raises(em.CutoffTooSmallError):
        em.steady_state_embedding(em.build_embedding(p, 3))


def test_capacity_guard():
    with pytest.raises(heom.CapacityError):
        em.build_embedding(GENERIC.with_(N=40), 40)


def test_cutoff_escalation_converges():
    rho_s, n = em.converged_steady_state(GENERIC, n_max=4)
    _, ref = em.steady_state_embedding(em.build_embedding(GENERIC, n + 8))
    assert em.trace_distance(rho_s, ref) < 1e-7


def _act(M, op, S):
    return S.matrix(M @ S.coords(op))


def test_flip_actions_on_operators():
    E = em.build_embedding(GENERIC, 4)
    S = em.build_symmetries(E)
    ops = {"Sx": E.Sx.toarray(), "Sy": E.Sy.toarray(), "Sz": E.Sz.toarray(),
           "x": (E.a + E.a.conj().T).toarray()}
    expected_I = {"Sx": -1, "Sy": 1, "Sz": 1, "x": -1}
    expected_III = {"Sx": 1, "Sy": -1, "Sz": 1, "x": 1}
    for name, op in ops.items():
        np.testing.assert_allclose(_act(S.T_I, op, S), expected_I[name] * op, atol=1e-14)
        np.testing.assert_allclose(_act(S.T_III, op, S), expected_III[name] * op, atol=1e-14)
    np.testing.assert_array_equal(S.U_super @ S.U_super, np.eye(len(S.U_super)))


@pytest.mark.parametrize("p", [GENERIC, GENERIC.with_(gamma=0.0), GENERIC.with_(V=-2.0, omega=-1.0)])
def test_symmetry_algebra(p):
    rep = em.verify_symmetry_algebra(em.build_embedding(p, 4))
    assert len(rep) == 10
    for r in rep:
        assert r["pass"], r


def test_dissipator_alone_commutes_with_flips():
    E = em.build_embedding(GENERIC, 4)
    S = em.build_symmetries(E)
    D = S.real_rep(E.D_super)
    for T in (S.T_I, S.T_III):
        assert np.linalg.norm(D @ T - T @ D) < 1e-12 * np.linalg.norm(D)


def test_symmetry_check_reports_violations():
    E = em.build_embedding(GENERIC, 4)
    S = em.build_symmetries(E)
    # a sign-flipped U breaks the product relation
    bad = em.SymmetryMaps(S.basis, -S.U_super, S.T_I, S.T_III)
    rep = {r["identity"]: r for r in em.verify_symmetry_algebra(E, bad)}
    assert not rep["T_I T_III = U"]["pass"] and rep["T_I T_III = U"]["norm"] > 1


def test_symmetry_check_is_dense_only():
    with pytest.raises(heom.CapacityError):
        em.verify_symmetry_algebra(em.build_embedding(GENERIC.with_(N=9), 4))


def test_symmetric_phase_decomposition():
    rho = np.diag([0.4, 0.3, 0.2, 0.1]).astype(complex)
    d = em.dssb_decomposition(rho, rho, em.spin_symmetries(3))
    assert d.broken == "none" and d.c == 0 and d.d == 0 and d.b == 0


def test_inconsistent_branches_rejected():
    S = em.spin_symmetries(2)
    rng = np.random.default_rng(1)
    A = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    A = A + A.conj().T
    with pytest.raises(em.InconsistentBranchError):
        em.dssb_decomposition(A, A + np.eye(3), S)
    with pytest.raises(em.InconsistentBranchError):
        em.dssb_decomposition(A, -A, S)


@pytest.mark.slow
def test_spin_reduced_branches_break_T_I_in_phase_I():
    p = ModelParams(V=-5.0, h=1.0, gamma=10.0, kappa=10.0, omega=10.0, N=12)
    br = heom.branches(heom.build_liouvillian(p, 8))
    assert br.formed
    d = em.dssb_decomposition(br.rho_plus, br.rho_minus, em.spin_symmetries(p.N))
    assert d.broken == "T_I"
    assert d.b < 0.05 * d.a and d.c < 0.05 * d.a
    assert abs((d.a**2 + d.b**2) / (d.c**2 + d.d**2) - 1) < 0.05


@pytest.mark.xfail(strict=True, raises=em.InconsistentBranchError,
                   reason="at N=4 the slowest odd mode of the embedding mixes both flips; "
                          "the clean pattern only emerges at larger N on the reduced spin state")
def test_full_space_branches_at_N4():
    E = em.build_embedding(ModelParams(V=-5.0, h=1.0, gamma=10.0, kappa=10.0, omega=10.0, N=4), 6)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rp, rm, _ = em.embedding_branches(E)
    em.dssb_decomposition(rp, rm, em.build_symmetries(E))
