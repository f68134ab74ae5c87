"""Pseudomode Markovian embedding: spins plus one damped bosonic mode.

This is the small-scale oracle for the HEOM solver and the home of the
explicit weak symmetry U and the two antiunitary flips T_I, T_III.

Product basis: Dicke index i (0..N) outer, Fock number n (0..n_max) inner,
flattened as ``i * (n_max + 1) + n``. Superoperators act on row-major
vectorized matrices.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from . import spin_algebra
from .heom import CapacityError, eigs_near_zero, hermitian_phase, replace_row
from .model import ModelParams

DEFAULT_N_MAX = 8
DEFAULT_MAX_SUPER_DIM = 2_000_000
TOP_LEVEL_TOL = 1e-2


class CutoffTooSmallError(RuntimeError):
    pass


class InconsistentBranchError(RuntimeError):
    """Both antiunitary flips appear broken, which no steady-state pair can do."""


def destroy(n_max: int) -> sparse.csr_matrix:
    return sparse.diags(np.sqrt(np.arange(1, n_max + 1)).astype(complex), 1, format="csr")


@dataclass
class EmbeddingSpace:
    params: ModelParams
    n_max: int
    H: sparse.csr_matrix
    a: sparse.csr_matrix
    Sx: sparse.csr_matrix
    Sy: sparse.csr_matrix
    Sz: sparse.csr_matrix
    L_super: sparse.csr_matrix = field(repr=False)
    H_super: sparse.csr_matrix = field(repr=False)
    D_super: sparse.csr_matrix = field(repr=False)

    @property
    def dim(self) -> int:
        return (self.params.N + 1) * (self.n_max + 1)

    @property
    def jump(self) -> sparse.csr_matrix:
        return np.sqrt(self.params.kappa) * self.a

    def parity(self) -> np.ndarray:
        """Diagonal of U = exp(i pi (Sz + N/2 + a^dag a)), with the phase fixed so U is real."""
        i = np.repeat(np.arange(self.params.N + 1), self.n_max + 1)
        n = np.tile(np.arange(self.n_max + 1), self.params.N + 1)
        return np.where((i + n) % 2 == 0, 1.0, -1.0)

    def partial_trace_mode(self, rho: np.ndarray) -> np.ndarray:
        d, f = self.params.N + 1, self.n_max + 1
        return np.einsum("injn->ij", rho.reshape(d, f, d, f))


def _superop(H, jump_ops_rate):
    d = H.shape[0]
    eye = sparse.identity(d, dtype=complex, format="csr")
    Hs = (-1j) * (sparse.kron(H, eye) - sparse.kron(eye, H.T))
    Ds = sparse.csr_matrix((d * d, d * d), dtype=complex)
    for rate, A in jump_ops_rate:
        AdA = (A.conj().T @ A).tocsr()
        Ds = Ds + rate * (2 * sparse.kron(A, A.conj()) - sparse.kron(AdA, eye) - sparse.kron(eye, AdA.T))
    return Hs.tocsr(), Ds.tocsr()


def build_embedding(p: ModelParams, n_max: int = DEFAULT_N_MAX,
                    max_super_dim: int = DEFAULT_MAX_SUPER_DIM) -> EmbeddingSpace:
    """H = H_S + sqrt(gamma kappa / 2N) Sx (a + a^dag) + omega a^dag a with
    dissipator kappa (2 a . a^dag - {a^dag a, .})."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    alg = spin_algebra.build(p.N)
    f = n_max + 1
    dim = alg.dim * f
    if dim * dim > max_super_dim:
        raise CapacityError(f"embedding superoperator dimension {dim * dim} exceeds {max_super_dim}")
    If = sparse.identity(f, dtype=complex, format="csr")
    Is = alg.identity
    b = destroy(n_max)
    a = sparse.kron(Is, b).tocsr()
    Sx = sparse.kron(alg.Sx, If).tocsr()
    Sy = sparse.kron(alg.Sy, If).tocsr()
    Sz = sparse.kron(alg.Sz, If).tocsr()
    Hs = spin_algebra.lmg_hamiltonian(alg, p.V, p.h)
    g = np.sqrt(p.gamma * p.kappa / (2 * p.N))
    H = (sparse.kron(Hs, If) + g * (Sx @ (a + a.conj().T))
         + p.omega * sparse.kron(Is, b.conj().T @ b)).tocsr()
    H_super, D_super = _superop(H, [(p.kappa, a)])
    return EmbeddingSpace(params=p, n_max=n_max, H=H, a=a, Sx=Sx, Sy=Sy, Sz=Sz,
                          L_super=(H_super + D_super).tocsr(), H_super=H_super, D_super=D_super)


def _super_parity(E: EmbeddingSpace) -> np.ndarray:
    u = E.parity()
    return np.outer(u, u).ravel()


def steady_state_embedding(E: EmbeddingSpace, certify: bool = False):
    """Steady state of the embedding and its reduced spin state.

    Returns ``(rho_full, rho_spins)``. With ``certify`` the computation is
    repeated at ``n_max + 4`` and the <Sz> shift is reported via a warning if
    it exceeds 1e-8.
    """
    if E.params.gamma <= 0:
        raise ValueError("steady_state_embedding requires gamma > 0")
    dim = E.dim
    # restricting to the even sector halves the solve
    even = np.flatnonzero(_super_parity(E) > 0)
    L0 = E.L_super.tocsr()[even][:, even]
    diag = np.arange(dim) * (dim + 1)
    pos = np.searchsorted(even, diag)
    A = replace_row(L0, pos[0], pos)
    rhs = np.zeros(len(even), dtype=complex)
    rhs[pos[0]] = 1.0
    x = spla.spsolve(A, rhs)
    vec = np.zeros(dim * dim, dtype=complex)
    vec[even] = x
    rho = vec.reshape(dim, dim)
    rho = 0.5 * (rho + rho.conj().T)
    rho /= np.trace(rho).real
    occ = float(np.trace((E.a.conj().T @ E.a) @ rho).real)
    if occ > 0.5 * E.n_max:
        raise CutoffTooSmallError(f"<a^dag a> = {occ:.3g} exceeds half the Fock cutoff {E.n_max}")
    # truncation also caps <a^dag a>, so weight piled on the last level is the sharper signal
    f = E.n_max + 1
    top = float(np.einsum("ii->", rho.reshape(E.params.N + 1, f, E.params.N + 1, f)[:, -1, :, -1]).real)
    if top > TOP_LEVEL_TOL:
        raise CutoffTooSmallError(f"population {top:.3g} on the top Fock level n={E.n_max}")
    rho_s = E.partial_trace_mode(rho)
    if certify:
        E2 = build_embedding(E.params, E.n_max + 4)
        _, rho_s2 = steady_state_embedding(E2)
        alg = spin_algebra.build(E.params.N)
        shift = abs(np.trace(alg.Sz @ (rho_s2 - rho_s)).real)
        if shift > 1e-8:
            warnings.warn(f"Fock cutoff not converged: <Sz> shifts by {shift:.2e}", RuntimeWarning)
    return rho, rho_s


def converged_steady_state(p: ModelParams, n_max: int = DEFAULT_N_MAX, tol: float = 1e-8,
                           step: int = 4, n_max_limit: int = 80):
    """Escalate the Fock cutoff until the reduced state moves by less than ``tol``
    (trace distance). Returns ``(rho_spins, n_max_used)``."""
    prev = None
    n = n_max
    while n <= n_max_limit:
        try:
            _, rho_s = steady_state_embedding(build_embedding(p, n))
        except CutoffTooSmallError:
            n += step
            continue
        if prev is not None and trace_distance(prev, rho_s) < tol:
            return rho_s, n
        prev = rho_s
        n += step
    raise CutoffTooSmallError(f"no convergence up to n_max={n_max_limit}")


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    diff = rho - sigma
    return 0.5 * float(np.abs(np.linalg.eigvalsh(0.5 * (diff + diff.conj().T))).sum())


# --- antiunitary flips on Hermitian matrices -----------------------------------------

def hermitian_basis(dim: int) -> np.ndarray:
    """Columns are vec(E_k) for the orthonormal Hermitian basis
    {E_ii; (E_ij + E_ji)/sqrt2; i(E_ij - E_ji)/sqrt2}, i < j."""
    B = np.zeros((dim * dim, dim * dim), dtype=complex)
    k = 0
    for i in range(dim):
        B[i * dim + i, k] = 1.0
        k += 1
    r = 1 / np.sqrt(2)
    for i in range(dim):
        for j in range(i + 1, dim):
            B[i * dim + j, k] = r
            B[j * dim + i, k] = r
            B[i * dim + j, k + 1] = 1j * r
            B[j * dim + i, k + 1] = -1j * r
            k += 2
    return B


@dataclass
class SymmetryMaps:
    basis: np.ndarray = field(repr=False)  # vec(E_k) columns
    U_super: np.ndarray = field(repr=False)  # real representation
    T_I: np.ndarray = field(repr=False)
    T_III: np.ndarray = field(repr=False)

    def real_rep(self, S) -> np.ndarray:
        """Real matrix of a Hermiticity-preserving complex-linear superoperator."""
        S = S.toarray() if sparse.issparse(S) else np.asarray(S)
        R = self.basis.conj().T @ S @ self.basis
        return R.real

    def coords(self, rho: np.ndarray) -> np.ndarray:
        return (self.basis.conj().T @ np.asarray(rho).ravel()).real

    def matrix(self, coords: np.ndarray) -> np.ndarray:
        dim = int(round(np.sqrt(len(coords))))
        return (self.basis @ coords).reshape(dim, dim)


def symmetry_maps_for_parity(u: np.ndarray) -> SymmetryMaps:
    """Flips for a real diagonal parity ``u``: U[rho] = U rho U^dag,
    T_III[rho] = rho^*, T_I[rho] = U rho^* U^dag.

    All three are diagonal with entries +-1 in the Hermitian basis, so they are
    assembled exactly instead of by projecting.
    """
    u = np.asarray(u, dtype=float)
    dim = len(u)
    B = hermitian_basis(dim)
    iu, ju = np.triu_indices(dim, 1)
    sign_U = np.concatenate([np.ones(dim), np.repeat(u[iu] * u[ju], 2)])
    # conjugation fixes E_ii and the symmetric combinations, negates the antisymmetric ones
    sign_III = np.concatenate([np.ones(dim), np.tile([1.0, -1.0], len(iu))])
    return SymmetryMaps(basis=B, U_super=np.diag(sign_U), T_I=np.diag(sign_U * sign_III),
                        T_III=np.diag(sign_III))


def build_symmetries(E: EmbeddingSpace) -> SymmetryMaps:
    return symmetry_maps_for_parity(E.parity())


def spin_symmetries(N: int) -> SymmetryMaps:
    """The same flips restricted to the collective spin (pseudomode traced out)."""
    return symmetry_maps_for_parity(spin_algebra.build(N).parity())


def _rel(X, *scale) -> float:
    s = np.prod([max(np.linalg.norm(m), 1e-300) for m in scale]) if scale else 1.0
    return float(np.linalg.norm(X) / s)


def verify_symmetry_algebra(E: EmbeddingSpace, S: SymmetryMaps | None = None,
                            tol: float = 1e-12) -> list[dict]:
    """Dense check of the commutation relations between L, U and the two flips."""
    if E.dim > 40:
        raise CapacityError("symmetry algebra check is dense; keep (N+1)(n_max+1) <= 40")
    S = S or build_symmetries(E)
    L = S.real_rep(E.L_super)
    Hs = S.real_rep(E.H_super)
    Ds = S.real_rep(E.D_super)
    U, TI, TIII = S.U_super, S.T_I, S.T_III
    eye = np.eye(len(U))
    checks = [
        ("[L_M, U] = 0", L @ U - U @ L, (L, U)),
        ("{H, T_I} = 0", Hs @ TI + TI @ Hs, (Hs, TI)),
        ("{H, T_III} = 0", Hs @ TIII + TIII @ Hs, (Hs, TIII)),
        ("[D, T_I] = 0", Ds @ TI - TI @ Ds, (Ds, TI)),
        ("[D, T_III] = 0", Ds @ TIII - TIII @ Ds, (Ds, TIII)),
        ("[T_I, T_III] = 0", TI @ TIII - TIII @ TI, (TI, TIII)),
        ("T_I T_III = U", TI @ TIII - U, (U,)),
        ("T_I^2 = 1", TI @ TI - eye, (eye,)),
        ("T_III^2 = 1", TIII @ TIII - eye, (eye,)),
        ("U^2 = 1", U @ U - eye, (eye,)),
    ]
    report = []
    for name, X, scale in checks:
        norm = _rel(X, *scale)
        report.append({"identity": name, "norm": norm, "pass": bool(norm <= tol),
                       "dims": {"N": E.params.N, "n_max": E.n_max, "hilbert": E.dim}})
    return report


def report_json(report: list[dict]) -> str:
    return json.dumps(report, indent=2)


# --- symmetry-broken branches of the embedding --------------------------------------

def embedding_branches(E: EmbeddingSpace):
    """rho_+- = rho_0^(0) +- rho_0^(1) on the full spin+mode space.

    rho_0^(1) is the slowest odd-sector eigenoperator, phase-fixed to be
    Hermitian and scaled to the Hilbert-Schmidt norm of rho_0^(0). Returns
    ``(rho_plus, rho_minus, lambda_0^(1))``.
    """
    rho0, _ = steady_state_embedding(E)
    par = _super_parity(E)
    odd = np.flatnonzero(par < 0)
    L1 = E.L_super.tocsr()[odd][:, odd]
    spec = eigs_near_zero(L1, 1, "dense" if len(odd) <= 3000 else "shift-invert",
                          kappa=E.params.kappa, sector=1)
    vec = np.zeros(E.dim**2, dtype=complex)
    vec[odd] = spec.eigenvectors[:, 0]
    rho1 = hermitian_phase(vec.reshape(E.dim, E.dim))
    rho1 *= np.linalg.norm(rho0) / np.linalg.norm(rho1)
    sx = np.trace(E.Sx @ rho1).real
    sy = np.trace(E.Sy @ rho1).real
    if (sx if abs(sx) > abs(sy) else sy) < 0:
        rho1 = -rho1
    return rho0 + rho1, rho0 - rho1, spec.eigenvalues[0]


@dataclass
class DSSBDecomposition:
    a: float
    b: float
    c: float
    d: float
    broken: str  # "T_I", "T_III" or "none"


def dssb_decomposition(rho_plus, rho_minus, S: SymmetryMaps, tol: float = 0.05) -> DSSBDecomposition:
    """Project rho_+ onto the joint (alpha_I, alpha_III) eigenspaces of the flips.

    Coefficients are Hilbert-Schmidt norms of the projections:
    a -> (+,+), b -> (-,-), c -> (+,-), d -> (-,+). Phase I breaks T_I
    (b = c = 0), phase III breaks T_III (b = d = 0); in the symmetric phase
    rho_+ = rho_- and only the U-even part survives.
    """
    n = len(S.U_super)
    eye = np.eye(n)
    rp = S.coords(rho_plus)
    rm = S.coords(rho_minus)

    def proj(ai, aiii, v):
        return 0.25 * (eye + ai * S.T_I) @ ((eye + aiii * S.T_III) @ v)

    a = np.linalg.norm(proj(1, 1, rp))
    b = np.linalg.norm(proj(-1, -1, rp))
    c = np.linalg.norm(proj(1, -1, rp))
    d = np.linalg.norm(proj(-1, 1, rp))
    # the U-even part must agree between the two branches
    even_mismatch = np.linalg.norm(proj(1, 1, rp - rm)) + np.linalg.norm(proj(-1, -1, rp - rm))
    if even_mismatch > 1e-8 * max(a, 1e-300):
        raise InconsistentBranchError("rho_+ and rho_- differ in their U-even part")
    scale = tol * a
    if c <= scale and d <= scale:
        broken = "none"
    elif b <= scale and c <= scale:
        broken = "T_I"
    elif b <= scale and d <= scale:
        broken = "T_III"
    else:
        raise InconsistentBranchError(
            f"both flips broken beyond tolerance: a={a:.3g} b={b:.3g} c={c:.3g} d={d:.3g}")
    return DSSBDecomposition(a, b, c, d, broken)
