"""Collective spin operators in the symmetric (Dicke) sector of N spin-1/2.

Basis index ``i`` in ``0..N`` labels ``|J=N/2, M=i-N/2>``, so index 0 is the
south pole ``M=-J`` and index ``N`` the north pole ``M=+J``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.special import gammaln


@dataclass(frozen=True)
class SpinAlgebra:
    N: int
    Sx: sparse.csr_matrix
    Sy: sparse.csr_matrix
    Sz: sparse.csr_matrix
    Splus: sparse.csr_matrix
    Sminus: sparse.csr_matrix

    @property
    def dim(self) -> int:
        return self.N + 1

    @property
    def J(self) -> float:
        return self.N / 2

    @property
    def identity(self) -> sparse.csr_matrix:
        return sparse.identity(self.dim, dtype=complex, format="csr")

    def parity(self) -> np.ndarray:
        """Diagonal of exp(i*pi*(Sz + N/2)), i.e. (-1)**i."""
        return np.where(np.arange(self.dim) % 2 == 0, 1.0, -1.0)


def build(N: int) -> SpinAlgebra:
    """Build Sx, Sy, Sz, S+ and S- for ``N`` spins in the Dicke basis."""
    if isinstance(N, bool) or not isinstance(N, (int, np.integer)) or N < 1:
        raise ValueError(f"N must be a positive integer, got {N!r}")
    N = int(N)
    J = N / 2
    M = np.arange(N + 1) - J
    # S+ |M> = sqrt(J(J+1) - M(M+1)) |M+1>, stored on the subdiagonal (row i+1, col i)
    up = np.sqrt(J * (J + 1) - M[:-1] * (M[:-1] + 1))
    rows = np.arange(1, N + 1)
    cols = np.arange(N)
    Splus = sparse.csr_matrix((up.astype(complex), (rows, cols)), shape=(N + 1, N + 1))
    Sminus = sparse.csr_matrix((up.astype(complex), (cols, rows)), shape=(N + 1, N + 1))
    Sx = ((Splus + Sminus) * 0.5).tocsr()
    Sy = ((Splus - Sminus) * (-0.5j)).tocsr()
    Sz = sparse.diags(M.astype(complex), format="csr")
    for op in (Sx, Sy, Sz, Splus, Sminus):
        op.sort_indices()
    return SpinAlgebra(N=N, Sx=Sx, Sy=Sy, Sz=Sz, Splus=Splus, Sminus=Sminus)


def coherent_state(alg: SpinAlgebra, theta: float, phi: float) -> np.ndarray:
    """Spin coherent state pointing along (sin t cos p, sin t sin p, cos t).

    |theta, phi> = sum_k sqrt(C(N,k)) cos^(N-k)(theta/2) sin^k(theta/2) e^{ik phi} |J, J-k>
    """
    N = alg.N
    k = np.arange(N + 1)
    c = np.cos(theta / 2)
    s = np.sin(theta / 2)
    log_binom = 0.5 * (gammaln(N + 1) - gammaln(k + 1) - gammaln(N - k + 1))
    # powers handled directly; 0**0 == 1 keeps the poles exact
    amp = np.exp(log_binom) * c ** (N - k) * s**k * np.exp(1j * k * phi)
    psi = np.zeros(N + 1, dtype=complex)
    psi[N - k] = amp  # |J, J-k> sits at index N-k
    return psi / np.linalg.norm(psi)


def coherent_states(alg: SpinAlgebra, theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Vectorized coherent states; returns an array of shape theta.shape + (N+1,)."""
    N = alg.N
    theta = np.asarray(theta, dtype=float)[..., None]
    phi = np.asarray(phi, dtype=float)[..., None]
    k = np.arange(N + 1)
    log_binom = 0.5 * (gammaln(N + 1) - gammaln(k + 1) - gammaln(N - k + 1))
    amp = np.exp(log_binom) * np.cos(theta / 2) ** (N - k) * np.sin(theta / 2) ** k
    amp = amp * np.exp(1j * k * phi)
    return amp[..., ::-1]


def lmg_hamiltonian(alg: SpinAlgebra, V: float, h: float) -> sparse.csr_matrix:
    """H_S = (V/N)(Sx^2 - Sy^2) + h Sz.

    Sx^2 - Sy^2 = (S+^2 + S-^2)/2, which keeps the matrix real and avoids
    round-off on the diagonal.
    """
    Sp2 = alg.Splus @ alg.Splus
    Sm2 = alg.Sminus @ alg.Sminus
    H = (V / alg.N) * 0.5 * (Sp2 + Sm2) + h * alg.Sz
    H = sparse.csr_matrix(H)
    H.sort_indices()
    return H
