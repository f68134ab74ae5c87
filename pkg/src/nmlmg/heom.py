"""Hierarchical equations of motion for the single-Lorentzian bath.

For every auxiliary index (n, m) with n + m <= k_max::

    d rho(n,m)/dt = -i[H_S, rho(n,m)] - [(n-m) i omega + (n+m) kappa] rho(n,m)
                    + G n Sx rho(n-1,m) + G m rho(n,m-1) Sx
                    + [rho(n+1,m), Sx] + [Sx, rho(n,m+1)],      G = gamma kappa / 2N

Operators are vectorized row-major (|a><b| -> |a>|b>), so that
``vec(A rho B) = kron(A, B.T) vec(rho)``. The stacked state vector lists the
tiers in the order of :func:`hierarchy_indices`.

The weak Z2 symmetry acts on the hierarchy as rho(n,m) -> (-1)^(n+m) P rho(n,m) P
with P = exp(i pi (Sz + N/2)); a coordinate (tier, i, j) therefore carries the
parity (n + m + i + j) mod 2 and the generator never couples opposite parities.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse import linalg as spla

from . import spin_algebra
from .model import ModelParams

log = logging.getLogger(__name__)

DEFAULT_MAX_DIM = 4_000_000
DENSE_MAX_DIM = 6000
DEFAULT_SEED = 20240416


class CapacityError(MemoryError):
    """Requested generator exceeds the configured dimension budget."""


class SymmetryViolationError(RuntimeError):
    """A stored entry couples the two parity sectors."""


class DegenerateSteadyStateError(RuntimeError):
    pass


class NoConvergenceError(RuntimeError):
    pass


def hierarchy_indices(k_max: int) -> list[tuple[int, int]]:
    """Triangular enumeration: ordered by n+m, then by n."""
    if k_max < 0:
        raise ValueError("k_max must be >= 0")
    return [(n, k - n) for k in range(k_max + 1) for n in range(k + 1)]


def n_tiers(k_max: int) -> int:
    return (k_max + 1) * (k_max + 2) // 2


@dataclass
class HeomLiouvillian:
    matrix: sparse.csr_matrix
    params: ModelParams
    k_max: int
    tiers: list = field(repr=False)
    parity: np.ndarray = field(repr=False)  # per flattened coordinate

    @property
    def d(self) -> int:
        return self.params.N + 1

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def tier_slice(self, n: int, m: int) -> slice:
        t = self.tiers.index((n, m))
        d2 = self.d**2
        return slice(t * d2, (t + 1) * d2)

    @property
    def permutation(self) -> np.ndarray:
        """Coordinates of sector 0 followed by those of sector 1."""
        return np.concatenate([np.flatnonzero(self.parity == 0),
                               np.flatnonzero(self.parity == 1)])

    def sector_of(self, tier: int, i: int, j: int) -> int:
        return int(self.parity[(tier * self.d + i) * self.d + j])


def _coupling_blocks(alg: spin_algebra.SpinAlgebra, p: ModelParams):
    d = alg.dim
    eye = sparse.identity(d, dtype=complex, format="csr")
    Hs = spin_algebra.lmg_hamiltonian(alg, p.V, p.h)
    Sx = alg.Sx
    coherent = (-1j) * (sparse.kron(Hs, eye) - sparse.kron(eye, Hs.T))
    left = sparse.kron(Sx, eye)      # Sx rho
    right = sparse.kron(eye, Sx.T)   # rho Sx
    out = []
    for block in (coherent, left, right):
        # kron of tiny factors goes through a blocked format that stores zeros
        block = block.tocsr()
        block.eliminate_zeros()
        out.append(block)
    return tuple(out)


def build_liouvillian(p: ModelParams, k_max: int, max_dim: int = DEFAULT_MAX_DIM,
                      upward_sign: float = 1.0) -> HeomLiouvillian:
    """Assemble the truncated HEOM generator as a sparse matrix.

    ``upward_sign`` multiplies the commutator terms feeding tier (n,m) from
    (n+1,m) and (n,m+1); it exists only so validation can inject a sign
    error and confirm the oracle comparison catches it.
    """
    if k_max is None or int(k_max) != k_max or k_max < 0:
        raise ValueError(f"k_max must be an explicit non-negative integer, got {k_max!r}")
    k_max = int(k_max)
    alg = spin_algebra.build(p.N)
    d = alg.dim
    d2 = d * d
    tiers = hierarchy_indices(k_max)
    T = len(tiers)
    D = T * d2
    if D > max_dim:
        raise CapacityError(f"HEOM dimension D={D} exceeds budget {max_dim}")
    index = {nm: t for t, nm in enumerate(tiers)}
    coherent, left, right = _coupling_blocks(alg, p)
    comm = (left - right).tocsr()  # [Sx, .]
    eye = sparse.identity(d2, dtype=complex, format="csr")
    G = p.G

    rows, cols, vals = [], [], []

    def put(block, t_row, t_col, scale=1.0):
        coo = block.tocoo()
        rows.append(coo.row + t_row * d2)
        cols.append(coo.col + t_col * d2)
        vals.append(coo.data * scale)

    for t, (n, m) in enumerate(tiers):
        damp = (n - m) * 1j * p.omega + (n + m) * p.kappa
        put(coherent - damp * eye if (n or m) else coherent, t, t)
        if n > 0:
            put(left, t, index[(n - 1, m)], G * n)
        if m > 0:
            put(right, t, index[(n, m - 1)], G * m)
        if n + m < k_max:
            put(comm, t, index[(n + 1, m)], -upward_sign)  # [rho, Sx]
            put(comm, t, index[(n, m + 1)], upward_sign)   # [Sx, rho]
    mat = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(D, D))
    mat.sum_duplicates()
    mat.sort_indices()

    ij = np.add.outer(np.arange(d), np.arange(d)).ravel()
    nm = np.array([n + m for n, m in tiers])
    parity = ((nm[:, None] + ij[None, :]) % 2).ravel().astype(np.int8)
    return HeomLiouvillian(matrix=mat, params=p, k_max=k_max, tiers=tiers, parity=parity)


@dataclass
class SectorSplit:
    L0: sparse.csr_matrix
    L1: sparse.csr_matrix
    index0: np.ndarray  # flattened coordinates belonging to sector 0
    index1: np.ndarray


def sector_split(L: HeomLiouvillian) -> SectorSplit:
    """Restrict the generator to the two parity sectors.

    Cross-sector blocks are checked for *stored* entries: the symmetry is
    structural, so any entry at all (even an explicit zero) is a build bug.
    """
    i0 = np.flatnonzero(L.parity == 0)
    i1 = np.flatnonzero(L.parity == 1)
    M = L.matrix.tocsr()
    coo = M.tocoo()
    cross = L.parity[coo.row] != L.parity[coo.col]
    if np.any(cross):
        raise SymmetryViolationError(
            f"{int(cross.sum())} stored entries couple the two parity sectors")
    L0 = M[i0][:, i0].tocsc()
    L1 = M[i1][:, i1].tocsc()
    return SectorSplit(L0=L0, L1=L1, index0=i0, index1=i1)


# --- spectra ---------------------------------------------------------------------

@dataclass
class SpectralResult:
    sector: int | None
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None
    converged: np.ndarray
    residual_norms: np.ndarray
    sigma: float | None = None

    @property
    def gap(self) -> float:
        """-Re of the first eigenvalue that is not the trivial zero (sector 0)
        or of the slowest eigenvalue (sector 1)."""
        lam = self.eigenvalues
        return float(-lam[1].real if self.sector == 0 else -lam[0].real)


def _residuals(A, vals, vecs):
    res = np.empty(len(vals))
    for k, lam in enumerate(vals):
        v = vecs[:, k]
        res[k] = np.linalg.norm(A @ v - lam * v) / np.linalg.norm(v)
    return res


def _order_by_real(vals, vecs):
    order = np.lexsort((np.abs(vals.imag), np.abs(vals.real)))
    return vals[order], vecs[:, order]


def _nd_ordering(A):
    """Nested-dissection fill-reducing ordering of the symmetrized pattern, or None."""
    try:
        import pymetis
    except ImportError:  # pragma: no cover - optional speed-up
        return None
    S = (abs(A) + abs(A.T)).tocsr()
    S.setdiag(0)
    S.eliminate_zeros()
    adj = pymetis.CSRAdjacency(S.indptr, S.indices)
    perm, _ = pymetis.nested_dissection(adj)
    return np.asarray(perm)


class Factorization:
    """Sparse LU of a square matrix with ``solve(b)`` in the original ordering.

    The default nested-dissection ordering cuts fill several-fold against
    COLAMD on hierarchy generators. Pivoting stays close to the diagonal, so
    ``solve`` applies one step of iterative refinement unless told not to;
    the Arnoldi residuals depend on it.
    """

    def __init__(self, A, ordering: str = "nd"):
        A = sparse.csc_matrix(A)
        self.A = A
        perm = _nd_ordering(A) if ordering == "nd" else None
        if perm is None:
            self.perm = None
            self.lu = spla.splu(A, permc_spec="COLAMD")
        else:
            self.perm = perm
            Ap = A[perm][:, perm].tocsc()
            self.lu = spla.splu(Ap, permc_spec="NATURAL", diag_pivot_thresh=0.01,
                                options=dict(SymmetricMode=True))

    @property
    def fill(self) -> int:
        return int(self.lu.L.nnz + self.lu.U.nnz)

    def _raw(self, b):
        if self.perm is None:
            return self.lu.solve(b)
        x = np.empty_like(b)
        x[self.perm] = self.lu.solve(b[self.perm])
        return x

    def solve(self, b, refine: bool = True):
        b = np.asarray(b, dtype=complex)
        x = self._raw(b)
        return x + self._raw(b - self.A @ x) if refine else x


def eigs_near_zero(Lk, count: int = 2, method: str = "shift-invert", sigma: float | None = None,
                   kappa: float = 1.0, sector: int | None = None, seed: int = DEFAULT_SEED,
                   extra: int | None = None, maxiter: int | None = None,
                   residual_tol: float = 1e-8) -> SpectralResult:
    """Eigenvalues of smallest |Re| of a (sector) generator.

    Shift-invert: ARPACK on (L - sigma)^-1 with a sparse LU, requesting
    ``count + extra`` eigenvalues nearest sigma and returning the ``count``
    with smallest |Re|. Eigenvalues with small real part but an imaginary part
    much larger than the gap can be missed; ``extra`` widens the net.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    method = method.lower().replace("_", "-")
    n = Lk.shape[0]
    if method == "dense":
        if n > DENSE_MAX_DIM:
            raise CapacityError(f"dense diagonalization limited to dim <= {DENSE_MAX_DIM}, got {n}")
        A = Lk.toarray() if sparse.issparse(Lk) else np.asarray(Lk)
        vals, vecs = scipy.linalg.eig(A)
        vals, vecs = _order_by_real(vals, vecs)
        vals, vecs = vals[:count], vecs[:, :count]
        res = _residuals(A, vals, vecs)
        return SpectralResult(sector, vals, vecs, res < residual_tol, res)
    if method not in ("shift-invert", "shiftinvert"):
        raise ValueError(f"unknown method {method!r}")

    if extra is None:
        extra = max(4, count)
    k = min(count + extra, n - 2)
    if k < count:
        return eigs_near_zero(Lk, count, "dense", kappa=kappa, sector=sector)
    A = sparse.csc_matrix(Lk)
    sig = 1e-6 * kappa if sigma is None else sigma
    eye = sparse.identity(n, dtype=complex, format="csc")
    lu = None
    for _ in range(4):
        try:
            lu = Factorization(A - sig * eye)
            break
        except RuntimeError as err:  # exactly singular
            log.info("factorization singular at sigma=%g (%s); retrying", sig, err)
            sig *= 10
    if lu is None:
        raise NoConvergenceError("sparse factorization singular at every shift tried")
    op = spla.LinearOperator((n, n), matvec=lu.solve, dtype=complex)
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    try:
        mu, vecs = spla.eigs(op, k=k, which="LM", v0=v0, maxiter=maxiter, tol=0)
        converged_all = True
    except spla.ArpackNoConvergence as err:
        mu, vecs = err.eigenvalues, err.eigenvectors
        converged_all = False
        if len(mu) == 0:
            raise NoConvergenceError("Arnoldi iteration returned no converged pairs") from err
    vals = sig + 1.0 / mu
    vals, vecs = _order_by_real(vals, vecs)
    vals, vecs = vals[:count], vecs[:, :count]
    vecs = vecs / np.linalg.norm(vecs, axis=0)
    res = _residuals(A, vals, vecs)
    conv = res < residual_tol
    if not converged_all:
        conv[:] = False
    return SpectralResult(sector, vals, vecs, conv, res, sigma=sig)


def sector_spectrum(L: HeomLiouvillian, sector: int, count: int = 2, method: str = "shift-invert",
                    split: SectorSplit | None = None, **kwargs) -> SpectralResult:
    split = split or sector_split(L)
    Lk = split.L0 if sector == 0 else split.L1
    return eigs_near_zero(Lk, count, method, kappa=L.params.kappa, sector=sector, **kwargs)


# --- states ---------------------------------------------------------------------

def _tier00(L: HeomLiouvillian, vec_sector: np.ndarray, index: np.ndarray) -> np.ndarray:
    d = L.d
    full = np.zeros(L.dim, dtype=complex)
    full[index] = vec_sector
    return full[: d * d].reshape(d, d)


def replace_row(A, row: int, cols, value: complex = 1.0) -> sparse.csc_matrix:
    """Copy of ``A`` with row ``row`` replaced by ``value`` at ``cols`` (used for trace rows)."""
    A = sparse.csr_matrix(A)
    keep = np.ones(A.shape[0])
    keep[row] = 0.0
    cols = np.asarray(cols)
    extra = sparse.csr_matrix((np.full(cols.size, value, dtype=complex),
                               (np.full(cols.size, row), cols)), shape=A.shape)
    return (sparse.diags(keep) @ A + extra).tocsc()


def null_vector(L: HeomLiouvillian, split: SectorSplit | None = None) -> np.ndarray:
    """Sector-0 null vector with unit trace of the physical tier.

    One equation of L0 x = 0 (the diagonal (0,0) entry of the physical tier,
    which belongs to the left null vector's support) is replaced by the trace
    condition and the system solved with a sparse LU.
    """
    split = split or sector_split(L)
    d = L.d
    pos0 = np.searchsorted(split.index0, np.arange(d) * (d + 1))  # rho00_ii coordinates
    r = pos0[0]
    A = replace_row(split.L0, r, pos0)
    b = np.zeros(A.shape[0], dtype=complex)
    b[r] = 1.0
    x = Factorization(A).solve(b)
    full = np.zeros(L.dim, dtype=complex)
    full[split.index0] = x
    return full


@dataclass
class SteadyState:
    rho: np.ndarray
    min_eigenvalue: float
    stacked: np.ndarray = field(repr=False)


def steady_state(L: HeomLiouvillian, split: SectorSplit | None = None,
                 check_unique: bool = False, spectrum: SpectralResult | None = None) -> SteadyState:
    """Physical tier of the sector-0 null vector, Hermitized and trace-normalized.

    A sector-0 ``spectrum`` whose first eigenvalue is zero (to 1e-9 kappa)
    supplies the null vector directly and saves a factorization.
    """
    if L.params.gamma <= 0:
        raise ValueError("steady_state requires gamma > 0")
    split = split or sector_split(L)
    thresh = 1e-9 * L.params.kappa
    if check_unique:
        spec = spectrum if spectrum is not None and len(spectrum.eigenvalues) >= 2 \
            else sector_spectrum(L, 0, count=2, split=split)
        nzero = int(np.sum(np.abs(spec.eigenvalues) < thresh))
        if nzero != 1:
            raise DegenerateSteadyStateError(f"{nzero} near-zero eigenvalues in sector 0")
    if spectrum is not None and spectrum.sector == 0 and abs(spectrum.eigenvalues[0]) < thresh:
        full = np.zeros(L.dim, dtype=complex)
        full[split.index0] = spectrum.eigenvectors[:, 0]
    else:
        full = null_vector(L, split)
    d = L.d
    full = full / np.trace(full[: d * d].reshape(d, d))
    rho = full[: d * d].reshape(d, d)
    rho = 0.5 * (rho + rho.conj().T)
    return SteadyState(rho=rho, min_eigenvalue=float(np.linalg.eigvalsh(rho)[0]), stacked=full)


@dataclass
class Branches:
    rho_plus: np.ndarray
    rho_minus: np.ndarray
    rho0: np.ndarray
    rho1: np.ndarray
    gap0: complex  # lambda_0^(1)
    formed: bool
    reason: str = ""


def hermitian_phase(A: np.ndarray) -> np.ndarray:
    """Remove the arbitrary complex phase of an (anti-)Hermitian-up-to-phase matrix."""
    t = np.trace(A @ A)
    if abs(t) > 0:
        A = A * np.exp(-0.5j * np.angle(t))
    return 0.5 * (A + A.conj().T)


def branches(L: HeomLiouvillian, split: SectorSplit | None = None,
             spectrum: SpectralResult | None = None, rho_ss: np.ndarray | None = None,
             gap_threshold: float = 0.1) -> Branches:
    """Symmetry-broken states rho_+- = rho_0^(0) +- rho_0^(1) from the physical tiers.

    rho_0^(1) is rescaled so that ||rho_0^(1)||_HS = ||rho_0^(0)||_HS, the
    condition for rho_+ and rho_- to be Hilbert-Schmidt orthogonal.
    """
    split = split or sector_split(L)
    alg = spin_algebra.build(L.params.N)
    if rho_ss is None:
        rho_ss = steady_state(L, split).rho
    if spectrum is None:
        spectrum = sector_spectrum(L, 1, count=1, split=split)
    lam = spectrum.eigenvalues[0]
    rho1 = hermitian_phase(_tier00(L, spectrum.eigenvectors[:, 0], split.index1))
    rho1 = rho1 - np.trace(rho1) * np.eye(L.d) / L.d
    norm1 = np.linalg.norm(rho1)
    if norm1 > 0:
        rho1 = rho1 * (np.linalg.norm(rho_ss) / norm1)
    sx = np.trace(alg.Sx @ rho1).real
    sy = np.trace(alg.Sy @ rho1).real
    lead = sx if abs(sx) > abs(sy) else sy
    if lead < 0:
        rho1 = -rho1
    formed, reason = True, ""
    if -lam.real > gap_threshold * L.params.kappa:
        formed, reason = False, f"sector-1 gap {-lam.real:.3g} > {gap_threshold} kappa"
    elif abs(lam.imag) > 1e-8 * L.params.kappa:
        formed, reason = False, f"slowest sector-1 eigenvalue is complex ({lam:.3g})"
    if not formed:
        warnings.warn(f"branches not formed: {reason}", RuntimeWarning, stacklevel=2)
    return Branches(rho_ss + rho1, rho_ss - rho1, rho_ss, rho1, lam, formed, reason)


# --- text exports -----------------------------------------------------------------

def spectrum_csv_rows(result: SpectralResult, h: float = 1.0):
    for j, (lam, res) in enumerate(zip(result.eigenvalues, result.residual_norms)):
        yield [result.sector, j, f"{lam.real / h:.12e}", f"{lam.imag / h:.12e}", f"{res:.3e}"]


def dump_matrix(rho: np.ndarray) -> str:
    """Row-major text dump, one matrix row per line of ``re,im`` pairs."""
    lines = []
    for row in np.asarray(rho):
        lines.append(" ".join(f"{z.real:.17g},{z.imag:.17g}" for z in row))
    return "\n".join(lines) + "\n"


def load_matrix(text: str) -> np.ndarray:
    rows = []
    for line in text.strip().splitlines():
        rows.append([complex(float(a), float(b)) for a, b in
                     (tok.split(",") for tok in line.split())])
    return np.array(rows)
