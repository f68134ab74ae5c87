"""Thermodynamic-limit fluctuations by Holstein-Primakoff expansion and third quantization.

In each phase the spin is rotated so its mean points along -z, the
fluctuation boson b is introduced through S~+ = sqrt(N) b^dag, and, in
phase I, the pseudomode is displaced by its macroscopic amplitude. What is
left is a quadratic two-mode Liouvillian with mode vector c = (b, a):

    H = c^dag.H c + c.K c + c^dag.K^* c^dag,     jump sqrt(kappa) a

whose Gaussian steady state is fixed by the normal-ordered second moments
Z_ij = <:d_i d_j:>, d = (b, a, b^dag, a^dag), solving X^T Z + Z X = Y.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import meanfield
from .heom import Factorization, replace_row
from .model import ModelParams


class Phase(enum.Enum):
    I = "I"
    II = "II"
    III = "III"


class PhaseNotDefinedError(ValueError):
    """The rotated frame of the requested phase does not exist at these parameters."""


class UnstableQuadraticModelError(RuntimeError):
    """The quadratic Liouvillian has no steady state (Re eig(X) <= 0)."""


# --- frames and effective models -------------------------------------------------------

@dataclass(frozen=True)
class RotationFrame:
    phase: Phase
    m: float  # cos(theta)
    theta: float
    alpha_shift: complex = 0j  # pseudomode displacement per sqrt(N), phase I only


def rotation_frame(p: ModelParams, phase: Phase | str) -> RotationFrame:
    phase = Phase(phase)
    if phase is Phase.II:
        return RotationFrame(phase, 1.0, 0.0)
    if phase is Phase.III:
        if p.V < p.h:
            raise PhaseNotDefinedError(f"phase III needs V >= h, got V/h = {p.V / p.h:g}")
        m = p.h / p.V
        return RotationFrame(phase, m, math.acos(m))
    shifted = p.V - p.q2 * p.gamma / 2
    if shifted > -p.h:
        raise PhaseNotDefinedError(
            f"phase I needs V - q2*gamma/2 <= -h, got {shifted / p.h:g} h")
    m = -p.h / shifted
    s = math.sqrt(max(0.0, 1 - m * m))
    alpha = 0.5 * math.sqrt(p.gamma / (2 * p.kappa)) * s * complex(p.q2, p.q1)
    return RotationFrame(phase, m, math.acos(m), alpha)


@dataclass(frozen=True)
class EffectiveModel:
    omega_a: float
    omega_b: float
    G_eff: float
    V_eff: float


def effective_quadratic(p: ModelParams, frame: RotationFrame) -> EffectiveModel:
    g = p.coupling
    m = frame.m
    if frame.phase is Phase.II:
        return EffectiveModel(p.omega, p.h, 0.5 * g, p.V / 2)
    if frame.phase is Phase.III:
        return EffectiveModel(p.omega, 1.5 * p.V * (1 - m * m) + p.h * m, 0.5 * g,
                              0.25 * p.V * (1 + m * m))
    a = frame.alpha_shift
    s = math.sqrt(max(0.0, 1 - m * m))
    omega_b = 1.5 * (m * m - 1) * p.V + p.h * m + g * s * (a + a.conjugate()).real
    return EffectiveModel(p.omega, omega_b, 0.5 * m * g, 0.25 * p.V * (1 + m * m))


def third_quant_matrices(q: EffectiveModel, kappa: float):
    """(H, K, M) for mode order c = (b, a)."""
    H = np.array([[q.omega_b, q.G_eff], [q.G_eff, q.omega_a]], dtype=complex)
    K = np.array([[q.V_eff, q.G_eff / 2], [q.G_eff / 2, 0.0]], dtype=complex)
    M = np.array([[0.0, 0.0], [0.0, kappa]], dtype=complex)
    return H, K, M


def lyapunov_operands(H, K, M):
    """X and Y of X^T Z + Z X = Y."""
    X = 0.5 * np.block([[1j * H.conj() + M, -2j * K], [2j * K.conj(), -1j * H + M.conj()]])
    Z2 = np.zeros((2, 2), dtype=complex)
    Y = 0.5 * np.block([[-2j * K.conj(), Z2], [Z2, 2j * K]])
    return X, Y


@dataclass
class QuadraticModel:
    effective: EffectiveModel
    H: np.ndarray
    K: np.ndarray
    M: np.ndarray
    X: np.ndarray = field(repr=False)
    Y: np.ndarray = field(repr=False)
    Z: np.ndarray = field(repr=False)

    @property
    def b_occupation(self) -> float:
        return float(self.Z[2, 0].real)

    @property
    def b_squared(self) -> complex:
        return complex(self.Z[0, 0])


def solve_lyapunov(H, K, M, rtol: float = 1e-12) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Solve X^T Z + Z X = Y as a 16x16 linear system; returns (Z, X, Y)."""
    X, Y = lyapunov_operands(np.asarray(H), np.asarray(K), np.asarray(M))
    ev = np.linalg.eigvals(X)
    if np.any(ev.real <= 0):
        raise UnstableQuadraticModelError(
            f"X has eigenvalues with Re <= 0: {np.sort_complex(ev)}")
    n = X.shape[0]
    eye = np.eye(n)
    A = np.kron(X.T, eye) + np.kron(eye, X.T)  # row-major vec(X^T Z + Z X)
    Z = np.linalg.solve(A, Y.ravel()).reshape(n, n)
    res = np.linalg.norm(X.T @ Z + Z @ X - Y)
    scale = max(np.linalg.norm(X) * np.linalg.norm(Z), np.linalg.norm(Y), 1e-300)
    if res > rtol * scale:
        raise UnstableQuadraticModelError(f"Lyapunov residual {res:.2e} too large")
    return Z, X, Y


def quadratic_model(p: ModelParams, phase: Phase | str) -> QuadraticModel:
    q = effective_quadratic(p, rotation_frame(p, phase))
    H, K, M = third_quant_matrices(q, p.kappa)
    Z, X, Y = solve_lyapunov(H, K, M)
    return QuadraticModel(q, H, K, M, X, Y, Z)


# --- squeezing ---------------------------------------------------------------------

def xi2_from_moments(Z: np.ndarray) -> float:
    """xi^2 = 1 + 2<b^dag b> - 2|<b^2>|."""
    return float(1 + 2 * Z[2, 0].real - 2 * abs(Z[0, 0]))


def xi2_literal(Z: np.ndarray, N: float = 1.0) -> float:
    """Rotated-frame spin-squeezing formula with the leading HP substitution
    S~x = sqrt(N)(b + b^dag)/2, S~y = sqrt(N)(b^dag - b)/(2i), evaluated term by term."""
    bb = Z[0, 0]  # <b b>
    bdbd = Z[2, 2]  # <b^dag b^dag>
    n = Z[2, 0].real  # <b^dag b>
    # <x x>, <y y> and <{x, y}> with x = b + b^dag, y = (b^dag - b)/i
    xx = bb + bdbd + 2 * n + 1
    yy = -(bdbd + bb - 2 * n - 1)
    xy = (bdbd - bb) / 1j  # <{x, y}>/2
    Sx2, Sy2 = N / 4 * xx.real, N / 4 * yy.real
    anti = N / 4 * 2 * xy.real
    return float((2 / N) * (Sx2 + Sy2 - math.hypot(Sx2 - Sy2, anti)))


def gaussian_bound_ok(Z: np.ndarray, slack: float = 1e-10) -> bool:
    n = Z[2, 0].real
    return n >= -slack and abs(Z[0, 0]) ** 2 <= n * (n + 1) + slack


def xi2_thermo(p: ModelParams, phase: Phase | str) -> float:
    return xi2_from_moments(quadratic_model(p, phase).Z)


def stable_phases(p: ModelParams) -> list[Phase]:
    """Phases whose mean-field fixed points are stable (both I and III on the first-order line)."""
    label, _ = meanfield.classify(p)
    if label == meanfield.FIRST_ORDER_LABEL:
        return [Phase.I, Phase.III]
    out = []
    for tag in label.split("+"):
        if tag in ("I", "II", "III"):
            out.append(Phase(tag))
    return out


def xi2_auto(p: ModelParams) -> dict[Phase, float]:
    """xi^2 for every phase the mean field declares stable; NaN where the
    quadratic model is marginal (e.g. exactly on a critical line)."""
    out = {}
    for ph in stable_phases(p):
        try:
            out[ph] = xi2_thermo(p, ph)
        except (UnstableQuadraticModelError, PhaseNotDefinedError):
            out[ph] = float("nan")
    return out


# --- two-mode Fock oracle --------------------------------------------------------------

def fock_basis(cutoff, total: bool = True) -> np.ndarray:
    """Occupations (n_b, n_a): n_b + n_a <= cutoff if ``total``, else a box.

    A pair ``(nb_max, na_max)`` always selects a box with per-mode limits,
    which suits a lightly populated pseudomode next to a squeezed b mode.
    """
    if np.ndim(cutoff) == 1:
        nb_max, na_max = (int(c) for c in cutoff)
        return np.array([(nb, na) for nb in range(nb_max + 1) for na in range(na_max + 1)], dtype=int)
    pairs = [(nb, na) for nb in range(cutoff + 1) for na in range(cutoff + 1)
             if not total or nb + na <= cutoff]
    return np.array(pairs, dtype=int)


def _fock_ladder(basis: np.ndarray, mode: int) -> sparse.csr_matrix:
    """Annihilator of ``mode`` restricted to the truncated basis."""
    index = {tuple(s): k for k, s in enumerate(basis)}
    rows, cols, vals = [], [], []
    for k, s in enumerate(basis):
        if s[mode] == 0:
            continue
        t = s.copy()
        t[mode] -= 1
        rows.append(index[tuple(t)])
        cols.append(k)
        vals.append(math.sqrt(s[mode]))
    n = len(basis)
    return sparse.csr_matrix((np.array(vals, dtype=complex), (rows, cols)), shape=(n, n))


def fock_moments(H, K, M, cutoff=20, total: bool = True) -> np.ndarray:
    """Normal-ordered second moments from a truncated Fock-space master equation.

    The quadratic Hamiltonian and the dissipator
    sum_ij M_ij (2 c_j rho c_i^dag - {c_i^dag c_j, rho}) are built directly on
    Fock states with n_b + n_a <= ``cutoff`` (or a box when ``total`` is
    False or ``cutoff`` is an (nb_max, na_max) pair). Total boson parity is
    conserved, so only the even block of the Liouvillian is solved.
    """
    basis = fock_basis(cutoff, total)
    dim = len(basis)
    c = [_fock_ladder(basis, 0), _fock_ladder(basis, 1)]  # (b, a)
    cd = [op.conj().T.tocsr() for op in c]
    Hop = sparse.csr_matrix((dim, dim), dtype=complex)
    for i in range(2):
        for j in range(2):
            Hop = Hop + H[i, j] * (cd[i] @ c[j]) + K[i, j] * (c[i] @ c[j]) \
                + np.conj(K[i, j]) * (cd[i] @ cd[j])
    Id = sparse.identity(dim, dtype=complex, format="csr")
    L = -1j * (sparse.kron(Hop, Id) - sparse.kron(Id, Hop.T))
    for i in range(2):
        for j in range(2):
            if M[i, j] == 0:
                continue
            cdc = cd[i] @ c[j]
            L = L + M[i, j] * (2 * sparse.kron(c[j], cd[i].T) - sparse.kron(cdc, Id) - sparse.kron(Id, cdc.T))
    par = basis.sum(axis=1) % 2
    even = np.flatnonzero(((par[:, None] + par[None, :]) % 2 == 0).ravel())
    L0 = sparse.csr_matrix(L)[even][:, even]
    pos = np.searchsorted(even, np.arange(dim) * (dim + 1))
    A = replace_row(L0, pos[0], pos)
    rhs = np.zeros(len(even), dtype=complex)
    rhs[pos[0]] = 1.0
    vec = np.zeros(dim * dim, dtype=complex)
    vec[even] = Factorization(A).solve(rhs)
    rho = vec.reshape(dim, dim)
    rho = 0.5 * (rho + rho.conj().T)
    rho /= np.trace(rho)
    d = c + cd
    Z = np.empty((4, 4), dtype=complex)
    for i in range(4):
        for j in range(4):
            # normal order: creation operators (indices 2, 3) to the left
            op = d[j] @ d[i] if (i < 2 <= j) else d[i] @ d[j]
            Z[i, j] = np.sum(op.toarray().T * rho)
    return Z


# --- scans ------------------------------------------------------------------------

@dataclass
class SqueezeScanRow:
    V_over_h: float
    h_over_omega: float
    kappa_over_omega: float
    xi2: float
    phase: str


def squeeze_scan(V_over_h, h_over_omega, kappa_over_omega, gamma_rule, omega: float = 1.0):
    """xi^2 over a (V/h, h/omega, kappa/omega) grid in units of omega.

    ``gamma_rule(h, kappa, omega)`` returns gamma at each (h, kappa) pair,
    e.g. ``lambda h, k, w: 5 * h / q2`` for the first-order family.
    """
    rows = []
    for ho in np.atleast_1d(h_over_omega):
        for ko in np.atleast_1d(kappa_over_omega):
            h, kappa = ho * omega, ko * omega
            gamma = gamma_rule(h, kappa, omega)
            for v in np.atleast_1d(V_over_h):
                p = ModelParams(V=v * h, h=h, gamma=gamma, kappa=kappa, omega=omega)
                vals = xi2_auto(p)
                if not vals:
                    rows.append(SqueezeScanRow(float(v), float(ho), float(ko), float("nan"), "none"))
                for ph, x in vals.items():
                    rows.append(SqueezeScanRow(float(v), float(ho), float(ko), x, ph.value))
    return rows


def scan_to_csv(rows, header: str = "") -> str:
    buf = io.StringIO()
    for line in header.splitlines():
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["V_over_h", "h_over_omega", "kappa_over_omega", "xi2", "phase"])
    for r in rows:
        w.writerow([f"{r.V_over_h:.10g}", f"{r.h_over_omega:.10g}", f"{r.kappa_over_omega:.10g}",
                    f"{r.xi2:.12e}", r.phase])
    return buf.getvalue()


def q2_of(kappa: float, omega: float) -> float:
    return kappa * omega / (kappa**2 + omega**2)
