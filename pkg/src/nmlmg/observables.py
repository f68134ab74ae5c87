"""Expectation values, order parameter, susceptibility, squeezing, Husimi Q and gap fits."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.ndimage import maximum_filter

from .spin_algebra import SpinAlgebra, coherent_states

IMAG_GUARD = 1e-9
TRACE_TOL = 1e-10


class NonHermitianExpectationError(ValueError):
    pass


class MeanSpinNotAlongZError(ValueError):
    """The finite-N squeezing formula assumes <Sx> = <Sy> = 0."""


def _dense(O):
    return O.toarray() if sparse.issparse(O) else np.asarray(O)


def expectation(rho: np.ndarray, O, hermitian: bool = True):
    """Tr[O rho]; for Hermitian ``O`` the real part, after checking the imaginary part."""
    tr = np.trace(rho)
    if abs(tr - 1) > TRACE_TOL:
        raise ValueError(f"state not normalized: Tr rho = {tr}")
    val = complex(np.sum(_dense(O).T * rho))
    if not hermitian:
        return val
    if abs(val.imag) > IMAG_GUARD * max(1.0, abs(val.real)):
        raise NonHermitianExpectationError(f"imaginary part {val.imag:.3e} for a Hermitian observable")
    return val.real


def order_parameter_sy2(rho: np.ndarray, alg: SpinAlgebra) -> float:
    """<Sy^2>/(N/2)^2."""
    Sy = alg.Sy
    return expectation(rho, Sy @ Sy) / alg.J**2


def squeezing_xi2(rho: np.ndarray, alg: SpinAlgebra) -> float:
    """Spin squeezing with the mean spin along z:

    xi^2 = (2/N) [<Sx^2 + Sy^2> - sqrt(<Sx^2 - Sy^2>^2 + <{Sx,Sy}>^2)]
    """
    N = alg.N
    sx = expectation(rho, alg.Sx)
    sy = expectation(rho, alg.Sy)
    if max(abs(sx), abs(sy)) >= 1e-8 * N:
        raise MeanSpinNotAlongZError(f"<Sx>={sx:.3e}, <Sy>={sy:.3e}")
    Sx, Sy = alg.Sx, alg.Sy
    xx = expectation(rho, Sx @ Sx)
    yy = expectation(rho, Sy @ Sy)
    anti = expectation(rho, Sx @ Sy + Sy @ Sx)
    return float((2 / N) * (xx + yy - np.hypot(xx - yy, anti)))


# --- sweeps ----------------------------------------------------------------------

@dataclass
class SweepResult:
    axis: np.ndarray  # v = V/h, strictly increasing
    observables: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.axis = np.asarray(self.axis, dtype=float)
        if self.axis.size > 1 and np.any(np.diff(self.axis) <= 0):
            raise ValueError("sweep axis must be strictly increasing")
        for key, vals in self.observables.items():
            if len(vals) != self.axis.size:
                raise ValueError(f"observable {key!r} has {len(vals)} values for {self.axis.size} axis points")

    def add(self, name: str, values) -> None:
        values = np.asarray(values, dtype=float)
        if values.size != self.axis.size:
            raise ValueError("length mismatch")
        self.observables[name] = values

    def to_csv(self, header: str = "") -> str:
        buf = io.StringIO()
        for line in header.splitlines():
            buf.write(f"# {line}\n")
        names = list(self.observables)
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["V_over_h", *names])
        for i, v in enumerate(self.axis):
            w.writerow([f"{v:.10g}", *(f"{self.observables[n][i]:.12e}" for n in names)])
        return buf.getvalue()


def susceptibility(sweep: SweepResult, key: str = "sy2_norm") -> np.ndarray:
    """chi = d(observable)/dv with second-order differences (one-sided at the ends).

    ``np.gradient`` handles non-uniform spacing with the matching divided
    differences.
    """
    if sweep.axis.size < 2:
        raise ValueError("susceptibility needs at least two axis points")
    y = np.asarray(sweep.observables[key], dtype=float)
    if sweep.axis.size == 2:
        return np.full(2, (y[1] - y[0]) / (sweep.axis[1] - sweep.axis[0]))
    return np.gradient(y, sweep.axis)


def peak_location(x, y) -> tuple[float, float]:
    """Sub-grid maximum of sampled data via a parabola through the top three points."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    k = int(np.argmax(y))
    if k == 0 or k == len(y) - 1:
        return float(x[k]), float(y[k])
    c = np.polyfit(x[k - 1:k + 2], y[k - 1:k + 2], 2)
    if c[0] >= 0:
        return float(x[k]), float(y[k])
    xv = -c[1] / (2 * c[0])
    return float(xv), float(np.polyval(c, xv))


# --- Husimi function -------------------------------------------------------------

@dataclass
class HusimiField:
    theta: np.ndarray  # shape (n_theta,)
    phi: np.ndarray  # shape (n_phi,)
    Q: np.ndarray  # shape (n_theta, n_phi)
    N: int

    def normalization(self) -> float:
        """(N+1)/(4 pi) * integral of Q over the sphere (trapezoidal)."""
        integrand = self.Q * np.sin(self.theta)[:, None]
        inner = np.trapezoid(integrand, self.phi, axis=1)
        return float((self.N + 1) / (4 * np.pi) * np.trapezoid(inner, self.theta))

    def maxima(self, count: int = 2) -> list[tuple[float, float, float]]:
        """Local maxima as (theta, phi, Q), largest first; phi is periodic."""
        # drop the duplicated phi = 2 pi column before wrapping
        Q = self.Q[:, :-1] if np.isclose(self.phi[-1] - self.phi[0], 2 * np.pi) else self.Q
        filt = maximum_filter(Q, size=3, mode=("nearest", "wrap"))
        peaks = np.argwhere(Q >= filt)
        out = []
        for i, j in peaks:
            # the poles are single points; keep one representative per pole
            if i in (0, len(self.theta) - 1) and j != 0:
                continue
            out.append((float(self.theta[i]), float(self.phi[j]), float(Q[i, j])))
        out.sort(key=lambda t: -t[2])
        return out[:count]

    def to_csv(self, header: str = "") -> str:
        buf = io.StringIO()
        for line in header.splitlines():
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["theta", "phi", "Q"])
        for i, t in enumerate(self.theta):
            for j, p in enumerate(self.phi):
                w.writerow([f"{t:.10g}", f"{p:.10g}", f"{self.Q[i, j]:.12e}"])
        return buf.getvalue()


def husimi(rho: np.ndarray, alg: SpinAlgebra, grid: tuple[int, int] = (91, 181)) -> HusimiField:
    """Q(theta, phi) = <theta,phi|rho|theta,phi> on an equiangular grid including both poles."""
    n_theta, n_phi = grid
    theta = np.linspace(0.0, np.pi, n_theta)
    phi = np.linspace(0.0, 2 * np.pi, n_phi)
    T, P = np.meshgrid(theta, phi, indexing="ij")
    psi = coherent_states(alg, T, P)
    Q = np.einsum("...i,ij,...j->...", psi.conj(), rho, psi).real
    return HusimiField(theta, phi, Q, alg.N)


def direction(theta: float, phi: float) -> np.ndarray:
    return np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])


def angle_to(theta: float, phi: float, axis) -> float:
    """Angle in degrees between the direction (theta, phi) and ``axis``."""
    axis = np.asarray(axis, dtype=float)
    c = direction(theta, phi) @ axis / np.linalg.norm(axis)
    return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))


# --- power-law fits -----------------------------------------------------------------

@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    prefactor: float
    r2: float


def gap_scaling_fit(points) -> PowerLawFit:
    """Least-squares fit of log(gap) = log(prefactor) + exponent * log(N)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 4:
        raise ValueError("gap_scaling_fit needs at least four (N, gap) pairs")
    if np.any(pts[:, 1] <= 0) or np.any(pts[:, 0] <= 0):
        raise ValueError("N and gap must be positive")
    x = np.log(pts[:, 0])
    y = np.log(pts[:, 1])
    A = np.column_stack([x, np.ones_like(x)])
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    fit = A @ np.array([slope, icpt])
    ss_res = float(np.sum((y - fit) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1 - ss_res / ss_tot
    return PowerLawFit(float(slope), float(np.exp(icpt)), r2)


# --- HEOM sweeps ------------------------------------------------------------------

def heom_sweep(template, v_values, N: int, k_max: int, *, gap0: bool = True, gap1: bool = False,
               method: str = "shift-invert", seed: int | None = None) -> SweepResult:
    """Steady-state observables along V/h at fixed N and k_max.

    Columns: sy2_norm, sz_norm, xi2 and, on request, gap0 = -Re lambda_1^(0)
    and gap1 = -Re lambda_0^(1). With ``gap0`` the steady state is read off
    the same sector-0 eigensolve, so each point costs one factorization per
    sector.
    """
    from . import heom, spin_algebra

    alg = spin_algebra.build(N)
    kw = {} if seed is None else {"seed": seed}
    cols = {"sy2_norm": [], "sz_norm": [], "xi2": []}
    if gap0:
        cols["gap0"] = []
    if gap1:
        cols["gap1"] = []
    for v in v_values:
        p = template.with_(V=v * template.h, N=N)
        L = heom.build_liouvillian(p, k_max)
        split = heom.sector_split(L)
        spec0 = heom.sector_spectrum(L, 0, 2, method, split=split, **kw) if gap0 else None
        rho = heom.steady_state(L, split, spectrum=spec0).rho
        cols["sy2_norm"].append(order_parameter_sy2(rho, alg))
        cols["sz_norm"].append(expectation(rho, alg.Sz) / alg.J)
        cols["xi2"].append(squeezing_xi2(rho, alg))
        if gap0:
            cols["gap0"].append(spec0.gap / template.h)
        if gap1:
            spec1 = heom.sector_spectrum(L, 1, 1, method, split=split, **kw)
            cols["gap1"].append(spec1.gap / template.h)
    meta = {"params": template, "N": N, "k_max": k_max}
    return SweepResult(np.asarray(v_values, dtype=float), {k: np.asarray(c) for k, c in cols.items()}, meta)
