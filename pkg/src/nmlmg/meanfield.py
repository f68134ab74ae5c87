"""Rescaled mean-field dynamics of the spin + pseudomode system.

State variables are the rescaled pseudomode amplitude ``alpha = <a>/sqrt(N)``
and the Bloch vector ``(x, y, z) = 2<S>/N``; in these variables N drops out::

    alpha' = -(kappa + i omega) alpha - (i/2) sqrt(gamma kappa/2) x
    x'     = -(V z + h) y
    y'     = (h - V z) x - sqrt(2 gamma kappa) z Re(alpha)
    z'     = 2 V x y + sqrt(2 gamma kappa) y Re(alpha)
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.integrate import solve_ivp

from .model import ModelParams, critical_geometry

# |V - q2 gamma/4| below this (times h) is treated as the U(1) line
DEGENERATE_TOL = 1e-12
# radial overlap needed to identify the conserved-norm mode
RADIAL_OVERLAP = 0.99

PHASE_LABELS = ("I+", "I-", "IIa", "IIb", "III+", "III-")


class DegenerateLineError(ValueError):
    """Fixed points requested on V = q2*gamma/4, where they form a continuum."""


class FamilyUnphysicalError(ValueError):
    """U(1) family requested below the tricritical coupling."""


@dataclass(frozen=True)
class BlochState:
    a_re: float
    a_im: float
    x: float
    y: float
    z: float

    @property
    def alpha(self) -> complex:
        return complex(self.a_re, self.a_im)

    @property
    def spin(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def as_array(self) -> np.ndarray:
        return np.array([self.a_re, self.a_im, self.x, self.y, self.z])

    @classmethod
    def from_array(cls, v) -> "BlochState":
        return cls(*(float(c) for c in v))

    @classmethod
    def from_alpha(cls, alpha: complex, x: float, y: float, z: float) -> "BlochState":
        return cls(alpha.real, alpha.imag, x, y, z)


def _rhs_array(v: np.ndarray, p: ModelParams) -> np.ndarray:
    ar, ai, x, y, z = v
    g = p.coupling  # sqrt(gamma kappa / 2)
    return np.array([
        -p.kappa * ar + p.omega * ai,
        -p.omega * ar - p.kappa * ai - 0.5 * g * x,
        -(p.V * z + p.h) * y,
        (p.h - p.V * z) * x - 2 * g * z * ar,
        2 * p.V * x * y + 2 * g * y * ar,
    ])


def rhs(state: BlochState, p: ModelParams) -> BlochState:
    """Time derivative of ``state``, returned as a BlochState of rates."""
    return BlochState.from_array(_rhs_array(state.as_array(), p))


def jacobian(state: BlochState, p: ModelParams) -> np.ndarray:
    ar, ai, x, y, z = state.as_array()
    g = p.coupling
    V, h = p.V, p.h
    return np.array([
        [-p.kappa, p.omega, 0.0, 0.0, 0.0],
        [-p.omega, -p.kappa, -0.5 * g, 0.0, 0.0],
        [0.0, 0.0, 0.0, -(V * z + h), -V * y],
        [-2 * g * z, 0.0, h - V * z, 0.0, -V * x - 2 * g * ar],
        [2 * g * y, 0.0, 2 * V * y, 2 * V * x + 2 * g * ar, 0.0],
    ])


def residual(state: BlochState, p: ModelParams) -> float:
    return float(np.linalg.norm(_rhs_array(state.as_array(), p)))


def stability(p: ModelParams, fp: BlochState, residual_tol: float = 1e-8):
    """Linear stability of a fixed point.

    Returns ``(stable, eigenvalues)`` where ``eigenvalues`` excludes the
    structural zero mode tied to conservation of x^2+y^2+z^2. That mode is
    found as the eigenvalue whose *left* eigenvector overlaps most with the
    radial direction (0, 0, x, y, z): the conservation law makes that vector
    an exact left null vector of the Jacobian.
    """
    res = residual(fp, p)
    if res > residual_tol:
        raise ValueError(f"not a fixed point: residual {res:.3e}")
    J = jacobian(fp, p)
    w, vl = scipy.linalg.eig(J, left=True, right=False)
    radial = np.concatenate([[0.0, 0.0], fp.spin])
    radial /= np.linalg.norm(radial)
    overlap = np.abs(vl.conj().T @ radial) / np.linalg.norm(vl, axis=0)
    k = int(np.argmax(overlap))
    rest = np.delete(w, k)
    eps = 1e-9 * max(p.h, p.kappa)
    stable = bool(np.all(rest.real < -eps))
    return stable, rest[np.argsort(-rest.real)]


@dataclass(frozen=True)
class FixedPoint:
    state: BlochState
    label: str
    stable: bool
    eigenvalues: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class FixedPointSet:
    points: list

    @property
    def stable(self) -> list:
        return [fp for fp in self.points if fp.stable]

    def by_label(self, label: str) -> FixedPoint:
        for fp in self.points:
            if fp.label == label:
                return fp
        raise KeyError(label)

    @property
    def labels(self) -> list[str]:
        return [fp.label for fp in self.points]


def on_degenerate_line(p: ModelParams) -> bool:
    return abs(p.V - p.q2 * p.gamma / 4) <= DEGENERATE_TOL * p.h


def analytic_fixed_points(p: ModelParams) -> dict[str, BlochState]:
    """Closed-form fixed points, dropping the unphysical ones."""
    pts = {
        "IIa": BlochState(0.0, 0.0, 0.0, 0.0, -1.0),
        "IIb": BlochState(0.0, 0.0, 0.0, 0.0, 1.0),
    }
    shifted = p.V - p.q2 * p.gamma / 2
    if abs(shifted) >= p.h:
        z = p.h / shifted
        r = math.sqrt(max(0.0, 1 - z * z))
        amp = 0.5 * math.sqrt(p.gamma / (2 * p.kappa)) * complex(p.q2, p.q1)
        for sign, tag in ((1, "I+"), (-1, "I-")):
            pts[tag] = BlochState.from_alpha(-sign * r * amp, sign * r, 0.0, z)
    if abs(p.V) >= p.h:
        z = -p.h / p.V
        r = math.sqrt(max(0.0, 1 - z * z))
        for sign, tag in ((1, "III+"), (-1, "III-")):
            pts[tag] = BlochState(0.0, 0.0, 0.0, sign * r, z)
    return pts


def fixed_points(p: ModelParams, *, allow_degenerate: bool = False) -> FixedPointSet:
    """All physical analytic fixed points, each tagged by linear stability."""
    if on_degenerate_line(p) and not allow_degenerate:
        raise DegenerateLineError(
            f"V = q2*gamma/4 = {p.q2 * p.gamma / 4:g}: fixed points form a continuum, use u1_family")
    out = []
    for label in PHASE_LABELS:
        st = analytic_fixed_points(p).get(label)
        if st is None:
            continue
        stable, eig = stability(p, st)
        out.append(FixedPoint(st, label, stable, eig))
    return FixedPointSet(out)


def u1_family(p: ModelParams, theta: float) -> BlochState:
    """Member of the continuous fixed-point family on V = q2*gamma/4."""
    if not on_degenerate_line(p):
        raise ValueError("u1_family requires V = q2*gamma/4")
    gq2 = p.gamma * p.q2
    if gq2 < 4 * p.h * (1 - 1e-12):
        raise FamilyUnphysicalError(
            f"gamma*q2 = {gq2:g} < 4h: the family is unphysical below the tricritical point")
    z = -min(1.0, 4 * p.h / gq2)
    S = math.sqrt(max(0.0, 1 - z * z))
    x, y = S * math.cos(theta), S * math.sin(theta)
    alpha = -0.5 * math.sqrt(p.gamma / (2 * p.kappa)) * complex(p.q2, p.q1) * x
    return BlochState.from_alpha(alpha, x, y, z)


def integrate(p: ModelParams, state: BlochState, t_final: float, rtol: float = 1e-10,
              atol: float = 1e-12, **kwargs):
    """Integrate the mean-field equations with an adaptive 8th-order Runge-Kutta."""
    return solve_ivp(lambda t, v: _rhs_array(v, p), (0.0, t_final), state.as_array(),
                     method="DOP853", rtol=rtol, atol=atol, **kwargs)


def relax(p: ModelParams, state: BlochState, t_chunk: float = 200.0, max_chunks: int = 50,
          tol: float = 1e-9) -> BlochState:
    """Integrate until the right-hand side drops below ``tol`` (in units of h)."""
    cur = state
    for _ in range(max_chunks):
        sol = integrate(p, cur, t_chunk / p.h)
        cur = BlochState.from_array(sol.y[:, -1])
        if residual(cur, p) < tol * p.h:
            break
    return cur


# --- phase diagram ------------------------------------------------------------

FIRST_ORDER_LABEL = "FirstOrderLine"
BOUNDARY_LABEL = "boundary"


def classify(p: ModelParams) -> tuple[str, int | None]:
    """Phase label and number of stable fixed points (None stands for infinity)."""
    if on_degenerate_line(p):
        if p.gamma * p.q2 > 4 * p.h * (1 + 1e-12):
            return FIRST_ORDER_LABEL, None
        if p.gamma * p.q2 >= 4 * p.h * (1 - 1e-12):
            return BOUNDARY_LABEL, 0
    fps = fixed_points(p, allow_degenerate=True)
    stable = fps.stable
    if not stable:
        return BOUNDARY_LABEL, 0
    families = []
    for fp in stable:
        fam = fp.label.rstrip("+-ab")
        if fam not in families:
            families.append(fam)
    return "+".join(families), len(stable)


@dataclass
class PhaseDiagram:
    V_over_h: np.ndarray
    gamma_q2_over_4h: np.ndarray
    labels: np.ndarray  # shape (n_gamma, n_V), dtype object
    n_stable: np.ndarray  # -1 encodes infinitely many

    def to_csv(self, header: str = "") -> str:
        buf = io.StringIO()
        for line in header.splitlines():
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["V_over_h", "gamma_q2_over_4h", "label", "n_stable"])
        for i, g in enumerate(self.gamma_q2_over_4h):
            for j, v in enumerate(self.V_over_h):
                n = self.n_stable[i, j]
                w.writerow([f"{v:.10g}", f"{g:.10g}", self.labels[i, j],
                            "inf" if n < 0 else int(n)])
        return buf.getvalue()


def phase_diagram(V_over_h, gamma_q2_over_4h, template: ModelParams) -> PhaseDiagram:
    """Label each (V/h, gamma*q2/(4h)) cell by its stable mean-field fixed points.

    ``template`` supplies h, kappa and omega (and hence q2); its V and gamma
    are overwritten per cell.
    """
    V_over_h = np.atleast_1d(np.asarray(V_over_h, dtype=float))
    gq = np.atleast_1d(np.asarray(gamma_q2_over_4h, dtype=float))
    if not (np.all(np.isfinite(V_over_h)) and np.all(np.isfinite(gq))):
        raise ValueError("grid must be finite")
    if np.any(gq < 0):
        raise ValueError("gamma*q2/(4h) must be >= 0")
    q2 = template.q2
    if q2 <= 0:
        critical_geometry(template)  # raises UnsupportedRegimeError
    labels = np.empty((gq.size, V_over_h.size), dtype=object)
    counts = np.zeros((gq.size, V_over_h.size), dtype=int)
    h = template.h
    for i, g in enumerate(gq):
        gamma = 4 * h * g / q2
        for j, v in enumerate(V_over_h):
            p = template.with_(V=v * h, gamma=gamma)
            label, n = classify(p)
            labels[i, j] = label
            counts[i, j] = -1 if n is None else n
    return PhaseDiagram(V_over_h, gq, labels, counts)
