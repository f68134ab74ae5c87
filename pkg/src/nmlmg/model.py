"""Physical parameters, Lorentzian bath correlation and mean-field critical lines."""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

# relative tolerance used when classifying gamma against the tricritical coupling
REGIME_RTOL = 1e-12


class UnsupportedRegimeError(ValueError):
    """Raised when the critical-line formulas do not apply (q2 <= 0)."""


@dataclass(frozen=True)
class ModelParams:
    """Spin-spin coupling V, transverse field h, bath coupling gamma, memory rate
    kappa, bath resonance omega and spin number N.

    Frequencies may be expressed in any unit; the library never assumes one.
    """

    V: float
    h: float
    gamma: float
    kappa: float
    omega: float
    N: int = 1

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError(f"h must be > 0 (h < 0 maps onto IIa<->IIb relabeling), got {self.h}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if not self.kappa > 0:
            raise ValueError(f"kappa must be > 0, got {self.kappa}")
        if isinstance(self.N, bool) or int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N!r}")
        object.__setattr__(self, "N", int(self.N))
        for name in ("V", "h", "gamma", "kappa", "omega"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def q1(self) -> float:
        return self.kappa**2 / (self.kappa**2 + self.omega**2)

    @property
    def q2(self) -> float:
        return self.kappa * self.omega / (self.kappa**2 + self.omega**2)

    @property
    def G(self) -> float:
        return self.gamma * self.kappa / (2 * self.N)

    @property
    def coupling(self) -> float:
        """N-independent pseudomode coupling sqrt(gamma*kappa/2)."""
        return math.sqrt(self.gamma * self.kappa / 2)

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    @classmethod
    def from_reduced(cls, V_over_h: float, gamma_q2_over_4h: float, kappa: float,
                     omega: float, h: float = 1.0, N: int = 1) -> "ModelParams":
        """Build from the phase-diagram coordinates (V/h, gamma*q2/(4h))."""
        q2 = kappa * omega / (kappa**2 + omega**2)
        if q2 <= 0:
            raise UnsupportedRegimeError("gamma*q2/(4h) coordinates need q2 > 0")
        return cls(V=V_over_h * h, h=h, gamma=4 * h * gamma_q2_over_4h / q2,
                   kappa=kappa, omega=omega, N=N)


def derived_constants(p: ModelParams) -> tuple[float, float, float]:
    """Return (q1, q2, G)."""
    if not p.kappa > 0:
        raise ValueError("kappa must be > 0")
    return p.q1, p.q2, p.G


def bath_correlation(p: ModelParams, t):
    """Lorentzian bath correlation (gamma*kappa/2N) exp(-i omega|t| - kappa|t|)."""
    t = np.abs(np.asarray(t, dtype=float))
    out = p.G * np.exp(-(1j * p.omega + p.kappa) * t)
    return out if out.ndim else complex(out)


class Regime(enum.Enum):
    TWO_SECOND_ORDER = "TwoSecondOrder"
    TRICRITICAL = "Tricritical"
    FIRST_ORDER = "FirstOrder"


@dataclass(frozen=True)
class CriticalGeometry:
    V1: float
    V2: float
    tricritical_gamma: float
    first_order_line: float | None
    regime: Regime


def critical_geometry(p: ModelParams) -> CriticalGeometry:
    q2 = p.q2
    if q2 <= 0:
        raise UnsupportedRegimeError(
            f"critical lines need q2 > 0 (omega > 0); got omega={p.omega}")
    g_tri = 4 * p.h / q2
    V1 = -p.h + q2 * p.gamma / 2
    V2 = p.h
    if math.isclose(p.gamma, g_tri, rel_tol=REGIME_RTOL):
        regime = Regime.TRICRITICAL
    elif p.gamma < g_tri:
        regime = Regime.TWO_SECOND_ORDER
    else:
        regime = Regime.FIRST_ORDER
    line = q2 * p.gamma / 4 if regime is not Regime.TWO_SECOND_ORDER else None
    return CriticalGeometry(V1=V1, V2=V2, tricritical_gamma=g_tri,
                            first_order_line=line, regime=regime)


# --- flat key=value parameter files -------------------------------------------

PARAM_KEYS = ("V", "h", "gamma", "kappa", "omega", "N")


def dumps_params(p: ModelParams, unit: str = "h") -> str:
    """Serialize to ``key = value`` lines. With ``unit="h"`` frequencies are divided by h."""
    scale = p.h if unit == "h" else 1.0
    lines = [f"unit = {'h' if unit == 'h' else 'absolute'}"]
    for key, val in asdict(p).items():
        if key == "N":
            lines.append(f"N = {val}")
        else:
            lines.append(f"{key} = {val / scale!r}")
    return "\n".join(lines) + "\n"


def loads_params(text: str, h: float = 1.0) -> ModelParams:
    """Parse ``key = value`` lines (``#`` comments allowed).

    Values are in units of h unless a line ``unit = absolute`` is present; in
    h-units the file's own ``h`` entry (normally 1) is rescaled by ``h``.
    """
    values: dict[str, str] = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"malformed parameter line: {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        values[key] = val
    unit = values.pop("unit", "h")
    unknown = set(values) - set(PARAM_KEYS)
    missing = set(PARAM_KEYS) - set(values) - {"h"}
    if unknown:
        raise ValueError(f"unknown parameter keys: {sorted(unknown)}")
    if missing:
        raise ValueError(f"missing parameter keys: {sorted(missing)}")
    if unit not in ("h", "absolute"):
        raise ValueError(f"unit must be 'h' or 'absolute', got {unit!r}")
    scale = h if unit == "h" else 1.0
    freqs = {k: float(values.get(k, 1.0 if k == "h" else "nan")) * scale
             for k in ("V", "h", "gamma", "kappa", "omega")}
    return ModelParams(N=int(values["N"]), **freqs)


def read_params(path: str | Path) -> ModelParams:
    return loads_params(Path(path).read_text())


def write_params(p: ModelParams, path: str | Path, unit: str = "h") -> None:
    Path(path).write_text(dumps_params(p, unit=unit))
