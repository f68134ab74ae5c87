"""Cavity-QED laboratory parameters and their reduction to the spin-pseudomode model.

Index conventions: ``Omega[l, j, jp]`` and ``g[l, j, jp]`` hold the Rabi
frequency and cavity coupling with drive label l = 0, 1 (lab labels 1, 2)
and level indices j, j' in {0, 1}. Mode names are ``a1, a2, b1, b2``; the
ones with label 1 are fast and adiabatically eliminated, one of ``a2, b2``
is kept as the pseudomode.

Each mode couples to the spins through X_k = alpha_k S+ + beta_k S-, and
the products lambda_k alpha_k and lambda_k beta_k are what the lab fixes.
The split into lambda and (alpha, beta) is a normalization choice: here
|alpha|^2 + |beta|^2 = 1/2 and lambda <= 0, which is the only choice
compatible with sqrt(gamma kappa / 2) = -lambda for the kept mode.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import ModelParams

MODES = ("a1", "a2", "b1", "b2")
FAST_MODES = ("a1", "b1")
SLOW_MODES = ("a2", "b2")
DOMINANCE_RATIO = 20.0
REL_TOL = 1e-9

# (mode, which of (alpha, beta)) -> (label, j, j', Delta index, coupling (j, j'))
_DRIVE_TABLE = {
    ("a", "alpha"): ((1, 0), 0, (0, 0)),
    ("a", "beta"): ((0, 1), 1, (1, 1)),
    ("b", "alpha"): ((1, 1), 1, (0, 1)),
    ("b", "beta"): ((0, 0), 0, (1, 0)),
}

# alpha/beta ratio that makes X_k proportional to Sx (+1) or Sy (-1)
_TARGET_RATIO = {"a1": 1.0, "a2": 1.0, "b1": -1.0, "b2": 1.0}

CONDITION_NAMES = {
    1: "condition 1 (Delta_0 = Delta_1, delta_k^- = 0)",
    2: "condition 2 (fast modes far detuned: |delta| >> kappa)",
    3: "condition 3 (alpha/beta pattern: X = Sx for a1, a2, b2 and X = Sy for b1)",
    4: "condition 4 (-lambda_a1^2 d_a1/(k^2+d^2) = lambda_b1^2 d_b1/(k^2+d^2) = V)",
}


class LabConditionError(ValueError):
    """One or more of the reduction conditions fail; ``failed`` lists their numbers."""

    def __init__(self, failed: list[int], report: list[dict]):
        self.failed = failed
        self.report = report
        lines = [f"{CONDITION_NAMES[c['id']]} failed: {c['detail']}"
                 for c in report if not c["ok"]]
        super().__init__("; ".join(lines))


class RetainedModeError(ValueError):
    """Exactly one of the slow modes a2, b2 must be driven."""


@dataclass
class LabParams:
    Omega: np.ndarray  # (2, 2, 2) complex
    g: np.ndarray  # (2, 2, 2) complex
    Delta0: float
    Delta1: float
    kappa_modes: dict  # mode -> decay rate
    omega_modes: dict  # mode -> cavity frequency
    omega_frame: dict  # mode -> frame frequency omega'_k
    omega_1g: float
    omega_1g_frame: float
    N: int
    drive_freqs: np.ndarray | None = None  # (2, 2, 2) laser frequencies, optional

    def __post_init__(self):
        self.Omega = np.asarray(self.Omega, dtype=complex).reshape(2, 2, 2)
        self.g = np.asarray(self.g, dtype=complex).reshape(2, 2, 2)
        if self.drive_freqs is not None:
            self.drive_freqs = np.asarray(self.drive_freqs, dtype=float).reshape(2, 2, 2)
        for name in ("kappa_modes", "omega_modes", "omega_frame"):
            d = getattr(self, name)
            missing = set(MODES) - set(d)
            if missing:
                raise ValueError(f"{name} lacks modes {sorted(missing)}")
            setattr(self, name, {k: float(d[k]) for k in MODES})
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N!r}")
        self.N = int(self.N)

    def resonance_mismatch(self) -> float:
        """max |w01 - w10 - 2 w'_1g|, |w00 - w11 - 2 w'_1g| over both drive labels."""
        if self.drive_freqs is None:
            return 0.0
        w = self.drive_freqs
        target = 2 * self.omega_1g_frame
        return float(max(np.max(np.abs(w[:, 0, 1] - w[:, 1, 0] - target)),
                         np.max(np.abs(w[:, 0, 0] - w[:, 1, 1] - target))))


@dataclass
class ModeCoupling:
    delta: float
    delta_plus: float
    delta_minus: float
    lam: float
    alpha: complex
    beta: complex
    kappa: float


@dataclass
class EffectiveLab:
    omega0: float
    modes: dict  # mode -> ModeCoupling
    warnings: list = field(default_factory=list)


def _delta(lab: LabParams, idx: int) -> float:
    d = lab.Delta0 if idx == 0 else lab.Delta1
    if d == 0:
        raise ZeroDivisionError(f"Delta_{idx} = 0")
    return d


def _omega0(lab: LabParams) -> float:
    """Effective field; the unbound index of the first inner sum is read as j = 1 - j'."""
    D0, D1 = _delta(lab, 0), _delta(lab, 1)
    total = 0.0
    for l in range(2):
        W = np.abs(lab.Omega[l]) ** 2
        inner = sum(W[1 - jp, jp] / D1 - W[jp, jp] / D0 for jp in range(2))
        total += inner + W[1, 0] / D0 - W[0, 1] / D1
    return lab.omega_1g - lab.omega_1g_frame - 0.25 * total


def _dominance_warnings(lab: LabParams, ratio: float) -> list[str]:
    scale = max([abs(lab.omega_modes[k] - lab.omega_frame[k]) for k in MODES]
                + [abs(lab.omega_1g - lab.omega_1g_frame)]
                + list(np.abs(lab.g).ravel()) + list(np.abs(lab.Omega).ravel()))
    out = []
    for idx, D in enumerate((lab.Delta0, lab.Delta1)):
        if scale > 0 and abs(D) < ratio * scale:
            out.append(f"|Delta_{idx}| = {abs(D):.4g} is less than {ratio:g} x {scale:.4g}")
    mis = lab.resonance_mismatch()
    if mis > REL_TOL * max(1.0, abs(lab.omega_1g_frame)):
        out.append(f"drive-frequency resonance bookkeeping off by {mis:.3g}")
    return out


def effective_parameters(lab: LabParams, dominance_ratio: float = DOMINANCE_RATIO) -> EffectiveLab:
    """omega_0, delta_k, delta_k^+-, lambda_k, alpha_k, beta_k for every mode."""
    warn = _dominance_warnings(lab, dominance_ratio)
    for w in warn:
        warnings.warn(w, stacklevel=2)
    D = (_delta(lab, 0), _delta(lab, 1))
    sqN = math.sqrt(lab.N)
    modes = {}
    for name in MODES:
        kind, l = name[0], int(name[1]) - 1
        G2 = np.abs(lab.g[l]) ** 2
        if kind == "a":
            dp = 0.5 * (G2[1, 1] / D[1] + G2[0, 0] / D[0])
            dm = 0.5 * (G2[1, 1] / D[1] - G2[0, 0] / D[0])
        else:
            dp = G2[1, 0] / D[0] + G2[0, 1] / D[1]
            dm = G2[1, 0] / D[0] - G2[0, 1] / D[1]
        prod = {}
        for which in ("alpha", "beta"):
            (j, jp), di, (gj, gjp) = _DRIVE_TABLE[(kind, which)]
            prod[which] = sqN * np.conj(lab.Omega[l, j, jp]) * lab.g[l, gj, gjp] / (2 * D[di])
        lam = -math.sqrt(2 * (abs(prod["alpha"]) ** 2 + abs(prod["beta"]) ** 2))
        if lam == 0:
            alpha = beta = 0j
        else:
            alpha, beta = complex(prod["alpha"] / lam), complex(prod["beta"] / lam)
        delta = (lab.omega_modes[name] - lab.omega_frame[name]) - lab.N * dp
        modes[name] = ModeCoupling(float(delta), float(dp), float(dm), lam, alpha, beta,
                                   lab.kappa_modes[name])
    return EffectiveLab(float(_omega0(lab)), modes, warn)


def _fast_shift(m: ModeCoupling) -> float:
    """lambda^2 delta / (kappa^2 + delta^2)."""
    return m.lam**2 * m.delta / (m.kappa**2 + m.delta**2)


def check_conditions(eff: EffectiveLab, ratio: float = DOMINANCE_RATIO, tol: float = REL_TOL) -> list[dict]:
    report = []

    # 1: delta^- vanishes on every mode
    worst = max(abs(m.delta_minus) / max(abs(m.delta_plus), 1e-300) if m.delta_minus else 0.0
                for m in eff.modes.values())
    report.append({"id": 1, "ok": worst <= tol, "value": worst, "threshold": tol,
                   "detail": f"max |delta^-|/|delta^+| = {worst:.3e}"})

    # 2: fast modes far detuned
    r = min(abs(eff.modes[k].delta) / eff.modes[k].kappa if eff.modes[k].kappa > 0 else math.inf
            for k in FAST_MODES)
    report.append({"id": 2, "ok": r >= ratio, "value": r, "threshold": ratio,
                   "detail": f"min |delta|/kappa over a1, b1 = {r:.4g} (need >= {ratio:g})"})

    # 3: |alpha| = |beta| = 1/2 and alpha/beta = +1 (Sx) or -1 (Sy); undriven modes are exempt
    dev = 0.0
    for k, m in eff.modes.items():
        if m.lam == 0:
            continue
        dev = max(dev, abs(abs(m.alpha) - 0.5), abs(abs(m.beta) - 0.5))
        if abs(m.beta) > 0:
            dev = max(dev, abs(m.alpha / m.beta - _TARGET_RATIO[k]))
    report.append({"id": 3, "ok": dev <= tol, "value": dev, "threshold": tol,
                   "detail": f"max deviation from the alpha/beta pattern = {dev:.3e}"})

    # 4: the two fast-mode shifts give the same V
    Va = -_fast_shift(eff.modes["a1"])
    Vb = _fast_shift(eff.modes["b1"])
    scale = max(abs(Va), abs(Vb))
    mis = 0.0 if scale == 0 else abs(Va - Vb) / scale
    detail = f"V from a1 = {Va:.6g}, V from b1 = {Vb:.6g}, relative mismatch {mis:.3e}"
    if mis > tol and Va * Vb < 0:
        detail += " (delta_a1 and delta_b1 must have opposite signs)"
    report.append({"id": 4, "ok": mis <= tol, "value": mis, "threshold": tol, "detail": detail})
    return report


@dataclass
class Reduction:
    params: ModelParams
    retained: str
    effective: EffectiveLab
    report: list

    def diagnostics(self) -> dict:
        def mode_dict(m: ModeCoupling) -> dict:
            return {"delta": m.delta, "delta_plus": m.delta_plus, "delta_minus": m.delta_minus,
                    "lambda": m.lam, "alpha": [m.alpha.real, m.alpha.imag],
                    "beta": [m.beta.real, m.beta.imag], "kappa": m.kappa}
        p = self.params
        return {
            "model": {"V": p.V, "h": p.h, "gamma": p.gamma, "kappa": p.kappa, "omega": p.omega, "N": p.N},
            "retained_mode": self.retained,
            "omega0": self.effective.omega0,
            "modes": {k: mode_dict(m) for k, m in self.effective.modes.items()},
            "conditions": self.report,
            "warnings": self.effective.warnings,
            "notes": ["omega0: unbound index of the first inner sum read as j = 1 - j'"],
        }

    def diagnostics_json(self) -> str:
        return json.dumps(self.diagnostics(), indent=2, sort_keys=True)


def reduce_to_model(lab: LabParams, ratio: float = DOMINANCE_RATIO, tol: float = REL_TOL) -> Reduction:
    eff = effective_parameters(lab, ratio)
    report = check_conditions(eff, ratio, tol)
    failed = [c["id"] for c in report if not c["ok"]]
    if failed:
        raise LabConditionError(failed, report)
    driven = [k for k in SLOW_MODES if eff.modes[k].lam != 0]
    if len(driven) > 1:
        raise RetainedModeError("both a2 and b2 are driven; switch one off")
    kept = driven[0] if driven else "a2"
    m = eff.modes[kept]
    V = -_fast_shift(eff.modes["a1"])
    gamma = 2 * m.lam**2 / m.kappa
    p = ModelParams(V=V, h=eff.omega0, gamma=gamma, kappa=m.kappa, omega=m.delta, N=lab.N)
    return Reduction(p, kept, eff, report)


# --- inverse design ----------------------------------------------------------------

def design_lab_point(target: ModelParams, *, retained: str = "a2", Delta0: float | None = None,
                     Delta1: float | None = None, g0: float | None = None,
                     fast_kappa: float = 1.0, fast_detuning_ratio: float = 50.0,
                     omega_1g: float = 1.0e3, cg_same: float = 1.0, cg_cross: float = 1.0) -> LabParams:
    """Lab point whose forward map reproduces ``target``.

    The retained slow mode gets lambda = -sqrt(gamma kappa / 2); the fast
    modes get detunings of opposite sign (a1 against V, b1 along V) at
    ``fast_detuning_ratio`` times their decay rate, and lambdas fixed by V.
    ``g0`` and the detunings default to values that keep every drive and
    coupling a factor of at least 40 below |Delta|. Passing ``Delta1``
    different from ``Delta0`` deliberately breaks condition 1 only.
    """
    if retained not in SLOW_MODES:
        raise ValueError(f"retained must be one of {SLOW_MODES}")
    N = target.N
    sqN = math.sqrt(N)
    lam_slow = -target.coupling
    d_fast = fast_detuning_ratio * fast_kappa
    d_fast = max(d_fast, 50 * max(abs(target.h), abs(lam_slow), abs(target.omega), target.kappa))
    sgn = 1.0 if target.V >= 0 else -1.0
    d_a1, d_b1 = -sgn * d_fast, sgn * d_fast
    lam_a1 = -math.sqrt(abs(target.V) * (fast_kappa**2 + d_a1**2) / d_fast)
    lam_b1 = -math.sqrt(abs(target.V) * (fast_kappa**2 + d_b1**2) / d_fast)
    lam_max = max(abs(lam_slow), abs(lam_a1), abs(lam_b1), 1e-12)
    if g0 is None:
        g0 = 40 * lam_max / sqN
    c = np.array([[cg_same, cg_cross], [cg_cross, cg_same]])
    g = np.stack([g0 * c, g0 * c]).astype(complex)
    if Delta0 is None:
        Delta0 = 40 * max(g0 * max(cg_same, cg_cross) * sqN, abs(target.omega), abs(target.h), 1.0)
    Delta1 = Delta0 if Delta1 is None else Delta1
    D = (Delta0, Delta1)

    Omega = np.zeros((2, 2, 2), dtype=complex)

    def drive(l: int, kind: str, lam: float, alpha: complex, beta: complex):
        for which, coef in (("alpha", alpha), ("beta", beta)):
            (j, jp), di, (gj, gjp) = _DRIVE_TABLE[(kind, which)]
            # sqrt(N) conj(Omega) g / (2 Delta) = lam * coef
            Omega[l, j, jp] = np.conj(2 * D[di] * lam * coef / (sqN * g[l, gj, gjp]))

    drive(0, "a", lam_a1, 0.5, 0.5)
    drive(0, "b", lam_b1, -0.5j, 0.5j)
    drive(1, retained[0], lam_slow, 0.5, 0.5)

    lab = LabParams(Omega, g, Delta0, Delta1,
                    kappa_modes={"a1": fast_kappa, "b1": fast_kappa, "a2": target.kappa, "b2": target.kappa},
                    omega_modes={k: 0.0 for k in MODES}, omega_frame={k: 0.0 for k in MODES},
                    omega_1g=omega_1g, omega_1g_frame=omega_1g, N=N)
    # choose the cavity and frame frequencies so the detunings and field come out right
    eff = effective_parameters(lab)
    wanted = {"a1": d_a1, "b1": d_b1, "a2": target.omega, "b2": target.omega}
    frame_1g = omega_1g - target.h + eff.omega0  # eff.omega0 holds only the light shift here
    drive_freqs = np.empty((2, 2, 2))
    for l in range(2):
        base = 1.0e4 * (l + 1)
        drive_freqs[l, 1, 0] = base
        drive_freqs[l, 0, 1] = base + 2 * frame_1g
        drive_freqs[l, 1, 1] = base + 0.5e3
        drive_freqs[l, 0, 0] = base + 0.5e3 + 2 * frame_1g
    omega_frame, omega_modes = {}, {}
    for k in MODES:
        l = int(k[1]) - 1
        omega_frame[k] = drive_freqs[l, 0, 1] - frame_1g if k[0] == "a" else drive_freqs[l, 0, 0] - frame_1g
        omega_modes[k] = omega_frame[k] + wanted[k] + N * eff.modes[k].delta_plus
    return LabParams(Omega, g, Delta0, Delta1, lab.kappa_modes, omega_modes, omega_frame,
                     omega_1g, frame_1g, N, drive_freqs)


# --- key = value files -----------------------------------------------------------------

def _tensor_keys(prefix: str):
    for l in range(2):
        for j in range(2):
            for jp in range(2):
                yield f"{prefix}_{l + 1}_{j}{jp}", (l, j, jp)


def dumps_lab(lab: LabParams) -> str:
    lines = [f"N = {lab.N}", f"Delta0 = {lab.Delta0!r}", f"Delta1 = {lab.Delta1!r}",
             f"omega_1g = {lab.omega_1g!r}", f"omega_1g_frame = {lab.omega_1g_frame!r}"]
    for k in MODES:
        lines += [f"kappa_{k} = {lab.kappa_modes[k]!r}", f"omega_{k} = {lab.omega_modes[k]!r}",
                  f"omega_frame_{k} = {lab.omega_frame[k]!r}"]
    for prefix, arr in (("Omega", lab.Omega), ("g", lab.g)):
        for key, idx in _tensor_keys(prefix):
            lines.append(f"{key} = {complex(arr[idx])!r}")
    if lab.drive_freqs is not None:
        for key, idx in _tensor_keys("drive"):
            lines.append(f"{key} = {float(lab.drive_freqs[idx])!r}")
    return "\n".join(lines) + "\n"


def loads_lab(text: str) -> LabParams:
    vals: dict[str, str] = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"malformed lab parameter line: {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        vals[key] = val

    def take(key: str, conv=float):
        if key not in vals:
            raise ValueError(f"missing lab parameter {key!r}")
        return conv(vals.pop(key).replace(" ", ""))

    N = take("N", int)
    D0, D1 = take("Delta0"), take("Delta1")
    w1g, w1g_frame = take("omega_1g"), take("omega_1g_frame")
    kap = {k: take(f"kappa_{k}") for k in MODES}
    wk = {k: take(f"omega_{k}") for k in MODES}
    wf = {k: take(f"omega_frame_{k}") for k in MODES}
    Omega = np.zeros((2, 2, 2), dtype=complex)
    g = np.zeros((2, 2, 2), dtype=complex)
    for key, idx in _tensor_keys("Omega"):
        Omega[idx] = take(key, complex) if key in vals else 0
    for key, idx in _tensor_keys("g"):
        g[idx] = take(key, complex) if key in vals else 0
    drive = None
    if any(k.startswith("drive_") for k in vals):
        drive = np.zeros((2, 2, 2))
        for key, idx in _tensor_keys("drive"):
            drive[idx] = take(key)
    if vals:
        raise ValueError(f"unknown lab parameter keys: {sorted(vals)}")
    return LabParams(Omega, g, D0, D1, kap, wk, wf, w1g, w1g_frame, N, drive)


def read_lab(path: str | Path) -> LabParams:
    return loads_lab(Path(path).read_text())


def write_lab(lab: LabParams, path: str | Path) -> None:
    Path(path).write_text(dumps_lab(lab))
