"""Command-line front end.

Every subcommand writes plain CSV/JSON files into ``--out``. CSV files open
with ``#`` comment lines recording the parameters, N, k_max, solver, seed and
package version, so each file says how it was produced.

Exit codes: 0 success, 1 usage error, 2 solver failure, 3 validation failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, embedding, heom, labmap, meanfield, observables, spin_algebra, thermolimit
from .model import ModelParams, UnsupportedRegimeError, critical_geometry, dumps_params, read_params

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_VALIDATION = 0, 1, 2, 3

SOLVER_ERRORS = (heom.NoConvergenceError, heom.CapacityError, heom.DegenerateSteadyStateError,
                 thermolimit.UnstableQuadraticModelError, embedding.CutoffTooSmallError)

# defaults follow the first-order desk-scale family: kappa = omega = 10 h, gamma = 5 h / q2
DEFAULT_PARAMS = ModelParams(V=1.25, h=1.0, gamma=10.0, kappa=10.0, omega=10.0, N=8)


class UsageError(ValueError):
    pass


@dataclass
class Axis:
    name: str
    start: float
    stop: float
    count: int

    @property
    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.count)


def parse_axis(text: str) -> Axis:
    parts = text.split(":")
    if len(parts) != 4:
        raise UsageError(f"--axis expects name:start:stop:count, got {text!r}")
    name, a, b, n = parts
    try:
        start, stop, count = float(a), float(b), int(n)
    except ValueError as exc:
        raise UsageError(f"bad --axis {text!r}: {exc}") from None
    if count < 1:
        raise UsageError("axis count must be >= 1")
    if count > 1 and not stop > start:
        raise UsageError("axis stop must exceed start")
    return Axis(name, start, stop, count)


def parse_n_list(text: str) -> list[int]:
    try:
        vals = [int(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise UsageError(f"--N expects integers, got {text!r}") from None
    if not vals:
        raise UsageError("--N list is empty")
    if any(n < 1 for n in vals):
        raise UsageError("N entries must be >= 1")
    return vals


@dataclass
class RunConfig:
    command: str
    params: ModelParams
    params_path: str | None
    axes: dict = field(default_factory=dict)
    N: list = field(default_factory=list)
    k_max: int = 8
    method: str = "shift-invert"
    out: Path = Path(".")
    seed: int = heom.DEFAULT_SEED
    quick: bool = False
    extra: dict = field(default_factory=dict)

    def provenance(self, **more) -> str:
        p = self.params
        lines = [f"nmlmg {__version__} {self.command}",
                 f"params: V={p.V!r} h={p.h!r} gamma={p.gamma!r} kappa={p.kappa!r} omega={p.omega!r}"
                 + (f" (from {self.params_path})" if self.params_path else " (defaults)"),
                 f"N={','.join(map(str, self.N)) or p.N} k_max={self.k_max} solver={self.method} seed={self.seed}"]
        for ax in self.axes.values():
            lines.append(f"axis {ax.name}: {ax.start!r}..{ax.stop!r} ({ax.count} points)")
        for k, v in more.items():
            lines.append(f"{k}: {v}")
        return "\n".join(lines)


def point_seed(master: int, index: int) -> int:
    return int(np.random.SeedSequence([master, index]).generate_state(1)[0])


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def _csv(header: str, columns: list[str], rows) -> str:
    buf = io.StringIO()
    for line in header.splitlines():
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    return f"{x:.12e}"


# --- phase diagram ------------------------------------------------------------------------

def run_phase_diagram(cfg: RunConfig) -> list[Path]:
    vx = cfg.axes.get("V_over_h", Axis("V_over_h", -3.0, 3.0, 101))
    gx = cfg.axes.get("gamma_q2_over_4h", Axis("gamma_q2_over_4h", 0.0, 2.0, 101))
    try:
        pd = meanfield.phase_diagram(vx.values, gx.values, cfg.params)
    except UnsupportedRegimeError as exc:
        raise UsageError(str(exc)) from None
    head = cfg.provenance()
    out = [_write(cfg.out / "phase_diagram.csv", pd.to_csv(head))]
    h = cfg.params.h
    rows = []
    for g in gx.values:
        geo = critical_geometry(cfg.params.with_(gamma=4 * h * g / cfg.params.q2))
        line = geo.first_order_line
        rows.append([f"{g:.10g}", _fmt(geo.V1 / h), _fmt(geo.V2 / h),
                     _fmt(line / h) if line is not None else "", geo.regime.name])
    out.append(_write(cfg.out / "critical_lines.csv",
                      _csv(head, ["gamma_q2_over_4h", "V1_over_h", "V2_over_h", "first_order_over_h",
                                  "regime"], rows)))
    # tricritical point V = h, gamma q2 / 4h = 1: flag the nearest cell if it is inside the grid
    tri = None
    if vx.values[0] <= 1.0 <= vx.values[-1] and gx.values[0] <= 1.0 <= gx.values[-1]:
        j = int(np.argmin(np.abs(vx.values - 1.0)))
        i = int(np.argmin(np.abs(gx.values - 1.0)))
        tri = {"V_over_h": float(vx.values[j]), "gamma_q2_over_4h": float(gx.values[i]),
               "label": pd.labels[i, j]}
    out.append(_write(cfg.out / "phase_diagram.json",
                      json.dumps({"tricritical_cell": tri, "shape": list(pd.labels.shape)}, indent=2)))
    return out


# --- HEOM sweeps ----------------------------------------------------------------------------

def _sweep_point(args):
    """One (N, V/h) point; returns a row dict and the spectrum rows. Never raises on solver trouble."""
    params, v, N, k_max, method, seed = args
    p = params.with_(V=v * params.h, N=N)
    alg = spin_algebra.build(N)
    row = {"V_over_h": v, "status": "ok"}
    spec_rows = []
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            L = heom.build_liouvillian(p, k_max)
            split = heom.sector_split(L)
            s0 = heom.sector_spectrum(L, 0, 2, method, split=split, seed=seed)
            s1 = heom.sector_spectrum(L, 1, 1, method, split=split, seed=seed)
            rho = heom.steady_state(L, split, spectrum=s0).rho
            br = heom.branches(L, split, spectrum=s1, rho_ss=rho)
        row.update(sz_norm=observables.expectation(rho, alg.Sz) / alg.J,
                   sy2_norm=observables.order_parameter_sy2(rho, alg),
                   xi2=observables.squeezing_xi2(rho, alg),
                   gap0=s0.gap / params.h, gap1=s1.gap / params.h,
                   branch_sx=observables.expectation(br.rho_plus, alg.Sx) / alg.J,
                   branch_sy=observables.expectation(br.rho_plus, alg.Sy) / alg.J)
        if not br.formed:
            row["status"] = "branches-not-formed"
        for s in (s0, s1):
            spec_rows += [[f"{v:.10g}", *r] for r in heom.spectrum_csv_rows(s, params.h)]
    except SOLVER_ERRORS + (observables.MeanSpinNotAlongZError,) as exc:
        row["status"] = f"failed: {type(exc).__name__}"
    return row, spec_rows


SWEEP_COLUMNS = ["sz_norm", "sy2_norm", "xi2", "gap0", "gap1", "branch_sx", "branch_sy"]


def run_heom_sweep(cfg: RunConfig) -> list[Path]:
    if not cfg.N:
        raise UsageError("heom-sweep needs a non-empty --N list")
    ax = cfg.axes.get("V_over_h", Axis("V_over_h", 1.0, 1.5, 6))
    for N in cfg.N:
        D = heom.n_tiers(cfg.k_max) * (N + 1) ** 2
        if D > heom.DEFAULT_MAX_DIM:
            raise heom.CapacityError(f"N={N}, k_max={cfg.k_max} gives D={D} > {heom.DEFAULT_MAX_DIM}")
    workers = int(cfg.extra.get("workers", 1))
    out = []
    for N in cfg.N:
        jobs = [(cfg.params, float(v), N, cfg.k_max, cfg.method, point_seed(cfg.seed, i))
                for i, v in enumerate(ax.values)]
        if workers > 1:
            with ProcessPoolExecutor(workers) as pool:
                results = list(pool.map(_sweep_point, jobs))
        else:
            results = [_sweep_point(j) for j in jobs]
        rows = [r for r, _ in results]
        chi = np.full(len(rows), np.nan)
        y = np.array([r.get("sy2_norm", np.nan) for r in rows])
        if len(rows) >= 2 and np.all(np.isfinite(y)):
            sw = observables.SweepResult(ax.values, {"sy2_norm": y})
            chi = observables.susceptibility(sw)
        head = cfg.provenance(N_point=N)
        table = []
        for r, c in zip(rows, chi):
            table.append([f"{r['V_over_h']:.10g}", *(_fmt(r.get(k, math.nan)) for k in SWEEP_COLUMNS),
                          _fmt(c), r["status"]])
        out.append(_write(cfg.out / f"sweep_N{N}.csv",
                          _csv(head, ["V_over_h", *SWEEP_COLUMNS, "chi", "status"], table)))
        spec = [row for _, s in results for row in s]
        out.append(_write(cfg.out / f"spectrum_N{N}.csv",
                          _csv(head, ["V_over_h", "sector", "index", "re_over_h", "im_over_h", "residual"], spec)))
    return out


def run_spectrum(cfg: RunConfig) -> list[Path]:
    count = int(cfg.extra.get("count", 4))
    out = []
    for N in cfg.N or [cfg.params.N]:
        L = heom.build_liouvillian(cfg.params.with_(N=N), cfg.k_max)
        split = heom.sector_split(L)
        rows = []
        for sector in (0, 1):
            res = heom.sector_spectrum(L, sector, count, cfg.method, split=split, seed=cfg.seed)
            rows += list(heom.spectrum_csv_rows(res, cfg.params.h))
        out.append(_write(cfg.out / f"spectrum_N{N}.csv",
                          _csv(cfg.provenance(N_point=N), ["sector", "index", "re_over_h", "im_over_h", "residual"],
                               rows)))
    return out


def run_branches(cfg: RunConfig) -> list[Path]:
    out = []
    for N in cfg.N or [cfg.params.N]:
        L = heom.build_liouvillian(cfg.params.with_(N=N), cfg.k_max)
        alg = spin_algebra.build(N)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            br = heom.branches(L)
        info = {"N": N, "k_max": cfg.k_max, "lambda_0_1": [br.gap0.real, br.gap0.imag],
                "formed": br.formed, "reason": br.reason,
                "overlap_rho0_rho1": float(np.vdot(br.rho0, br.rho1).real)}
        for tag, rho in (("plus", br.rho_plus), ("minus", br.rho_minus)):
            info[tag] = {"sx_norm": observables.expectation(rho, alg.Sx) / alg.J,
                         "sy_norm": observables.expectation(rho, alg.Sy) / alg.J,
                         "sz_norm": observables.expectation(rho, alg.Sz) / alg.J}
            out.append(_write(cfg.out / f"rho_{tag}_N{N}.txt", heom.dump_matrix(rho)))
        out.append(_write(cfg.out / f"branches_N{N}.json", json.dumps(info, indent=2, sort_keys=True)))
    return out


def run_husimi(cfg: RunConfig) -> list[Path]:
    out = []
    grid = tuple(cfg.extra.get("grid", (91, 181)))
    for N in cfg.N or [cfg.params.N]:
        L = heom.build_liouvillian(cfg.params.with_(N=N), cfg.k_max)
        rho = heom.steady_state(L).rho
        field_ = observables.husimi(rho, spin_algebra.build(N), grid=grid)
        head = cfg.provenance(N_point=N, normalization=f"{field_.normalization():.10f}")
        out.append(_write(cfg.out / f"husimi_N{N}.csv", field_.to_csv(head)))
        peaks = [{"theta_deg": math.degrees(t), "phi_deg": math.degrees(f), "Q": q}
                 for t, f, q in field_.maxima(4)]
        out.append(_write(cfg.out / f"husimi_N{N}.json", json.dumps({"maxima": peaks}, indent=2)))
    return out


# --- thermodynamic limit ------------------------------------------------------------------

def run_squeeze_thermo(cfg: RunConfig) -> list[Path]:
    p = cfg.params
    result = {"params": {"V": p.V, "h": p.h, "gamma": p.gamma, "kappa": p.kappa, "omega": p.omega},
              "phases": {}}
    for ph in thermolimit.stable_phases(p):
        try:
            qm = thermolimit.quadratic_model(p, ph)
        except thermolimit.UnstableQuadraticModelError as exc:
            # exactly on a critical line the fluctuation model is marginal
            result["phases"][ph.value] = {"xi2": None, "status": f"marginal: {exc}"}
            continue
        result["phases"][ph.value] = {
            "xi2": thermolimit.xi2_from_moments(qm.Z),
            "b_occupation": qm.b_occupation,
            "b_squared": [qm.b_squared.real, qm.b_squared.imag],
            "Z_real": qm.Z.real.tolist(), "Z_imag": qm.Z.imag.tolist(),
        }
    return [_write(cfg.out / "squeeze_thermo.json", json.dumps(result, indent=2, sort_keys=True))]


GAMMA_RULES = {
    "second-order": lambda h, k, w: h / (2 * thermolimit.q2_of(k, w)),
    "first-order": lambda h, k, w: 5 * h / thermolimit.q2_of(k, w),
}


def run_squeeze_scan(cfg: RunConfig) -> list[Path]:
    rule = cfg.extra.get("gamma_rule", "second-order")
    if rule not in GAMMA_RULES:
        raise UsageError(f"--gamma-rule must be one of {sorted(GAMMA_RULES)}")
    v = cfg.axes.get("V_over_h", Axis("V_over_h", -1.0, 2.0, 61)).values
    ho = cfg.axes.get("h_over_omega", Axis("h_over_omega", 0.5, 0.5, 1)).values
    ko = cfg.axes.get("kappa_over_omega", Axis("kappa_over_omega", 1.0, 1.0, 1)).values
    rows = thermolimit.squeeze_scan(v, ho, ko, GAMMA_RULES[rule])
    head = cfg.provenance(gamma_rule=rule)
    return [_write(cfg.out / "squeeze_scan.csv", thermolimit.scan_to_csv(rows, head))]


# --- lab map ------------------------------------------------------------------------------

def run_labmap(cfg: RunConfig) -> list[Path]:
    lab_path = cfg.extra.get("lab")
    out = []
    if lab_path:
        lab = labmap.read_lab(lab_path)
    else:
        # inverse design from the model parameters, then map forward
        lab = labmap.design_lab_point(cfg.params, retained=cfg.extra.get("retained", "a2"))
        out.append(_write(cfg.out / "lab_design.txt", labmap.dumps_lab(lab)))
    try:
        red = labmap.reduce_to_model(lab)
    except labmap.LabConditionError as exc:
        _write(cfg.out / "labmap_diagnostics.json",
               json.dumps({"conditions": exc.report, "failed": exc.failed}, indent=2, sort_keys=True))
        raise
    out.append(_write(cfg.out / "model_params.txt", dumps_params(red.params, unit="absolute")))
    out.append(_write(cfg.out / "labmap_diagnostics.json", red.diagnostics_json()))
    return out


# --- validation battery -----------------------------------------------------------------------

def _check(name: str, ok: bool, **data) -> dict:
    return {"check": name, "pass": bool(ok), **data}


def _heom_vs_embedding(p: ModelParams, k_max: int, n_max: int, upward_sign: float = 1.0) -> float:
    L = heom.build_liouvillian(p, k_max, upward_sign=upward_sign)
    rho_h = heom.steady_state(L).rho
    _, rho_e = embedding.steady_state_embedding(embedding.build_embedding(p, n_max))
    return embedding.trace_distance(rho_h, rho_e)


def validation_battery(quick: bool = False, seed: int = heom.DEFAULT_SEED) -> list[dict]:
    rng = np.random.default_rng(seed)
    checks = []

    # mean-field fixed points
    worst = 0.0
    for _ in range(20 if quick else 200):
        p = ModelParams(V=rng.uniform(-5, 5), h=rng.uniform(0.2, 2), gamma=rng.uniform(0, 20),
                        kappa=rng.uniform(0.1, 10), omega=rng.uniform(-10, 10))
        if meanfield.on_degenerate_line(p):
            continue
        for st in meanfield.analytic_fixed_points(p).values():
            worst = max(worst, meanfield.residual(st, p) / max(p.h, p.kappa))
    checks.append(_check("mean-field fixed-point residuals", worst < 1e-12, max_residual=worst))

    # symmetry algebra, dense
    E = embedding.build_embedding(ModelParams(V=0.7, h=1.0, gamma=3.0, kappa=1.5, omega=2.0, N=3), 4)
    rep = embedding.verify_symmetry_algebra(E)
    checks.append(_check("symmetry algebra (N=3, n_max=4)", all(r["pass"] for r in rep),
                         max_norm=max(r["norm"] for r in rep)))

    # HEOM against the pseudomode embedding, and the same with a sign mutation
    p = ModelParams(V=0.5, h=1.0, gamma=2.0, kappa=2.0, omega=2.0, N=2)
    k_max, n_max = (10, 16) if quick else (14, 24)
    dist = _heom_vs_embedding(p, k_max, n_max)
    checks.append(_check("HEOM vs embedding steady state", dist < 1e-6, trace_distance=dist,
                         k_max=k_max, n_max=n_max))
    mutated = _heom_vs_embedding(p, k_max, n_max, upward_sign=-1.0)
    checks.append(_check("mutation (flipped upward coupling sign) is detected", mutated > 1e-3,
                         trace_distance=mutated))

    # Lyapunov against the two-mode Fock oracle
    q = ModelParams(V=0.2, h=1.0, gamma=0.2, kappa=0.1, omega=1.0)
    qm = thermolimit.quadratic_model(q, "II")
    Zf = thermolimit.fock_moments(qm.H, qm.K, qm.M, cutoff=10 if quick else 16)
    err = float(np.max(np.abs(Zf - qm.Z)))
    checks.append(_check("third quantization vs Fock oracle", err < (1e-6 if quick else 1e-8), max_abs_error=err))

    # power-law fit on synthetic data
    Ns = np.array([12, 16, 20, 24, 28])
    fit = observables.gap_scaling_fit(np.column_stack([Ns, 3.0 * Ns ** -0.63]))
    checks.append(_check("gap-scaling fit recovers a synthetic exponent", abs(fit.exponent + 0.63) < 1e-12
                         and fit.r2 > 1 - 1e-12, exponent=fit.exponent))

    # lab map round trip
    target = ModelParams(V=1.3, h=1.0, gamma=2.5, kappa=0.7, omega=1.1, N=50)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        back = labmap.reduce_to_model(labmap.design_lab_point(target)).params
    rel = max(abs(getattr(back, k) - getattr(target, k)) / abs(getattr(target, k))
              for k in ("V", "h", "gamma", "kappa", "omega"))
    checks.append(_check("lab map round trip", rel < 1e-10, max_rel_error=rel))
    return checks


def run_validate(cfg: RunConfig) -> tuple[list[Path], bool]:
    checks = validation_battery(cfg.quick, cfg.seed)
    ok = all(c["pass"] for c in checks)
    path = _write(cfg.out / "validate.json",
                  json.dumps({"version": __version__, "quick": cfg.quick, "pass": ok, "checks": checks},
                             indent=2, sort_keys=True))
    return [path], ok


# --- argument parsing ---------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


COMMANDS = ("phase-diagram", "heom-sweep", "spectrum", "branches", "squeeze-thermo",
            "squeeze-scan", "husimi", "labmap", "validate")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--params", help="key = value model parameter file")
    common.add_argument("--axis", action="append", default=[], help="sweep axis name:start:stop:count")
    common.add_argument("--N", dest="N", default=None, help="comma-separated list of spin numbers")
    common.add_argument("--kmax", type=int, default=8, help="hierarchy depth")
    common.add_argument("--method", choices=("dense", "shift-invert"), default="shift-invert")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--seed", type=int, default=heom.DEFAULT_SEED)
    common.add_argument("--quick", action="store_true", help="reduced validation battery")

    parser = _Parser(prog="nmlmg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "heom-sweep":
            sp.add_argument("--workers", type=int, default=1, help="process pool size")
        if name == "spectrum":
            sp.add_argument("--count", type=int, default=4, help="eigenvalues per sector")
        if name == "squeeze-scan":
            sp.add_argument("--gamma-rule", choices=sorted(GAMMA_RULES), default="second-order")
        if name == "labmap":
            sp.add_argument("--lab", help="lab parameter file; without it a point is designed from --params")
            sp.add_argument("--retained", choices=labmap.SLOW_MODES, default="a2")
    return parser


def make_config(ns) -> RunConfig:
    params = read_params(ns.params) if ns.params else DEFAULT_PARAMS
    axes = {}
    for text in ns.axis:
        ax = parse_axis(text)
        axes[ax.name] = ax
    if ns.N is None:
        N = []
    else:
        N = parse_n_list(ns.N)
    if ns.kmax < 0:
        raise UsageError("--kmax must be >= 0")
    extra = {k: getattr(ns, k) for k in ("workers", "count", "gamma_rule", "lab", "retained") if hasattr(ns, k)}
    out = Path(ns.out)
    if out.exists() and not out.is_dir():
        raise UsageError(f"--out {out} is not a directory")
    return RunConfig(ns.command, params, ns.params, axes, N, ns.kmax, ns.method, out, ns.seed, ns.quick, extra)


RUNNERS = {
    "phase-diagram": run_phase_diagram,
    "heom-sweep": run_heom_sweep,
    "spectrum": run_spectrum,
    "branches": run_branches,
    "squeeze-thermo": run_squeeze_thermo,
    "squeeze-scan": run_squeeze_scan,
    "husimi": run_husimi,
    "labmap": run_labmap,
}


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = make_config(ns)
        if cfg.command == "validate":
            paths, ok = run_validate(cfg)
            for pth in paths:
                print(pth)
            return EXIT_OK if ok else EXIT_VALIDATION
        for pth in RUNNERS[cfg.command](cfg):
            print(pth)
        return EXIT_OK
    except UsageError as exc:
        print(f"nmlmg: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError) as exc:
        if isinstance(exc, labmap.LabConditionError):
            print(f"nmlmg: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
        print(f"nmlmg: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SOLVER_ERRORS as exc:
        print(f"nmlmg: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
