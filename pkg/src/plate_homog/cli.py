"""Command-line front end.

Every subcommand writes a CSV table whose header block (lines starting with
``#``) records the configuration, versions and timing, plus a JSON mirror
next to it when ``--out`` is given.  Exit codes: 0 success, 2 invalid input,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from ._core import BACKEND
from .cell_moderate import DEFAULT_MODES, solve_cell_m
from .cell_supercritical import (
    SWEEP_COLUMNS,
    BendingTensor,
    classify_direction,
    direction_sweep,
    factor_bending,
    solve_cell_sc,
    thread_cap,
)
from .errors import PlateHomogError, SolverError, ValidationError
from .geometry import (
    Body,
    DevelopableSurface,
    LeadingCurve,
    cantor_curve,
    integrate_darboux,
    isometry_defect,
    surface_energy,
)
from .material import PeriodicMaterial, load_material, q2_of
from .recovery import CylinderSurface, QuadSpec, RecoveryCase, ScalingRegime, convergence_study
from .two_scale import GridFunction, integral_identity_check, mollify, transfer_factor, unfold

COMMANDS = ("qhom-m", "qhom-sc", "sweep", "surface-energy", "recovery-check", "cantor-demo",
            "unfold-check", "mollify-demo", "selftest")


@dataclass
class RunConfig:
    """Validated knobs of one invocation, echoed into the output header."""

    command: str
    material: str | None = None
    out: str | None = None
    modes: int = DEFAULT_MODES
    seed: int = 0
    extra: dict = field(default_factory=dict)


@dataclass
class Table:
    columns: list
    rows: list
    notes: dict = field(default_factory=dict)


# ---------------------------------------------------------------- input files

def _read_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc


def _direction_from(value, T=None):
    """``[p, q]``, ``{"angle": a}`` or ``"irrational"`` (angle taken from ``T``)."""
    if value is None:
        return None
    if value == "irrational" or (isinstance(value, dict) and "angle" in value):
        if isinstance(value, dict):
            angle = float(value["angle"])
        elif T is not None:
            angle = math.atan2(T[1], T[0])
        else:
            raise ValidationError("an irrational direction needs an angle or a tangent")
        return classify_direction(angle=angle)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return classify_direction(int(value[0]), int(value[1]))
    raise ValidationError(f"cannot parse direction {value!r}")


def _tangent(piece: dict) -> np.ndarray:
    if "T" in piece:
        T = np.asarray(piece["T"], dtype=float)
    elif "angle" in piece:
        a = float(piece["angle"])
        T = np.array([math.cos(a), math.sin(a)])
    else:
        raise ValidationError("arm needs 'T' or 'angle'")
    if T.shape != (2,) or not np.linalg.norm(T) > 0:
        raise ValidationError("arm tangent must be a nonzero 2-vector")
    return T / np.linalg.norm(T)


def surface_from_dict(data: dict) -> DevelopableSurface:
    """Pieces ``{"type": "arm" | "cantor" | "body", ...}`` glued in order.

    Arms: ``T`` or ``angle``, ``kappa``, ``length``, ``s_range``, optional
    ``kappa_gamma`` (constant), ``dt``, ``start`` and ``direction`` (``[p, q]``
    or ``{"angle": a}``).  Cantor pieces: ``beta``, ``levels``, ``kappa``,
    ``s_range``, ``dt``, ``start``.  Bodies: ``area``.
    """
    pieces = data.get("pieces")
    if not isinstance(pieces, list) or not pieces:
        raise ValidationError("surface file needs a nonempty 'pieces' list")
    surf = DevelopableSurface()
    for piece in pieces:
        kind = piece.get("type")
        if kind == "body":
            surf.pieces.append(Body(float(piece.get("area", 0.0))))
            continue
        s_range = tuple(piece.get("s_range", (0.0, 1.0)))
        prev = surf.arms[-1] if surf.arms else None
        start = piece.get("start", prev.curve.points[-1].tolist() if prev else (0.0, 0.0))
        if kind == "arm":
            T = _tangent(piece)
            dt = float(piece.get("dt", 1e-3))
            length = float(piece.get("length", 1.0))
            kg = float(piece.get("kappa_gamma", 0.0))
            kappa = float(piece.get("kappa", 0.0))
            if kg == 0.0:
                curve = LeadingCurve.straight(T, kappa, length, dt, start)
            else:
                curve = LeadingCurve.arc(kg, kappa, length, dt, start, math.atan2(T[1], T[0]))
        elif kind == "cantor":
            curve = cantor_curve(float(piece["beta"]), int(piece["levels"]), piece.get("dt"),
                                 float(piece.get("kappa", 1.0)), start)
        else:
            raise ValidationError(f"unknown piece type {kind!r}")
        surf.append_arm(curve, s_range, _direction_from(piece.get("direction"), curve.tangent[0]))
    return surf


def case_from_dict(data: dict, material: PeriodicMaterial) -> tuple[RecoveryCase, list, float | None, str | None]:
    """Recovery case: ``surface`` (``T``, ``kappa``), ``corrector``, ``director``,
    ``modes``, ``schedule`` and optional ``exponent`` and ``ansatz``."""
    s = data.get("surface", {})
    T = np.asarray(s.get("T", (1.0, 0.0)), dtype=float)
    surface = CylinderSurface.unit_square(T, float(s.get("kappa", 1.0)))
    corrector = data.get("corrector", "solve")
    if corrector not in ("solve", "zero"):
        raise ValidationError("corrector must be 'solve' or 'zero'")
    case = RecoveryCase(material, surface, corrector, data.get("director", "minimizer"),
                        int(data.get("modes", DEFAULT_MODES)), _direction_from(s.get("direction"), T))
    schedule = [float(e) for e in data.get("schedule", [])]
    if not schedule:
        raise ValidationError("case needs a nonempty 'schedule'")
    exponent = data.get("exponent")
    return case, schedule, None if exponent is None else float(exponent), data.get("ansatz")


# ---------------------------------------------------------------- output

def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return v


def render_csv(table: Table, header: dict) -> str:
    buf = io.StringIO()
    for key, value in header.items():
        buf.write(f"# {key}: {json.dumps(value, sort_keys=True, default=str)}\n")
    for key, value in table.notes.items():
        buf.write(f"# {key}: {json.dumps(value, sort_keys=True, default=str)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    for row in table.rows:
        w.writerow([_fmt(row.get(c, "")) for c in table.columns])
    return buf.getvalue()


def _emit(cfg: RunConfig, table: Table, elapsed: float, stream) -> None:
    header = {
        "command": cfg.command,
        "config": asdict(cfg),
        "versions": {"plate_homog": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "backend": BACKEND},
        "elapsed_seconds": round(elapsed, 6),
    }
    text = render_csv(table, header)
    if cfg.out:
        path = Path(cfg.out)
        path.write_text(text)
        mirror = {"header": header, "notes": table.notes, "columns": table.columns,
                  "rows": [{c: _fmt(r.get(c, "")) for c in table.columns} for r in table.rows]}
        path.with_suffix(path.suffix + ".json").write_text(json.dumps(mirror, indent=2, default=str) + "\n")
    else:
        stream.write(text)


# ---------------------------------------------------------------- commands

def _material(cfg: RunConfig) -> PeriodicMaterial:
    if not cfg.material:
        raise ValidationError("--material is required")
    return load_material(cfg.material)


def cmd_qhom_m(cfg: RunConfig, args) -> Table:
    q2 = q2_of(_material(cfg))
    a, b, c = args.ii
    ii = np.array([[a, c], [c, b]])
    sol = solve_cell_m(q2, ii, cfg.modes)
    row = {"ii11": a, "ii22": b, "ii12": c, "energy": sol.energy, "modes": sol.modes,
           "residual": sol.residual_norm, "corrector_norm": sol.corrector.norm()}
    return Table(list(row), [row])


def cmd_qhom_sc(cfg: RunConfig, args) -> Table:
    q2 = q2_of(_material(cfg))
    if args.ii is not None:
        if args.angle is not None:
            raise ValidationError("--ii and --angle are exclusive")
        a, b, c = args.ii
        tag = classify_direction(*args.direction) if args.direction is not None else None
        bt = factor_bending(np.array([[a, c], [c, b]]), direction=tag)
    elif args.direction is not None:
        bt = BendingTensor(classify_direction(*args.direction), args.c)
    elif args.angle is not None:
        bt = BendingTensor(classify_direction(angle=args.angle), args.c)
    else:
        raise ValidationError("give --ii, --dir or --angle")
    sol = solve_cell_sc(q2, bt, cfg.modes, args.method)
    d = bt.direction
    row = {"kind": d.kind, "p": d.p if d.is_rational else "", "q": d.q if d.is_rational else "",
           "T1": float(d.T[0]), "T2": float(d.T[1]), "c": bt.c, "energy": sol.energy,
           "method": args.method, "residual": sol.residual_norm}
    return Table(list(row), [row])


def cmd_sweep(cfg: RunConfig, args) -> Table:
    q2 = q2_of(_material(cfg))
    threads = min(args.threads or thread_cap(), thread_cap())
    rows = direction_sweep(q2, args.max_den, cfg.modes, args.method, threads)
    return Table(list(SWEEP_COLUMNS) + ["status"], rows, {"rational_rows": len(rows) - 1})


def cmd_surface_energy(cfg: RunConfig, args) -> Table:
    q2 = q2_of(_material(cfg))
    surf = surface_from_dict(_read_json(args.surface))
    threads = thread_cap()
    energy = surface_energy(surf, q2, args.regime, cfg.modes, threads)
    parts = []
    for k, arm in enumerate(surf.arms):
        one = DevelopableSurface([arm])
        parts.append({"piece": k, "energy": surface_energy(one, q2, args.regime, cfg.modes)})
    parts.append({"piece": "total", "energy": energy})
    return Table(["piece", "energy"], parts, {"isometry_defect": isometry_defect(surf, 2000)})


def cmd_recovery_check(cfg: RunConfig, args) -> Table:
    material = _material(cfg)
    case, schedule, exponent, ansatz = case_from_dict(_read_json(args.case), material)
    if args.regime in ("m", "moderate"):
        regime = ScalingRegime.moderate(exponent or 1.5)
    else:
        regime = ScalingRegime.supercritical(exponent or 3.0)
    table = convergence_study(regime, case, schedule, QuadSpec(), ansatz)
    rows = [r.as_dict() for r in table.rows]
    return Table(["eps", "h", "energy", "target", "rel_error", "quad_error"], rows,
                 {"improved": table.improved})


def cmd_cantor_demo(cfg: RunConfig, args) -> Table:
    curve = cantor_curve(args.beta, args.levels, args.dt)
    frames = integrate_darboux(curve)
    cset = curve.meta["cantor"]
    stride = max(1, curve.steps // args.samples)
    rows = []
    for i in range(0, curve.steps + 1, stride):
        rows.append({"kind": "curve", "t": float(curve.t[i]), "x1": float(curve.points[i, 0]),
                     "x2": float(curve.points[i, 1]), "T1": float(curve.tangent[i, 0]),
                     "T2": float(curve.tangent[i, 1]), "kappa_gamma": float(curve.kappa_gamma[i])})
    for k, lev in enumerate(cset.removed, start=1):
        for a, b in lev:
            rows.append({"kind": "removed", "level": k, "left": str(a), "right": str(b)})
    notes = {"removed_measure": str(cset.removed_measure()), "max_frame_drift": frames.max_drift}
    cols = ["kind", "t", "x1", "x2", "T1", "T2", "kappa_gamma", "level", "left", "right"]
    return Table(cols, rows, notes)


def cmd_unfold_check(cfg: RunConfig, args) -> Table:
    rng = np.random.default_rng(cfg.seed)
    n = args.n
    rows = []
    for trial in range(args.trials):
        disc = trial % 2 == 1
        mask = (lambda x, y: (x - 0.5) ** 2 + (y - 0.5) ** 2 < 0.16) if disc else None
        v = GridFunction.sample(lambda x, y: rng.standard_normal(x.shape), n, mask_fn=mask)
        res = integral_identity_check(v, args.eps)
        rows.append({"trial": trial, "domain": "disc" if disc else "square",
                     "boundary_cells": len(unfold(v, args.eps).boundary), "residual": res})
    return Table(["trial", "domain", "boundary_cells", "residual"], rows)


def cmd_mollify_demo(cfg: RunConfig, args) -> Table:
    n = args.n
    v = GridFunction.sample(lambda x, y: np.sin(2 * np.pi * x), n)
    m = mollify(v, args.h)
    X, _ = m.nodes()
    ratio = float(np.max(np.abs(m.values)) / np.max(np.abs(np.sin(2 * np.pi * X))))
    factor = transfer_factor(args.h, 1.0 / n)
    rows = [{"x1": float(x), "value": float(val)} for x, val in zip(X[:, 0], m.values[:, 0])]
    return Table(["x1", "value"], rows, {"transfer_factor": factor, "observed_ratio": ratio})


def selftest_checks() -> list[tuple[str, bool]]:
    """Cheap invariants of every module whose answers are forced."""
    from fractions import Fraction

    from .material import eval_W, linearize_q3
    from .recovery import PlateDeformation, build_recovery_moderate, energy_3d

    checks = []
    hom = PeriodicMaterial.homogeneous(1.0, 1.0)
    lam = PeriodicMaterial.laminate([1.0, 10.0], [0.0, 0.0])
    q2 = q2_of(hom)
    y = np.array([[0.3, 0.7]])
    c30, s30 = math.cos(math.pi / 6), math.sin(math.pi / 6)
    R = np.array([[c30, -s30, 0.0], [s30, c30, 0.0], [0.0, 0.0, 1.0]])
    checks.append(("W vanishes at identity and rotations",
                   float(np.max(eval_W(lam, y, np.stack([np.eye(3), R])))) < 1e-15))
    skew = np.array([[0.0, 1.0, -2.0], [-1.0, 0.0, 3.0], [2.0, -3.0, 0.0]])
    checks.append(("Q3 vanishes on skew matrices", abs(float(linearize_q3(lam).evaluate(y, skew)[0])) < 1e-14))
    checks.append(("Q2 of zero", float(q2_of(lam).evaluate(y, np.zeros((2, 2)))[0]) == 0.0))

    ii = np.array([[-1.0, 0.0], [0.0, 0.0]])
    sm = solve_cell_m(q2, ii, 4)
    ss = solve_cell_sc(q2, factor_bending(ii), 4)
    checks.append(("homogeneous collapse", abs(sm.energy - 4 / 3) < 1e-10 and abs(ss.energy - 4 / 3) < 1e-10
                   and sm.corrector.norm() < 1e-10))
    checks.append(("quadratic homogeneity", abs(solve_cell_m(q2_of(lam), 2 * ii, 4).energy
                                                 - 4 * solve_cell_m(q2_of(lam), ii, 4).energy) < 1e-10))
    checks.append(("gcd reduction", classify_direction(6, 8) == classify_direction(3, 4)))
    bt = factor_bending(ii)
    zero = factor_bending(np.zeros((2, 2)))
    checks.append(("bending gauge", bt.c == 1.0 and np.allclose(bt.direction.T, (1, 0))
                   and zero.c == 0.0 and np.allclose(zero.direction.T, (1, 0))))
    rows = direction_sweep(q2, 3, 4, threads=1)
    checks.append(("homogeneous sweep has no gap", max(abs(r["gap"]) for r in rows) < 1e-12))

    flat = LeadingCurve.straight((1.0, 0.0), 0.0, 1.0, 1e-2)
    frames = integrate_darboux(flat)
    checks.append(("constant frames without curvature", float(np.max(np.abs(frames.frames - frames.frames[0]))) == 0.0))
    plane = DevelopableSurface()
    plane.append_arm(flat, (0.0, 1.0))
    checks.append(("planar patch", isometry_defect(plane, 500) <= 1e-12 and surface_energy(plane, q2) == 0.0))
    cyl = DevelopableSurface()
    arm = cyl.append_arm(LeadingCurve.straight((1.0, 0.0), 1.0, 1.0, 1e-2), (0.0, 1.0))
    II = arm.second_fundamental_form(np.array([0.5]), np.array([0.5]))[0]
    checks.append(("cylinder second fundamental form", np.allclose(II, ii, atol=1e-12)))
    checks.append(("cantor removed measure", cantor_curve(1.0, 3).meta["cantor"].removed_measure() == Fraction(7, 16)))

    checks.append(("identity plate energy", energy_3d(lam, PlateDeformation.identity(0.01, 0.25)).value < 1e-20))
    rot = PlateDeformation.identity(0.01, 0.25).rotated(R, (1.0, 2.0, 3.0))
    checks.append(("rigid motion energy", energy_3d(lam, rot).value < 1e-20))
    planar = build_recovery_moderate(CylinderSurface.unit_square((1.0, 0.0), 0.0), None, "zero", 0.01, 0.25)
    checks.append(("planar trivial extension", energy_3d(lam, planar).value <= 1e-12))

    v = GridFunction(np.full((16, 16), 3.0), 1 / 16)
    u = unfold(v, 0.25)
    checks.append(("unfold constant", bool(np.all(u.values == 3.0)) and len(u.boundary) == 0))
    checks.append(("identity residual of a constant", integral_identity_check(v, 0.25) == 0.0))
    g = GridFunction.sample(lambda x1, x2: 2.0 + 0.0 * x1, 64)
    lin = GridFunction.sample(lambda x1, x2: x1, 64)
    mg, ml = mollify(g, 1 / 16), mollify(lin, 1 / 16)
    X, _ = ml.nodes()
    checks.append(("mollify constant and linear", float(np.max(np.abs(mg.values - 2.0))) < 1e-12
                   and float(np.max(np.abs(ml.values - X))) < 1e-12))
    return checks


def cmd_selftest(cfg: RunConfig, args) -> Table:
    rows = [{"check": name, "result": "PASS" if ok else "FAIL"} for name, ok in selftest_checks()]
    return Table(["check", "result"], rows)


HANDLERS = {
    "qhom-m": cmd_qhom_m,
    "qhom-sc": cmd_qhom_sc,
    "sweep": cmd_sweep,
    "surface-energy": cmd_surface_energy,
    "recovery-check": cmd_recovery_check,
    "cantor-demo": cmd_cantor_demo,
    "unfold-check": cmd_unfold_check,
    "mollify-demo": cmd_mollify_demo,
    "selftest": cmd_selftest,
}


# ---------------------------------------------------------------- argument parsing

def _positive_int(lo: int, hi: int):
    def parse(text: str) -> int:
        v = int(text)
        if not lo <= v <= hi:
            raise argparse.ArgumentTypeError(f"expected an integer in [{lo}, {hi}]")
        return v
    return parse


def _bounded_float(lo: float, hi: float):
    def parse(text: str) -> float:
        v = float(text)
        if not (lo < v <= hi) or not math.isfinite(v):
            raise argparse.ArgumentTypeError(f"expected a number in ({lo}, {hi}]")
        return v
    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plate-homog", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, material=True):
        if material:
            p.add_argument("--material", required=True, help="material JSON file")
        p.add_argument("--out", help="CSV output path (a .json mirror is written next to it)")
        p.add_argument("--modes", type=_positive_int(1, 64), default=DEFAULT_MODES)
        p.add_argument("--seed", type=int, default=0)
        return p

    p = common(sub.add_parser("qhom-m", help="moderate homogenised energy"))
    p.add_argument("--ii", type=float, nargs=3, required=True, metavar=("II11", "II22", "II12"))

    p = common(sub.add_parser("qhom-sc", help="supercritical homogenised energy"))
    p.add_argument("--ii", type=float, nargs=3, metavar=("II11", "II22", "II12"))
    p.add_argument("--dir", "--direction", dest="direction", type=int, nargs=2, metavar=("P", "Q"),
                   help="rational direction; with --ii it tags the eigenvector")
    p.add_argument("--angle", type=float, help="irrational direction angle")
    p.add_argument("--coeff", "--c", dest="c", type=float, default=1.0, help="curvature factor with --dir/--angle")
    p.add_argument("--method", choices=("exact", "galerkin"), default="exact")

    p = common(sub.add_parser("sweep", help="supercritical energy over Farey directions"))
    p.add_argument("--max-den", type=_positive_int(1, 64), required=True)
    p.add_argument("--method", choices=("exact", "galerkin"), default="exact")
    p.add_argument("--threads", type=_positive_int(1, 256))

    p = common(sub.add_parser("surface-energy", help="limit energy of a developable surface"))
    p.add_argument("--surface", required=True)
    p.add_argument("--regime", choices=("m", "sc"), required=True)

    p = common(sub.add_parser("recovery-check", help="3D energy of recovery sequences"))
    p.add_argument("--case", required=True)
    p.add_argument("--regime", choices=("m", "sc"), required=True)

    p = common(sub.add_parser("cantor-demo", help="fat Cantor leading curve"), material=False)
    p.add_argument("--beta", type=_bounded_float(0.0, 2 * math.sqrt(2)), required=True)
    p.add_argument("--levels", type=_positive_int(0, 12), required=True)
    p.add_argument("--dt", type=_bounded_float(0.0, 0.1))
    p.add_argument("--samples", type=_positive_int(2, 100000), default=200)

    p = common(sub.add_parser("unfold-check", help="unfolding integral identity"), material=False)
    p.add_argument("--eps", type=_bounded_float(0.0, 1.0), required=True)
    p.add_argument("--n", type=_positive_int(2, 4096), required=True)
    p.add_argument("--trials", type=_positive_int(1, 1000), default=20)

    p = common(sub.add_parser("mollify-demo", help="mollifier damping of a sine"), material=False)
    p.add_argument("--h", type=_bounded_float(0.0, 0.5), required=True)
    p.add_argument("--n", type=_positive_int(8, 4096), default=256)

    common(sub.add_parser("selftest", help="quick invariants of every module"), material=False)
    return parser


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    extra = {k: v for k, v in vars(args).items() if k not in ("command", "material", "out", "modes", "seed")}
    cfg = RunConfig(args.command, getattr(args, "material", None), args.out, args.modes, args.seed, extra)
    t0 = time.perf_counter()
    try:
        table = HANDLERS[args.command](cfg, args)
    except ValidationError as exc:
        print(f"error: {exc}", file=stderr)
        return 2
    except SolverError as exc:
        print(f"solver failure: {exc}", file=stderr)
        return 3
    except PlateHomogError as exc:
        print(f"error: {exc}", file=stderr)
        return 2
    _emit(cfg, table, time.perf_counter() - t0, stdout)
    if args.command == "selftest" and any(r["result"] != "PASS" for r in table.rows):
        return 3
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
