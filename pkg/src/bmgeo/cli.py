"""Command-line front end: single-shot commands that compose the library.

Every command validates its configuration up front, writes its artifact
atomically, and drops a manifest JSON recording the configuration hash,
package and numpy versions, and the tolerances in force.  Identical
configuration and seed reproduce byte-identical artifacts; only the
manifest timestamp varies.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from . import bodies as bod
from . import detect as det
from . import functional as fl
from . import functions as fn
from . import mollifier as mol
from .calculus import (cheng_yau_residual, det2, extension_hessian,
                       parts_identity_residual, q_batch,
                       second_variation_identity_residual)
from .functions import SphericalFunction, builtin_function, rotate_function
from .grid import build_grid

EXIT_OK = 0
EXIT_NOT_SUPPORT = 1
EXIT_INCONCLUSIVE = 2
EXIT_CONFIG = 64
EXIT_NUMERICAL = 65

COMMANDS = ("detect", "bm-scan", "variation", "identities", "mollify",
            "area-measure", "planar")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Validated inputs of one command invocation."""

    command: str
    grid_level: int = 3
    function: Optional[str] = None
    h: Optional[str] = None
    phi: Optional[str] = None
    bodies: Optional[str] = None
    t_grid: float = 0.25
    form: str = "min_form"
    k: int = 20
    samples: int = 2000
    seed: int = 0
    levels: Optional[str] = None
    k0: Optional[str] = None
    k1: Optional[str] = None
    f2d_seed: int = 0
    out: Optional[str] = None
    emit_witness: Optional[str] = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if not 0 <= int(self.grid_level) <= 7:
            raise ConfigError("grid level must lie in 0..7")
        if self.form not in ("min_form", "concave_root", "min", "root"):
            raise ConfigError(f"unknown inequality form {self.form!r}")
        if not 0.0 < float(self.t_grid) < 1.0:
            raise ConfigError("t-grid step must lie in (0, 1)")
        if int(self.k) < 1 or int(self.samples) < 10:
            raise ConfigError("mollifier needs k >= 1 and samples >= 10")

    @staticmethod
    def from_dict(obj: dict) -> "RunConfig":
        allowed = set(RunConfig.__dataclass_fields__)
        unknown = set(obj) - allowed
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return RunConfig(**obj)

    def canonical(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if v is not None}
        d["form"] = {"min": "min_form", "root": "concave_root"}.get(d["form"], d["form"])
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


TOLERANCES = {
    "identity_level4": 1e-5,
    "eigen_lemma": 1e-6,
    "rotation_equivariance": 1e-6,
    "bm_margin_floor": -1e-6,
    "psd_decision": "1e-6*(1+sup|f|)",
    "cone_mass": 1e-9,
    "centroid": 1e-6,
}

# per-level residual ceilings for the identity battery
_IDENTITY_CEILING = {0: 5e2, 1: 1e2, 2: 5e1, 3: 5e-1, 4: 1e-5}


def _atomic_write(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_manifest(cfg: RunConfig, out_path: str) -> None:
    manifest = {
        "command": cfg.command,
        "config": cfg.canonical(),
        "config_hash": cfg.config_hash(),
        "package_version": __version__,
        "numpy_version": np.__version__,
        "tolerances": TOLERANCES,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
        "artifact": os.path.basename(out_path),
    }
    _atomic_write(out_path + ".manifest.json",
                  json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def _emit(cfg: RunConfig, default_name: str, text: str) -> str:
    out = cfg.out or default_name
    _atomic_write(out, text)
    _write_manifest(cfg, out)
    return out


def parse_body(spec: str) -> bod.ConvexBody:
    """Body from a spec string or inline/file JSON."""
    s = spec.strip()
    if s.startswith("{"):
        return body_from_obj(json.loads(s))
    if s.endswith(".json") and os.path.exists(s):
        with open(s) as fh:
            return body_from_obj(json.load(fh))
    if s.startswith("builtin:"):
        s = s[len("builtin:"):]
    name, _, argstr = s.partition(":")
    args = [float(t) for t in argstr.split(",") if t.strip()] if argstr else []
    if name == "ball":
        return bod.ball(args[0] if args else 1.0)
    if name == "ellipsoid":
        return bod.ellipsoid_body(tuple(args) if args else (1.0, 1.0, 2.0))
    if name == "cone":
        return bod.Cone(aperture=args[0] if args else np.pi / 4)
    if name == "cylinder":
        r = args[0] if args else 1.0
        lam = args[1] if len(args) > 1 else 1.0
        return bod.Cylinder(base=bod.disk(r), height=lam)
    if name == "random-body":
        return bod.random_smooth_body(int(args[0]) if args else 0)
    raise ConfigError(f"unknown body spec {spec!r}")


def body_from_obj(obj: dict) -> bod.ConvexBody:
    variant = obj.get("variant")
    if variant == "ball":
        return bod.ball(obj.get("r", 1.0), obj.get("center", (0, 0, 0)))
    if variant == "cone":
        p = np.asarray(obj.get("P", (0, 0, 1)), dtype=float)
        p = p / np.linalg.norm(p)
        return bod.Cone(apex_dir=tuple(p), aperture=float(obj["theta"]))
    if variant == "cylinder":
        base = obj.get("base", {"kind": "disk", "r": 1.0})
        if base.get("kind") != "disk":
            raise ConfigError("only disk bases are accepted in JSON body specs")
        axis = np.asarray(obj.get("axis", (0, 0, 1)), dtype=float)
        axis = axis / np.linalg.norm(axis)
        return bod.Cylinder(base=bod.disk(base.get("r", 1.0)),
                            height=float(obj.get("lambda", 1.0)),
                            axis_dir=tuple(axis))
    if variant == "smooth":
        return bod.smooth_body(builtin_function(obj["h"]))
    if variant == "combo":
        return bod.minkowski_combine(
            [(float(w), body_from_obj(part)) for w, part in obj["parts"]])
    raise ConfigError(f"unknown body variant {variant!r}")


def parse_function(spec: str) -> SphericalFunction:
    s = spec.strip()
    if s.startswith("random:"):
        return fn.random_smooth(seed=int(s.split(":", 1)[1]))
    if s.startswith("random-support:"):
        return bod.random_support_function(int(s.split(":", 1)[1]))
    return builtin_function(s)


# ---------------------------------------------------------------------------
# commands


def _cmd_detect(cfg: RunConfig) -> int:
    f = parse_function(cfg.function)
    grid = build_grid(cfg.grid_level)
    try:
        outcome = det.find_bm_violation(f, grid, seed=cfg.seed)
    except det.LadderExhausted as exc:
        report = {"decision": "inconclusive", "reason": str(exc),
                  "best_value": exc.best_value}
        _emit(cfg, "bmgeo-detect.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
        return EXIT_INCONCLUSIVE
    scan = det.min_q_eigen_scan(
        f if f.smoothness != "C0" else mol.mollify(f, k=cfg.k, samples=cfg.samples,
                                                   seed=cfg.seed),
        grid)
    report = scan.to_obj()
    if outcome is None:
        report["violation"] = None
        _emit(cfg, "bmgeo-detect.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
        return EXIT_OK
    report["violation"] = outcome.to_obj()
    _emit(cfg, "bmgeo-detect.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
    if cfg.emit_witness:
        _atomic_write(cfg.emit_witness,
                      json.dumps(outcome.to_obj(), indent=2, sort_keys=True) + "\n")
    return EXIT_NOT_SUPPORT


def _cmd_bm_scan(cfg: RunConfig) -> int:
    f = parse_function(cfg.function)
    grid = build_grid(cfg.grid_level)
    form = {"min": "min_form", "root": "concave_root"}.get(cfg.form, cfg.form)
    pairs = []
    for pair in cfg.bodies.split(";"):
        a, b = pair.split(",")
        pairs.append((parse_body(a), parse_body(b), a.strip(), b.strip()))
    ts = np.arange(cfg.t_grid, 1.0 - 1e-12, cfg.t_grid)
    lines = ["body0,body1,t,form,F_K0,F_K1,F_Kt,lhs,rhs,margin"]
    for k0, k1, la, lb in pairs:
        for t in ts:
            rep = fl.bm_check(f, k0, k1, float(t), form, grid)
            lines.append(
                f"{la},{lb},{t!r},{form},{rep.f_values[0]!r},{rep.f_values[1]!r},"
                f"{rep.f_values[2]!r},{rep.lhs!r},{rep.rhs!r},{rep.margin!r}"
            )
    _emit(cfg, "bmgeo-bm-scan.csv", "\n".join(lines) + "\n")
    return EXIT_OK


def _cmd_variation(cfg: RunConfig) -> int:
    f = parse_function(cfg.function)
    h = parse_function(cfg.h)
    phi = parse_function(cfg.phi)
    grid = build_grid(cfg.grid_level)
    prof = fl.variation_profile(f, h, phi, grid)
    _emit(cfg, "bmgeo-variation.json",
          json.dumps(prof.to_obj(), indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def _identity_rows(level: int, seed: int) -> list[tuple[str, int, float]]:
    grid = build_grid(level)
    h_wave = fn.constant(1.0) + fn.quadratic_form(np.diag([0.1, 0.0, -0.1]), label="wave")
    phi = fn.random_smooth(seed=seed + 7, c0=0.5, scale=0.3)
    psi = fn.random_smooth(seed=seed + 9, c0=0.3, scale=0.3)
    fe = fn.random_smooth(seed=seed + 5, c0=1.0, scale=0.3)
    rows = [("cheng_yau", level, cheng_yau_residual(h_wave, grid))]
    r1, r2 = parts_identity_residual(h_wave, psi, phi, grid)
    rows.append(("parts_identity_1", level, r1))
    rows.append(("parts_identity_2", level, r2))
    rows.append(("second_variation", level,
                 second_variation_identity_residual(fe, phi, grid)))
    rows.append(("eigenvalue_lemma", level, _eigen_lemma_residual(seed)))
    rows.append(("rotation_equivariance", level, _rotation_residual(seed)))
    return rows


def _eigen_lemma_residual(seed: int, trials: int = 200) -> float:
    rng = np.random.default_rng(seed)
    from .grid import tangent_basis
    from .calculus import q_matrix

    names = ("constant", "ellipsoid", "blend", "saddle", "quartic-wave")
    worst = 0.0
    for i in range(trials):
        f = builtin_function(names[i % len(names)])
        u = rng.normal(size=3)
        u /= np.linalg.norm(u)
        hess = extension_hessian(f, u[None, :], richardson=True)[0]
        ev3 = np.sort(np.linalg.eigvalsh(hess))
        qs = q_matrix(f, u, tangent_basis(u), richardson=True)
        ev = np.sort(np.append(qs.eigenvalues, 0.0))
        worst = max(worst, float(np.max(np.abs(ev3 - ev))) / (1.0 + float(np.max(np.abs(ev3)))))
    return worst


def _rotation_residual(seed: int, points: int = 100) -> float:
    rng = np.random.default_rng(seed + 3)
    f = fn.random_smooth(seed=seed + 11, c0=1.0, scale=0.3)
    from scipy.spatial.transform import Rotation

    rho = Rotation.random(random_state=int(seed) + 1).as_matrix()
    frho = rotate_function(f, rho)
    pts = rng.normal(size=(points, 3))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    from .grid import _frames_for

    e1, e2 = _frames_for(pts)
    d_rot = det2(q_batch(frho, pts, e1, e2, richardson=True))
    back = pts @ rho  # rho^-1 applied row-wise
    b1, b2 = _frames_for(back)
    d_base = det2(q_batch(f, back, b1, b2, richardson=True))
    return float(np.max(np.abs(d_rot - d_base)))


def _cmd_identities(cfg: RunConfig) -> int:
    levels = ([int(t) for t in cfg.levels.split(",")] if cfg.levels
              else [cfg.grid_level])
    lines = ["identity,level,residual,threshold,pass"]
    failed = False
    for lvl in levels:
        for name, level, res in _identity_rows(lvl, cfg.seed):
            if name == "eigenvalue_lemma":
                thr = TOLERANCES["eigen_lemma"]
            elif name == "rotation_equivariance":
                thr = TOLERANCES["rotation_equivariance"]
            else:
                thr = _IDENTITY_CEILING.get(level, 1e-5)
            ok = bool(np.isfinite(res) and res < thr)
            failed |= not ok
            lines.append(f"{name},{level},{res!r},{thr!r},{ok}")
    _emit(cfg, "bmgeo-identities.csv", "\n".join(lines) + "\n")
    return EXIT_NUMERICAL if failed else EXIT_OK


def _cmd_mollify(cfg: RunConfig) -> int:
    f = parse_function(cfg.function)
    grid = build_grid(cfg.grid_level)
    fk = mol.mollify(f, k=cfg.k, samples=cfg.samples, seed=cfg.seed)
    vals = fk(grid.nodes)
    err = fk.mc_stderr(grid.nodes)
    obj = {
        "k": cfg.k, "samples": cfg.samples, "seed": cfg.seed,
        "sup_deviation": float(np.max(np.abs(vals - f(grid.nodes)))),
        "max_stderr": float(np.max(err)),
        "nodes": [[float(x) for x in n] for n in grid.nodes],
        "values": [float(v) for v in vals],
        "stderr": [float(v) for v in err],
    }
    _emit(cfg, "bmgeo-mollify.json", json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def _cmd_area_measure(cfg: RunConfig) -> int:
    body = parse_body(cfg.bodies)
    grid = build_grid(cfg.grid_level)
    measure = bod.area_measure(body, grid)
    obj = {
        "body": cfg.bodies,
        "total_mass": measure.total_mass(),
        "moment_norm": float(np.linalg.norm(measure.vector_moment())),
        "pieces": [{"label": p.label, "nodes": int(len(p.nodes)), "mass": p.mass()}
                   for p in measure.pieces],
        "atoms": [{"direction": [float(x) for x in a.direction], "mass": a.mass}
                  for a in measure.atoms],
        "curves": [{"axis": [float(x) for x in c.axis], "offset": c.offset,
                    "mass": c.mass()} for c in measure.curves],
    }
    _emit(cfg, "bmgeo-area-measure.json",
          json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def _parse_planar(spec: str) -> bod.PlanarBody:
    s = spec.strip()
    name, _, argstr = s.partition(":")
    args = [float(t) for t in argstr.split(",") if t.strip()] if argstr else []
    if name == "disk":
        return bod.disk(args[0] if args else 1.0)
    if name == "point":
        return bod.planar_point(tuple(args) if args else (0.0, 0.0))
    if name == "random":
        return bod.random_planar_body(int(args[0]) if args else 0)
    raise ConfigError(f"unknown planar body spec {spec!r}")


def _cmd_planar(cfg: RunConfig) -> int:
    k0 = _parse_planar(cfg.k0 or "random:0")
    k1 = _parse_planar(cfg.k1 or "random:1")
    rng = np.random.default_rng(cfg.f2d_seed)
    coef = rng.normal(size=4)

    def f2d(a):
        return (coef[0] + coef[1] * np.sin(a) + coef[2] * np.cos(2 * a)
                + coef[3] * np.sin(3 * a))

    res = fl.planar_additivity_residual(k0, k1, f2d)
    obj = {"k0": k0.label, "k1": k1.label, "f2d_seed": cfg.f2d_seed,
           "residual": res, "threshold": 1e-6, "pass": bool(res < 1e-6)}
    _emit(cfg, "bmgeo-planar.json", json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return EXIT_OK if res < 1e-6 else EXIT_NUMERICAL


# ---------------------------------------------------------------------------


def run(cfg: RunConfig) -> int:
    """Execute one validated configuration; returns the process exit code."""
    handlers = {
        "detect": _cmd_detect,
        "bm-scan": _cmd_bm_scan,
        "variation": _cmd_variation,
        "identities": _cmd_identities,
        "mollify": _cmd_mollify,
        "area-measure": _cmd_area_measure,
        "planar": _cmd_planar,
    }
    return handlers[cfg.command](cfg)


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="bmgeo",
        description="Spherical-calculus identities, area measures, "
                    "Brunn-Minkowski scans, and the support-function detector.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--grid-level", type=int,
                        default=int(os.environ.get("BMGEO_GRID_LEVEL", 3)))
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", type=str, default=None)
        sp.add_argument("--config", type=str, default=None,
                        help="JSON file of config keys (unknown keys rejected)")

    sp = sub.add_parser("detect", help="decide support-function / emit violation witness")
    sp.add_argument("--function", required=True)
    sp.add_argument("--emit-witness", type=str, default=None)
    sp.add_argument("--k", type=int, default=40, help="mollifier sharpness for C0 inputs")
    sp.add_argument("--samples", type=int, default=2000)
    common(sp)

    sp = sub.add_parser("bm-scan", help="CSV of inequality margins over body pairs")
    sp.add_argument("--function", required=True)
    sp.add_argument("--bodies", required=True,
                    help="pairs like 'builtin:ball,builtin:ellipsoid;...'")
    sp.add_argument("--t-grid", type=float, default=0.25, dest="t_grid")
    sp.add_argument("--form", type=str, default="min_form")
    common(sp)

    sp = sub.add_parser("variation", help="first/second variation profile")
    sp.add_argument("--function", required=True)
    sp.add_argument("--h", required=True)
    sp.add_argument("--phi", required=True)
    common(sp)

    sp = sub.add_parser("identities", help="residual battery CSV")
    sp.add_argument("--levels", type=str, default=None, help="e.g. 2,3,4")
    common(sp)

    sp = sub.add_parser("mollify", help="rotation-average a function, dump node values")
    sp.add_argument("--function", required=True)
    sp.add_argument("--k", type=int, default=20)
    sp.add_argument("--samples", type=int, default=2000)
    common(sp)

    sp = sub.add_parser("area-measure", help="measure decomposition summary")
    sp.add_argument("--body", required=True, dest="bodies")
    common(sp)

    sp = sub.add_parser("planar", help="planar additivity residual")
    sp.add_argument("--k0", type=str, default="random:0")
    sp.add_argument("--k1", type=str, default="random:1")
    sp.add_argument("--f2d-seed", type=int, default=0, dest="f2d_seed")
    common(sp)
    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    data = {k: v for k, v in vars(args).items() if v is not None and k != "config"}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        file_cfg.update({k: v for k, v in data.items() if k != "command"})
        data = {"command": data["command"], **file_cfg}
    try:
        cfg = RunConfig.from_dict(data)
    except (ConfigError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except det.LadderExhausted as exc:
        print(f"inconclusive: {exc}", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    except (bod.UnsupportedBodyError, bod.NotConvexError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
