"""Command-line entry point: ``prestrain {classify,q2,bend,scale,nematic}``.

Each subcommand accepts a JSON config (``--config``) and/or inline flags,
validates the merged config, runs the pipeline and writes a JSON report plus
CSV tables into ``--out-dir``.  Exit codes: 0 success, 2 invalid input,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .bending import (CATALOG_SEEDS, SEEDS, DegenerateFrameError, MinimizeOptions, add_noise,
                      bending_energy, minimize_bending)
from .density import (EffectiveDensityContext, IsotropicModuli, QuadraticForm3,
                      q2_iso_c, q2_iso_d, q2_iso_tan, q2_oracle)
from .diffgeo import classify
from .metric import MetricField, metric_from_config, metric_sqrt
from .nematic import director_from_params, nematic_classify, nematic_metric
from .scaling import (DEFAULT_HS, DensityKind, DensityW, QuadratureSpec, energy_3d,
                      fit_scaling, recovery_ciag, recovery_kirchhoff, recovery_koko)

log = logging.getLogger("prestrain")

SCHEMA_VERSION = "1.0"
EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3
SUBCOMMANDS = ("classify", "q2", "bend", "scale", "nematic")


class InputError(ValueError):
    pass


class NumericalFailure(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# schemas
# ---------------------------------------------------------------------------

_NUM = {"type": "number"}
_METRIC = {
    "type": "object",
    "oneOf": [
        {"required": ["catalog"]},
        {"required": ["samples", "grid"]},
    ],
    "properties": {
        "catalog": {"type": "string"},
        "params": {"type": "object"},
        "samples": {"type": "array"},
        "grid": {"type": "object"},
        "label": {"type": "string"},
    },
    "additionalProperties": False,
}
_GRID = {
    "type": "object",
    "properties": {"n": {"type": "integer", "minimum": 5}, "m": {"type": "integer", "minimum": 5}},
    "additionalProperties": False,
}
_MODULI = {
    "type": "object",
    "properties": {"mu": {"type": "number", "exclusiveMinimum": 0}, "lam": {"type": "number", "minimum": 0}},
    "additionalProperties": False,
}
_COMMON = {
    "subcommand": {"enum": list(SUBCOMMANDS)},
    "metric": _METRIC,
    "grid": _GRID,
    "moduli": _MODULI,
    "tolerances": {"type": "object", "additionalProperties": _NUM},
    "output": {"type": "object", "properties": {"dir": {"type": "string"}}, "additionalProperties": False},
    "threads": {"type": "integer", "minimum": 1},
    "seed": {"type": "integer"},
}
_SPECIFIC = {
    "classify": {},
    "q2": {
        "point": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
        "F": {"type": "array", "items": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
              "minItems": 2, "maxItems": 2},
    },
    "bend": {
        "init": {"type": "object", "properties": {
            "kind": {"enum": sorted(SEEDS)},
            "noise": {"type": "number", "minimum": 0},
            "noise_kind": {"enum": ["smooth", "white"]}}, "additionalProperties": False},
        "schedule": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
        "max_iter": {"type": "integer", "minimum": 0},
        "minimize": {"type": "boolean"},
    },
    "scale": {
        "ansatz": {"enum": ["koko", "ciag", "kirchhoff"]},
        "density": {"enum": [k.value for k in DensityKind]},
        "hs": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 4},
        "quadrature": {"type": "object", "properties": {
            "cells": {"type": "integer", "minimum": 1}, "q1": {"type": "integer", "minimum": 1},
            "q3": {"type": "integer", "minimum": 1}}, "additionalProperties": False},
    },
    "nematic": {
        "director": {"type": "object", "properties": {
            "pattern": {"type": "string"}, "psi": _NUM, "theta": {"type": "string"},
            "tilt": {"type": "string"}, "r": {"type": "number", "exclusiveMinimum": 0},
            "nu": _NUM, "delta": _NUM,
            "domain": {"type": "array", "items": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
                       "minItems": 2, "maxItems": 2}}, "additionalProperties": False},
    },
}


def config_schema(sub: str) -> dict:
    props = dict(_COMMON)
    props.update(_SPECIFIC[sub])
    return {"type": "object", "properties": props, "additionalProperties": False}


_RESULT_KEYS = {
    "classify": ["verdict", "triple_sup", "riemann_sup", "kappa2d_sup", "thresholds"],
    "q2": ["general", "oracle", "closed"],
    "bend": ["energy", "isometry_residual", "iterations", "converged"],
    "scale": ["slope", "samples"],
    "nematic": ["verdict", "residuals", "threshold"],
}


def report_schema(sub: str) -> dict:
    return {
        "type": "object",
        "required": ["schema_version", "subcommand", "inputs_hash", "results", "wall_time", "version"],
        "properties": {
            "schema_version": {"const": SCHEMA_VERSION},
            "subcommand": {"const": sub},
            "inputs_hash": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
            "results": {"type": "object", "required": _RESULT_KEYS[sub]},
            "wall_time": {"type": "number", "minimum": 0},
            "version": {"type": "string"},
        },
        "additionalProperties": False,
    }


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def inputs_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _metric(cfg) -> MetricField:
    spec = cfg.get("metric")
    if spec is None:
        raise InputError("a metric is required (--catalog or config 'metric')")
    return metric_from_config(spec)


def _moduli(cfg) -> IsotropicModuli:
    m = cfg.get("moduli", {})
    return IsotropicModuli(float(m.get("mu", 1.0)), float(m.get("lam", 1.0)))


def _grid(cfg, M: MetricField, default: int = 33):
    g = cfg.get("grid", {})
    n = int(g.get("n", default))
    return M.grid(n, int(g.get("m", n)))


# ---------------------------------------------------------------------------
# subcommands: each returns (results, tables); tables map filename -> (header, rows)
# ---------------------------------------------------------------------------

def run_classify(cfg):
    M = _metric(cfg)
    grid = _grid(cfg, M)
    tau = cfg.get("tolerances", {}).get("tau")
    v = classify(M, grid, threshold=tau, threads=cfg.get("threads"))
    rep = v.report
    X1, X2 = grid.mesh()
    rows = zip(X1.ravel(), X2.ravel(), rep.R3_112.ravel(), rep.R3_221.ravel(), rep.R_1212.ravel(),
               rep.S.ravel(), rep.kappa2d.ravel())
    res = v.as_dict()
    res["metric"] = M.label
    res["grid"] = list(grid.shape)
    return res, {"classify_nodes.csv": (["x1", "x2", "R3_112", "R3_221", "R_1212", "S", "kappa"], rows)}


def run_q2(cfg):
    M = _metric(cfg)
    moduli = _moduli(cfg)
    (a, b), (c, d) = M.domain
    p = cfg.get("point", [0.5 * (a + b), 0.5 * (c + d)])
    if not M.contains(np.array(p[0]), np.array(p[1])):
        raise InputError(f"point {p} lies outside the metric domain {M.domain}")
    F = np.asarray(cfg.get("F", [[1.0, 0.0], [0.0, 1.0]]), dtype=float)
    G = M(np.array(p[0]), np.array(p[1]))
    QF = QuadraticForm3.isotropic(moduli.mu, moduli.lam)
    A = metric_sqrt(G)
    ctx = EffectiveDensityContext(A, QF)
    oracle, _ = q2_oracle(A, QF, F)
    res = {
        "point": p, "F": F.tolist(),
        "general": float(ctx.q2(F)),
        "c0": ctx.minimizer_c0(F).tolist(),
        "oracle": oracle,
        "closed": {"iso2": float(q2_iso_d(G, moduli, F)), "iso3": float(q2_iso_tan(G, moduli, F)),
                   "c_form": float(q2_iso_c(G, moduli, F))},
    }
    return res, {}


def run_bend(cfg):
    M = _metric(cfg)
    moduli = _moduli(cfg)
    QF = QuadraticForm3.isotropic(moduli.mu, moduli.lam)
    grid = _grid(cfg, M)
    init = cfg.get("init", {})
    label = M.label.split("[")[0]
    kind = init.get("kind", CATALOG_SEEDS.get(label, "flat"))
    rng = np.random.default_rng(cfg.get("seed", 0))
    y0 = add_noise(SEEDS[kind](grid), float(init.get("noise", 0.0)), rng, init.get("noise_kind", "smooth"))
    if cfg.get("minimize", True):
        opts = MinimizeOptions(max_iter=int(cfg.get("max_iter", 500)))
        gtol = cfg.get("tolerances", {}).get("gtol")
        if gtol is not None:
            opts.gtol = float(gtol)
        imm, r = minimize_bending(M, QF, grid, y0, cfg.get("schedule"), opts)
    else:
        imm, r = y0, bending_energy(M, QF, y0)
    X1, X2 = grid.mesh()
    rows = zip(X1.ravel(), X2.ravel(), *(imm.y[..., k].ravel() for k in range(3)))
    res = r.as_dict()
    res.update({"metric": M.label, "seed_kind": kind, "grid": list(grid.shape)})
    return res, {"bend_immersion.csv": (["x1", "x2", "y1", "y2", "y3"], rows)}


def run_scale(cfg):
    M = _metric(cfg)
    moduli = _moduli(cfg)
    DW = DensityW(DensityKind(cfg.get("density", "GREEN_QUADRATIC")), moduli)
    ansatz = cfg.get("ansatz", "koko")
    params = cfg["metric"].get("params", {}) if "catalog" in cfg["metric"] else {}
    name = cfg["metric"].get("catalog")
    if ansatz == "koko":
        if name != "ex61":
            raise InputError("the koko ansatz needs the ex61 metric")
        u = recovery_koko(params.get("lam", "1 + x1**2"))
    elif ansatz == "ciag":
        if name != "ex62":
            raise InputError("the ciag ansatz needs the ex62 metric")
        u = recovery_ciag(params.get("lam", "exp(x1)"), domain=M.domain)
    else:
        grid = _grid(cfg, M, default=65)
        kind = CATALOG_SEEDS.get(M.label.split("[")[0], "flat")
        u = recovery_kirchhoff(M, SEEDS[kind](grid), DW.quadratic_form())
    q = cfg.get("quadrature", {})
    quad = QuadratureSpec(**q) if q else QuadratureSpec()
    hs = [float(h) for h in cfg.get("hs", DEFAULT_HS)]
    samples = [(h, energy_3d(M, DW, u, h, quad, threads=cfg.get("threads"))) for h in hs]
    rep = fit_scaling(samples)
    res = rep.as_dict()
    res.update({"metric": M.label, "ansatz": ansatz, "density": DW.kind.value})
    rows = [(h, E, E / h ** 2, E / h ** 4) for h, E in zip(rep.h, rep.E)]
    return res, {"scale.csv": (["h", "E_h", "E_h/h^2", "E_h/h^4"], rows)}


def run_nematic(cfg):
    DF = director_from_params(**cfg.get("director", {}))
    M = nematic_metric(DF)
    grid = _grid(cfg, M)
    tau = cfg.get("tolerances", {}).get("tau")
    verdict, fields = nematic_classify(DF, grid, threshold=tau, strict=False)
    X1, X2 = grid.mesh()
    tr = fields["triple"]
    rows = zip(X1.ravel(), X2.ravel(), fields["curl_t_curl"].ravel(), fields["kappa"].ravel(),
               tr[..., 0].ravel(), tr[..., 1].ravel(), tr[..., 2].ravel())
    res = verdict.as_dict()
    res.update({"director": DF.label, "r": DF.r, "delta": DF.delta, "grid": list(grid.shape)})
    return res, {"nematic_nodes.csv": (["x1", "x2", "curl_t_curl", "kappa", "R3_112", "R3_221", "R_1212"], rows)}


RUNNERS = {"classify": run_classify, "q2": run_q2, "bend": run_bend, "scale": run_scale, "nematic": run_nematic}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="prestrain", description="Prestrained thin plate toolkit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="subcommand", required=True)

    def common(sp_):
        sp_.add_argument("--config", type=Path, help="JSON config file")
        sp_.add_argument("--out-dir", type=Path, default=None, help="output directory (default: .)")
        sp_.add_argument("--threads", type=int, default=None, help="worker threads (env PRESTRAIN_THREADS)")
        sp_.add_argument("--seed", type=int, default=None, help="random seed for noisy initial data")
        sp_.add_argument("--catalog", help="catalog metric name")
        sp_.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                         help="catalog metric parameter (repeatable)")
        sp_.add_argument("--grid", type=int, help="nodes per direction")
        sp_.add_argument("--mu", type=float)
        sp_.add_argument("--lam", type=float)
        sp_.add_argument("-v", "--verbose", action="store_true")

    c = sub.add_parser("classify", help="curvature report and bending-regime verdict")
    common(c)
    c.add_argument("--tau", type=float, help="override the vanishing threshold")

    q = sub.add_parser("q2", help="effective density at a point by every route")
    common(q)
    q.add_argument("--point", type=float, nargs=2, metavar=("X1", "X2"))
    q.add_argument("--F", type=float, nargs=3, metavar=("F11", "F12", "F22"))

    b = sub.add_parser("bend", help="evaluate or minimise the bending energy")
    common(b)
    b.add_argument("--init", choices=sorted(SEEDS))
    b.add_argument("--noise", type=float)
    b.add_argument("--noise-kind", choices=["smooth", "white"])
    b.add_argument("--schedule", type=float, nargs="+")
    b.add_argument("--max-iter", type=int)
    b.add_argument("--no-minimize", action="store_true", help="only evaluate the initial immersion")

    s = sub.add_parser("scale", help="3D energy sweep over thickness")
    common(s)
    s.add_argument("--ansatz", choices=["koko", "ciag", "kirchhoff"])
    s.add_argument("--density", choices=[k.value for k in DensityKind])
    s.add_argument("--hs", type=float, nargs="+")

    n = sub.add_parser("nematic", help="director metric flatness conditions")
    common(n)
    n.add_argument("--pattern")
    n.add_argument("--psi", type=float)
    n.add_argument("--theta")
    n.add_argument("--r", type=float)
    n.add_argument("--nu", type=float)
    n.add_argument("--delta", type=float)
    n.add_argument("--tau", type=float)
    return p


def merge_config(args) -> dict:
    cfg: dict = {}
    if args.config is not None:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise InputError("config must be a JSON object")
    sub = args.subcommand
    if cfg.get("subcommand", sub) != sub:
        raise InputError(f"config is for {cfg['subcommand']!r}, not {sub!r}")
    if args.catalog:
        cfg["metric"] = {"catalog": args.catalog, "params": {}}
    if args.param:
        met = cfg.setdefault("metric", {})
        if "catalog" not in met:
            raise InputError("--param needs a catalog metric")
        params = met.setdefault("params", {})
        for item in args.param:
            if "=" not in item:
                raise InputError(f"--param expects KEY=VALUE, got {item!r}")
            k, v = item.split("=", 1)
            params[k] = _parse_value(v)
    if args.grid is not None:
        cfg.setdefault("grid", {})["n"] = args.grid
    for key in ("mu", "lam"):
        if getattr(args, key) is not None:
            cfg.setdefault("moduli", {})[key] = getattr(args, key)
    if args.threads is not None:
        cfg["threads"] = args.threads
    if args.seed is not None:
        cfg["seed"] = args.seed
    if getattr(args, "tau", None) is not None:
        cfg.setdefault("tolerances", {})["tau"] = args.tau
    if sub == "q2":
        if args.point is not None:
            cfg["point"] = list(args.point)
        if args.F is not None:
            f11, f12, f22 = args.F
            cfg["F"] = [[f11, f12], [f12, f22]]
    elif sub == "bend":
        init = cfg.get("init", {})
        for k_arg, k_cfg in (("init", "kind"), ("noise", "noise"), ("noise_kind", "noise_kind")):
            if getattr(args, k_arg) is not None:
                init[k_cfg] = getattr(args, k_arg)
        if init:
            cfg["init"] = init
        if args.schedule is not None:
            cfg["schedule"] = args.schedule
        if args.max_iter is not None:
            cfg["max_iter"] = args.max_iter
        if args.no_minimize:
            cfg["minimize"] = False
    elif sub == "scale":
        for k in ("ansatz", "density", "hs"):
            if getattr(args, k) is not None:
                cfg[k] = getattr(args, k)
    elif sub == "nematic":
        d = cfg.get("director", {})
        for k in ("pattern", "psi", "theta", "r", "nu", "delta"):
            if getattr(args, k) is not None:
                d[k] = getattr(args, k)
        cfg["director"] = d
    cfg["subcommand"] = sub
    return cfg


def run(cfg: dict, out_dir: Path | None = None) -> dict:
    """Validate ``cfg``, execute it and write outputs; returns the report.

    Raises ``InputError`` for invalid input; numerical failures propagate.
    """
    sub = cfg.get("subcommand")
    if sub not in RUNNERS:
        raise InputError(f"unknown subcommand {sub!r}")
    try:
        jsonschema.validate(cfg, config_schema(sub))
    except jsonschema.ValidationError as exc:
        raise InputError(f"invalid config: {exc.message}") from exc
    out_dir = Path(out_dir or cfg.get("output", {}).get("dir", "."))
    if cfg.get("threads") is not None:
        os.environ["PRESTRAIN_THREADS"] = str(cfg["threads"])
    t0 = time.perf_counter()
    try:
        results, tables = RUNNERS[sub](cfg)
    except (np.linalg.LinAlgError, DegenerateFrameError) as exc:
        raise NumericalFailure(str(exc)) from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(str(exc)) from exc
    tables = {k: (h, list(rows)) for k, (h, rows) in tables.items()}
    report = {
        "schema_version": SCHEMA_VERSION,
        "subcommand": sub,
        "inputs_hash": inputs_hash({k: v for k, v in cfg.items() if k not in ("threads", "output")}),
        "results": _jsonable(results),
        "wall_time": time.perf_counter() - t0,
        "version": __version__,
    }
    jsonschema.validate(report, report_schema(sub))
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, (header, rows) in tables.items():
        write_csv(out_dir / name, header, rows)
    (out_dir / f"{sub}.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = merge_config(args)
        report = run(cfg, args.out_dir)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalFailure, FloatingPointError, ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(json.dumps(report["results"], indent=2, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
