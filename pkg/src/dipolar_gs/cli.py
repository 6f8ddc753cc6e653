"""Command-line front end.

    dipolar-gs constants   [instance flags]
    dipolar-gs wp          --p P
    dipolar-gs groundstate [instance flags] [grid/solver flags]
    dipolar-gs sweep       [instance flags] --fractions 0.5 0.25 0.125 0.0625
    dipolar-gs evolve      [instance flags] --T 10 --dt 0.01 [--delta 0.01]
    dipolar-gs stability   [instance flags] --eps 0.04 --T 20 --dt 0.02
    dipolar-gs report      OUT_DIR/manifest.json

Every run writes its artifacts atomically into --out together with
manifest.json (resolved config, claims, sha256 of each file). Exit codes:
0 all claims pass, 1 invalid instance, 2 solver failure, 3 I/O failure,
4 a claim check failed.
"""
from __future__ import annotations

import argparse
import hashlib
import io
import json
import logging
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import experiments as ex
from . import wp_oracle
from .minimizer import (
    MinimizationError,
    RegimeError,
    SolverConfig,
    grid_for,
    minimize,
    project_mass,
    verify_claims,
)
from .params import ModelParams, aux_structure_check, derive_geometry, validate_regime
from .spectral import Grid3, read_snapshot, write_snapshot

log = logging.getLogger("dipolar_gs")

EXIT_OK, EXIT_REGIME, EXIT_SOLVER, EXIT_IO, EXIT_CLAIMS = 0, 1, 2, 3, 4
COMMANDS = ("constants", "wp", "groundstate", "sweep", "evolve", "stability")
DEFAULT_INSTANCE = {"lambda1": -1.0, "lambda2": -0.05, "lambda3": -1.0, "p": 3.0}


@dataclass
class RunConfig:
    command: str
    instance: dict
    grid: dict = field(default_factory=lambda: {"n": 64, "box": None})
    solver: dict = field(default_factory=dict)
    io: dict = field(default_factory=lambda: {"out": "run", "formats": ["json", "csv", "bin"],
                                              "seed": 0, "repro": False, "jobs": 1})
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")

    def to_dict(self) -> dict:
        return asdict(self)


class _Fail(Exception):
    def __init__(self, code: int, kind: str, message: str):
        super().__init__(message)
        self.code, self.kind = code, kind


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dipolar-gs", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("instance")
    g.add_argument("--p", type=float)
    g.add_argument("--lambda1", type=float)
    g.add_argument("--lambda2", type=float)
    g.add_argument("--lambda3", type=float)
    g.add_argument("--mass", type=float, help="mass c")
    g.add_argument("--mass-fraction", type=float, help="mass as a fraction of c_star (default 0.5)")
    g = common.add_argument_group("grid and solver")
    g.add_argument("--n", type=int, help="grid points per axis (default 64)")
    g.add_argument("--box", type=float, help="box length (default: scaled to v_c)")
    g.add_argument("--tol", type=float, help="stopping tolerance for P and the residual")
    g.add_argument("--max-iter", type=int)
    g.add_argument("--init", choices=["vc", "file", "random"])
    g.add_argument("--init-file", help="snapshot used with --init file")
    g.add_argument("--claim-tol", type=float, help="Pohozaev tolerance in the claim checks (default 1e-8)")
    g = common.add_argument_group("run")
    g.add_argument("--seed", type=int)
    g.add_argument("--config", help="JSON config or a previous manifest.json")
    g.add_argument("--out", help="output directory")
    g.add_argument("--format", nargs="+", choices=["json", "csv", "bin"], dest="formats")
    g.add_argument("--repro", action="store_true", default=None, help="single-threaded deterministic mode")
    g.add_argument("--jobs", type=int, help="concurrent jobs for sweeps")
    g.add_argument("-v", "--verbose", action="store_true")

    sub.add_parser("constants", parents=[common], help="well geometry of an instance")
    sp = sub.add_parser("wp", parents=[common], help="radial profile W_p and C_p")
    sp.add_argument("--r-max", type=float)
    sub.add_parser("groundstate", parents=[common], help="local minimizer in the well")
    sp = sub.add_parser("sweep", parents=[common], help="small-mass asymptotics")
    sp.add_argument("--fractions", type=float, nargs="+", help="masses as fractions of c_star")
    sp.add_argument("--masses", type=float, nargs="+")
    sp.add_argument("--physical", action="store_true", default=None, help="solve in physical coordinates")
    for name in ("evolve", "stability"):
        sp = sub.add_parser(name, parents=[common], help="split-step dynamics from the ground state")
        sp.add_argument("--T", type=float)
        sp.add_argument("--dt", type=float)
        sp.add_argument("--sample-every", type=int)
        if name == "evolve":
            sp.add_argument("--delta", type=float, help="relative H^1 size of the initial perturbation")
        else:
            sp.add_argument("--eps", type=float, nargs="+")
            sp.add_argument("--trials", type=int)
    sp = sub.add_parser("report", help="text table of a run's claims")
    sp.add_argument("manifest")
    return ap


_EXTRA_KEYS = ("r_max", "fractions", "masses", "physical", "T", "dt", "sample_every", "delta",
               "eps", "trials", "init", "init_file", "claim_tol", "mass_fraction")
_EXTRA_DEFAULTS = {"evolve": {"T": 10.0, "dt": 0.01, "sample_every": 10, "delta": 0.0},
                   "stability": {"T": 20.0, "dt": 0.02, "sample_every": 50, "eps": [0.04], "trials": 1},
                   "sweep": {"fractions": [0.5, 0.25, 0.125, 0.0625], "physical": False}}


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults < --config file < flags."""
    base: dict = {}
    if args.config:
        with open(args.config) as fh:
            base = json.load(fh)
        base = base.get("config", base)
    cfg = RunConfig(
        command=args.command,
        instance={**DEFAULT_INSTANCE, **base.get("instance", {})},
        grid={"n": 64, "box": None, **base.get("grid", {})},
        solver={**base.get("solver", {})},
        io={"out": "run", "formats": ["json", "csv", "bin"], "seed": 0, "repro": False, "jobs": 1,
            **base.get("io", {})},
        extra={"init": "vc", "claim_tol": 1e-8, **_EXTRA_DEFAULTS.get(args.command, {}),
               **base.get("extra", {})},
    )
    for k in ("lambda1", "lambda2", "lambda3", "p"):
        if getattr(args, k) is not None:
            cfg.instance[k] = getattr(args, k)
    if args.mass is not None:
        cfg.instance["c"] = args.mass
        cfg.extra.pop("mass_fraction", None)
    elif args.mass_fraction is not None:
        cfg.instance.pop("c", None)
        cfg.extra["mass_fraction"] = args.mass_fraction
    if args.n is not None:
        cfg.grid["n"] = args.n
    if args.box is not None:
        cfg.grid["box"] = args.box
    if args.tol is not None:
        cfg.solver["tol_grad"] = cfg.solver["tol_p"] = args.tol
    if args.max_iter is not None:
        cfg.solver["max_iter"] = args.max_iter
    for k, dest in (("out", "out"), ("formats", "formats"), ("seed", "seed"), ("repro", "repro"), ("jobs", "jobs")):
        if getattr(args, k, None) is not None:
            cfg.io[dest] = getattr(args, k)
    for k in _EXTRA_KEYS:
        if getattr(args, k, None) is not None:
            cfg.extra[k] = getattr(args, k)
    return cfg


def _params(cfg: RunConfig) -> ModelParams:
    inst = dict(cfg.instance)
    if "c" not in inst:
        probe = ModelParams(inst["lambda1"], inst["lambda2"], inst["lambda3"], inst["p"], 1.0)
        try:
            geometry = derive_geometry(probe)
        except ValueError as err:
            raise _Fail(EXIT_REGIME, "regime", str(err))
        if not math.isfinite(geometry.c_star):
            raise _Fail(EXIT_REGIME, "regime", "c_star is infinite for this instance; pass --mass")
        inst["c"] = cfg.extra.get("mass_fraction", 0.5) * geometry.c_star
        cfg.instance["c"] = inst["c"]
    return ModelParams.from_dict(inst)


class _Writer:
    """Atomic writes into the output directory, recording sha256 per file."""

    def __init__(self, out: str):
        self.out = out
        self.files: list[dict] = []
        try:
            os.makedirs(out, exist_ok=True)
        except OSError as err:
            raise _Fail(EXIT_IO, "io", str(err))

    def _commit(self, name: str, data: bytes) -> None:
        path = os.path.join(self.out, name)
        try:
            fd, tmp = tempfile.mkstemp(dir=self.out, prefix=f".{name}.")
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, path)
        except OSError as err:
            raise _Fail(EXIT_IO, "io", f"{path}: {err}")
        self.files.append({"path": name, "sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)})

    def json(self, name: str, obj) -> None:
        self._commit(name, (json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n").encode())

    def text(self, name: str, writer) -> None:
        buf = io.StringIO()
        writer(buf)
        self._commit(name, buf.getvalue().encode())

    def snapshot(self, name: str, u, grid) -> None:
        fd, tmp = tempfile.mkstemp(dir=self.out, prefix=f".{name}.")
        os.close(fd)
        try:
            write_snapshot(tmp, u, grid)
            with open(tmp, "rb") as fh:
                data = fh.read()
        except OSError as err:
            raise _Fail(EXIT_IO, "io", str(err))
        finally:
            if os.path.exists(tmp):
                os.remove(tmp)
        self._commit(name, data)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _claim(name, observed, bound, ok) -> dict:
    return {"name": name, "observed": observed, "bound": bound, "ok": bool(ok)}


def _csv_rows(header, rows):
    def write(fh):
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in row) + "\n")
    return write


def _solver_config(cfg: RunConfig) -> SolverConfig:
    try:
        return SolverConfig(**cfg.solver)
    except (TypeError, ValueError) as err:
        raise _Fail(EXIT_REGIME, "config", str(err))


def _ground_state(cfg: RunConfig, params: ModelParams, geometry):
    grid = grid_for(geometry, cfg.grid["n"])
    if cfg.grid.get("box") is not None:
        grid = Grid3.cube(cfg.grid["n"], cfg.grid["box"])
    init = cfg.extra.get("init", "vc")
    if init == "file":
        path = cfg.extra.get("init_file")
        if not path:
            raise _Fail(EXIT_REGIME, "config", "--init file needs --init-file")
        try:
            field0, fgrid = read_snapshot(path)
        except (OSError, ValueError) as err:
            raise _Fail(EXIT_IO, "io", str(err))
        grid, init = fgrid, field0
    return minimize(params, grid=grid, config=_solver_config(cfg), init=init,
                    geometry=geometry, seed=cfg.io["seed"])


def _cmd_constants(cfg, w):
    params = _params(cfg)
    try:
        geometry = derive_geometry(params)
    except ValueError as err:
        raise _Fail(EXIT_REGIME, "regime", str(err))
    report = validate_regime(params, geometry)
    claims = [_claim("regime", report.ok, "valid instance with c <= c_star", report.ok)]
    out = {"geometry": geometry.to_dict(), "regime": asdict(report)}
    if report.ok and not params.scalar:
        chain = geometry.ordering_chain()
        claims.append(_claim("ordering_chain", chain, "strictly increasing", geometry.ordering_holds()))
        aux = aux_structure_check(params, geometry)
        out["aux"] = asdict(aux)
        claims.append(_claim("aux_structure", aux.ok, "h_c' has the expected critical points", aux.ok))
        out["ordering_chain"] = chain
        out["ordering_holds"] = geometry.ordering_holds()
    if "json" in cfg.io["formats"]:
        w.json("constants.json", out)
    return claims, {}


def _cmd_wp(cfg, w):
    p = float(cfg.instance["p"])
    try:
        prof = wp_oracle.solve_wp(p, r_max=cfg.extra.get("r_max"))
    except (ValueError, RuntimeError) as err:
        raise _Fail(EXIT_SOLVER, "solver", str(err))
    summary = wp_oracle.profile_summary(prof)
    res = wp_oracle.ode_residual(prof)
    summary["ode_residual"] = res
    if "csv" in cfg.io["formats"]:
        w.text("wp_profile.csv", _csv_rows(["r", "w"], zip(map(float, prof.r), map(float, prof.w))))
    if "json" in cfg.io["formats"]:
        w.json("wp_summary.json", summary)
    return [_claim("ode_residual", res, "< 1e-6", res < 1e-6),
            _claim("positive", float(prof.w.min()), "> 0", prof.w.min() > 0)], {}


def _cmd_groundstate(cfg, w):
    params = _params(cfg)
    geometry = _geometry(params)
    res = _ground_state(cfg, params, geometry)
    report = verify_claims(res, geometry, tol_p=cfg.extra.get("claim_tol", 1e-8))
    if "json" in cfg.io["formats"]:
        w.json("result.json", {**res.summary(), "claims": report.to_dict()})
    if "csv" in cfg.io["formats"]:
        w.text("iterations.csv", _csv_rows(["iteration", "E", "P", "mu", "grad_l2", "residual", "step"], res.history))
    if "bin" in cfg.io["formats"]:
        w.snapshot("field.bin", res.field, res.grid)
    return [c.to_dict() for c in report.claims], {}


def _geometry(params):
    report = validate_regime(params)
    if not report.ok:
        raise _Fail(EXIT_REGIME, "regime", "; ".join(report.reasons))
    return derive_geometry(params)


def _cmd_sweep(cfg, w):
    params = _params(cfg)
    geometry = _geometry(params)
    if cfg.extra.get("masses"):
        masses = list(cfg.extra["masses"])
    else:
        masses = [f * geometry.c_star for f in cfg.extra["fractions"]]
    config = _solver_config(cfg)
    rescaled = not cfg.extra.get("physical", False)
    jobs = 1 if cfg.io.get("repro") else int(cfg.io.get("jobs", 1))
    try:
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                recs = ex.asymptotic_sweep(params, masses, cfg.grid["n"], config, rescaled, executor=pool)
        else:
            recs = ex.asymptotic_sweep(params, masses, cfg.grid["n"], config, rescaled)
    except ValueError as err:
        raise _Fail(EXIT_REGIME, "regime", str(err))
    summary = ex.sweep_summary(recs, params)
    ok = [r for r in recs if r.converged]
    claims = [_claim("all_converged", len(ok), f"== {len(recs)}", len(ok) == len(recs))]
    if ok:
        last = ok[-1]
        target = summary["targets"]["energy_ratio"]
        rel = abs(last.energy_ratio / target - 1.0)
        claims.append(_claim("energy_ratio_smallest_mass", rel, "|ratio/(-kappa) - 1| < 0.05", rel < 0.05))
        claims.append(_claim("h1_rel_smallest_mass", last.h1_rel, "< 0.05", last.h1_rel < 0.05))
    if ok and not params.scalar:
        # scalar instances rescale to the same problem for every mass
        h = [r.h1_rel for r in ok]
        claims.append(_claim("h1_rel_decreasing", h, "decreasing along the sweep",
                             all(x > y for x, y in zip(h, h[1:]))))
    if not params.scalar:
        slope, expected = summary["b_ratio_slope"], summary["b_ratio_slope_expected"]
        dev = abs(slope / expected - 1.0) if math.isfinite(slope) else math.inf
        claims.append(_claim("b_ratio_slope", slope, f"within 20% of {expected:g}", dev < 0.2))
    if "csv" in cfg.io["formats"]:
        w.text("sweep.csv", lambda fh: _write_sweep(recs, fh))
    if "json" in cfg.io["formats"]:
        w.json("sweep_summary.json", {**summary, "records": [r.to_dict() for r in recs]})
    table = {"targets": summary["targets"], "rows": [r.to_dict() for r in recs]}
    return claims, {"sweep": table}


def _write_sweep(recs, fh):
    names = list(ex.SweepRecord.__dataclass_fields__)
    fh.write(",".join(names) + "\n")
    for r in recs:
        fh.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in asdict(r).values()) + "\n")


def _evolution_csv(stats):
    stats_rows = []
    for i, t in enumerate(stats.times):
        stats_rows.append([t] + [track[i] if i < len(track) else "" for track in
                                 (stats.h1_dist_track, stats.overlap_track, stats.grad_track)])
    return _csv_rows(["t", "h1_dist", "overlap", "grad_l2"], stats_rows)


def _cmd_evolve(cfg, w):
    params = _params(cfg)
    geometry = _geometry(params)
    ground = _ground_state(cfg, params, geometry)
    u, grid = ground.field, ground.grid
    delta = float(cfg.extra.get("delta", 0.0))
    psi0 = u
    if delta > 0:
        width = 1.0 / ex.rescaling(geometry)[1]
        phi = ex.band_limited_perturbation(grid, delta * params.c, cfg.io["seed"], width)
        psi0 = project_mass(u + phi, params.c, grid)
    try:
        stats = ex.splitstep_evolve(psi0, cfg.extra["T"], cfg.extra["dt"], params, grid, reference=u,
                                    sample_every=cfg.extra["sample_every"], track_distance=True)
    except ex.BlowUpError as err:
        raise _Fail(EXIT_SOLVER, "blowup", str(err))
    claims = [_claim("mass_drift", stats.mass_drift, "< 1e-12", stats.mass_drift < 1e-12)]
    if delta == 0:
        ov = min(stats.overlap_track)
        claims.append(_claim("standing_wave_overlap", ov, "> 1 - 1e-4", ov > 1 - 1e-4))
    if "csv" in cfg.io["formats"]:
        w.text("evolution.csv", _evolution_csv(stats))
    if "json" in cfg.io["formats"]:
        w.json("evolution.json", stats.to_dict())
    if "bin" in cfg.io["formats"]:
        w.snapshot("final.bin", stats.final, grid)
    return claims, {}


def _cmd_stability(cfg, w):
    params = _params(cfg)
    geometry = _geometry(params)
    ground = _ground_state(cfg, params, geometry)
    eps = [float(e) for e in cfg.extra["eps"]]
    try:
        rep = ex.stability_probe(ground, eps, cfg.extra["T"], cfg.extra["dt"], trials=cfg.extra["trials"],
                                 seed=cfg.io["seed"], sample_every=cfg.extra["sample_every"])
    except ValueError as err:
        raise _Fail(EXIT_REGIME, "config", str(err))
    claims = [_claim(f"stability_eps{t.eps:g}_seed{t.seed}", t.max_distance, f"< eps c = {t.eps * params.c:.6g}", t.ok)
              for t in rep.trials]
    if "json" in cfg.io["formats"]:
        w.json("stability.json", rep.to_dict())
    return claims, {}


_COMMANDS = {"constants": _cmd_constants, "wp": _cmd_wp, "groundstate": _cmd_groundstate,
             "sweep": _cmd_sweep, "evolve": _cmd_evolve, "stability": _cmd_stability}


def run(cfg: RunConfig) -> int:
    """Execute one configured run; returns the exit status."""
    if cfg.io.get("repro"):
        os.environ.setdefault("OMP_NUM_THREADS", "1")
    w = _Writer(cfg.io["out"])
    try:
        claims, tables = _COMMANDS[cfg.command](cfg, w)
    except RegimeError as err:
        raise _Fail(EXIT_REGIME, "regime", str(err))
    except MinimizationError as err:
        raise _Fail(EXIT_SOLVER, type(err).__name__, str(err))
    status = EXIT_OK if all(c["ok"] for c in claims) else EXIT_CLAIMS
    manifest = {"command": cfg.command, "config": cfg.to_dict(), "claims": claims, "tables": tables,
                "status": status, "files": list(w.files)}
    w.json("manifest.json", manifest)
    return status


def report(manifest_path: str, out=None) -> int:
    out = out or sys.stdout
    try:
        with open(manifest_path) as fh:
            manifest = json.load(fh)
    except (OSError, ValueError) as err:
        raise _Fail(EXIT_IO, "io", f"cannot read manifest: {err}")
    claims = manifest.get("claims", [])
    rows = [("claim", "observed", "bound", "status")]
    for c in claims:
        obs = c["observed"]
        obs_s = f"{obs:.6g}" if isinstance(obs, float) else json.dumps(obs)
        rows.append((c["name"], obs_s, str(c["bound"]), "PASS" if c["ok"] else "FAIL"))
    widths = [max(len(r[i]) for r in rows) for i in range(4)]
    for r in rows:
        out.write("  ".join(s.ljust(wd) for s, wd in zip(r, widths)).rstrip() + "\n")
    n_fail = sum(not c["ok"] for c in claims)
    out.write(f"PASS {len(claims) - n_fail}  FAIL {n_fail}\n")
    sweep = manifest.get("tables", {}).get("sweep")
    if sweep:
        keys = list(sweep["targets"])
        out.write("\n" + "  ".join(["c"] + keys + ["h1_rel"]) + "\n")
        for row in sweep["rows"]:
            vals = [row["c"]] + [row[k] for k in keys] + [row["h1_rel"]]
            out.write("  ".join("nan" if v is None else f"{v:.6g}" for v in vals) + "\n")
        out.write("  ".join(["limit"] + [f"{sweep['targets'][k]:.6g}" for k in keys]) + "\n")
    return EXIT_OK if n_fail == 0 else EXIT_CLAIMS


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report":
            return report(args.manifest)
        cfg = resolve_config(args)
        return run(cfg)
    except _Fail as err:
        sys.stderr.write(json.dumps({"error": err.kind, "message": str(err), "exit": err.code}) + "\n")
        return err.code
    except (OSError, json.JSONDecodeError) as err:
        sys.stderr.write(json.dumps({"error": "io", "message": str(err), "exit": EXIT_IO}) + "\n")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
