"""
Command-line front end.

    nsorbit refine            --config run.json [--input f.json] [--output g.json]
    nsorbit validate          --config run.json [--input f.json] [--report r.json]
    nsorbit postprocess       --config run.json --report r.json [--input f.json]
    nsorbit symmetry-check    --config run.json
    nsorbit suggest-parameters --config run.json [--input f.json]

Exit codes: 0 success, 1 inequalities failed (report still written), 2 input
or configuration error, 3 numerical failure.  Every command prints one JSON
document on stdout; progress records go to stderr as JSON lines.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from importlib import resources
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import postprocess as pp
from . import solver
from . import spectral as sp
from . import symmetry as sy
from . import validator as va
from . import vorticity as vo
from .errors import (
    ForcingInvalid,
    ForcingSupport,
    NoConvergence,
    NonFiniteClosure,
    NotActually2D,
    NotValidated,
    NSOrbitError,
    SchemeInvalid,
    SingularFiniteBlock,
    SingularJacobian,
)
from .rigor import RigorousReal

CONFIG_VERSION = "RUNCFG-1"
EXIT_OK, EXIT_FAILED, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- config
@dataclass
class RunConfig:
    """Parsed run configuration (see :func:`load_config` for the JSON layout)."""

    nu: str
    box: sp.SupportBox
    Ndagger: float
    Ntilde: float
    eta: float = 1.0
    forcing: object = "taylor-green"
    group: object = "taylor-green-16"
    essentially2D: bool = True
    threads: int = 1
    phase_mode: str = "orbit"
    Omega_pin: float = None
    newton_tol: float = 1e-12
    newton_maxit: int = 50
    input: str = None
    phase_ref: str = None
    output_dir: str = "."
    snapshot_resolution: int = 64
    batch: int = 64
    base_dir: str = field(default=".", repr=False)

    def path(self, p):
        if p is None:
            return None
        return p if os.path.isabs(p) else os.path.join(self.base_dir, p)

    def scheme(self) -> va.TruncationScheme:
        return va.TruncationScheme(
            self.box, self.Ndagger, self.Ntilde, self.nu, self.eta, self.essentially2D, self.phase_mode, self.Omega_pin
        ).check()

    def make_group(self) -> sy.Group:
        g = self.group
        if isinstance(g, str):
            return sy.preset_group(g)
        gens = [sy.PhysicalSymmetry.from_json(d) for d in g["generators"]]
        return sy.close_group(gens)

    def make_forcing(self) -> vo.Forcing:
        f = self.forcing
        if f == "taylor-green":
            return vo.taylor_green_forcing()
        doc = dict(version=sp.VFLD_VERSION, eta=1.0, nu=1.0, omega_hex="0x0000000000000000", **f)
        return vo.Forcing(sp.parse_field(doc)["omega"], "config")

    def velocity_forcing(self):
        if self.forcing == "taylor-green":
            return vo.taylor_green_velocity_forcing()
        # curl is invertible on mean-free divergence-free data: f = M f^omega
        return sp.biot_savart(self.make_forcing().fomega)


_KNOWN = {
    "version", "nu", "eta", "box", "Ndagger", "Ntilde", "forcing", "group", "essentially2D", "threads",
    "phase_mode", "Omega_pin", "newton", "paths", "snapshot_resolution", "batch",
}


def parse_config(doc, base_dir="."):
    """Validate a configuration document.

    Layout::

        {"version": "RUNCFG-1", "nu": "0.286", "eta": 1.0,
         "box": {"Nx1": 8, "Nx2": 8, "Nx3": 0, "Nt": 6},
         "Ndagger": 40, "Ntilde": 80,
         "forcing": "taylor-green" | {"box": {...}, "modes": [...]},
         "group": "taylor-green-16" | "trivial" | {"generators": [...]},
         "essentially2D": true, "threads": 1,
         "phase_mode": "orbit", "Omega_pin": null,
         "newton": {"tol": 1e-12, "maxit": 50},
         "paths": {"input": "...", "phase_ref": null, "output_dir": "out"}}
    """
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    if doc.get("version") != CONFIG_VERSION:
        raise ConfigError(f"config version must be {CONFIG_VERSION!r}, got {doc.get('version')!r}")
    unknown = set(doc) - _KNOWN
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        box = sp.SupportBox(**{k: int(doc["box"][k]) for k in ("Nx1", "Nx2", "Nx3", "Nt")})
        nu = str(doc["nu"])
        if not Fraction(nu) > 0:
            raise ConfigError("nu must be positive")
        paths = doc.get("paths", {})
        newton = doc.get("newton", {})
        cfg = RunConfig(
            nu=nu,
            box=box,
            Ndagger=float(doc["Ndagger"]),
            Ntilde=float(doc["Ntilde"]),
            eta=float(doc.get("eta", 1.0)),
            forcing=doc.get("forcing", "taylor-green"),
            group=doc.get("group", "taylor-green-16"),
            essentially2D=bool(doc.get("essentially2D", True)),
            threads=int(doc.get("threads", 1)),
            phase_mode=doc.get("phase_mode", "orbit"),
            Omega_pin=doc.get("Omega_pin"),
            newton_tol=float(newton.get("tol", 1e-12)),
            newton_maxit=int(newton.get("maxit", 50)),
            input=paths.get("input"),
            phase_ref=paths.get("phase_ref"),
            output_dir=paths.get("output_dir", "."),
            snapshot_resolution=int(doc.get("snapshot_resolution", 64)),
            batch=int(doc.get("batch", 64)),
            base_dir=base_dir,
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"malformed config: {exc!r}") from None
    if cfg.Ntilde < cfg.Ndagger:
        raise ConfigError(f"Ntilde = {cfg.Ntilde} must be >= Ndagger = {cfg.Ndagger}")
    if cfg.eta < 1:
        raise ConfigError("eta must be >= 1")
    if cfg.threads < 1:
        raise ConfigError("threads must be >= 1")
    if cfg.forcing != "taylor-green" and not isinstance(cfg.forcing, dict):
        raise ConfigError(f"unknown forcing {cfg.forcing!r}")
    return cfg


PRESETS = ("desk", "tiny", "equilibrium")


def load_config(path) -> RunConfig:
    """Read a config file; a bare preset name selects a shipped config."""
    if path in PRESETS and not os.path.exists(path):
        ref = resources.files("nsorbit") / "data" / f"{path}.json"
        with resources.as_file(ref) as p:
            return load_config(str(p))
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return parse_config(doc, base_dir=os.path.dirname(os.path.abspath(path)))


# ---------------------------------------------------------------- helpers
def _stderr_log(rec):
    sys.stderr.write(json.dumps(rec, default=float) + "\n")


def _pmap(threads):
    """Ordered parallel map; results come back in input order."""
    if threads <= 1:
        return lambda f, xs: list(map(f, xs))
    pool = ThreadPoolExecutor(max_workers=threads)
    return lambda f, xs: list(pool.map(f, xs))


def _load_input(cfg, override):
    path = override or cfg.path(cfg.input)
    if path is None:
        raise ConfigError("no input field given (paths.input or --input)")
    if not os.path.exists(path):
        raise ConfigError(f"input field {path!r} does not exist")
    try:
        return sp.load_field(path)
    except (ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _layout(cfg, group, box=None):
    box = box or cfg.box
    n = np.stack([g.ravel() for g in sp.wavenumbers(box, sparse=False)], axis=1)
    if cfg.essentially2D:
        n = n[n[:, 2] == 0]
    return sy.ReducedLayout(group, n, cfg.eta)


def _fit(omega, box):
    src = sp.box_of(omega)
    if any(a > b for a, b in zip(src.as_tuple(), box.as_tuple())):
        raise ConfigError(f"field support {src} exceeds the config box {box}")
    return sp.resize(omega, box)


def _outdir(cfg):
    # outputs are relative to the working directory, inputs to the config file
    d = cfg.output_dir
    os.makedirs(d, exist_ok=True)
    return d


def _emit(doc):
    sys.stdout.write(json.dumps(doc, indent=1, default=float) + "\n")


# ---------------------------------------------------------------- commands
def cmd_refine(cfg: RunConfig, input_path=None, output=None):
    data = _load_input(cfg, input_path)
    group = cfg.make_group()
    omega = _fit(np.asarray(data["omega"].mid if hasattr(data["omega"], "mid") else data["omega"]), cfg.box)
    lay = _layout(cfg, group)
    phi = sy.project_Pi(omega, lay)
    res = solver.newton(
        data["Omega"], phi, lay, cfg.make_forcing(), cfg.nu, cfg.phase_mode, cfg.Omega_pin,
        tol=cfg.newton_tol, maxit=cfg.newton_maxit, log=_stderr_log,
    )
    out = output or os.path.join(_outdir(cfg), "refined.json")
    sp.save_field(out, res.field(cfg.box), res.Omega, cfg.nu, cfg.eta, cfg.box)
    _emit(dict(command="refine", converged=res.converged, iterations=res.iterations, residual=res.history[-1], Omega=res.Omega, output=out))
    return EXIT_OK


def cmd_validate(cfg: RunConfig, input_path=None, report_path=None):
    data = _load_input(cfg, input_path)
    group = cfg.make_group()
    scheme = cfg.scheme()
    omega = _fit(np.asarray(data["omega"]), cfg.box)
    orbit = va.ReducedOrbit.from_field(data["Omega"], omega, group, cfg.box, cfg.essentially2D, cfg.eta)
    phase_ref = None
    if cfg.phase_ref:
        ref = sp.load_field(cfg.path(cfg.phase_ref))
        phase_ref = sy.project_Pi(_fit(np.asarray(ref["omega"]), cfg.box), orbit.layout)
    rep = va.validate(orbit, scheme, group, cfg.make_forcing(), phase_ref=phase_ref, log=_stderr_log, batch=cfg.batch, pmap=_pmap(cfg.threads))
    rep.telemetry["threads"] = cfg.threads
    out = report_path or os.path.join(_outdir(cfg), "report.json")
    rep.save(out)
    _emit(dict(command="validate", success=rep.success, report=out, summary=rep.summary(), failure=rep.failure))
    return EXIT_OK if rep.success else EXIT_FAILED


def cmd_postprocess(cfg: RunConfig, report_path, input_path=None):
    try:
        rep = va.BoundsReport.load(report_path)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read report: {exc}") from None
    if not rep.success:
        _emit(dict(command="postprocess", success=False, reason="report does not certify the orbit"))
        return EXIT_FAILED
    data = _load_input(cfg, input_path)
    group = cfg.make_group()
    omega = _fit(np.asarray(data["omega"]), cfg.box)
    orbit = va.ReducedOrbit.from_field(data["Omega"], omega, group, cfg.box, cfg.essentially2D, cfg.eta).symmetrized()
    vorb = pp.ValidatedOrbit(orbit, rep, group, cfg.scheme())
    d = _outdir(cfg)
    ubar, uerr = pp.velocity_with_error(vorb)
    f = cfg.velocity_forcing()
    pbar, perr = pp.pressure_with_error(vorb, f)
    sp.save_field(os.path.join(d, "velocity.json"), ubar, orbit.Omega, cfg.nu, cfg.eta)
    pfield = np.zeros((3,) + pbar.shape, dtype=complex)
    pfield[0] = pbar  # scalar stored in component 1
    sp.save_field(os.path.join(d, "pressure.json"), pfield, orbit.Omega, cfg.nu, cfg.eta)
    stmt = pp.c0_error_statement(vorb, f)
    with open(os.path.join(d, "c0_error.json"), "w") as fh:
        json.dump(stmt, fh, indent=1)
    w = orbit.lift()
    amp = float(np.abs(vo.taylor_green_forcing().fomega).max()) / (2 * float(Fraction(cfg.nu)))
    times, (x1, x2, vals) = pp.quarter_period_snapshots(w, orbit.Omega, cfg.snapshot_resolution, normalize=amp)
    snaps = []
    for k, t in enumerate(times):
        p = os.path.join(d, f"snapshot_{k}.csv")
        pp.write_snapshot_csv(p, x1, x2, vals[k])
        snaps.append(p)
    _emit(
        dict(
            command="postprocess",
            success=True,
            velocity_err=uerr.hi,
            pressure_err=perr.hi,
            snapshots=snaps,
            symmetry_deviation=pp.symmetry_deviation(ubar, orbit.Omega),
        )
    )
    return EXIT_OK


def cmd_symmetry_check(cfg: RunConfig):
    group = cfg.make_group()
    cat = sy.OrbitCatalog(group, cfg.box)
    laws = sy.check_action_laws(group, cfg.box)
    doc = dict(
        command="symmetry-check",
        order=len(group),
        L=group.L,
        orbit_histogram={str(k): v for k, v in cat.histogram().items()},
        trivial_fraction=cat.trivial_fraction(),
        action_law_violations=laws["beta"],
        cocycle_violations=laws["cocycle"],
        checks=laws["checks"],
    )
    _emit(doc)
    return EXIT_OK if laws["beta"] == 0 and laws["cocycle"] == 0 else EXIT_NUMERIC


def suggest_parameters(cfg: RunConfig, Omega, omega, target=1e-2, ladder=None):
    """Non-binding truncation heuristic.

    Walks a doubling ladder of ``N^dagger`` with ``N~ = 2 N^dagger`` and
    returns the first rung where the rigorous Z1 tail bound is below one
    half and the cheap estimate ``2 Y0 Z2`` (diagonal preconditioner for
    ``Y0``, the tail terms of ``Z2``) is below ``target``.  When the
    estimate never reaches the target the residual of the box itself is the
    obstruction; the first rung with a small tail is returned and
    ``reachable`` is false.
    """
    group = cfg.make_group()
    lay = _layout(cfg, group)
    phi = sy.project_Pi(omega, lay)
    lay2 = _layout(cfg, group, cfg.box + cfg.box)
    Fph, Fr = solver.reduced_residual(Omega, phi, lay, cfg.make_forcing(), cfg.nu, out_layout=lay2)
    nu = float(Fraction(cfg.nu))
    mu = np.hypot(nu * (lay2.n[:, :3] ** 2).sum(1), Omega * lay2.n[:, 3])
    y0 = float(abs(Fph) + np.sum(lay2.xi * np.abs(Fr) / np.where(mu > 0, mu, np.inf)))
    w = sy.lift_Sigma(phi, lay, cfg.box)
    ladder = ladder or [10 * 2**k for k in range(7)]
    rows, first_tail, choice = [], None, None
    for N in ladder:
        z2 = (4 + math.sqrt(2)) * max(1 / Omega, 1 / math.sqrt(nu * N))
        sch = va.TruncationScheme(cfg.box, N, 2 * N, cfg.nu, cfg.eta, cfg.essentially2D)
        tail = va.z1_tail_formula(w, sch).hi
        rows.append(dict(Ndagger=N, Ntilde=2 * N, Y0_est=y0, Z2_est=z2, product=2 * y0 * z2, Z1_tail=tail))
        if tail < 0.5:
            first_tail = first_tail or N
            if 2 * y0 * z2 <= target:
                choice = N
                break
    reachable = choice is not None
    N = choice or first_tail or ladder[-1]
    doc = dict(Ndagger=N, Ntilde=2 * N, reachable=reachable, ladder=rows, target=target, binding=False)
    if not reachable:
        doc["hint"] = "2*Y0*Z2 estimate stays above target: the residual of the approximation dominates; refine on a larger box"
    return doc


def cmd_suggest(cfg: RunConfig, input_path=None):
    data = _load_input(cfg, input_path)
    omega = _fit(np.asarray(data["omega"]), cfg.box)
    doc = suggest_parameters(cfg, float(data["Omega"]), omega)
    doc["command"] = "suggest-parameters"
    _emit(doc)
    return EXIT_OK


# ---------------------------------------------------------------- entry point
def build_parser():
    p = argparse.ArgumentParser(prog="nsorbit", description="Validated periodic Navier-Stokes orbits.")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_):
        q = sub.add_parser(name, help=help_)
        q.add_argument("--config", required=True, help=f"RUNCFG-1 JSON file or a preset name {PRESETS}")
        q.add_argument("--output-dir", help="overrides paths.output_dir")
        return q

    q = add("refine", "Newton-refine an approximate orbit")
    q.add_argument("--input", help="VFLD-1 field (overrides paths.input)")
    q.add_argument("--output", help="refined VFLD-1 output path")
    q = add("validate", "run the a-posteriori validation")
    q.add_argument("--input")
    q.add_argument("--report", help="BoundsReport output path")
    q = add("postprocess", "velocity, pressure, error statement and snapshots")
    q.add_argument("--report", required=True)
    q.add_argument("--input")
    add("symmetry-check", "group order, orbit histogram and action-law checks")
    q = add("suggest-parameters", "heuristic truncation parameters")
    q.add_argument("--input")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.output_dir:
            cfg.output_dir = args.output_dir
        if args.command == "refine":
            return cmd_refine(cfg, args.input, args.output)
        if args.command == "validate":
            return cmd_validate(cfg, args.input, args.report)
        if args.command == "postprocess":
            return cmd_postprocess(cfg, args.report, args.input)
        if args.command == "symmetry-check":
            return cmd_symmetry_check(cfg)
        if args.command == "suggest-parameters":
            return cmd_suggest(cfg, args.input)
    except (ConfigError, SchemeInvalid, ForcingInvalid, ForcingSupport, NotActually2D, NonFiniteClosure) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT
    except ValueError as exc:
        # malformed generators or other input-level problems
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT
    except NotValidated as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_FAILED
    except (SingularFiniteBlock, SingularJacobian, NoConvergence, NSOrbitError, ArithmeticError) as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERIC
    return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
