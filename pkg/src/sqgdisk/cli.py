"""Command-line entry point: ``sqgdisk {basis,verify,solve,picard}``.

Every command reads one JSON config (all keys optional), applies ``--set
dot.path=value`` and flag overrides, validates everything before touching the
output directory, writes its CSV/JSON artifacts and finally ``manifest.json``.

Config schema::

    {
      "seed": 0,
      "basis":  {"max_m": 24, "max_k": 24},
      "solver": {"dt": 0.002, "T": 0.5, "epsilon": 0.0, "dealias": 1.5,
                 "cadence": 1, "cfl": 0.5, "blowup_factor": 10.0},
      "datum":  {"kind": "smooth" | "band_limited" | "zero" | "csv",
                 "amplitude": 1.0, "scale": 8.0, "lam_max": 8.0, "path": null},
      "picard": {"N": 6, "auto_T": true},
      "verify": {... VerifyConfig fields ...}
    }
"""
from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import os
import sys
import time
from dataclasses import fields

import numpy as np

from . import __version__
from .spectral import SpectralField, build_basis
from .sqg import (
    BlowUpError,
    CFLError,
    SolverConfig,
    auto_select_T,
    band_limited_datum,
    contraction_ratios,
    diagnostics,
    integrate,
    picard_sequence,
    smooth_datum,
)
from .verify import CHECKS, SUMMARY_COLUMNS, VerifyConfig, run_all, summary_rows

FLOAT = "{:.16e}"

DEFAULTS = {
    "seed": 0,
    "basis": {"max_m": 24, "max_k": 24},
    "solver": {"dt": 2e-3, "T": 0.5, "epsilon": 0.0, "dealias": 1.5, "cadence": 1, "cfl": 0.5, "blowup_factor": 10.0},
    "datum": {"kind": "smooth", "amplitude": 1.0, "scale": 8.0, "lam_max": 8.0, "path": None},
    "picard": {"N": 6, "auto_T": True},
    "verify": {},
}

DATUM_KINDS = ("smooth", "band_limited", "zero", "csv")

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_BLOWUP = 3


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration


def _merge(base, extra, path=""):
    out = copy.deepcopy(base)
    for k, v in extra.items():
        where = f"{path}{k}"
        if k not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[k], dict) and k != "verify":
            if not isinstance(v, dict):
                raise ConfigError(f"config key {where!r} must be an object")
            out[k] = _merge(base[k], v, where + ".")
        else:
            out[k] = v
    return out


def load_config(path):
    if path is None:
        return copy.deepcopy(DEFAULTS)
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        lines = text.splitlines()
        line = lines[err.lineno - 1] if 0 < err.lineno <= len(lines) else ""
        raise ConfigError(
            f"{path}:{err.lineno}:{err.colno}: {err.msg}\n    {line}\n    {' ' * (err.colno - 1)}^"
        ) from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return _merge(DEFAULTS, raw)


def apply_override(cfg, assignment):
    """Set cfg[a][b]... from 'a.b=value'; value is parsed as JSON, falling back to a string."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} must look like dot.path=value")
    key, text = assignment.split("=", 1)
    try:
        value = json.loads(text)
    except json.JSONDecodeError:
        value = text
    parts = key.split(".")
    node = cfg
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise ConfigError(f"unknown config key {key!r}")
        node = node[p]
    if parts[-1] not in node and node is not cfg.get("verify"):
        raise ConfigError(f"unknown config key {key!r}")
    node[parts[-1]] = value
    return cfg


def solver_config(cfg):
    try:
        scfg = SolverConfig.from_dict({**cfg["basis"], **cfg["solver"]})
        scfg.steps  # raises unless T is a multiple of dt
        return scfg
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid solver settings: {err}") from None


def verify_config(cfg):
    d = dict(cfg["verify"])
    d.setdefault("seed", cfg["seed"])
    names = {f.name for f in fields(VerifyConfig)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown verify keys: {sorted(unknown)}")
    try:
        return VerifyConfig.from_dict(d)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid verify settings: {err}") from None


def validate(cfg):
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ConfigError("seed must be a non-negative integer")
    for k in ("max_m", "max_k"):
        v = cfg["basis"][k]
        if not isinstance(v, int) or v < (0 if k == "max_m" else 1):
            raise ConfigError(f"basis.{k} must be an integer (max_m >= 0, max_k >= 1)")
    kind = cfg["datum"]["kind"]
    if kind not in DATUM_KINDS:
        raise ConfigError(f"datum.kind must be one of {DATUM_KINDS}")
    if kind == "csv" and not cfg["datum"]["path"]:
        raise ConfigError("datum.kind = csv needs datum.path")
    n = cfg["picard"]["N"]
    if not isinstance(n, int) or n < 2:
        raise ConfigError("picard.N must be an integer >= 2")
    solver_config(cfg)
    verify_config(cfg)


# ---------------------------------------------------------------------------
# CSV snapshots


def fmt(x):
    return FLOAT.format(float(x))


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def write_spectral_csv(path, f):
    """Rows (m, k, lambda, re, im) for m >= 0."""
    b = f.basis
    rows = []
    for m in range(b.max_m + 1):
        for k in range(1, b.max_k + 1):
            c = f.coeffs[m, k - 1]
            rows.append((m, k, float(b.lam[m, k - 1]), float(c.real), float(c.imag)))
    write_csv(path, ("m", "k", "lambda", "re", "im"), rows)


def read_spectral_csv(path, basis=None):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no coefficient rows")
    ms = [int(r["m"]) for r in rows]
    ks = [int(r["k"]) for r in rows]
    basis = basis or build_basis(max(ms), max(ks))
    c = np.zeros(basis.shape, dtype=complex)
    for m, k, r in zip(ms, ks, rows):
        if m <= basis.max_m and k <= basis.max_k:
            c[m, k - 1] = float(r["re"]) + 1j * float(r["im"])
    return SpectralField(basis, c)


def write_grid_csv(path, g):
    rows = [(float(r), float(t), float(v)) for r, row in zip(g.grid.r, g.values) for t, v in zip(g.grid.theta, row)]
    write_csv(path, ("r", "theta", "value"), rows)


def read_grid_values(path):
    """(r, theta, values) arrays from a grid CSV written by write_grid_csv."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    r = np.unique(data[:, 0])
    t = np.unique(data[:, 1])
    return r, t, data[:, 2].reshape(r.size, t.size)


# ---------------------------------------------------------------------------
# commands


class Output:
    """Tracks files written into one directory; the manifest goes last."""

    def __init__(self, root):
        self.root = root
        self.files = []

    def path(self, name):
        os.makedirs(self.root, exist_ok=True)
        p = os.path.join(self.root, name)
        self.files.append(name)
        return p

    def manifest(self, command, cfg, seed, started, extra=None):
        data = {
            "command": command,
            "config": cfg,
            "version": __version__,
            "seed": seed,
            "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
            "wall_clock_s": time.time() - started,
            "files": [f for f in self.files if os.path.exists(os.path.join(self.root, f))],
        }
        if extra:
            data.update(extra)
        with open(os.path.join(self.root, "manifest.json"), "w") as fh:
            json.dump(_plain(data), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, (float, np.floating)):
        return float(x) if math.isfinite(x) else str(float(x))
    if isinstance(x, np.integer):
        return int(x)
    return x


def make_datum(cfg, basis):
    d = cfg["datum"]
    if d["kind"] == "zero":
        return SpectralField.zeros(basis)
    if d["kind"] == "smooth":
        return smooth_datum(basis, cfg["seed"], d["amplitude"], d["scale"])
    if d["kind"] == "band_limited":
        return band_limited_datum(basis, cfg["seed"], d["amplitude"], d["lam_max"])
    return read_spectral_csv(d["path"], basis)


def cmd_basis(cfg, out):
    b = build_basis(cfg["basis"]["max_m"], cfg["basis"]["max_k"])
    rows = [(m, k, float(b.lam[m, k - 1]), float(b.norm[m, k - 1])) for m in range(b.max_m + 1) for k in range(1, b.max_k + 1)]
    write_csv(out.path("basis.csv"), ("m", "k", "j_mk", "norm_const"), rows)
    return EXIT_OK, {}


def cmd_verify(cfg, out, checks, jobs):
    vcfg = verify_config(cfg)
    reports = run_all(vcfg, checks, jobs)
    for r in reports:
        with open(out.path(f"{r.name}.json"), "w") as fh:
            fh.write(r.to_json())
            fh.write("\n")
    rows = summary_rows(reports)
    write_csv(out.path("summary.csv"), SUMMARY_COLUMNS, [[row[c] for c in SUMMARY_COLUMNS] for row in rows])
    for row in rows:
        print(f"{row['check']:24s} {row['status']:9s} {row['runtime_s']:8.1f} s  {row['notes']}")
    ok = all(r.passed for r in reports)
    return (EXIT_OK if ok else EXIT_FAIL), {"checks": [r.name for r in reports], "all_passed": ok}


def _write_diagnostics(out, run, cadence):
    d = diagnostics(run.trajectory, cadence)
    write_csv(out.path("diagnostics.csv"), d.COLUMNS, d.rows().tolist())


def cmd_solve(cfg, out):
    scfg = solver_config(cfg)
    basis = scfg.basis()
    theta0 = make_datum(cfg, basis)
    write_spectral_csv(out.path("initial_state.csv"), theta0)
    try:
        run = integrate(theta0, scfg)
    except BlowUpError as err:
        if err.run is not None:
            _write_diagnostics(out, err.run, scfg.cadence)
        print(f"blow-up guard: {err}", file=sys.stderr)
        return EXIT_BLOWUP, {"aborted": True, "message": str(err)}
    except CFLError as err:
        print(f"CFL violation: {err}", file=sys.stderr)
        return EXIT_FAIL, {"aborted": True, "message": str(err)}
    _write_diagnostics(out, run, scfg.cadence)
    write_spectral_csv(out.path("final_state.csv"), run.final)
    return EXIT_OK, {"steps": scfg.steps}


def cmd_picard(cfg, out):
    scfg = solver_config(cfg)
    basis = scfg.basis()
    theta0 = make_datum(cfg, basis)
    N = cfg["picard"]["N"]
    if cfg["picard"]["auto_T"]:
        scfg, states = auto_select_T(theta0, scfg, N=N)
    else:
        states = picard_sequence(theta0, scfg, N)
    ratio = {n: q for n, q in contraction_ratios(states)}
    rows = [(s.n, float(s.D), float(s.D_sup), float(s.D_int), float(ratio.get(s.n, math.nan))) for s in states]
    write_csv(out.path("picard.csv"), ("n", "D", "D_sup", "D_int", "ratio"), rows)
    write_spectral_csv(out.path("picard_final.csv"), states[-1].trajectory.field(-1))
    return EXIT_OK, {"T": scfg.T}


# ---------------------------------------------------------------------------
# argument parsing


def build_parser():
    p = argparse.ArgumentParser(prog="sqgdisk", description="Critical SQG on the unit disk: spectral solver and inequality checks.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("basis", "dump the Dirichlet eigenbasis table"),
        ("verify", "run inequality checks"),
        ("solve", "integrate the SQG equation"),
        ("picard", "run the Picard iteration"),
    ):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", help="JSON config file")
        s.add_argument("--out", default="out", help="output directory (default: out)")
        s.add_argument("--seed", type=int, help="override the config seed")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key by dot path")
        if name == "verify":
            s.add_argument("--check", action="append", help=f"check name or 'all' (choices: {', '.join(CHECKS)})")
            s.add_argument("--jobs", type=int, default=1, help="parallel check processes")
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    started = time.time()
    checks = None
    if args.command == "verify":
        names = args.check or ["all"]
        if "all" in names:
            checks = list(CHECKS)
        else:
            unknown = [n for n in names if n not in CHECKS]
            if unknown:
                parser.error(f"unknown check(s) {unknown}; choose from {', '.join(CHECKS)} or all")
            checks = names
        if args.jobs < 1:
            parser.error("--jobs must be >= 1")
    try:
        cfg = load_config(args.config)
        for s in args.set:
            apply_override(cfg, s)
        if args.seed is not None:
            cfg["seed"] = args.seed
            if "seed" in cfg["verify"]:
                cfg["verify"]["seed"] = args.seed
        validate(cfg)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_FAIL
    out = Output(args.out)
    if args.command == "basis":
        code, extra = cmd_basis(cfg, out)
    elif args.command == "verify":
        code, extra = cmd_verify(cfg, out, checks, args.jobs)
    elif args.command == "solve":
        code, extra = cmd_solve(cfg, out)
    else:
        code, extra = cmd_picard(cfg, out)
    out.manifest(args.command, cfg, cfg["seed"], started, {"exit_code": code, **extra})
    return code


if __name__ == "__main__":
    sys.exit(main())
