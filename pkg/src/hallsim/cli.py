"""Command-line front end.

Config files are flat ``dotted.key = value`` lines; ``#`` starts a comment.
Every key is validated against SCHEMA before any computation.  Outputs are
written to --out as ``<command>.csv`` / ``<command>.json``; every JSON carries
the schema id and a SHA-256 hash of the effective config.

Exit codes: 0 ok, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, HallsimError

log = logging.getLogger("hallsim")

SCHEMA_VERSION = 1
COMMANDS = ("bands", "flow", "current", "hall", "mourre", "resolvent", "decay", "disorder",
            "constants")
REQUIRED = object()

# key -> (type, default, allowed values or None)
SCHEMA = {
    "geometry.kind": (str, REQUIRED, ("dirichlet", "halfplane", "cylinder", "corbino")),
    "geometry.R": (float, 16.0, None),
    "geometry.L": (float, 8.0, None),
    "geometry.walls": (str, "both", ("both", "upper")),
    "geometry.flux": (float, 0.0, None),
    "units.B": (float, 1.0, None),
    "potential.kind": (str, "power", ("power", "exponential", "saturating", "none")),
    "potential.a": (float, 1.0, None),
    "potential.p": (float, 2.0, None),
    "potential.foot": (float, 0.0, None),
    "potential.E0": (float, 10.0, None),
    "potential.knee": (float, 0.5, None),
    "potential.base": (str, "power", ("power", "exponential")),
    "grid.h": (float, 0.005, None),
    "grid.margin": (float, 8.0, None),
    "grid.nx": (int, 64, None),
    "grid.ny": (int, 128, None),
    "grid.hx": (float, 0.2, None),
    "grid.hy": (float, 0.2, None),
    "grid.y_top": (float, 5.0, None),
    "window.E": (float, 2.0, None),
    "window.halfwidth": (float, 0.1, None),
    "disorder.delta": (float, -1.0, None),
    "disorder.fraction": (float, 0.5, None),
    "disorder.ell": (float, 1.0, None),
    "bands.kappa_min": (float, math.nan, None),
    "bands.kappa_max": (float, math.nan, None),
    "bands.count": (int, 45, None),
    "bands.n_max": (int, 3, None),
    "flow.l_min": (int, -4, None),
    "flow.l_max": (int, 4, None),
    "flow.flux_nodes": (int, 8, None),
    "flow.n_max": (int, 2, None),
    "current.n_max": (int, 2, None),
    "hall.nu": (int, 1, None),
    "hall.mu_l": (float, math.nan, None),
    "hall.mu_r": (float, math.nan, None),
    "hall.flux_nodes": (int, 64, None),
    "hall.h": (float, 0.02, None),
    "mourre.flux_nodes": (int, 8, None),
    "mourre.edge_width": (float, 4.0, None),
    "mourre.edge_threshold": (float, 0.5, None),
    "resolvent.E": (float, 2.0, None),
    "resolvent.d_min": (float, 0.1, None),
    "resolvent.d_max": (float, 4.0, None),
    "resolvent.count": (int, 40, None),
    "decay.a": (float, 4.0, None),
    "decay.radii": (str, "16,24", None),
    "decay.reference": (str, "origin", ("origin", "edge")),
    "decay.h": (float, 0.004, None),
    "disorder_check.nx": (int, 16, None),
    "disorder_check.ny": (int, 32, None),
    "disorder_check.h": (float, 0.4, None),
    "constants.a_values": (str, "0.5,0.25,0.125", None),
}

# keys a command cannot do without (beyond SCHEMA's own REQUIRED entries)
NEEDS_GEOMETRY = {"bands", "flow", "current"}


# -- config ------------------------------------------------------------------


def parse_config_text(text: str) -> dict:
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", "expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}", "empty key")
        if key in raw:
            raise ConfigError(key, "duplicate key")
        raw[key] = value
    return raw


def _coerce(key, typ, value):
    try:
        if typ is int:
            return int(value)
        if typ is float:
            v = float(value)
            if math.isinf(v):
                raise ValueError
            return v
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(key, f"cannot read {value!r} as {typ.__name__}") from None


def validate(raw: dict, command: str) -> dict:
    """Typed, defaulted config; ConfigError names the first offending key."""
    for key in raw:
        if key not in SCHEMA:
            raise ConfigError(key, "unknown key")
    cfg = {}
    for key, (typ, default, allowed) in SCHEMA.items():
        if key in raw:
            val = _coerce(key, typ, raw[key])
        elif default is REQUIRED:
            if command in NEEDS_GEOMETRY or not key.startswith("geometry."):
                raise ConfigError(key, "missing required key")
            val = None
        else:
            val = default
        if allowed is not None and val is not None and val not in allowed:
            raise ConfigError(key, f"must be one of {', '.join(allowed)}")
        cfg[key] = val
    for key in ("units.B", "geometry.R", "geometry.L", "potential.a", "grid.h", "grid.hx",
                "grid.hy", "disorder.ell", "decay.h", "hall.h", "disorder_check.h"):
        if not cfg[key] > 0:
            raise ConfigError(key, "must be positive")
    for key in ("bands.count", "bands.n_max", "flow.flux_nodes", "flow.n_max", "hall.flux_nodes",
                "grid.nx", "grid.ny", "resolvent.count", "mourre.flux_nodes"):
        if cfg[key] < 1:
            raise ConfigError(key, "must be at least 1")
    if cfg["window.halfwidth"] < 0:
        raise ConfigError("window.halfwidth", "must be non-negative")
    if cfg["flow.l_max"] < cfg["flow.l_min"]:
        raise ConfigError("flow.l_max", "must not be below flow.l_min")
    if not math.isnan(cfg["bands.kappa_max"] - cfg["bands.kappa_min"]) and \
            cfg["bands.kappa_max"] < cfg["bands.kappa_min"]:
        raise ConfigError("bands.kappa_max", "must not be below bands.kappa_min")
    for key in ("decay.radii", "constants.a_values"):
        try:
            vals = [float(s) for s in cfg[key].split(",") if s.strip()]
        except ValueError:
            raise ConfigError(key, "expected a comma-separated list of numbers") from None
        if not vals or any(not v > 0 for v in vals):
            raise ConfigError(key, "expected positive numbers")
    return cfg


def config_hash(cfg: dict) -> str:
    lines = [f"{k}={_fmt(v)}" for k, v in sorted(cfg.items()) if v is not None]
    return hashlib.sha256("\n".join(lines).encode()).hexdigest()


def parse_seeds(text: str | None) -> list:
    if not text:
        return list(range(1, 11))
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if "-" in part[1:]:
                lo, hi = part.split("-", 1)
                seeds.extend(range(int(lo), int(hi) + 1))
            else:
                seeds.append(int(part))
        except ValueError:
            raise ConfigError("--seeds", f"cannot read {part!r}") from None
    if not seeds:
        raise ConfigError("--seeds", "empty seed list")
    return seeds


# -- formatting --------------------------------------------------------------


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v) + 0.0          # no signed zeros in output
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".15g")
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj) + 0.0
        if not math.isfinite(v):
            return _fmt(v)
        return float(format(v, ".15g"))
    return obj


def write_csv(path: Path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue())


def write_json(path: Path, command: str, cfg: dict, payload: dict):
    doc = {"schema": f"hallsim.{command}/{SCHEMA_VERSION}", "version": __version__,
           "config_hash": config_hash(cfg), **payload}
    path.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")


# -- builders ----------------------------------------------------------------


def _units(cfg):
    from .model import Units
    return Units(cfg["units.B"])


def _potential(cfg):
    from .model import make_potential
    kind = cfg["potential.kind"]
    if kind == "none":
        return make_potential("none")
    params = {"a": cfg["potential.a"], "foot": cfg["potential.foot"]}
    base = cfg["potential.base"] if kind == "saturating" else kind
    if base == "power":
        params["p"] = cfg["potential.p"]
    try:
        if kind == "saturating":
            return make_potential("saturating", base=base, E0=cfg["potential.E0"],
                                  knee=cfg["potential.knee"], **params)
        return make_potential(kind, **params)
    except ValueError as exc:
        raise ConfigError("potential.kind", str(exc)) from None


def _geometry(cfg, kind=None):
    from .model import Corbino, Cylinder, HalfPlaneDirichlet, HalfPlaneEdge
    kind = kind or cfg["geometry.kind"]
    pot = _potential(cfg)
    if kind == "dirichlet":
        return HalfPlaneDirichlet()
    if kind == "halfplane":
        return HalfPlaneEdge(pot)
    if kind == "cylinder":
        return Cylinder(cfg["geometry.R"], cfg["geometry.L"], pot, cfg["geometry.flux"],
                        cfg["geometry.walls"])
    return Corbino(cfg["geometry.R"], pot, cfg["geometry.flux"])


def _grid_1d(cfg, geom, y0_lo, y0_hi, h=None):
    """Grid covering guiding centres [y0_lo, y0_hi] plus a margin of magnetic lengths."""
    from .model import Corbino, Cylinder, Grid1D, HalfPlaneDirichlet, RadialGrid
    h = h or cfg["grid.h"]
    m = cfg["grid.margin"] * _units(cfg).magnetic_length
    if isinstance(geom, Corbino):
        r_max = geom.R + m
        return RadialGrid(r_max, max(16, int(round(r_max / h))))
    if isinstance(geom, HalfPlaneDirichlet):
        lo, hi = min(y0_lo, 0.0) - m, 0.0
    elif isinstance(geom, Cylinder):
        feet = geom.wall_feet()
        lo, hi = min(feet[0], y0_lo) - m, max(feet[-1], y0_hi) + m
    else:
        lo, hi = min(y0_lo, 0.0) - m, max(y0_hi, 0.0) + m
    n = max(16, int(round((hi - lo) / h)) - 1)
    return Grid1D(lo, hi, n)


def _default_kappa_range(geom, units):
    """Channels from beyond the wall to deep in the bulk."""
    from .model import Corbino, Cylinder
    B = units.B
    if isinstance(geom, Cylinder):
        ext = geom.L / 2 + 3.0 * units.magnetic_length
        return -B * geom.R * ext, B * geom.R * ext
    if isinstance(geom, Corbino):
        return 0.0, 0.5 * B * (geom.R + 3.0 * units.magnetic_length) ** 2
    return -3.0 * B ** 0.5, 8.0 * B ** 0.5


def _kappas(cfg, geom, units):
    lo, hi = _default_kappa_range(geom, units)
    if not math.isnan(cfg["bands.kappa_min"]):
        lo = cfg["bands.kappa_min"]
    if not math.isnan(cfg["bands.kappa_max"]):
        hi = cfg["bands.kappa_max"]
    if hi < lo:
        raise ConfigError("bands.kappa_max", "must not be below bands.kappa_min")
    return np.linspace(lo, hi, cfg["bands.count"])


def _y0_range(geom, kappas, units):
    y0 = geom.guiding_center(kappas, units)
    return float(np.min(y0)), float(np.max(y0))


# -- commands ----------------------------------------------------------------


def command_bands(cfg, out: Path, ctx):
    from .bands import dispersion
    units = _units(cfg)
    geom = _geometry(cfg)
    kap = _kappas(cfg, geom, units)
    grid = _grid_1d(cfg, geom, *_y0_range(geom, kap, units))
    tab = dispersion(geom, kap, cfg["bands.n_max"], grid, units, workers=ctx["threads"])
    rows = []
    for k, kappa in enumerate(tab.kappa):
        for n in range(tab.energies.shape[1]):
            rows.append((kappa, n, tab.energies[k, n], tab.guiding_center[k], tab.residuals[k, n]))
    write_csv(out / "bands.csv", ("kappa", "band", "energy", "guiding_center", "residual"), rows)
    write_json(out / "bands.json", "bands", cfg, {
        "geometry": cfg["geometry.kind"], "grid_points": grid.n, "grid_h": grid.h,
        "bands": tab.energies.shape[1], "kappas": len(tab.kappa),
        "files": ["bands.csv"], "columns": ["kappa", "band", "energy", "guiding_center", "residual"]})


def _flow_grid(cfg, geom, units, ls):
    kap = np.array([ls[0] - 1.0, ls[-1] + 0.0])
    return _grid_1d(cfg, geom, *_y0_range(geom, kap, units))


def command_flow(cfg, out: Path, ctx):
    from .bands import spectral_flow
    from .model import flux_nodes
    units = _units(cfg)
    geom = _geometry(cfg)
    if not getattr(geom, "has_flux", False):
        raise ConfigError("geometry.kind", "spectral flow needs a cylinder or corbino geometry")
    ls = np.arange(cfg["flow.l_min"], cfg["flow.l_max"] + 1)
    nodes = np.append(flux_nodes(cfg["flow.flux_nodes"]), 1.0)
    grid = _flow_grid(cfg, geom, units, ls)
    tab = spectral_flow(geom, nodes, ls, cfg["flow.n_max"], grid, units, workers=ctx["threads"])
    rows = []
    for n in range(tab.energies.shape[0]):
        for i, l in enumerate(ls):
            for j, q in enumerate(nodes):
                rows.append((n, l, q, l - q, tab.energies[n, i, j]))
    # E_{n,l}(one quantum) against E_{n,l-1}(0)
    gap = float(np.max(np.abs(tab.energies[:, 1:, -1] - tab.energies[:, :-1, 0])))
    write_csv(out / "flow.csv", ("band", "l", "flux_quanta", "kappa", "energy"), rows)
    write_json(out / "flow.json", "flow", cfg, {"flow_identity_max_error": gap,
                                                "files": ["flow.csv"]})


def command_current(cfg, out: Path, ctx):
    from .bands import channel_hamiltonian, lowest_states
    from .model import Cylinder, SpectralWindow
    from .transport import current_report, virial_residual
    units = _units(cfg)
    geom = _geometry(cfg)
    if not isinstance(geom, Cylinder):
        raise ConfigError("geometry.kind", "current reports need a cylinder")
    win = SpectralWindow(cfg["window.E"], cfg["window.halfwidth"], units)
    kap = _kappas(cfg, geom, units)
    grid = _grid_1d(cfg, geom, *_y0_range(geom, kap, units))
    rows = []
    worst = 0.0
    for kappa in np.arange(math.ceil(kap[0]), math.floor(kap[-1]) + 1):
        ch = channel_hamiltonian(geom, float(kappa), grid, units)
        for n, p in enumerate(lowest_states(ch, cfg["current.n_max"])):
            if not win.contains(p.energy):
                continue
            rep = current_report(geom, ch, p, (n, float(kappa)), units)
            vr = virial_residual(ch, p)
            worst = max(worst, vr)
            rows.append((n, kappa, p.energy, rep.I_fh, rep.I_comm, rep.discrepancy, vr))
    write_csv(out / "current.csv",
              ("band", "kappa", "energy", "I_fh", "I_comm", "discrepancy", "virial_residual"), rows)
    write_json(out / "current.json", "current", cfg, {"states": len(rows), "max_virial": worst,
                                                      "files": ["current.csv"]})


def hall_setup(R, nu, units, pot, L=8.0, h=0.02, M=64, mu=None):
    """Cylinder, grid and flow table sized so every occupied channel is inside the table."""
    from .bands import spectral_flow
    from .model import Cylinder, Grid1D, flux_nodes
    geom = Cylinder(R, L, pot)
    mu_l, mu_r = mu if mu is not None else (2.0 * nu * units.B - 0.4 * units.B,
                                            2.0 * nu * units.B + 0.4 * units.B)
    # wall penetration where the wall alone exceeds mu_r, plus decay room
    reach = 0.0
    while float(pot(np.array([reach]))[0]) < mu_r + 4.0 * units.B:
        reach += 0.25
    ext = L / 2 + reach
    lB = units.magnetic_length
    grid = Grid1D(-ext - 2 * lB, ext + 2 * lB, int(round(2 * (ext + 2 * lB) / h)))
    lmax = int(math.ceil(units.B * R * ext)) + 2
    ls = np.arange(-lmax, lmax + 1)
    table = spectral_flow(geom, flux_nodes(M), ls, nu + 1, grid, units)
    return table, mu_l, mu_r


def command_hall(cfg, out: Path, ctx):
    from .transport import hall_conductivity
    units = _units(cfg)
    pot = _potential(cfg)
    nu = cfg["hall.nu"]
    mu = None
    if not (math.isnan(cfg["hall.mu_l"]) and math.isnan(cfg["hall.mu_r"])):
        if math.isnan(cfg["hall.mu_l"]) or math.isnan(cfg["hall.mu_r"]):
            raise ConfigError("hall.mu_l", "set both hall.mu_l and hall.mu_r or neither")
        mu = (cfg["hall.mu_l"], cfg["hall.mu_r"])
    table, mu_l, mu_r = hall_setup(cfg["geometry.R"], nu, units, pot, cfg["geometry.L"],
                                   cfg["hall.h"], cfg["hall.flux_nodes"], mu)
    res = hall_conductivity(table, mu_l, mu_r)
    write_json(out / "hall.json", "hall", cfg, res.as_dict())


def mourre_run(pot, units, E, halfwidth, grid, seeds, delta=None, fraction=0.5, ell=1.0,
               flux_count=8, E0=None, edge_width=4.0, edge_threshold=0.5):
    """Ledger, threshold and empirical alpha over seeds x flux nodes."""
    from .bands import strip_operator
    from .disorder import generate
    from .model import Cylinder, SpectralWindow, flux_nodes
    from .mourre import commutator_positivity, consistent_ledger, disorder_threshold, optimize_cutoff
    warnings = []
    if delta is None:
        win, led, th = consistent_ledger(pot, E, halfwidth, units, fraction, E0=E0)
    else:
        win = SpectralWindow(E, halfwidth, units, delta=delta, E0=E0)
        led = optimize_cutoff(pot, win)
        try:
            th = disorder_threshold(led)
        except HallsimError as exc:
            th = 0.0
            warnings.append(str(exc))
    per_seed = []
    alpha_emp = math.inf
    energies = []
    passed = True
    for seed in seeds:
        fld = generate(seed, win.delta, ell, grid) if win.delta > 0 else None
        seed_min = math.inf
        for q in flux_nodes(flux_count):
            geom = Cylinder(grid.R, potential=pot, flux_quanta=float(q), walls="upper")
            op = strip_operator(geom, grid, units, fld)
            rep = commutator_positivity(op, win, led.alpha_tilde, th, edge_width, edge_threshold)
            seed_min = min(seed_min, rep.alpha_emp)
            energies.extend(rep.energies)
            passed &= rep.passed
            for w in rep.warnings:
                if w != "no wall states in window" and w not in warnings:
                    warnings.append(w)
        per_seed.append({"seed": seed, "alpha_emp": seed_min,
                         "delta1": fld.delta1 if fld is not None else 0.0})
        alpha_emp = min(alpha_emp, seed_min)
    if not energies:
        warnings.append("no wall states in window")
    if not win.delta <= th:
        passed = False
        msg = f"delta {win.delta:.6g} exceeds threshold {th:.6g}"
        if msg not in warnings:
            warnings.append(msg)
    payload = {"window": {"E": E, "halfwidth": halfwidth}, "eta": win.eta,
               "eta_branch": win.eta_branch, "delta": win.delta, "alpha_emp": alpha_emp,
               "alpha_tilde": led.alpha_tilde, "delta_threshold": th, "seeds": list(seeds),
               "pass": bool(passed and alpha_emp > 0), "per_seed": per_seed,
               "states": len(energies), "ledger": led.as_dict(), "warnings": warnings}
    return payload


def command_mourre(cfg, out: Path, ctx):
    from .model import Grid2D
    units = _units(cfg)
    pot = _potential(cfg)
    grid = Grid2D.dirichlet_top(cfg["grid.nx"], cfg["grid.ny"], cfg["grid.hx"], cfg["grid.hy"],
                                cfg["grid.y_top"])
    delta = cfg["disorder.delta"] if cfg["disorder.delta"] >= 0 else None
    E0 = cfg["potential.E0"] if cfg["potential.kind"] == "saturating" else None
    payload = mourre_run(pot, units, cfg["window.E"], cfg["window.halfwidth"], grid, ctx["seeds"],
                         delta, cfg["disorder.fraction"], cfg["disorder.ell"],
                         cfg["mourre.flux_nodes"], E0, cfg["mourre.edge_width"],
                         cfg["mourre.edge_threshold"])
    write_json(out / "mourre.json", "mourre", cfg, payload)


def command_resolvent(cfg, out: Path, ctx):
    from .resolvent import ResolventParams, decay_bound_check, free_resolvent_kernel
    B = cfg["units.B"]
    params = ResolventParams(cfg["resolvent.E"], B)
    lB = B ** -0.5
    d = np.linspace(cfg["resolvent.d_min"], cfg["resolvent.d_max"], cfg["resolvent.count"]) * lB
    fit = decay_bound_check(params, d)
    # fixed base point and direction so the gauge phase is visible
    x0 = np.array([0.5, 0.3]) * lB
    e = np.array([math.cos(0.7), math.sin(0.7)])
    rows = []
    for di, env in zip(d, fit.envelope):
        k = free_resolvent_kernel(x0, x0 + di * e, params)
        rows.append((di, k.real, k.imag, abs(k), env))
    write_csv(out / "resolvent.csv", ("d", "re", "im", "abs", "envelope"), rows)
    write_json(out / "resolvent.json", "resolvent", cfg, {
        "E": params.E, "zeta": params.zeta, "C": fit.C, "xi": fit.xi,
        "violations": fit.violations, "files": ["resolvent.csv"]})


def command_decay(cfg, out: Path, ctx):
    from .model import Corbino, RadialGrid
    from .resolvent import eigenfunction_decay_fit
    from .transport import corbino_state_at_energy
    units = _units(cfg)
    pot = _potential(cfg)
    fits = []
    for R in (float(s) for s in cfg["decay.radii"].split(",") if s.strip()):
        geom = Corbino(R, pot)
        r_max = R + cfg["grid.margin"] * units.magnetic_length
        grid = RadialGrid(r_max, int(round(r_max / cfg["decay.h"])))
        ch, pair = corbino_state_at_energy(geom, cfg["window.E"], grid, units)
        f = eigenfunction_decay_fit(ch, pair, cfg["decay.a"], R, cfg["decay.reference"])
        fits.append({"R": R, "lambda": f.lam, "log_C": f.log_C, "fit_range": list(f.fit_range),
                     "residual": f.residual, "energy": pair.energy, "kappa": ch.kappa})
    lams = [f["lambda"] for f in fits]
    spread = (max(lams) - min(lams)) / min(lams) if len(lams) > 1 else 0.0
    write_json(out / "decay.json", "decay", cfg, {"reference": cfg["decay.reference"],
                                                  "fits": fits, "relative_spread": spread})


def command_disorder(cfg, out: Path, ctx):
    from .bands import strip_operator
    from .disorder import generate, spectrum_inclusion_check
    from .model import Grid2D, HalfPlaneEdge
    units = _units(cfg)
    pot = _potential(cfg)
    nx, ny, h = cfg["disorder_check.nx"], cfg["disorder_check.ny"], cfg["disorder_check.h"]
    grid = Grid2D.dirichlet_top(nx, ny, h, h, cfg["grid.y_top"])
    geom = HalfPlaneEdge(pot)
    delta = cfg["disorder.delta"] if cfg["disorder.delta"] >= 0 else 0.05 * units.B
    clean = np.linalg.eigvalsh(strip_operator(geom, grid, units).to_dense())
    dis = []
    for seed in ctx["seeds"]:
        fld = generate(seed, delta, cfg["disorder.ell"], grid)
        dis.append(np.linalg.eigvalsh(strip_operator(geom, grid, units, fld).to_dense()))
    rep = spectrum_inclusion_check(clean, dis, delta, seeds=ctx["seeds"])
    write_json(out / "disorder.json", "disorder", cfg, {
        "delta": delta, "seeds": rep.seeds, "max_distance": rep.max_distance,
        "max_shift": rep.max_shift, "violations": rep.violations,
        "proxy_fraction": rep.proxy_fraction, "eps": rep.eps, "grid": [nx, ny, h]})


def command_constants(cfg, out: Path, ctx):
    from .model import ExponentialWall, PowerWall, SpectralWindow
    from .mourre import disorder_threshold, optimize_cutoff, scaling_study
    units = _units(cfg)
    pot = _potential(cfg)
    win = SpectralWindow(cfg["window.E"], cfg["window.halfwidth"], units)
    led = optimize_cutoff(pot, win)
    try:
        th = disorder_threshold(led)
    except HallsimError:
        th = 0.0
    a_values = [float(s) for s in cfg["constants.a_values"].split(",") if s.strip()]
    if cfg["potential.kind"] == "exponential":
        make = lambda a: ExponentialWall(a, cfg["potential.foot"])
    else:
        make = lambda a: PowerWall(a, cfg["potential.p"], cfg["potential.foot"])
    study = scaling_study(make, a_values, cfg["window.E"], cfg["window.halfwidth"], units)
    keys = ("C1", "C2", "C3", "C4", "alpha_tilde")
    write_csv(out / "constants_scaling.csv", ("a",) + keys,
              [(r["a"],) + tuple(r[k] for k in keys) for r in study["rows"]])
    write_json(out / "constants.json", "constants", cfg, {
        "ledger": led.as_dict(), "delta_threshold": th, "scaling_slopes": study["slopes"],
        "files": ["constants_scaling.csv"]})


HANDLERS = {name: globals()[f"command_{name}"] for name in COMMANDS}


# -- entry point -------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="hallsim", description="Quantum Hall edge-state toolkit")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", type=Path, help="flat key = value config file")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--seeds", help="seed list, e.g. 1,2,5-9")
    p.add_argument("--threads", type=int, help="worker threads (or HALLSIM_THREADS)")
    p.add_argument("--verbose", action="store_true")
    p.add_argument("--version", action="version", version=f"hallsim {__version__}")
    return p


def _threads(arg):
    if arg is not None:
        if arg < 1:
            raise ConfigError("--threads", "must be at least 1")
        return arg
    env = os.environ.get("HALLSIM_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError("HALLSIM_THREADS", f"cannot read {env!r}") from None
        if n < 1:
            raise ConfigError("HALLSIM_THREADS", "must be at least 1")
        return n
    return 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        text = args.config.read_text() if args.config else ""
        cfg = validate(parse_config_text(text), args.command)
        ctx = {"threads": _threads(args.threads), "seeds": parse_seeds(args.seeds)}
        args.out.mkdir(parents=True, exist_ok=True)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    log.info("running %s with config hash %s", args.command, config_hash(cfg))
    try:
        HANDLERS[args.command](cfg, args.out, ctx)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (HallsimError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
