"""Mourre-estimate bookkeeping and its numerical verification.

The conjugate operator is the x guiding-centre coordinate, so the
commutator reduces to the wall force dV/dy on window states.  The rigorous
side is a constants ledger built from a cutoff j(y); the empirical side
projects dV/dy onto the computed window eigenvectors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import bisect, minimize_scalar

from .errors import (DegenerateWall, InvalidCutoff, NoPositiveThreshold, WindowAboveWall,
                     WrongGeometry)
from .linalg import eig_window
from .model import HalfPlaneDirichlet, SpectralWindow
from .transport import edge_mass, virial_terms

N_SAMPLES = 10_000


# -- cutoff ------------------------------------------------------------------


def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t**3 * (10.0 - 15.0 * t + 6.0 * t * t)


@dataclass(frozen=True)
class CutoffSpec:
    """j = 1 for y <= b, 0 for y >= b + a, quintic smoothstep in between."""

    b: float
    a: float

    def __post_init__(self):
        if not self.a > 0:
            raise InvalidCutoff("cutoff width must be positive")

    def _t(self, y):
        return (np.asarray(y, dtype=float) - self.b) / self.a

    def j(self, y):
        return 1.0 - _smoothstep(self._t(y))

    def dj(self, y):
        t = self._t(y)
        inside = (t > 0) & (t < 1)
        return np.where(inside, -30.0 * t * t * (1 - t) ** 2 / self.a, 0.0)

    def d2j(self, y):
        t = self._t(y)
        inside = (t > 0) & (t < 1)
        return np.where(inside, -60.0 * t * (1 - t) * (1 - 2 * t) / self.a**2, 0.0)

    @property
    def end(self):
        return self.b + self.a


# -- constants ---------------------------------------------------------------


@dataclass
class ConstantsLedger:
    C1: float
    C2: float
    C3: float
    C4: float
    D1: float
    D2: float
    D3: float
    lam: float
    alpha_tilde: float
    eta: float
    eps: float
    width: float
    delta: float
    E: float
    cutoff: CutoffSpec = None
    meta: dict = field(default_factory=dict)

    @property
    def numerator(self):
        return self.eta - self.lam * self.width - self.eps

    @property
    def positive(self):
        return self.numerator > 0

    def as_dict(self):
        out = {k: getattr(self, k) for k in ("C1", "C2", "C3", "C4", "D1", "D2", "D3", "lam",
                                              "alpha_tilde", "eta", "eps", "width", "delta", "E")}
        out["numerator"] = self.numerator
        if self.cutoff is not None:
            out["cutoff_b"] = self.cutoff.b
            out["cutoff_a"] = self.cutoff.a
        return out


def _refined_sup(f, y, vals):
    """Grid maximum polished by a bounded scalar search around the best sample."""
    k = int(np.argmax(vals))
    best = float(vals[k])
    lo = y[max(k - 1, 0)]
    hi = y[min(k + 1, len(y) - 1)]
    if hi > lo:
        res = minimize_scalar(lambda t: -float(f(t)), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12 * max(1.0, abs(hi))})
        best = max(best, -float(res.fun))
    return best


def _sup(f, lo, hi, n=N_SAMPLES):
    y = np.linspace(lo, hi, n)
    return _refined_sup(f, y, f(y))


def cutoff_excess(pot, cutoff: CutoffSpec, eps: float, delta: float = 0.0, y_lo=None):
    """sup j (V0 + delta) - eps; the cutoff is admissible when this is <= 0."""
    y_lo = cutoff.b - 1.0 if y_lo is None else y_lo
    f = lambda y: cutoff.j(y) * (pot(y) + delta)
    return _sup(f, y_lo, cutoff.end) - eps


def constants_ledger(pot, cutoff: CutoffSpec, window: SpectralWindow, E: float | None = None,
                     eps: float | None = None, y_max: float | None = None,
                     n_samples: int = N_SAMPLES) -> ConstantsLedger:
    """C1..C4, D1..D3, lambda and alpha~ for wall ``pot`` and cutoff ``cutoff``.

    Suprema run over supp(1 - j) = (b, y_max]; the j', j'' terms vanish
    beyond b + a.  ``y_max`` defaults to b + 4a.
    """
    E = window.E if E is None else E
    eta = window.eta
    delta = window.delta
    eps = 0.5 * (delta + eta) if eps is None else eps
    if not eta > eps > delta:
        raise InvalidCutoff(f"need eta > eps > delta, got {eta!r}, {eps!r}, {delta!r}")
    if cutoff_excess(pot, cutoff, eps, delta) > 1e-12 * max(1.0, eps):
        raise InvalidCutoff("sup j V exceeds eps")
    b, end = cutoff.b, cutoff.end
    y_max = b + 4.0 * cutoff.a if y_max is None else y_max
    y_all = np.linspace(b, y_max, n_samples)
    slope = pot.derivative(y_all)
    if np.any(slope <= 0) or not np.all(np.isfinite(slope)):
        raise DegenerateWall("V0' vanishes on the support of 1 - j")
    C1 = _refined_sup(lambda y: 1.0 / pot.derivative(y), y_all, 1.0 / slope)
    y_c = np.linspace(b, end, n_samples)
    s_c = pot.derivative(y_c)
    s_c = np.where(s_c > 0, s_c, np.inf)
    C2 = _refined_sup(lambda y: cutoff.d2j(y) ** 2 / pot.derivative(y), y_c, cutoff.d2j(y_c) ** 2 / s_c)
    C3 = _refined_sup(lambda y: cutoff.dj(y) ** 2 / pot.derivative(y), y_c, cutoff.dj(y_c) ** 2 / s_c)
    C4 = _refined_sup(lambda y: np.abs(cutoff.dj(y)), y_c, np.abs(cutoff.dj(y_c)))
    return _assemble(C1, C2, C3, C4, eta, eps, window.width, delta, E, cutoff)


def _assemble(C1, C2, C3, C4, eta, eps, width, delta, E, cutoff=None):
    D1 = math.sqrt(C2) + 2.0 * math.sqrt((E + delta) * C3 + C2)
    D2 = 2.0 * C3**0.25 * math.sqrt(C4)
    D3 = math.sqrt(C1)
    den = D1 + eta * D3
    lam = 1.0 + D2 * D2 / (4.0 * den)
    num = eta - lam * width - eps
    alpha = (num / (2.0 * den)) ** 2 if num > 0 else 0.0
    return ConstantsLedger(C1, C2, C3, C4, D1, D2, D3, lam, alpha, eta, eps, width, delta, E, cutoff)


def max_cutoff_width(pot, b, eps, delta=0.0, upper=None):
    """Largest a with sup j (V0 + delta) <= eps for a cutoff starting at b."""
    if cutoff_excess(pot, CutoffSpec(b, 1e-9), eps, delta) > 0:
        return 0.0
    hi = upper or 1.0
    while cutoff_excess(pot, CutoffSpec(b, hi), eps, delta) <= 0:
        hi *= 2.0
        if hi > 1e6:
            return hi
    lo = 0.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if cutoff_excess(pot, CutoffSpec(b, mid), eps, delta) <= 0:
            lo = mid
        else:
            hi = mid
    return lo


def optimize_cutoff(pot, window: SpectralWindow, eps=None, n_grid=24) -> ConstantsLedger:
    """Cutoff maximizing alpha~ among admissible (b, a), width saturating the eps bound."""
    eta, delta = window.eta, window.delta
    eps = 0.5 * (delta + eta) if eps is None else eps
    foot = pot.foot
    scale = pot.a

    def ledger_for(s):
        b = foot + s * scale
        a = max_cutoff_width(pot, b, eps, delta, upper=scale)
        if a <= 0:
            return None
        return constants_ledger(pot, CutoffSpec(b, a), window, eps=eps)

    def score(log_s):
        led = ledger_for(math.exp(log_s))
        if led is None:
            return math.inf
        # among ledgers without a bound, prefer the least negative numerator
        return -led.alpha_tilde - 1e-300 * led.numerator

    grid = np.linspace(math.log(1e-3), math.log(4.0), n_grid)
    vals = [score(g) for g in grid]
    k = int(np.argmin(vals))
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, len(grid) - 1)]
    res = minimize_scalar(score, bounds=(lo, hi), method="bounded", options={"xatol": 1e-6})
    s = math.exp(res.x) if res.fun <= vals[k] else math.exp(grid[k])
    led = ledger_for(s)
    if led is None:
        raise InvalidCutoff("no admissible cutoff")
    return led


def scaled_cutoff(ref: CutoffSpec, ref_pot, pot):
    """Cutoff transported from wall ``ref_pot`` to ``pot`` by the steepness ratio."""
    k = pot.a / ref_pot.a
    return CutoffSpec(pot.foot + (ref.b - ref_pot.foot) * k, ref.a * k)


def disorder_threshold(ledger: ConstantsLedger, E: float | None = None, width: float | None = None,
                       xtol: float = 1e-10) -> float:
    """Largest delta with 2 delta (E + |Delta| + delta)^(1/2) < alpha~."""
    alpha = ledger.alpha_tilde
    if not alpha > 0:
        raise NoPositiveThreshold("alpha~ is not positive")
    E = ledger.E if E is None else E
    width = ledger.width if width is None else width
    g = lambda d: 2.0 * d * math.sqrt(E + width + d) - alpha
    hi = alpha
    while g(hi) <= 0:
        hi *= 2.0
    return float(bisect(g, 0.0, hi, xtol=min(xtol, 1e-10 * alpha), rtol=4 * np.finfo(float).eps,
                        maxiter=400))


def consistent_ledger(pot, E, halfwidth, units, delta_fraction=0.5, E0=None):
    """Ledger and threshold at delta = delta_fraction * threshold, self-consistently.

    The threshold depends on delta through eps = (delta + eta)/2; a fixed
    point is reached in a few sweeps because delta << eta.
    """
    delta = 0.0
    for _ in range(8):
        win = SpectralWindow(E, halfwidth, units, delta=delta, E0=E0)
        led = optimize_cutoff(pot, win)
        th = disorder_threshold(led)
        new = delta_fraction * th
        if abs(new - delta) <= 1e-12 * max(th, 1e-300):
            break
        delta = new
    return win, led, th


def scaling_study(make_pot, a_values, E, halfwidth, units, ref_index=0):
    """Ledger constants against wall steepness a with a similarity-scaled cutoff."""
    win = SpectralWindow(E, halfwidth, units)
    ref_pot = make_pot(a_values[ref_index])
    ref = optimize_cutoff(ref_pot, win).cutoff
    rows = []
    for a in a_values:
        pot = make_pot(a)
        led = constants_ledger(pot, scaled_cutoff(ref, ref_pot, pot), win)
        rows.append({"a": a, **led.as_dict()})
    la = np.log(np.asarray(a_values, dtype=float))
    slopes = {k: float(np.polyfit(la, np.log([r[k] for r in rows]), 1)[0])
              for k in ("C1", "C2", "C3", "C4", "alpha_tilde")}
    trend = [(r["eta"] - r["eps"]) ** 2 * r["eps"] * r["a"] ** 3 for r in rows]
    return {"rows": rows, "slopes": slopes, "prefactor_trend": trend}


# -- empirical side ----------------------------------------------------------


@dataclass
class MourreReport:
    window: SpectralWindow
    alpha_emp: float
    alpha_tilde: float
    delta_threshold: float
    passed: bool
    energies: list
    rayleigh: list
    edge_masses: list
    seeds: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def as_dict(self):
        w = self.window
        return {"window": {"E": w.E, "halfwidth": w.halfwidth}, "eta": w.eta,
                "eta_branch": w.eta_branch, "delta": w.delta,
                "alpha_emp": self.alpha_emp, "alpha_tilde": self.alpha_tilde,
                "delta_threshold": self.delta_threshold, "seeds": list(self.seeds),
                "pass": bool(self.passed), "states": len(self.energies),
                "energies": list(self.energies), "rayleigh": list(self.rayleigh),
                "warnings": list(self.warnings)}


def _row_coordinate(grid):
    return np.repeat(grid.y, grid.nx)


def projected_force(pairs, dV):
    """Smallest eigenvalue of dV/dy compressed to span(pairs), plus per-state quotients."""
    V = np.column_stack([p.vector for p in pairs])
    G = V.conj().T @ V
    F = V.conj().T @ (dV[:, None] * V)
    # orthonormalize against the Gram matrix (Lanczos vectors are already close)
    w, U = np.linalg.eigh(G)
    S = U / np.sqrt(w)
    Fp = S.conj().T @ F @ S
    ev = np.linalg.eigvalsh(0.5 * (Fp + Fp.conj().T))
    quot = (np.diag(F).real / np.diag(G).real).tolist()
    return float(ev[0]), quot


def commutator_positivity(op, window: SpectralWindow, alpha_tilde: float = 0.0,
                          delta_threshold: float = float("nan"), edge_width: float = 4.0,
                          edge_threshold: float = 0.5, tol: float = 1e-9, solver: dict | None = None,
                          pairs=None) -> MourreReport:
    """alpha_emp over the window states that live at the wall.

    States of the strip's far boundary (the other edge of a finite sample)
    are excluded by the edge-mass rule: more than ``edge_threshold`` of the
    weight within ``edge_width`` magnetic lengths of a wall foot.
    """
    geom, units = op.parts["geometry"], op.parts["units"]
    if pairs is None:
        pairs = eig_window(op, window.lo, window.hi, **(solver or {}))
    Y = _row_coordinate(op.grid)
    feet = geom.wall_feet()
    masses = [edge_mass(Y, p.vector, feet, edge_width * units.magnetic_length) for p in pairs]
    keep = [p for p, m in zip(pairs, masses) if m > edge_threshold]
    warnings = []
    passed = True
    if not alpha_tilde > 0:
        passed = False
        warnings.append("rigorous bound alpha~ is not positive")
    if window.delta > delta_threshold:
        warnings.append(f"delta {window.delta:.6g} exceeds threshold {delta_threshold:.6g}")
        passed = False
    if not keep:
        # an empty spectral projection satisfies the estimate trivially
        warnings.append("no wall states in window")
        return MourreReport(window, math.inf, alpha_tilde, delta_threshold, passed,
                            [], [], masses, warnings=warnings,
                            meta={"all_energies": [p.energy for p in pairs]})
    alpha_emp, quot = projected_force(keep, op.parts["dVy"])
    passed = passed and alpha_emp > 0 and alpha_emp >= alpha_tilde - tol
    if alpha_emp <= 0:
        warnings.append("wall force is not positive on the window")
    return MourreReport(window, alpha_emp, alpha_tilde, delta_threshold, passed,
                        [p.energy for p in keep], quot, masses, warnings=warnings,
                        meta={"all_energies": [p.energy for p in pairs],
                              "residuals": [p.residual for p in keep],
                              "virial": [virial_terms(op, p) for p in keep]})


def bounded_wall_positivity(op, window: SpectralWindow, alpha_tilde=0.0, delta_threshold=math.nan,
                            **kw) -> MourreReport:
    """commutator_positivity for a wall that levels off at E0 (window.E0 must be set)."""
    if window.E0 is None:
        raise ValueError("bounded-wall windows need E0")
    if window.E >= window.E0:
        raise WindowAboveWall(f"E = {window.E!r} is not below the wall height {window.E0!r}")
    rep = commutator_positivity(op, window, alpha_tilde, delta_threshold, **kw)
    rep.meta["eta_branch"] = window.eta_branch
    return rep


def bounded_window(E, halfwidth, units, E0, delta=0.0):
    if E >= E0:
        raise WindowAboveWall(f"E = {E!r} is not below the wall height {E0!r}")
    return SpectralWindow(E, halfwidth, units, delta=delta, E0=E0)


# -- Dirichlet boundary functional ------------------------------------------


@dataclass
class BoundaryTrace:
    gamma: float
    norm2: float

    @property
    def ratio(self):
        return self.gamma / self.norm2


def boundary_gamma(op, pair) -> BoundaryTrace:
    """Gamma = int |d psi/dy (x, 0)|^2 dx with the one-sided second-order stencil."""
    geom = op.parts["geometry"]
    if not isinstance(geom, HalfPlaneDirichlet):
        raise WrongGeometry("boundary trace needs the Dirichlet half plane")
    g = op.grid
    psi = np.asarray(pair.vector).reshape(g.ny, g.nx) / math.sqrt(g.hx * g.hy)
    d = (psi[-2] - 4.0 * psi[-1]) / (2.0 * g.hy)
    gamma = float(np.sum(np.abs(d) ** 2) * g.hx)
    norm2 = float(np.sum(np.abs(psi) ** 2) * g.hx * g.hy)
    return BoundaryTrace(gamma, norm2)


def boundary_gamma_channel(ch, pair) -> BoundaryTrace:
    """The same trace for a Dirichlet channel (unit circumference)."""
    if ch.kind != "dirichlet":
        raise WrongGeometry("boundary trace needs the Dirichlet half plane")
    u = np.asarray(pair.vector) / math.sqrt(ch.h)
    d = (u[-2] - 4.0 * u[-1]) / (2.0 * ch.h)
    return BoundaryTrace(float(abs(d) ** 2), float(np.sum(np.abs(u) ** 2) * ch.h))


def kato_bounds_check(op, pair, window: SpectralWindow, delta2: float | None = None) -> dict:
    """||p_y psi||, ||(p_x + By) psi||, ||p_y^2 psi|| over ||psi|| and the Kato-type bound on the last."""
    v = np.asarray(pair.vector)
    n2 = float(np.vdot(v, v).real)
    Tx, Ty = op.parts["Tx"], op.parts["Ty"]
    py2 = float(np.vdot(v, Ty @ v).real) / n2
    px2 = float(np.vdot(v, Tx @ v).real) / n2
    pyy = float(np.linalg.norm(Ty @ v)) / math.sqrt(n2)
    B = op.parts["units"].B
    d2 = window.delta2 if delta2 is None else delta2
    bound = math.sqrt((window.E + window.width + window.delta) ** 2 + 2 * B * B + 2 * d2)
    return {"p_y": math.sqrt(max(py2, 0.0)), "p_x_By": math.sqrt(max(px2, 0.0)), "p_yy": pyy,
            "bound": bound, "holds": pyy <= bound, "energy": pair.energy}


def with_delta(window: SpectralWindow, delta, delta1=0.0, delta2=0.0):
    return replace(window, delta=delta, delta1=delta1, delta2=delta2)
