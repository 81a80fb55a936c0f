"""Sufficient time-step conditions and discrete energy audits.

Three fully discrete schemes for the periodic 2D velocity equations are
covered, all with ``A = -Laplacian_h`` (5-point), the orthogonal
divergence-free projection ``P`` and the skew-symmetric convective form
``B(u, v) = (1/2)[(u . grad) v + div(u (x) v)]`` built from central
differences, which makes ``(B(u, v), v) = 0`` hold exactly:

    nse_explicit      u' = u - k (nu A u + P B(u, u) - P f)
    nsv               (I + a^2 A)(u' - u) = -k (nu A u + P B(u, u) - P f)
    nse_semiimplicit  (I + k nu A) u' = u - k P B(u, u) + k P f

The checkers evaluate the hypotheses of the matching energy estimates and
the audits run the schemes and compare the observed norms against the
bounds those estimates conclude.

Norms on a grid with spacings ``h = (h1, h2)``::

    |u|^2       = h1 h2 sum |u|^2
    ||u||_h^2   = h1 h2 sum_j |D_j^+ u|^2  = (A u, u)
    |A u|^2     = h1 h2 sum |Laplacian_h u|^2
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .grid import Grid2D, Boundary, laplacian_array
from .metrics import round_sig

#: relative slack for deciding ``lhs <= rhs`` at exact equality
EQUALITY_RTOL = 1e-12
#: any squared norm above this counts as blow-up in an audit
BLOWUP_NORM = 1e12


class Scheme(str, enum.Enum):
    NSE_EXPLICIT = "nse_explicit"
    NSV = "nsv"
    NSE_SEMIIMPLICIT = "nse_semiimplicit"


@dataclass(frozen=True)
class LemmaInputs:
    """Data entering the stability conditions.

    ``u0_norms`` is ``(|u0|, ||u0||)`` (not squared); ``f_energy`` is the
    time integral of ``|f|^2`` over ``[0, T]``.  ``d2`` defaults to ``d0``.
    ``d_prime`` and ``d_double_prime`` only matter for the semi-implicit
    scheme and are derived from the data when left as None.
    """

    k: float
    h: tuple[float, float] = (1.0, 1.0)
    nu: float = 1.0
    alpha: float = 0.0
    delta: float = 0.5
    T: float = 1.0
    u0_norms: tuple[float, float] = (0.0, 0.0)
    f_energy: float = 0.0
    d0: float = 1.0
    d1: float = 1.0
    d2: Optional[float] = None
    d_prime: Optional[float] = None
    d_double_prime: Optional[float] = None

    def __post_init__(self):
        if not (0.0 < self.delta < 1.0):
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not (self.k > 0 and self.T > 0):
            raise ValueError("k and T must be positive")
        if self.k > self.T * (1 + EQUALITY_RTOL):
            raise ValueError(f"k = {self.k} exceeds the horizon T = {self.T}")
        if not (self.h[0] > 0 and self.h[1] > 0):
            raise ValueError("grid spacings must be positive")
        if not self.nu > 0:
            raise ValueError("viscosity must be positive")
        if self.alpha < 0 or self.f_energy < 0 or min(self.u0_norms) < 0:
            raise ValueError("alpha, forcing energy and norms must be non-negative")
        for name in ("d0", "d1", "d2", "d_prime", "d_double_prime"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def S2(self) -> float:
        # S(h)^2 directly, avoiding the round trip through the square root
        return 4.0 * (1.0 / self.h[0] ** 2 + 1.0 / self.h[1] ** 2)

    @property
    def S1(self) -> float:
        return self.d1 * self.S2

    @property
    def d2_value(self) -> float:
        return self.d0 if self.d2 is None else self.d2

    def with_k(self, k: float) -> "LemmaInputs":
        return LemmaInputs(**{**self.__dict__, "k": k, "T": max(self.T, k)})


@dataclass
class Condition:
    name: str
    lhs: float
    rhs: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs or math.isclose(self.lhs, self.rhs, rel_tol=EQUALITY_RTOL)

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    def to_dict(self) -> dict:
        return {"name": self.name, "lhs": round_sig(self.lhs), "rhs": round_sig(self.rhs),
                "margin": round_sig(self.margin), "holds": self.holds}


@dataclass
class ConditionReport:
    scheme: Scheme
    conditions: list[Condition]
    constants: dict = field(default_factory=dict)

    @property
    def verdict(self) -> bool:
        return all(c.holds for c in self.conditions)

    def __getitem__(self, name: str) -> Condition:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"scheme": Scheme(self.scheme).value, "verdict": self.verdict,
                "conditions": [c.to_dict() for c in self.conditions],
                "constants": {k: round_sig(v) for k, v in self.constants.items()}}


# ---------------------------------------------------------------------------
# constants and checkers
# ---------------------------------------------------------------------------

def d5_constant(p: LemmaInputs) -> float:
    """Energy bound of the explicit NSE scheme."""
    v0 = p.u0_norms[1] ** 2
    return v0 + p.d0**2 * ((p.d0**2 + 1.0 - p.delta) / (p.nu * p.d0**2)) * p.f_energy


def d6_constant(p: LemmaInputs) -> float:
    """Energy bound of the NSV scheme."""
    l2, h1 = p.u0_norms
    return l2**2 + p.alpha**2 * h1**2 + (p.d0**2 / p.nu + 4.0 * p.T) * p.f_energy


def d10_constant(p: LemmaInputs) -> float:
    return p.u0_norms[1] ** 2 + (p.d0**2 / p.nu) * p.f_energy


def lambda_n_bound(p: LemmaInputs) -> float:
    """Upper bound on the semi-implicit energy functional ``lambda_N``."""
    l2, h1 = p.u0_norms
    return d10_constant(p) + 2.0 * p.k**2 * p.S1**2 * p.S2 * l2**2 * h1**2


def _shared_condition(p: LemmaInputs) -> Condition:
    return Condition("i", p.k * p.S2, (1.0 - p.delta) / (4.0 * p.nu))


def check_nse_explicit(p: LemmaInputs) -> ConditionReport:
    d5 = d5_constant(p)
    rhs3 = math.inf if d5 == 0 else p.nu * p.delta / (8.0 * p.d0**2 * d5)
    conds = [
        _shared_condition(p),
        Condition("ii", p.k * p.S2, 1.0),
        Condition("iii", p.k * p.S1**2 * p.S2, rhs3),
    ]
    return ConditionReport(Scheme.NSE_EXPLICIT, conds, {"d5": d5, "S2": p.S2, "S1": p.S1})


def check_nsv(p: LemmaInputs) -> ConditionReport:
    d6 = d6_constant(p)
    rhs2 = math.inf if d6 == 0 else p.nu * p.delta / (8.0 * d6)
    conds = [_shared_condition(p), Condition("ii", p.k * p.S1**2, rhs2)]
    return ConditionReport(Scheme.NSV, conds, {"d6": d6, "S2": p.S2, "S1": p.S1})


def default_semiimplicit_constants(p: LemmaInputs, safety: float = 10.0) -> tuple[float, float]:
    """``(d', d'')`` such that conditions (i) and (ii) imply the gate.

    With ``k S^4 <= d'`` and ``k S1^2 S^2 <= d''`` the gate's left side is
    at most ``2 d0 d2 d'' (d10 + 2 (d'/S^4) d'' |u0|^2 ||u0||^2)``.  ``d'``
    defaults to 1 and ``d''`` is the positive root that makes this bound
    equal to ``(nu - delta) / safety``.
    """
    d_prime = 1.0 if p.d_prime is None else p.d_prime
    if p.d_double_prime is not None:
        return d_prime, p.d_double_prime
    target = (p.nu - p.delta) / safety
    if target <= 0:
        return d_prime, 0.0
    c = 2.0 * p.d0 * p.d2_value
    a = c * 2.0 * (d_prime / p.S2**2) * p.u0_norms[0] ** 2 * p.u0_norms[1] ** 2
    b = c * d10_constant(p)
    if a == 0.0:
        return d_prime, (math.inf if b == 0.0 else target / b)
    return d_prime, (-b + math.sqrt(b * b + 4.0 * a * target)) / (2.0 * a)


def check_nse_semiimplicit(p: LemmaInputs) -> ConditionReport:
    d_prime, d_dprime = default_semiimplicit_constants(p)
    lam = lambda_n_bound(p)
    conds = [
        Condition("i", p.k * p.S2**2, d_prime),
        Condition("ii", p.k * p.S1**2 * p.S2, d_dprime),
        Condition("gate", 2.0 * p.k * p.d0 * p.d2_value * p.S1**2 * p.S2 * lam, p.nu - p.delta),
    ]
    consts = {"d10": d10_constant(p), "lambda_N": lam, "d_prime": d_prime, "d_double_prime": d_dprime,
              "S2": p.S2, "S1": p.S1}
    return ConditionReport(Scheme.NSE_SEMIIMPLICIT, conds, consts)


CHECKERS = {
    Scheme.NSE_EXPLICIT: check_nse_explicit,
    Scheme.NSV: check_nsv,
    Scheme.NSE_SEMIIMPLICIT: check_nse_semiimplicit,
}


def check(scheme: Scheme | str, p: LemmaInputs) -> ConditionReport:
    return CHECKERS[Scheme(scheme)](p)


def max_k_nse_explicit(p: LemmaInputs) -> float:
    """Largest k passing :func:`check_nse_explicit` (the other data fixed)."""
    d5 = d5_constant(p)
    cap3 = math.inf if d5 == 0 else p.nu * p.delta / (8.0 * p.d0**2 * d5 * p.S1**2 * p.S2)
    return min((1.0 - p.delta) / (4.0 * p.nu * p.S2), 1.0 / p.S2, cap3)


def max_k_nsv(p: LemmaInputs) -> float:
    d6 = d6_constant(p)
    cap2 = math.inf if d6 == 0 else p.nu * p.delta / (8.0 * d6 * p.S1**2)
    return min((1.0 - p.delta) / (4.0 * p.nu * p.S2), cap2)


def max_k_nse_semiimplicit(p: LemmaInputs) -> float:
    """Largest k passing :func:`check_nse_semiimplicit` (``d', d''`` held fixed)."""
    d_prime, d_dprime = default_semiimplicit_constants(p)
    if p.nu - p.delta <= 0:
        return 0.0
    cap = min(d_prime / p.S2**2, d_dprime / (p.S1**2 * p.S2))

    def gate(k):
        q = p.with_k(k)
        return 2.0 * k * q.d0 * q.d2_value * q.S1**2 * q.S2 * lambda_n_bound(q) - (p.nu - p.delta)

    if not math.isfinite(cap) or gate(cap) > 0:
        hi = cap if math.isfinite(cap) else 1.0
        while gate(hi) <= 0:
            hi *= 2.0
        cap = brentq(gate, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps)
    return cap


MAX_K = {
    Scheme.NSE_EXPLICIT: max_k_nse_explicit,
    Scheme.NSV: max_k_nsv,
    Scheme.NSE_SEMIIMPLICIT: max_k_nse_semiimplicit,
}


# ---------------------------------------------------------------------------
# periodic velocity operators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PeriodicBox:
    """``n x n`` periodic grid on ``[0, 2 pi L]^2``."""

    n: int = 16
    L: float = 1.0

    @property
    def h(self) -> float:
        return 2.0 * math.pi * self.L / self.n

    @property
    def grid(self) -> Grid2D:
        return Grid2D(self.n, self.n, self.h, self.h, Boundary.PERIODIC)

    def coords(self):
        x = np.arange(self.n) * self.h
        return np.meshgrid(x, x, indexing="ij")

    def _theta(self):
        t = 2.0 * np.pi * np.fft.fftfreq(self.n)
        return np.meshgrid(t, t, indexing="ij")

    def a_symbol(self) -> np.ndarray:
        t1, t2 = self._theta()
        return ((2.0 - 2.0 * np.cos(t1)) + (2.0 - 2.0 * np.cos(t2))) / self.h**2

    def central_symbol(self):
        t1, t2 = self._theta()
        return np.sin(t1) / self.h, np.sin(t2) / self.h

    # norms -----------------------------------------------------------------

    def l2_sq(self, u) -> float:
        return float(self.h**2 * sum(np.sum(c * c) for c in u))

    def h1_sq(self, u) -> float:
        total = 0.0
        for c in u:
            for ax in (0, 1):
                d = (np.roll(c, -1, axis=ax) - c) / self.h
                total += float(np.sum(d * d))
        return self.h**2 * total

    def apply_a(self, u):
        return tuple(-laplacian_array(c, self.h, self.h, periodic=True) for c in u)

    def a_sq(self, u) -> float:
        return self.l2_sq(self.apply_a(u))

    # operators -------------------------------------------------------------

    def project(self, u):
        """Orthogonal projection onto mean-free fields with zero central divergence."""
        u1, u2 = np.fft.fft2(u[0]), np.fft.fft2(u[1])
        x1, x2 = self.central_symbol()
        mag = x1 * x1 + x2 * x2
        with np.errstate(invalid="ignore", divide="ignore"):
            coef = np.where(mag > 0, (x1 * u1 + x2 * u2) / np.where(mag > 0, mag, 1.0), 0.0)
        v1, v2 = u1 - x1 * coef, u2 - x2 * coef
        v1[0, 0] = v2[0, 0] = 0.0
        return np.real(np.fft.ifft2(v1)), np.real(np.fft.ifft2(v2))

    def solve_multiplier(self, u, shift: float, scale: float):
        """Apply ``(shift I + scale A)^{-1}`` componentwise."""
        sym = shift + scale * self.a_symbol()
        return tuple(np.real(np.fft.ifft2(np.fft.fft2(c) / sym)) for c in u)

    def convect(self, u, v):
        """Skew form ``(1/2)[(u . grad) v + div(u (x) v)]`` with central differences."""
        h = self.h

        def d(f, ax):
            return (np.roll(f, -1, axis=ax) - np.roll(f, 1, axis=ax)) / (2.0 * h)

        out = []
        for vc in v:
            adv = u[0] * d(vc, 0) + u[1] * d(vc, 1)
            div = d(u[0] * vc, 0) + d(u[1] * vc, 1)
            out.append(0.5 * (adv + div))
        return tuple(out)

    def divergence(self, u) -> np.ndarray:
        h = self.h
        return ((np.roll(u[0], -1, 0) - np.roll(u[0], 1, 0)) + (np.roll(u[1], -1, 1) - np.roll(u[1], 1, 1))) / (2 * h)


def taylor_green(box: PeriodicBox, amplitude: float = 1.0):
    """Divergence-free vortex array ``(A sin x cos y, -A cos x sin y)``."""
    x, y = box.coords()
    xs, ys = x / box.L, y / box.L
    return box.project((amplitude * np.sin(xs) * np.cos(ys), -amplitude * np.cos(xs) * np.sin(ys)))


def random_solenoidal(box: PeriodicBox, rng: np.random.Generator, amplitude: float = 1.0, modes: int = 4):
    """Random smooth divergence-free field with ``max |u| = amplitude``."""
    x, y = box.coords()
    u1 = np.zeros_like(x)
    u2 = np.zeros_like(x)
    for m1 in range(-modes, modes + 1):
        for m2 in range(-modes, modes + 1):
            if m1 == 0 and m2 == 0:
                continue
            a, b, c, e = rng.normal(size=4) / (m1 * m1 + m2 * m2)
            ph = (m1 * x + m2 * y) / box.L
            u1 += a * np.cos(ph) + b * np.sin(ph)
            u2 += c * np.cos(ph) + e * np.sin(ph)
    u = box.project((u1, u2))
    peak = max(np.abs(u[0]).max(), np.abs(u[1]).max())
    return tuple(amplitude * c / peak for c in u) if peak > 0 else u


def scheme_step(scheme: Scheme, box: PeriodicBox, u, k: float, nu: float, alpha: float = 0.0, f=None):
    """One step of the chosen scheme (see the module docstring)."""
    pb = box.project(box.convect(u, u))
    pf = box.project(f) if f is not None else (0.0, 0.0)
    if scheme is Scheme.NSE_EXPLICIT:
        au = box.apply_a(u)
        return tuple(c - k * (nu * a + b - g) for c, a, b, g in zip(u, au, pb, pf))
    if scheme is Scheme.NSV:
        au = box.apply_a(u)
        r = tuple(-k * (nu * a + b - g) for a, b, g in zip(au, pb, pf))
        du = box.solve_multiplier(r, 1.0, alpha**2)
        return tuple(c + d for c, d in zip(u, du))
    rhs = tuple(c - k * b + k * g for c, b, g in zip(u, pb, pf))
    return box.solve_multiplier(rhs, 1.0, k * nu)


# ---------------------------------------------------------------------------
# energy audits
# ---------------------------------------------------------------------------

@dataclass
class BoundCheck:
    name: str
    description: str
    holds: bool = True
    worst_margin: float = math.inf
    worst_step: int = 0

    def update(self, step: int, value: float, bound: float) -> None:
        ok = value <= bound or math.isclose(value, bound, rel_tol=EQUALITY_RTOL)
        margin = bound - value
        if margin < self.worst_margin:
            self.worst_margin, self.worst_step = margin, step
        self.holds = self.holds and ok

    def to_dict(self) -> dict:
        return {"name": self.name, "description": self.description, "holds": self.holds,
                "worst_margin": round_sig(self.worst_margin), "worst_step": self.worst_step}


@dataclass
class EnergyTrace:
    """Per-step norms (index m = 0..steps) and the bound checks."""

    scheme: Scheme
    report: ConditionReport
    k: float
    l2_sq: list = field(default_factory=list)
    h1_sq: list = field(default_factory=list)
    a_sq: list = field(default_factory=list)
    inc_l2_sq: list = field(default_factory=list)
    inc_h1_sq: list = field(default_factory=list)
    bounds: list = field(default_factory=list)
    blew_up: bool = False

    @property
    def steps(self) -> int:
        return len(self.inc_l2_sq)

    @property
    def certified(self) -> bool:
        return self.report.verdict

    @property
    def bounds_hold(self) -> bool:
        return (not self.blew_up) and all(b.holds for b in self.bounds)

    @property
    def outcome(self) -> str:
        if self.certified:
            return "certified, bounds hold" if self.bounds_hold else "certified, BOUND VIOLATED"
        if self.blew_up:
            return "uncertified, observed blow-up"
        return "uncertified, bounds hold" if self.bounds_hold else "uncertified, bound violation observed"

    @property
    def passed(self) -> bool:
        """Audit verdict: only certified runs can fail."""
        return self.bounds_hold or not self.certified

    def to_dict(self) -> dict:
        return {"scheme": Scheme(self.scheme).value, "k": round_sig(self.k), "steps": self.steps,
                "certified": self.certified, "blew_up": self.blew_up, "outcome": self.outcome,
                "passed": self.passed, "bounds": [b.to_dict() for b in self.bounds],
                "conditions": self.report.to_dict()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def rows(self):
        """Per-step records ``(m, |u|^2, ||u||^2, |Au|^2, |du|^2, ||du||^2)``."""
        for m in range(len(self.l2_sq)):
            inc = (self.inc_l2_sq[m - 1], self.inc_h1_sq[m - 1]) if m > 0 else ("", "")
            yield (m, round_sig(self.l2_sq[m]), round_sig(self.h1_sq[m]), round_sig(self.a_sq[m]),
                   round_sig(inc[0]) if m else "", round_sig(inc[1]) if m else "")


TRACE_COLUMNS = ["step", "l2_sq", "h1_sq", "a_sq", "inc_l2_sq", "inc_h1_sq"]


def audit_inputs(box: PeriodicBox, u0, *, k: float, steps: int, nu: float, alpha: float = 0.0,
                 delta: float = 0.5, f=None, d0: Optional[float] = None, d1: float = 1.0,
                 d2: Optional[float] = None) -> LemmaInputs:
    """Condition inputs matching an audit run (norms measured on the projected ``u0``)."""
    u0 = box.project(u0)
    f_sq = 0.0 if f is None else box.l2_sq(f)
    T = steps * k
    return LemmaInputs(k=k, h=(box.h, box.h), nu=nu, alpha=alpha, delta=delta, T=T,
                       u0_norms=(math.sqrt(box.l2_sq(u0)), math.sqrt(box.h1_sq(u0))),
                       f_energy=T * f_sq, d0=box.L if d0 is None else d0, d1=d1, d2=d2)


def run_energy_audit(scheme: Scheme | str, inputs: LemmaInputs, steps: int, u0, box: PeriodicBox = PeriodicBox(),
                     f=None) -> EnergyTrace:
    """Run ``steps`` steps from ``P u0`` and check the scheme's energy bounds.

    ``inputs`` supplies nu, alpha, delta, k and the embedding constants; its
    norms and forcing energy should describe ``u0`` and ``f`` (see
    :func:`audit_inputs`).  Blow-up ends the run early and is reported,
    not raised.
    """
    scheme = Scheme(scheme)
    p = inputs
    report = check(scheme, p)
    u = box.project(u0)
    f_sq = 0.0 if f is None else box.l2_sq(f)
    trace = EnergyTrace(scheme, report, p.k)

    def record(v):
        trace.l2_sq.append(box.l2_sq(v))
        trace.h1_sq.append(box.h1_sq(v))
        trace.a_sq.append(box.a_sq(v))

    record(u)
    if scheme is Scheme.NSE_EXPLICIT:
        d5 = d5_constant(p)
        checks = [BoundCheck("bd1", "||u^m||^2 <= d5"),
                  BoundCheck("bd2", "k sum |A u^(m-1)|^2 <= 2 d5 / (nu delta)"),
                  BoundCheck("bd3", "sum ||u^m - u^(m-1)||^2 <= 2 (2-delta)/delta d5 + 4 int|f|^2")]
    elif scheme is Scheme.NSV:
        d6 = d6_constant(p)
        checks = [BoundCheck("bd1", "|u^m|^2 + a^2 ||u^m||^2 <= d6"),
                  BoundCheck("bd2", "k sum ||u^(m-1)||^2 <= 2 d6 / (nu delta)"),
                  BoundCheck("bd3", "sum (|du|^2 + a^2 ||du||^2) <= (2-delta)/delta d6 + 4 T int|f|^2")]
    else:
        l2_0, h1_0 = p.u0_norms
        base = 2.0 * p.k**2 * p.S1**2 * p.S2 * l2_0**2 * h1_0**2 + h1_0**2
        checks = [BoundCheck("energy", "||u^r||^2 + sum ||du||^2 / 2 + k delta sum |A u^m|^2 <= lambda_r")]
    trace.bounds = checks

    s2 = s3 = 0.0
    for m in range(1, steps + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            new = scheme_step(scheme, box, u, p.k, p.nu, p.alpha, f)
            du = tuple(a - b for a, b in zip(new, u))
            inc_l2, inc_h1 = box.l2_sq(du), box.h1_sq(du)
        if not all(np.all(np.isfinite(c)) for c in new) or not math.isfinite(inc_h1) \
                or max(box.l2_sq(new), inc_h1) > BLOWUP_NORM:
            trace.blew_up = True
            break
        trace.inc_l2_sq.append(inc_l2)
        trace.inc_h1_sq.append(inc_h1)
        prev_h1, prev_a = trace.h1_sq[-1], trace.a_sq[-1]
        record(new)
        l2, h1, a = trace.l2_sq[-1], trace.h1_sq[-1], trace.a_sq[-1]
        if scheme is Scheme.NSE_EXPLICIT:
            s2 += p.k * prev_a
            s3 += inc_h1
            checks[0].update(m, h1, d5)
            checks[1].update(m, s2, 2.0 * d5 / (p.nu * p.delta))
            checks[2].update(m, s3, 2.0 * ((2.0 - p.delta) / p.delta) * d5 + 4.0 * p.f_energy)
        elif scheme is Scheme.NSV:
            s2 += p.k * prev_h1
            s3 += inc_l2 + p.alpha**2 * inc_h1
            checks[0].update(m, l2 + p.alpha**2 * h1, d6)
            checks[1].update(m, s2, 2.0 * d6 / (p.nu * p.delta))
            checks[2].update(m, s3, ((2.0 - p.delta) / p.delta) * d6 + 4.0 * p.T * p.f_energy)
        else:
            s2 += 0.5 * inc_h1
            s3 += p.k * p.delta * a
            lam_r = base + (p.k * p.d0**2 / p.nu) * m * f_sq
            checks[0].update(m, h1 + s2 + s3, lam_r)
        u = new
    return trace
