"""Blade element momentum (BEM) rotor model.

Couples annular momentum balance with sectional airfoil forces to predict
power coefficient, thrust coefficient and spanwise angle of attack for a
horizontal-axis wind turbine at a given operating point.  The solver is
deliberately lightweight: it has to run hundreds of thousands of times when
building tabular control policies, so everything is vectorised over both
blade sections and batches of operating points.

Yaw misalignment is modelled by reducing the effective axial free stream to
``U * cos(yaw)``; the axial sub-problem is solved at the reduced wind and the
coefficients are rescaled (cp by cos^3, ct by cos^2).  Skewed-wake effects
are intentionally out of scope.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

BETZ_LIMIT = 16.0 / 27.0

# Induction iteration constants: damped fixed point with Glauert's empirical
# thrust relation Ct = 4a(1 - 0.25(5 - 3a)a) for high induction.  The
# empirical curve crosses the momentum line 4a(1-a) exactly at a = 1/3, so
# switching there keeps the fixed-point map continuous (switching at the
# often-quoted a = 0.4 leaves a jump that admits limit cycles and, for some
# operating points, no fixed point at all).  Deeply stalled cells contract
# at ~0.96 per sweep, hence the generous iteration cap.
RELAXATION = 0.5
INDUCTION_TOL = 1e-8
MAX_ITERATIONS = 10_000
GLAUERT_A = 1.0 / 3.0


class AeroError(Exception):
    """Base class for rotor-model errors."""


class OutOfPolarRange(AeroError):
    """Angle of attack fell outside the tabulated polar."""


class DegenerateInflow(AeroError):
    """Inflow angle has no usable sine (tip-loss factor undefined)."""


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class AirfoilPolar:
    """Sectional lift/drag coefficient table over angle of attack (degrees)."""

    alpha_deg: np.ndarray
    cl: np.ndarray
    cd: np.ndarray

    def __post_init__(self):
        alpha = np.asarray(self.alpha_deg, dtype=float)
        cl = np.asarray(self.cl, dtype=float)
        cd = np.asarray(self.cd, dtype=float)
        if not (len(alpha) == len(cl) == len(cd)):
            raise ValueError("alpha_deg, cl and cd must have equal length")
        if len(alpha) < 2:
            raise ValueError("polar needs at least two samples")
        if not np.all(np.diff(alpha) > 0):
            raise ValueError("alpha_deg must be strictly increasing")
        if np.any(cd < 0):
            raise ValueError("cd must be non-negative")
        if alpha[0] > -10.0 or alpha[-1] < 15.0:
            raise ValueError("polar must cover at least [-10, 15] degrees")
        object.__setattr__(self, "alpha_deg", alpha)
        object.__setattr__(self, "cl", cl)
        object.__setattr__(self, "cd", cd)

    @property
    def alpha_min(self) -> float:
        return float(self.alpha_deg[0])

    @property
    def alpha_max(self) -> float:
        return float(self.alpha_deg[-1])


@dataclass(frozen=True)
class BladeSection:
    """One radial station of the blade: geometry plus a polar reference."""

    r: float          # radial station (m)
    chord: float      # chord length (m)
    twist: float      # geometric twist (deg), positive toward feather
    polar_id: str


@dataclass(frozen=True)
class RotorConfig:
    """Rotor geometry, air density and rated power."""

    radius: float
    hub_radius: float
    blade_count: int
    sections: tuple[BladeSection, ...]
    polars: dict[str, AirfoilPolar]
    air_density: float = 1.225
    rated_power: float = 2.3e6

    def __post_init__(self):
        object.__setattr__(self, "sections", tuple(self.sections))
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.blade_count < 1:
            raise ValueError("blade_count must be >= 1")
        if not self.sections:
            raise ValueError("at least one blade section required")
        if self.hub_radius >= self.sections[0].r:
            raise ValueError("hub_radius must lie inboard of the first section")
        radii = [s.r for s in self.sections]
        if any(b <= a for a, b in zip(radii, radii[1:])):
            raise ValueError("sections must be ordered by increasing r")
        for s in self.sections:
            if not (0 < s.r <= self.radius):
                raise ValueError(f"section radius {s.r} outside (0, R]")
            if s.chord <= 0:
                raise ValueError("chord must be positive")
            if s.polar_id not in self.polars:
                raise ValueError(f"unknown polar_id {s.polar_id!r}")

    @property
    def rotor_area(self) -> float:
        return math.pi * self.radius**2

    def config_hash(self) -> str:
        """Stable hash of the full geometry, used to key disk caches."""
        h = hashlib.sha256()
        h.update(repr((self.radius, self.hub_radius, self.blade_count,
                       self.air_density, self.rated_power)).encode())
        for s in self.sections:
            h.update(repr((s.r, s.chord, s.twist, s.polar_id)).encode())
        for pid in sorted(self.polars):
            p = self.polars[pid]
            h.update(pid.encode())
            h.update(p.alpha_deg.tobytes())
            h.update(p.cl.tobytes())
            h.update(p.cd.tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class OperatingPoint:
    """Wind + control state the rotor is evaluated at."""

    wind_speed: float        # U_inf (m/s)
    yaw_misalignment: float  # degrees
    pitch: float             # degrees
    rotor_speed: float       # rpm

    def __post_init__(self):
        if self.wind_speed <= 0:
            raise ValueError("wind_speed must be positive")

    @property
    def omega_rad(self) -> float:
        return self.rotor_speed * math.pi / 30.0

    def tip_speed_ratio(self, radius: float) -> float:
        return self.omega_rad * radius / self.wind_speed


@dataclass
class AeroSolution:
    """Converged rotor solution at one operating point."""

    cp: float
    ct: float
    power: float
    tsr: float
    aoa_span: np.ndarray  # per-section angle of attack (deg)
    converged: bool

    @property
    def aoa_min(self) -> float:
        return float(np.min(self.aoa_span))

    @property
    def aoa_max(self) -> float:
        return float(np.max(self.aoa_span))


@dataclass
class AnnulusSolution:
    """Converged single-annulus solution."""

    a: float         # axial induction
    a_prime: float   # tangential induction
    alpha: float     # local angle of attack (deg)
    dcp_dr: float    # d(Cp)/dr contribution (1/m)
    dct_dr: float    # d(Ct)/dr contribution (1/m)
    converged: bool
    residual: float  # fixed-point residual |G(a) - a| at the returned iterate


@dataclass
class BatchSolution:
    """Vectorised rotor solutions over a batch of operating points."""

    cp: np.ndarray
    ct: np.ndarray
    power: np.ndarray
    tsr: np.ndarray
    aoa_min: np.ndarray
    aoa_max: np.ndarray
    converged: np.ndarray  # bool; False also covers out-of-polar solutions


# ---------------------------------------------------------------------------
# elementary operations


def polar_lookup(polar: AirfoilPolar, alpha: float) -> tuple[float, float]:
    """Piecewise-linear (cl, cd) at angle of attack `alpha` degrees.

    Raises OutOfPolarRange outside the table; an AoA the table cannot
    represent means the sectional model is invalid there.
    """
    if alpha < polar.alpha_min or alpha > polar.alpha_max:
        raise OutOfPolarRange(
            f"alpha={alpha:.3f} deg outside polar range "
            f"[{polar.alpha_min:.3f}, {polar.alpha_max:.3f}]")
    cl = float(np.interp(alpha, polar.alpha_deg, polar.cl))
    cd = float(np.interp(alpha, polar.alpha_deg, polar.cd))
    return cl, cd


def prandtl_tip_loss(r: float, radius: float, blade_count: int, phi: float) -> float:
    """Prandtl tip-loss factor F = (2/pi) acos(exp(-B(R-r)/(2 r sin phi))).

    `phi` is the inflow angle in radians; its magnitude is what matters for
    the loss factor.
    """
    if not 0 < r <= radius:
        raise ValueError("require 0 < r <= R")
    s = abs(math.sin(phi))
    if s < 1e-12:
        raise DegenerateInflow("inflow angle too close to 0 or pi")
    f = blade_count * (radius - r) / (2.0 * r * s)
    return (2.0 / math.pi) * math.acos(math.exp(-f))


def _glauert_bisect(k: np.ndarray, lo: float = 0.0, hi: float = 1.0,
                    iters: int = 60) -> np.ndarray:
    """Solve 4a - 5a^2 + 3a^3 = 4k(1-a)^2 for a (vectorised bisection).

    The left side is Glauert's empirical thrust relation (strictly
    increasing on [0,1]); the right side is the blade-element thrust for
    loading parameter k, so a unique root exists for k > 0.  Reference
    implementation; the hot path uses the Newton variant below.
    """
    a_lo = np.full_like(k, lo)
    a_hi = np.full_like(k, hi)
    for _ in range(iters):
        mid = 0.5 * (a_lo + a_hi)
        res = 4 * mid - 5 * mid**2 + 3 * mid**3 - 4 * k * (1 - mid) ** 2
        high = res > 0
        a_hi = np.where(high, mid, a_hi)
        a_lo = np.where(high, a_lo, mid)
    return 0.5 * (a_lo + a_hi)


def _glauert_newton(k: np.ndarray, x0: np.ndarray, iters: int = 12) -> np.ndarray:
    """Same root as `_glauert_bisect` via safeguarded Newton.

    The residual is strictly increasing in x on [0, 1] (its derivative
    4 - 10x + 9x^2 + 8k(1-x) is positive there), so clipped Newton from any
    interior start converges; warm starts from the previous sweep polish in
    a couple of steps.
    """
    x = np.clip(x0, GLAUERT_A, 0.9999)
    for _ in range(iters):
        res = 4 * x - 5 * x**2 + 3 * x**3 - 4 * k * (1 - x) ** 2
        slope = 4 - 10 * x + 9 * x**2 + 8 * k * (1 - x)
        x = np.clip(x - res / slope, 0.0, 0.99999)
    return x


# ---------------------------------------------------------------------------
# vectorised induction solve

_A_MIN, _A_MAX = -0.5, 0.999
_AP_MIN, _AP_MAX = -0.5, 5.0


class _SpanGeometry:
    """Per-rotor arrays reused across solves (radii, chord, twist, polars)."""

    def __init__(self, cfg: RotorConfig):
        self.r = np.array([s.r for s in cfg.sections])
        self.chord = np.array([s.chord for s in cfg.sections])
        self.twist = np.array([s.twist for s in cfg.sections])
        self.radius = cfg.radius
        self.blade_count = cfg.blade_count
        self.solidity = cfg.blade_count * self.chord / (2 * math.pi * self.r)
        # group section columns by polar so interpolation runs per table
        self.polar_groups = []
        by_id: dict[str, list[int]] = {}
        for j, s in enumerate(cfg.sections):
            by_id.setdefault(s.polar_id, []).append(j)
        for pid, cols in by_id.items():
            self.polar_groups.append((cfg.polars[pid], np.array(cols)))

    def lookup(self, alpha: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Clamped (cl, cd) interpolation; range violations checked after
        convergence, not during iteration."""
        cl = np.empty_like(alpha)
        cd = np.empty_like(alpha)
        for polar, cols in self.polar_groups:
            sub = alpha[..., cols]
            cl[..., cols] = np.interp(sub, polar.alpha_deg, polar.cl)
            cd[..., cols] = np.interp(sub, polar.alpha_deg, polar.cd)
        return cl, cd

    def in_range(self, alpha: np.ndarray) -> np.ndarray:
        ok = np.ones(alpha.shape[:-1], dtype=bool)
        for polar, cols in self.polar_groups:
            sub = alpha[..., cols]
            ok &= np.all((sub >= polar.alpha_deg[0]) & (sub <= polar.alpha_deg[-1]),
                         axis=-1)
        return ok


def _induction_pass(geo: _SpanGeometry, u: np.ndarray, pitch: np.ndarray,
                    omega: np.ndarray, a: np.ndarray, ap: np.ndarray):
    """One evaluation of the fixed-point map: targets (a*, ap*) plus the
    aerodynamic state (phi, alpha, cl, cd, F) at the current iterate."""
    ut = u[:, None] * (1.0 - a)
    ur = omega[:, None] * geo.r[None, :] * (1.0 + ap)
    phi = np.arctan2(ut, ur)
    sphi = np.sin(phi)
    cphi = np.cos(phi)
    alpha = np.degrees(phi) - geo.twist[None, :] - pitch[:, None]
    cl, cd = geo.lookup(alpha)
    cn = cl * cphi + cd * sphi
    ctn = cl * sphi - cd * cphi

    s_abs = np.maximum(np.abs(sphi), 1e-9)
    f_arg = geo.blade_count * (geo.radius - geo.r[None, :]) / (2.0 * geo.r[None, :] * s_abs)
    tip_loss = (2.0 / math.pi) * np.arccos(np.exp(-np.minimum(f_arg, 500.0)))
    tip_loss = np.maximum(tip_loss, 1e-9)

    k = geo.solidity[None, :] * cn / (4.0 * tip_loss * np.maximum(sphi**2, 1e-12))
    k = np.clip(k, -0.49, None)
    a_target = k / (1.0 + k)
    heavy = np.flatnonzero(a_target > GLAUERT_A)
    if heavy.size:
        flat_t = a_target.ravel()
        flat_a = a.ravel()
        flat_t[heavy] = _glauert_newton(np.maximum(k.ravel()[heavy], 0.0),
                                        flat_a[heavy])
        a_target = flat_t.reshape(a.shape)
    a_target = np.clip(a_target, _A_MIN, _A_MAX)

    kp = geo.solidity[None, :] * ctn / (4.0 * tip_loss * np.clip(sphi * cphi, 1e-12, None))
    kp = np.clip(kp, None, 0.99)
    ap_target = np.clip(kp / (1.0 - kp), _AP_MIN, _AP_MAX)

    return a_target, ap_target, phi, alpha, cl, cd, cn, ctn, tip_loss


def _solve_axial(geo: _SpanGeometry, u: np.ndarray, pitch: np.ndarray,
                 omega: np.ndarray, init=None):
    """Damped fixed-point induction solve for a batch of axial problems.

    Converged rows drop out of the working set, so the straggling deep-stall
    cells do not multiply the cost of the whole batch.  Returns the axial
    cp/ct (no yaw factor yet), per-section alpha, a convergence mask and the
    induction fields.
    """
    n = len(u)
    m = len(geo.r)
    if init is not None:
        a = np.array(init[0], dtype=float).reshape(n, m).copy()
        ap = np.array(init[1], dtype=float).reshape(n, m).copy()
    else:
        a = np.zeros((n, m))
        ap = np.zeros((n, m))

    active = np.arange(n)
    a_act, ap_act = a, ap
    u_act, pitch_act, omega_act = u, pitch, omega
    # Per-cell relaxation: halved when the update direction flips (steeply
    # negative map slope near zero-lift crossings at high local speed
    # ratio), gently restored otherwise.  A fixed factor cannot stabilise
    # those cells no matter its value, hence the adaptation.
    relax = np.full((n, m), RELAXATION)
    prev_da = np.zeros((n, m))
    prev_dap = np.zeros((n, m))
    for _ in range(MAX_ITERATIONS):
        a_tgt, ap_tgt, *_ = _induction_pass(geo, u_act, pitch_act, omega_act,
                                            a_act, ap_act)
        da = a_tgt - a_act
        dap = ap_tgt - ap_act
        step = np.maximum(np.abs(da), np.abs(dap))
        done = step.max(axis=1) < INDUCTION_TOL
        flip = (da * prev_da < 0) | (dap * prev_dap < 0)
        relax = np.where(flip, np.maximum(relax * 0.5, RELAXATION / 4096.0),
                         np.minimum(relax * 1.25, RELAXATION))
        if done.any():
            a[active[done]] = a_act[done]
            ap[active[done]] = ap_act[done]
            keep = ~done
            active = active[keep]
            if active.size == 0:
                break
            a_act = a_act[keep] + relax[keep] * da[keep]
            ap_act = ap_act[keep] + relax[keep] * dap[keep]
            u_act = u_act[keep]
            pitch_act = pitch_act[keep]
            omega_act = omega_act[keep]
            relax = relax[keep]
            prev_da = da[keep]
            prev_dap = dap[keep]
        else:
            a_act += relax * da
            ap_act += relax * dap
            prev_da = da
            prev_dap = dap
    if active.size:
        a[active] = a_act
        ap[active] = ap_act

    # one full-population pass at the returned iterate: residuals for the
    # convergence flags plus the aerodynamic state the integration needs
    a_tgt, ap_tgt, phi, alpha, cl, cd, cn, ctn, _ = _induction_pass(
        geo, u, pitch, omega, a, ap)
    residual = np.maximum(np.abs(a_tgt - a), np.abs(ap_tgt - ap)).max(axis=1)
    converged = residual < INDUCTION_TOL

    ut = u[:, None] * (1.0 - a)
    ur = omega[:, None] * geo.r[None, :] * (1.0 + ap)
    w2 = ut**2 + ur**2
    b = geo.blade_count
    denom_t = math.pi * geo.radius**2 * u**2
    denom_p = math.pi * geo.radius**2 * u**3
    dct_dr = b * geo.chord[None, :] * w2 * cn / denom_t[:, None]
    dcp_dr = b * omega[:, None] * geo.chord[None, :] * w2 * ctn * geo.r[None, :] / denom_p[:, None]
    ct = np.trapezoid(dct_dr, geo.r, axis=1)
    cp = np.trapezoid(dcp_dr, geo.r, axis=1)
    converged &= geo.in_range(alpha)
    return cp, ct, alpha, converged, a, ap, dcp_dr, dct_dr


_GEO_CACHE: dict[int, tuple[RotorConfig, "_SpanGeometry"]] = {}


def _geometry(cfg: RotorConfig) -> _SpanGeometry:
    hit = _GEO_CACHE.get(id(cfg))
    if hit is not None and hit[0] is cfg:
        return hit[1]
    geo = _SpanGeometry(cfg)
    if len(_GEO_CACHE) > 64:
        _GEO_CACHE.clear()
    _GEO_CACHE[id(cfg)] = (cfg, geo)
    return geo


def solve_rotor_batch(cfg: RotorConfig, wind_speed, yaw_misalignment, pitch,
                      rotor_speed, init=None) -> BatchSolution:
    """Solve many operating points at once (inputs broadcast together)."""
    u, gam, th, rpm = np.broadcast_arrays(
        np.asarray(wind_speed, dtype=float), np.asarray(yaw_misalignment, dtype=float),
        np.asarray(pitch, dtype=float), np.asarray(rotor_speed, dtype=float))
    shape = u.shape
    u = u.ravel()
    gam = gam.ravel()
    th = th.ravel()
    rpm = rpm.ravel()
    if np.any(u <= 0):
        raise ValueError("wind_speed must be positive")

    geo = _geometry(cfg)
    omega = rpm * math.pi / 30.0
    cosg = np.cos(np.radians(gam))
    u_eff = np.maximum(u * cosg, 1e-6)
    cp_ax, ct_ax, alpha, converged, *_ = _solve_axial(geo, u_eff, th, omega, init)

    cp = np.maximum(cp_ax * cosg**3, 0.0)
    ct = np.maximum(ct_ax * cosg**2, 0.0)
    power = cp * 0.5 * cfg.air_density * cfg.rotor_area * u**3
    tsr = omega * cfg.radius / u
    return BatchSolution(
        cp=cp.reshape(shape), ct=ct.reshape(shape), power=power.reshape(shape),
        tsr=tsr.reshape(shape),
        aoa_min=alpha.min(axis=1).reshape(shape),
        aoa_max=alpha.max(axis=1).reshape(shape),
        converged=converged.reshape(shape))


def _solve_point(cfg: RotorConfig, op: OperatingPoint, init=None):
    geo = _geometry(cfg)
    cosg = math.cos(math.radians(op.yaw_misalignment))
    u_eff = max(op.wind_speed * cosg, 1e-6)
    cp_ax, ct_ax, alpha, converged, a, ap, *_ = _solve_axial(
        geo, np.array([u_eff]), np.array([op.pitch]), np.array([op.omega_rad]), init)
    cp = max(float(cp_ax[0]) * cosg**3, 0.0)
    ct = max(float(ct_ax[0]) * cosg**2, 0.0)
    power = cp * 0.5 * cfg.air_density * cfg.rotor_area * op.wind_speed**3
    sol = AeroSolution(
        cp=cp, ct=ct, power=power,
        tsr=op.omega_rad * cfg.radius / op.wind_speed,
        aoa_span=alpha[0], converged=bool(converged[0]))
    return sol, (a, ap)


def solve_rotor(op: OperatingPoint, cfg: RotorConfig, init=None) -> AeroSolution:
    """Full-rotor solution at one operating point (never raises; check the
    `converged` flag)."""
    return _solve_point(cfg, op, init)[0]


def solve_annulus(section: BladeSection, op: OperatingPoint,
                  cfg: RotorConfig) -> AnnulusSolution:
    """Solve a single annulus (BEM annuli are independent of each other).

    Raises OutOfPolarRange if the converged angle of attack leaves the
    polar table; non-convergence is flagged, not raised.
    """
    sub = RotorConfig(
        radius=cfg.radius, hub_radius=min(cfg.hub_radius, section.r * 0.5),
        blade_count=cfg.blade_count, sections=(section,),
        polars=cfg.polars, air_density=cfg.air_density, rated_power=cfg.rated_power)
    geo = _SpanGeometry(sub)
    cosg = math.cos(math.radians(op.yaw_misalignment))
    u_eff = max(op.wind_speed * cosg, 1e-6)
    _, _, alpha, converged, a, ap, dcp_dr, dct_dr = _solve_axial(
        geo, np.array([u_eff]), np.array([op.pitch]), np.array([op.omega_rad]))
    alpha_val = float(alpha[0, 0])
    polar = cfg.polars[section.polar_id]
    if not (polar.alpha_min <= alpha_val <= polar.alpha_max):
        raise OutOfPolarRange(
            f"converged alpha={alpha_val:.3f} deg outside polar table")
    a_t, ap_t, *_ = _induction_pass(geo, np.array([u_eff]), np.array([op.pitch]),
                                    np.array([op.omega_rad]), a, ap)
    residual = float(max(abs(a_t[0, 0] - a[0, 0]), abs(ap_t[0, 0] - ap[0, 0])))
    return AnnulusSolution(
        a=float(a[0, 0]), a_prime=float(ap[0, 0]), alpha=alpha_val,
        dcp_dr=float(dcp_dr[0, 0] * cosg**3), dct_dr=float(dct_dr[0, 0] * cosg**2),
        converged=bool(converged[0]), residual=residual)


class RotorSolver:
    """Memoising front end for repeated single-point solves.

    Control loops revisit operating points constantly (holds, revoked
    actions, lattice-valued winds), so an exact-key cache pays off.  Warm
    starts reuse the previous induction field when the cache misses.
    """

    def __init__(self, cfg: RotorConfig, max_cache: int = 300_000):
        self.cfg = cfg
        self.max_cache = max_cache
        self._cache: dict[tuple, AeroSolution] = {}
        self._warm = None
        self.solve_count = 0

    def solve(self, wind_speed: float, yaw_misalignment: float, pitch: float,
              rotor_speed: float) -> AeroSolution:
        key = (round(wind_speed, 9), round(abs(yaw_misalignment), 9),
               round(pitch, 9), round(rotor_speed, 9))
        hit = self._cache.get(key)
        if hit is not None:
            # tsr/power are yaw-symmetric, so caching |yaw| is exact
            return hit
        op = OperatingPoint(wind_speed, abs(yaw_misalignment), pitch, rotor_speed)
        sol, warm = _solve_point(self.cfg, op, init=self._warm)
        if not sol.converged and self._warm is not None:
            sol, warm = _solve_point(self.cfg, op)  # retry cold
        self._warm = warm
        self.solve_count += 1
        if len(self._cache) >= self.max_cache:
            self._cache.clear()
        self._cache[key] = sol
        return sol


# ---------------------------------------------------------------------------
# surfaces and the nominal power coefficient

_SWEEP_AXES = ("tsr", "pitch", "yaw")


@dataclass
class SweepSpec:
    """Two swept axes out of {tsr, pitch, yaw}; the third is held fixed.

    `wind_speed` anchors the conversion from TSR to rotor speed; cp itself
    depends on wind only through TSR, pitch and yaw.
    """

    axis1: str
    values1: np.ndarray
    axis2: str
    values2: np.ndarray
    fixed: str
    fixed_value: float
    wind_speed: float = 8.0

    def __post_init__(self):
        names = {self.axis1, self.axis2, self.fixed}
        if names != set(_SWEEP_AXES):
            raise ValueError(f"sweep must name each of {_SWEEP_AXES} exactly once")
        object.__setattr__(self, "values1", np.asarray(self.values1, dtype=float))
        object.__setattr__(self, "values2", np.asarray(self.values2, dtype=float))


@dataclass
class CpSurface:
    spec: SweepSpec
    cp: np.ndarray     # shape (len(values1), len(values2)); NaN where invalid
    valid: np.ndarray  # bool mask

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write(f"{self.spec.axis1}\\{self.spec.axis2},"
                     + ",".join(f"{v:.6g}" for v in self.spec.values2) + "\n")
            for v1, row in zip(self.spec.values1, self.cp):
                fh.write(f"{v1:.6g}," + ",".join(f"{c:.9g}" for c in row) + "\n")


def cp_surface(cfg: RotorConfig, sweep: SweepSpec) -> CpSurface:
    """Dense Cp grid over the sweep; failed cells are NaN, never zero."""
    v1, v2 = np.meshgrid(sweep.values1, sweep.values2, indexing="ij")
    coords = {sweep.axis1: v1, sweep.axis2: v2,
              sweep.fixed: np.full_like(v1, sweep.fixed_value)}
    u = sweep.wind_speed
    rpm = coords["tsr"] * u / cfg.radius * 30.0 / math.pi
    sol = solve_rotor_batch(cfg, u, coords["yaw"], coords["pitch"], rpm)
    cp = np.where(sol.converged, sol.cp, np.nan)
    return CpSurface(spec=sweep, cp=cp, valid=sol.converged.copy())


def _golden_max(fun, lo: float, hi: float, iters: int = 40) -> tuple[float, float]:
    """Golden-section maximisation of a unimodal scalar function."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = hi - invphi * (hi - lo)
    d = lo + invphi * (hi - lo)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        if fc > fd:
            hi, d, fd = d, c, fc
            c = hi - invphi * (hi - lo)
            fc = fun(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + invphi * (hi - lo)
            fd = fun(d)
    x = 0.5 * (lo + hi)
    return x, fun(x)


def default_cache_dir() -> Path:
    env = os.environ.get("WINDLAB_CACHE_DIR")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "windlab"


def cp_nominal(cfg: RotorConfig, use_cache: bool = True,
               cache_dir=None) -> float:
    """Maximum attainable Cp at zero yaw over TSR in [3,12], pitch in
    [-20,20]; coarse grid argmax refined by per-axis golden-section search.

    The value normalises the control reward, so it is computed once per
    turbine geometry and cached on disk.
    """
    cache_path = None
    if use_cache:
        cdir = Path(cache_dir) if cache_dir is not None else default_cache_dir()
        cache_path = cdir / f"cp_nominal_{cfg.config_hash()[:16]}.json"
        if cache_path.exists():
            return float(json.loads(cache_path.read_text())["cp_nominal"])

    tsr_grid = np.arange(3.0, 12.0 + 1e-9, 0.25)
    pitch_grid = np.arange(-20.0, 20.0 + 1e-9, 1.0)
    sweep = SweepSpec("tsr", tsr_grid, "pitch", pitch_grid, "yaw", 0.0)
    surf = cp_surface(cfg, sweep)
    cp = np.where(np.isnan(surf.cp), -np.inf, surf.cp)
    i, j = np.unravel_index(np.argmax(cp), cp.shape)
    tsr_best, pitch_best = float(tsr_grid[i]), float(pitch_grid[j])
    best = float(cp[i, j])

    u = 8.0

    def eval_point(tsr, pitch):
        rpm = tsr * u / cfg.radius * 30.0 / math.pi
        sol = solve_rotor(OperatingPoint(u, 0.0, pitch, rpm), cfg)
        return sol.cp if sol.converged else -np.inf

    for _ in range(2):  # alternate 1-D refinements around the incumbent
        tsr_best, _ = _golden_max(
            lambda t: eval_point(t, pitch_best),
            max(3.0, tsr_best - 0.25), min(12.0, tsr_best + 0.25))
        pitch_best, val = _golden_max(
            lambda p: eval_point(tsr_best, p),
            max(-20.0, pitch_best - 1.0), min(20.0, pitch_best + 1.0))
        best = max(best, val)

    if cache_path is not None:
        cache_path.parent.mkdir(parents=True, exist_ok=True)
        cache_path.write_text(json.dumps(
            {"cp_nominal": best, "tsr": tsr_best, "pitch": pitch_best,
             "turbine": cfg.config_hash()}))
    return best


# ---------------------------------------------------------------------------
# bundled reference turbine

STALL_ANGLE_DEG = 12.0
DESIGN_TSR = 8.0
DESIGN_AOA_DEG = 6.0


def parametric_polar_coeffs(alpha_deg):
    """Thin-airfoil polar with smooth stall decay: cl = 2*pi*alpha below
    +-12 deg then an exponential relaxation toward a bluff value;
    cd = 0.01 + 0.02 (alpha/15)^2."""
    alpha_deg = np.asarray(alpha_deg, dtype=float)
    lin = 2.0 * math.pi * np.radians(alpha_deg)
    cl_stall = 2.0 * math.pi * math.radians(STALL_ANGLE_DEG)
    mag = np.abs(alpha_deg)
    post = np.sign(alpha_deg) * (0.8 + (cl_stall - 0.8) * np.exp(-(mag - STALL_ANGLE_DEG) / 10.0))
    cl = np.where(mag <= STALL_ANGLE_DEG, lin, post)
    cd = 0.01 + 0.02 * (alpha_deg / 15.0) ** 2
    return cl, cd


def parametric_polar() -> AirfoilPolar:
    """Reference polar sampled densely where the solver lives and coarsely
    in the far post-stall tails."""
    alpha = np.concatenate([
        np.arange(-180.0, -60.0, 10.0),
        np.arange(-60.0, -30.0, 5.0),
        np.arange(-30.0, 30.0, 0.5),
        np.arange(30.0, 60.0, 5.0),
        np.arange(60.0, 180.0 + 1e-9, 10.0),
    ])
    cl, cd = parametric_polar_coeffs(alpha)
    return AirfoilPolar(alpha_deg=alpha, cl=cl, cd=cd)


def reference_turbine(n_sections: int = 20) -> RotorConfig:
    """Bundled 2.3 MW reference rotor: R = 46.5 m, three blades, tapered
    chord and near-ideal twist for a design TSR of 8.

    Stations are cosine-clustered toward the tip where the loss factor
    varies fastest.
    """
    radius, hub = 46.5, 1.5
    j = np.arange(n_sections)
    x = np.sin(0.5 * math.pi * (j + 0.5) / n_sections)
    r = hub + (radius - hub) * x
    mu = (r - hub) / (radius - hub)
    chord = 3.5 * (1.0 - 0.7 * mu)
    lam_r = DESIGN_TSR * r / radius
    twist = np.degrees(np.arctan(2.0 / (3.0 * lam_r))) - DESIGN_AOA_DEG
    sections = tuple(
        BladeSection(r=float(ri), chord=float(ci), twist=float(ti), polar_id="ref")
        for ri, ci, ti in zip(r, chord, twist))
    return RotorConfig(
        radius=radius, hub_radius=hub, blade_count=3, sections=sections,
        polars={"ref": parametric_polar()}, air_density=1.225, rated_power=2.3e6)


# ---------------------------------------------------------------------------
# config and polar files


def load_polar_csv(path) -> AirfoilPolar:
    """Read an `alpha_deg,cl,cd` CSV into a polar table."""
    alpha, cl, cd = [], [], []
    with open(path) as fh:
        header = fh.readline().strip()
        if header.replace(" ", "") != "alpha_deg,cl,cd":
            raise ValueError(f"unexpected polar header {header!r}")
        for line in fh:
            if not line.strip():
                continue
            f1, f2, f3 = line.split(",")
            alpha.append(float(f1))
            cl.append(float(f2))
            cd.append(float(f3))
    return AirfoilPolar(np.array(alpha), np.array(cl), np.array(cd))


def save_polar_csv(polar: AirfoilPolar, path):
    with open(path, "w") as fh:
        fh.write("alpha_deg,cl,cd\n")
        for a, l, d in zip(polar.alpha_deg, polar.cl, polar.cd):
            fh.write(f"{float(a)!r},{float(l)!r},{float(d)!r}\n")


def load_turbine_config(path) -> RotorConfig:
    """Read a turbine YAML; polar CSV paths resolve relative to the file."""
    path = Path(path)
    raw = yaml.safe_load(path.read_text())
    polars = {}
    for pid, rel in raw["polars"].items():
        polars[pid] = load_polar_csv(path.parent / rel)
    sections = tuple(
        BladeSection(r=float(s["r"]), chord=float(s["chord"]),
                     twist=float(s["twist"]), polar_id=str(s["polar"]))
        for s in raw["sections"])
    return RotorConfig(
        radius=float(raw["radius"]), hub_radius=float(raw["hub_radius"]),
        blade_count=int(raw["blade_count"]), sections=sections, polars=polars,
        air_density=float(raw.get("air_density", 1.225)),
        rated_power=float(raw.get("rated_power", 2.3e6)))


def save_turbine_config(cfg: RotorConfig, path):
    """Write the turbine YAML plus one polar CSV per polar id."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    polar_files = {}
    for pid, polar in cfg.polars.items():
        rel = f"polar_{pid}.csv"
        save_polar_csv(polar, path.parent / rel)
        polar_files[pid] = rel
    doc = {
        "radius": cfg.radius, "hub_radius": cfg.hub_radius,
        "blade_count": cfg.blade_count, "air_density": cfg.air_density,
        "rated_power": cfg.rated_power, "polars": polar_files,
        "sections": [
            {"r": s.r, "chord": s.chord, "twist": s.twist, "polar": s.polar_id}
            for s in cfg.sections],
    }
    path.write_text(yaml.safe_dump(doc, sort_keys=False))
