"""Reparametrization making torsion density (or speed) constant.

For a spherical curve with positive torsion density q = kg * v, the unique
increasing bijection phi of [a, b] with (q o phi) * phi' = c is the inverse
of the cumulative integral Theta of q, evaluated on a linear ramp:
phi(t) = Theta^-1(c (t - a)) with c = Theta_total / (b - a).  The constant
is forced by the endpoint condition phi(b) = b.  Constant-speed mode uses
cumulative arclength instead of Theta.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator, interp1d

from .curves import CurveError, GeodesicProfile, SpaceCurve, SphericalCurve

__all__ = [
    "Reparametrization",
    "solve_reparam",
    "solve_reparam_shooting",
    "apply_reparam",
    "integrate_tantrix",
    "c_bounds",
]


@dataclass
class Reparametrization:
    """Monotone map phi on [a, b] equalizing torsion density or speed."""

    params: np.ndarray
    phi: np.ndarray
    c: float
    mode: str
    paper_bracket: tuple[float, float] | None = None

    def __post_init__(self):
        if self.mode not in ("torsion", "curvature"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not np.all(np.diff(self.phi) > 0):
            raise CurveError("internal error: phi table not strictly increasing")

    def interpolator(self) -> PchipInterpolator:
        return PchipInterpolator(self.params, self.phi)

    def __call__(self, t):
        return self.interpolator()(t)

    def to_table(self) -> dict:
        """Serializable (t, phi(t), c, mode) table."""
        return {
            "mode": self.mode,
            "c": self.c,
            "t": self.params.tolist(),
            "phi": self.phi.tolist(),
        }


def _cumulative_fn(profile: GeodesicProfile, mode: str, theta_source: str, interpolation: str):
    """Monotone cumulative function for the inversion.

    theta_source='density' integrates the interpolant of the density samples
    (q or v), which keeps the output's density constant to interpolation
    accuracy; 'table' interpolates the profile's own cumulative table, which
    honors exactly-known tables (e.g. closed forms for jumpy densities).
    """
    t = profile.params
    if mode == "torsion":
        dens = profile.q
        if np.min(dens) <= 0:
            raise CurveError("nonpositive torsion density")
    else:
        dens = profile.speed
        if np.min(dens) <= 0:
            raise CurveError("nonpositive speed")

    if theta_source == "table":
        if mode == "torsion":
            table = profile.theta
        else:
            dt = np.diff(t)
            v = profile.speed
            table = np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * dt)])
        if not np.all(np.diff(table) > 0):
            raise CurveError("internal error: cumulative table not strictly increasing")
        if interpolation == "linear":
            return interp1d(t, table), float(table[-1])
        return PchipInterpolator(t, table), float(table[-1])

    if interpolation == "linear":
        dt = np.diff(t)
        table = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * dt)])
        return interp1d(t, table), float(table[-1])
    anti = PchipInterpolator(t, dens).antiderivative()
    offset = anti(t[0])
    return (lambda s: anti(s) - offset), float(anti(t[-1]) - offset)


def _invert_monotone(t_table, fn, targets):
    """Solve fn(phi) = target for each target, fn monotone increasing.

    Vectorized bisection bracketed by table cells, to ~1e-15 of cell width.
    """
    y_at_nodes = np.asarray(fn(t_table))
    idx = np.clip(np.searchsorted(y_at_nodes, targets) - 1, 0, len(t_table) - 2)
    lo = t_table[idx].copy()
    hi = t_table[idx + 1].copy()
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        too_low = fn(mid) < targets
        lo = np.where(too_low, mid, lo)
        hi = np.where(too_low, hi, mid)
    return 0.5 * (lo + hi)


def solve_reparam(
    profile: GeodesicProfile,
    mode: str = "torsion",
    table_interpolation: str = "pchip",
    theta_source: str = "density",
) -> Reparametrization:
    """Closed-form reparametrization by monotone inversion.

    Torsion mode requires q > 0 everywhere; c = Theta_total / |I| and
    phi(t) = Theta^-1(c (t - a)).  Curvature mode uses cumulative arclength
    and c = L / |I|.
    """
    t = profile.params
    a, b = t[0], t[-1]
    fn, total = _cumulative_fn(profile, mode, theta_source, table_interpolation)
    c = total / (b - a)
    targets = np.clip(c * (t - a), 0.0, total)
    phi = _invert_monotone(t, fn, targets)
    phi[0], phi[-1] = a, b
    bracket = None
    if mode == "torsion":
        ratio = profile.kg / profile.speed
        scale = (profile.length / (b - a)) ** 2
        bracket = (scale * float(np.min(ratio)), scale * float(np.max(ratio)))
    return Reparametrization(t.copy(), phi, float(c), mode, paper_bracket=bracket)


def solve_reparam_shooting(
    profile: GeodesicProfile, mode: str = "torsion", rk_steps: int = 4096, tol: float = 1e-12
) -> Reparametrization:
    """Shooting cross-check: integrate phi' = c / q(phi) and bisect on c.

    Structurally mirrors the existence argument (an ODE solved for each c,
    with c fixed by phi(b) = b); the closed-form route is preferred in the
    pipeline because it is exact on the discrete table.
    """
    t = profile.params
    a, b = t[0], t[-1]
    if mode == "torsion":
        if np.min(profile.q) <= 0:
            raise CurveError("nonpositive torsion density")
        dens = PchipInterpolator(t, profile.q)
        lo, hi = float(np.min(profile.q)), float(np.max(profile.q))
    else:
        dens = PchipInterpolator(t, profile.speed)
        lo, hi = float(np.min(profile.speed)), float(np.max(profile.speed))

    def endpoint(c: float) -> float:
        h = (b - a) / rk_steps
        phi = a
        for i in range(rk_steps):
            def rhs(p):
                return c / float(dens(np.clip(p, a, b)))
            k1 = rhs(phi)
            k2 = rhs(phi + 0.5 * h * k1)
            k3 = rhs(phi + 0.5 * h * k2)
            k4 = rhs(phi + h * k3)
            phi += (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        return phi - b

    lo_c, hi_c = lo * (1 - 1e-9), hi * (1 + 1e-9)
    f_lo, f_hi = endpoint(lo_c), endpoint(hi_c)
    if f_lo * f_hi > 0:
        raise CurveError("shooting bracket failed; profile badly resolved")
    for _ in range(80):
        mid = 0.5 * (lo_c + hi_c)
        f_mid = endpoint(mid)
        if f_lo * f_mid <= 0:
            hi_c = mid
        else:
            lo_c, f_lo = mid, f_mid
        if hi_c - lo_c < tol * max(1.0, abs(hi_c)):
            break
    c = 0.5 * (lo_c + hi_c)
    # rebuild the phi table at the resolved c by dense RK4
    h = (b - a) / rk_steps
    phis = np.empty(rk_steps + 1)
    phis[0] = a
    for i in range(rk_steps):
        def rhs(p):
            return c / float(dens(np.clip(p, a, b)))
        p = phis[i]
        k1 = rhs(p)
        k2 = rhs(p + 0.5 * h * k1)
        k3 = rhs(p + 0.5 * h * k2)
        k4 = rhs(p + h * k3)
        phis[i + 1] = p + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    grid = np.linspace(a, b, rk_steps + 1)
    phi = np.interp(t, grid, phis)
    phi[0], phi[-1] = a, b
    phi = np.maximum.accumulate(phi)
    return Reparametrization(t.copy(), phi, float(c), mode)


def apply_reparam(sphere_curve: SphericalCurve, rep: Reparametrization) -> SphericalCurve:
    """Evaluate T o phi on the original grid, renormalized to the sphere."""
    pts = sphere_curve.evaluate(rep(rep.params))
    pts = pts / np.linalg.norm(pts, axis=1)[:, None]
    if sphere_curve.closed:
        pts[-1] = pts[0]
    return SphericalCurve(rep.params.copy(), pts, closed=sphere_curve.closed)


def integrate_tantrix(sphere_curve: SphericalCurve, start) -> SpaceCurve:
    """Integrate a spherical curve into a unit-speed space curve from start.

    Uses the cumulative integral of the cubic interpolant (the trapezoid rule
    of the samples is only O(h^2) and would dominate every downstream
    error budget).
    """
    start = np.asarray(start, dtype=float)
    anti = sphere_curve.spline().antiderivative()
    vals = start + (anti(sphere_curve.params) - anti(sphere_curve.params[0]))
    closure = np.linalg.norm(vals[-1] - vals[0])
    closed = sphere_curve.closed and closure <= 1e-9 * max(1.0, np.max(np.abs(vals)))
    if closed:
        vals[-1] = vals[0]
    return SpaceCurve(sphere_curve.params.copy(), vals, closed=closed)


def c_bounds(profile: GeodesicProfile) -> dict:
    """Bracket for the achievable constant: (min q, max q) plus, for
    comparison, the bracket stated in terms of L^2/|I|^2 times kg/v."""
    lo, hi = float(np.min(profile.q)), float(np.max(profile.q))
    ratio = profile.kg / profile.speed
    scale = (profile.length / profile.span) ** 2
    return {
        "q_bounds": (lo, hi),
        "paper_bracket": (scale * float(np.min(ratio)), scale * float(np.max(ratio))),
    }
