"""Anchor selection, tangent circles, splices and composite spherical paths.

The composite path machinery represents a deformed tantrix as an ordered list
of pieces, each carrying exact or finely tabulated integrals of arclength
sigma, total geodesic curvature Theta = integral of kg dsigma, and the
position integrals int T dsigma and int T dTheta.  All averaging and
reparametrization bookkeeping downstream works on these per-piece integrals,
never on a global sample grid, so loop geometry far below the output
resolution stays exact.

Splice ramps are curves of prescribed geodesic curvature integrated on the
sphere (spherical clothoids), with a small Newton shoot on the profile
parameters to land exactly on the tangent circle (ramp in) or back on the
host curve (ramp out).  Prescribing kg keeps it positive by construction;
position-blend morphs were abandoned because their weight derivatives
generate sign-indefinite curvature bursts wherever the blended curves nearly
coincide.  Because the ramp-out family is periodic in its start angle on the
circle, loop insertions are single circle arcs of continuously variable
sweep: wrap counts increment seamlessly and both the inserted length and its
total geodesic curvature are continuous in the requested loop length, which
the constant-torsion matching requires (closed nested loops carry a
topologically quantized 2*pi of turning).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, QhullError

from .curves import CurveError, SphericalCurve, hull_margin

__all__ = [
    "Ball",
    "Circle",
    "LoopSystem",
    "SplicedTantrix",
    "CompositePath",
    "select_anchors",
    "lambda_map",
    "tangent_circle",
    "splice_anchor",
    "composite_loop",
    "build_spliced",
    "build_composite",
]

BASE_SWEEP = 0.15       # circle arc between the two ramp landings at zero insertion
RAMP_STEPS = 192        # RK4 steps per ramp integration
RAMP_TABLE = 385        # sample count of tabulated ramp pieces
SPAN_GRID_FACTOR = 8    # refinement of tantrix spans relative to the host grid


def _smoothstep5(s):
    s = np.clip(s, 0.0, 1.0)
    return s * s * s * (10.0 + s * (-15.0 + 6.0 * s))


def _bump(s):
    s = np.clip(s, 0.0, 1.0)
    return 64.0 * (s * (1.0 - s)) ** 3


def _bump_early(s):
    s = np.asarray(s, dtype=float)
    return _bump(np.clip(s / 0.62, 0.0, 1.0))


def _bump_late(s):
    s = np.asarray(s, dtype=float)
    return _bump(np.clip((s - 0.38) / 0.62, 0.0, 1.0))


def _softplus(z):
    z = np.asarray(z, dtype=float)
    return np.where(z > 30, z, np.log1p(np.exp(np.minimum(z, 30))))


def _softplus_inv(t):
    t = np.maximum(np.asarray(t, dtype=float), 1e-9)
    return np.where(t > 30, t, np.log(np.expm1(t)))


def _normalize_rows(x):
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# geometry primitives
# ---------------------------------------------------------------------------

@dataclass
class Ball:
    center: np.ndarray
    radius: float

    def to_dict(self):
        return {"center": np.asarray(self.center).tolist(), "radius": float(self.radius)}


@dataclass
class Circle:
    """Spherical circle through an anchor, tangent to the host curve there.

    Points are cos(rho) * m + sin(rho) * (cos(theta) e1 + sin(theta) e2);
    theta = 0 is the anchor and increasing theta follows the host tangent.
    The frame is chosen so the circle curves toward the side selected by the
    sign of the host geodesic curvature, where its invariant geodesic
    curvature is +cot(rho).
    """

    center_dir: np.ndarray
    rho: float
    e1: np.ndarray
    e2: np.ndarray

    @classmethod
    def from_anchor(cls, point, tangent, rho, side=1.0):
        p = np.asarray(point, dtype=float)
        p = p / np.linalg.norm(p)
        u = np.asarray(tangent, dtype=float)
        u = u - (u @ p) * p
        u = u / np.linalg.norm(u)
        nu = side * np.cross(p, u)
        m = np.cos(rho) * p + np.sin(rho) * nu
        e1 = (p - np.cos(rho) * m) / np.sin(rho)
        e2 = np.cross(m, e1)
        return cls(m, float(rho), e1, e2)

    @property
    def sin_rho(self):
        return np.sin(self.rho)

    @property
    def cos_rho(self):
        return np.cos(self.rho)

    @property
    def kg(self):
        return 1.0 / np.tan(self.rho)

    @property
    def circumference(self):
        return 2 * np.pi * self.sin_rho

    def point(self, theta):
        theta = np.asarray(theta, dtype=float)
        c, s = np.cos(theta), np.sin(theta)
        return (
            self.cos_rho * self.center_dir
            + self.sin_rho * (np.multiply.outer(c, self.e1) + np.multiply.outer(s, self.e2))
        )

    def tangent(self, theta):
        theta = np.asarray(theta, dtype=float)
        c, s = np.cos(theta), np.sin(theta)
        return np.multiply.outer(-s, self.e1) + np.multiply.outer(c, self.e2)

    def angle_of(self, point):
        return float(np.arctan2((point @ self.e2), (point @ self.e1)))

    def arc_integral(self, a0, a1):
        """Integral of the position over theta in [a0, a1] (not over sigma)."""
        ds = np.sin(a1) - np.sin(a0)
        dc = np.cos(a1) - np.cos(a0)
        return self.cos_rho * self.center_dir * (a1 - a0) + self.sin_rho * (
            ds * self.e1 - dc * self.e2
        )

    def to_dict(self):
        return {
            "center_dir": self.center_dir.tolist(),
            "rho": float(self.rho),
            "chordal_radius": float(self.sin_rho),
            "kg": float(self.kg),
        }


# ---------------------------------------------------------------------------
# pieces
# ---------------------------------------------------------------------------

class CircleArcPiece:
    """Arc of a circle from angle a0 sweeping da >= 0; integrals closed form."""

    kind = "circle_arc"

    def __init__(self, circle: Circle, a0: float, da: float, tag=""):
        if da < 0:
            raise CurveError("arc sweep must be nonnegative")
        self.circle = circle
        self.a0 = float(a0)
        self.da = float(da)
        self.tag = tag
        self.length = circle.sin_rho * da
        self.theta = circle.cos_rho * da
        self.int_T_dsigma = circle.sin_rho * circle.arc_integral(a0, a0 + da)
        self.int_T_dtheta = circle.cos_rho * circle.arc_integral(a0, a0 + da)

    def _angle_at(self, s):
        return self.a0 + np.asarray(s) / self.circle.sin_rho

    def point_at_sigma(self, s):
        return self.circle.point(self._angle_at(s))

    def kg_at_sigma(self, s):
        return np.full(np.shape(np.asarray(s, dtype=float)), self.circle.kg)

    def cum_theta(self, s):
        return np.asarray(s) * (self.circle.cos_rho / self.circle.sin_rho)

    def cum_int_T_dtheta(self, s):
        a1 = self._angle_at(s)
        if np.ndim(a1) == 0:
            return self.circle.cos_rho * self.circle.arc_integral(self.a0, float(a1))
        return np.stack(
            [self.circle.cos_rho * self.circle.arc_integral(self.a0, aa) for aa in a1]
        )

    def cum_int_T_dsigma(self, s):
        a1 = self._angle_at(s)
        if np.ndim(a1) == 0:
            return self.circle.sin_rho * self.circle.arc_integral(self.a0, float(a1))
        return np.stack(
            [self.circle.sin_rho * self.circle.arc_integral(self.a0, aa) for aa in a1]
        )

    def sigma_from_theta(self, th):
        return np.asarray(th) * (self.circle.sin_rho / self.circle.cos_rho)

    def min_kg(self):
        return float(self.circle.kg)


class TablePiece:
    """Piece tabulated on a fine internal grid (ramps and tantrix spans).

    Speeds and geodesic curvature come from 5-point finite differences in
    coordinates relative to a local origin (avoids cancellation at small
    piece scales); evaluation between nodes is by cubic spline.
    """

    kind = "table"

    def __init__(self, pts: np.ndarray, tag="", origin=None, kg_values=None):
        from .curves import _fd_uniform  # local import to avoid a cycle

        self.tag = tag
        self._spline = None
        m = len(pts)
        h = 1.0 / (m - 1)
        if origin is None:
            origin = pts[m // 2]
        rel = pts - origin
        d1 = _fd_uniform(rel, h, 1, closed=False)
        d2 = _fd_uniform(rel, h, 2, closed=False)
        v = np.linalg.norm(d1, axis=1)
        if np.min(v) <= 0:
            raise CurveError("degenerate piece: zero speed")
        if kg_values is None:
            kg_values = np.einsum("ij,ij->i", np.cross(pts, d1), d2) / v**3
        self.pts = pts
        self.kg_tab = kg_values
        q = kg_values * v
        du = h
        self.sigma_tab = np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * du)])
        self.theta_tab = np.concatenate([[0.0], np.cumsum(0.5 * (q[1:] + q[:-1]) * du)])
        w_s = v[:, None] * pts
        w_t = q[:, None] * pts
        self.iTds_tab = np.concatenate(
            [np.zeros((1, 3)), np.cumsum(0.5 * (w_s[1:] + w_s[:-1]) * du, axis=0)]
        )
        self.iTdth_tab = np.concatenate(
            [np.zeros((1, 3)), np.cumsum(0.5 * (w_t[1:] + w_t[:-1]) * du, axis=0)]
        )
        self.length = float(self.sigma_tab[-1])
        self.theta = float(self.theta_tab[-1])
        self.int_T_dsigma = self.iTds_tab[-1].copy()
        self.int_T_dtheta = self.iTdth_tab[-1].copy()

    def _interp(self, table, s):
        s = np.clip(s, 0.0, self.length)
        if table.ndim == 1:
            return np.interp(s, self.sigma_tab, table)
        return np.stack(
            [np.interp(s, self.sigma_tab, table[:, k]) for k in range(table.shape[1])],
            axis=-1,
        )

    def _point_spline(self):
        if self._spline is None:
            from scipy.interpolate import CubicSpline

            self._spline = CubicSpline(self.sigma_tab, self.pts)
        return self._spline

    def point_at_sigma(self, s):
        p = self._point_spline()(np.clip(s, 0.0, self.length))
        return _normalize_rows(p) if np.ndim(p) > 1 else p / np.linalg.norm(p)

    def kg_at_sigma(self, s):
        return self._interp(self.kg_tab, s)

    def cum_theta(self, s):
        return self._interp(self.theta_tab, s)

    def cum_int_T_dtheta(self, s):
        return self._interp(self.iTdth_tab, s)

    def cum_int_T_dsigma(self, s):
        return self._interp(self.iTds_tab, s)

    def sigma_from_theta(self, th):
        th = np.clip(th, 0.0, self.theta)
        return np.interp(th, self.theta_tab, self.sigma_tab)

    def min_kg(self):
        return float(np.min(self.kg_tab))


# ---------------------------------------------------------------------------
# prescribed-curvature integration on the sphere
# ---------------------------------------------------------------------------

def _integrate_kg(p0, u0, kg_fn, lengths, n_steps=RAMP_STEPS, want_path=False):
    """Integrate p' = u, u' = -p + kg(s) (p x u) by RK4, batched.

    p0, u0: (B, 3); kg_fn(s_norm) -> (B,) with s_norm in [0, 1];
    lengths: (B,).  Returns final (p, u) and optionally the sampled path.
    """
    p = np.array(p0, dtype=float, copy=True)
    u = np.array(u0, dtype=float, copy=True)
    if p.ndim == 1:
        p = p[None, :]
        u = u[None, :]
    lengths = np.atleast_1d(np.asarray(lengths, dtype=float))
    h = (lengths / n_steps)[:, None]
    path = [p.copy()] if want_path else None

    def rhs(p, u, kg):
        return u, -p + kg[:, None] * np.cross(p, u)

    for i in range(n_steps):
        s0 = i / n_steps
        sm = (i + 0.5) / n_steps
        s1 = (i + 1) / n_steps
        k0, km, k1v = kg_fn(s0), kg_fn(sm), kg_fn(s1)
        dp1, du1 = rhs(p, u, k0)
        dp2, du2 = rhs(p + 0.5 * h * dp1, u + 0.5 * h * du1, km)
        dp3, du3 = rhs(p + 0.5 * h * dp2, u + 0.5 * h * du2, km)
        dp4, du4 = rhs(p + h * dp3, u + h * du3, k1v)
        p = p + (h / 6) * (dp1 + 2 * dp2 + 2 * dp3 + dp4)
        u = u + (h / 6) * (du1 + 2 * du2 + 2 * du3 + du4)
        # project back to the constraint manifold (unit sphere, tangency)
        p = _normalize_rows(p)
        u = u - np.einsum("ij,ij->i", u, p)[:, None] * p
        u = _normalize_rows(u)
        if want_path:
            path.append(p.copy())
    if want_path:
        return p, u, np.stack(path, axis=1)
    return p, u


BUMP_INT = 64.0 * 36.0 / 5040.0 * 0.62   # integral of each shifted ramp bump
BUMP_INT_LOBE = 64.0 * 36.0 / 5040.0 * 0.6  # integral of each lobe bump


class _RampProfile:
    """kg(s) = k0 + (k1 - k0) * S5(s) plus two nonnegative turning bumps.

    tau_early and tau_late are the extra turning (radians) carried by an
    early and a late bump; both nonnegative, so kg stays positive whenever
    the endpoint curvatures are.
    """

    def __init__(self, k0, k1, tau_early, tau_late, ell):
        self.k0, self.k1 = k0, k1
        self.tau_early, self.tau_late, self.ell = tau_early, tau_late, ell

    def __call__(self, s):
        a = self.tau_early / (BUMP_INT * self.ell)
        b = self.tau_late / (BUMP_INT * self.ell)
        return (
            self.k0
            + (self.k1 - self.k0) * _smoothstep5(s)
            + a * _bump_early(s)
            + b * _bump_late(s)
        )

    def min_value(self, grid=np.linspace(0, 1, 257)):
        return float(np.min(self(grid)))


def _profile_fn(k0, k1, tau_early, tau_late, ell):
    """Batched kg(s_norm) for rows of (tau_early, tau_late, ell)."""
    k0 = np.atleast_1d(np.asarray(k0, dtype=float))
    k1 = np.atleast_1d(np.asarray(k1, dtype=float))
    tau_early = np.atleast_1d(np.asarray(tau_early, dtype=float))
    tau_late = np.atleast_1d(np.asarray(tau_late, dtype=float))
    ell = np.atleast_1d(np.asarray(ell, dtype=float))
    a = tau_early / (BUMP_INT * ell)
    b = tau_late / (BUMP_INT * ell)

    def kg_fn(s):
        return k0 + (k1 - k0) * _smoothstep5(s) + a * _bump_early(s) + b * _bump_late(s)

    return kg_fn


def _solve_ramp(p_edge, u_edge, circle, kg_edge, direction=+1):
    """Clothoid between host-curve edge data and the tangent circle.

    direction=+1: starts at (p_edge, u_edge, kg_edge), ends on the circle
    tangent-forward with kg = cot(rho).  direction=-1: the returned piece is
    the time reversal (circle -> edge); it is found by integrating from
    (p_edge, -u_edge) with the negated curvature profile and a backward
    landing.  Unknowns are the extra turning and the length; batched grid
    initialization plus damped Newton.

    Returns ((tau, ell), landing_angle, path_points) with path_points ordered
    in the direction of traversal of the final piece.
    """
    p0 = np.asarray(p_edge, dtype=float)
    p0 = p0 / np.linalg.norm(p0)
    u0 = np.asarray(u_edge, dtype=float)
    u0 = u0 - (u0 @ p0) * p0
    u0 = u0 / np.linalg.norm(u0)
    if direction < 0:
        u0 = -u0
    k0, k1 = float(kg_edge), float(circle.kg)
    sgn = 1.0 if direction > 0 else -1.0
    m = circle.center_dir

    def residuals(taus, ells, n_steps=RAMP_STEPS, want_path=False):
        taus = np.atleast_1d(taus)
        ells = np.atleast_1d(ells)
        kg_fn_pos = _profile_fn(k0, k1, 0.5 * taus, 0.5 * taus, ells)

        def kg_fn(t):
            return sgn * kg_fn_pos(t)

        B = len(taus)
        out = _integrate_kg(
            np.broadcast_to(p0, (B, 3)), np.broadcast_to(u0, (B, 3)), kg_fn, ells,
            n_steps=n_steps, want_path=want_path,
        )
        p, u = out[0], out[1]
        res = np.stack([p @ m - circle.cos_rho, u @ m], axis=-1)
        return (res, (p, u), out[2] if want_path else None)

    taus = np.linspace(0.3, 2 * np.pi + 2.0, 28)
    ells = circle.rho * np.array([1.2, 2.0, 3.2, 5.0])
    TT, LL = np.meshgrid(taus, ells, indexing="ij")
    rr, (pp, uu), _ = residuals(TT.ravel(), LL.ravel())
    # landing must run forward (direction=+1) or backward (direction=-1)
    along = np.einsum("ij,ij->i", uu, np.cross(m, pp)) * sgn
    score = np.linalg.norm(rr, axis=1) + np.where(along > 0, 0.0, 10.0)
    order = np.argsort(score)

    for start in order[:8]:
        z = np.array([TT.ravel()[start], LL.ravel()[start]])
        failed = False
        for _ in range(60):
            r = residuals(z[:1] * 0 + z[0], z[1:])[0][0]
            r_norm = np.linalg.norm(r)
            if r_norm < 1e-12:
                break
            d0, d1 = 1e-6, max(1e-9, 1e-6 * z[1])
            rs = residuals(
                np.array([z[0], z[0] + d0, z[0]]),
                np.array([z[1], z[1], z[1] + d1]),
            )[0]
            J = np.stack([(rs[1] - rs[0]) / d0, (rs[2] - rs[0]) / d1], axis=-1)
            try:
                step = np.linalg.solve(J, r)
            except np.linalg.LinAlgError:
                failed = True
                break
            lam = 1.0
            for _ in range(14):
                cand = z - lam * step
                if cand[0] > 0 and cand[1] > 0:
                    rc = residuals(cand[:1], cand[1:])[0][0]
                    if np.linalg.norm(rc) < r_norm:
                        break
                lam *= 0.5
            else:
                failed = True
                break
            z = z - lam * step
        if failed:
            continue
        r, (p_end, u_end), _ = residuals(z[:1], z[1:])
        if np.linalg.norm(r[0]) > 1e-10:
            continue
        beta = circle.angle_of(p_end[0])
        if (u_end[0] @ circle.tangent(beta)) * sgn < 0:
            continue
        prof = _RampProfile(k0, k1, 0.5 * z[0], 0.5 * z[0], z[1])
        if prof.min_value() <= 0.02 * min(k0, k1):
            continue
        _, _, path = residuals(z[:1], z[1:], n_steps=RAMP_TABLE - 1, want_path=True)
        pts = path[0]
        pts[-1] = circle.point(beta)
        if direction < 0:
            pts = pts[::-1].copy()
        return (float(z[0]), float(z[1])), float(beta), pts
    raise CurveError("ramp shooting failed at the anchor")


class _LobeFamily:
    """Length-variable "breathing wrap": a full circuit between two fixed
    circle angles whose colatitude profile flattens outward to absorb up to
    one circumference of extra length, continuously from zero.

    kg(s) = cot(rho) * exp(sum a_i b_i(s)) on the interior zone (stubs at
    the ends stay on the circle), closed by a Newton shoot on the three
    amplitudes.  The zero-extra member is the plain full wrap (amplitudes
    exactly zero) and the response of length and landing to flattening is
    first order, so the family continues smoothly from the bottom; all
    continuous insertion-length variation lives here because arcs between
    fixed angles are quantized to whole wraps.
    """

    N_GRID = 33
    CENTERS = (0.25, 0.5, 0.75)
    WIDTH = 0.5
    STUB_FRACTION = 0.04     # of the base length, at each end

    def __init__(self, circle: Circle, gamma_dep: float, gamma_ret: float):
        self.circle = circle
        self.gamma_dep = float(gamma_dep)
        self.gamma_ret = float(gamma_ret)
        sweep = (gamma_ret - gamma_dep) % (2 * np.pi) + 2 * np.pi
        self.sweep = sweep
        self.base_len = sweep * circle.sin_rho
        self.stub = self.STUB_FRACTION * self.base_len
        self.max_extra = circle.circumference
        self.p_dep = circle.point(gamma_dep)
        self.u_dep = circle.tangent(gamma_dep)
        self.p_ret = circle.point(gamma_ret)
        self.u_ret = circle.tangent(gamma_ret)
        self.w_ret = np.cross(self.p_ret, self.u_ret)
        self._tables = None
        self._piece_cache = {}

    # -- curvature profile ------------------------------------------------

    def _kg_fn(self, amps, ells):
        amps = np.atleast_2d(amps)
        ells = np.atleast_1d(np.asarray(ells, dtype=float))
        kg0 = self.circle.kg
        f0 = self.stub / ells

        def kg_fn(snorm):
            ss = np.atleast_1d(np.asarray(snorm, dtype=float))
            z = (ss - f0) / np.maximum(1.0 - 2 * f0, 1e-12)
            e = 0.0
            for j, c in enumerate(self.CENTERS):
                e = e + amps[:, j] * _bump(
                    np.clip((z - (c - self.WIDTH / 2)) / self.WIDTH, 0.0, 1.0)
                )
            return kg0 * np.exp(np.clip(e, -40.0, 40.0))

        return kg_fn

    def _residual(self, amps, ells):
        amps = np.atleast_2d(amps)
        ells = np.atleast_1d(np.asarray(ells, dtype=float))
        B = len(amps)
        kg_fn = self._kg_fn(amps, ells)
        p, u = _integrate_kg(
            np.broadcast_to(self.p_dep, (B, 3)),
            np.broadcast_to(self.u_dep, (B, 3)),
            kg_fn, ells,
        )
        d = p - self.p_ret
        return np.stack([d @ self.u_ret, d @ self.w_ret, u @ self.w_ret], axis=-1), (p, u)

    def _newton(self, ell, a, iters=60):
        scale = max(self.circle.sin_rho, 1e-12)
        for _ in range(iters):
            r, _ = self._residual(a[None, :], [ell])
            r = r[0]
            rn = np.linalg.norm(r)
            if rn < 1e-11 * scale:
                return a, True
            d = 1e-7 * max(1.0, np.max(np.abs(a)))
            a_batch = np.array([a, a + [d, 0, 0], a + [0, d, 0], a + [0, 0, d]])
            rs, _ = self._residual(a_batch, [ell] * 4)
            J = np.stack(
                [(rs[1] - rs[0]) / d, (rs[2] - rs[0]) / d, (rs[3] - rs[0]) / d], axis=-1
            )
            step, *_ = np.linalg.lstsq(J, r, rcond=1e-13)
            lam = 1.0
            improved = False
            for _ in range(18):
                cand = a - lam * step
                rc, _ = self._residual(cand[None, :], [ell])
                if np.linalg.norm(rc[0]) < rn:
                    a = cand
                    improved = True
                    break
                lam *= 0.5
            if not improved:
                return a, False
        r, _ = self._residual(a[None, :], [ell])
        return a, bool(np.linalg.norm(r[0]) < 1e-10 * scale)

    def _build_tables(self):
        """Continue upward from the exact plain-wrap member (amplитudes 0),
        bisecting steps adaptively when Newton fails."""
        fr_targets = np.linspace(0.0, 1.0, self.N_GRID)
        nodes = [(self.base_len, np.zeros(3))]
        a = np.zeros(3)
        prev = None
        f_cur = 0.0
        for f_tgt in fr_targets[1:]:
            f_hi = f_tgt
            while True:
                ell = self.base_len + f_hi * self.max_extra
                seeds = [a.copy()]
                if prev is not None:
                    seeds.insert(0, a + (a - prev))
                got = False
                for a_try in seeds:
                    a_new, ok = self._newton(float(ell), np.asarray(a_try, dtype=float))
                    if ok:
                        got = True
                        break
                if got:
                    prev, a = a, a_new
                    nodes.append((ell, a.copy()))
                    f_cur = f_hi
                    if abs(f_hi - f_tgt) < 1e-12:
                        break
                    f_hi = f_tgt
                else:
                    f_new = 0.5 * (f_cur + f_hi)
                    if f_new - f_cur < 1e-5:
                        raise CurveError("lobe family continuation failed")
                    f_hi = f_new
        ells = np.array([n[0] for n in nodes])
        sols = np.array([n[1] for n in nodes])
        order = np.argsort(ells)
        ells, sols = ells[order], sols[order]
        self._tables = (ells, [PchipInterpolator(ells, sols[:, j]) for j in range(3)])
        # tabulate the piece integrals for interpolated fast evaluation
        ints = np.empty((len(ells), 8))
        for i, ell in enumerate(ells):
            piece = self._make_piece(sols[i], float(ell))
            ints[i] = np.concatenate([
                [piece.length, piece.theta], piece.int_T_dsigma, piece.int_T_dtheta
            ])
        self._int_tables = [PchipInterpolator(ells, ints[:, j]) for j in range(8)]

    def params_at(self, ell_c):
        if self._tables is None:
            self._build_tables()
        ells, interps = self._tables
        ell_c = float(np.clip(ell_c, ells[0], ells[-1]))
        return np.array([float(f(ell_c)) for f in interps]), ell_c

    def _make_piece(self, a, ell_c) -> TablePiece:
        kg_fn = self._kg_fn(np.asarray(a)[None, :], [ell_c])
        _, u_fin, path = _integrate_kg(self.p_dep[None, :], self.u_dep[None, :], kg_fn,
                                       [ell_c], n_steps=RAMP_TABLE - 1, want_path=True)
        pts = _close_endpoint(path[0], self.p_ret, self.u_ret, u_end=u_fin[0])
        return TablePiece(pts, tag="lobe", origin=self.circle.point(self.gamma_dep))

    def piece(self, ell_c) -> TablePiece:
        """Tabulated lobe of prescribed length (interpolated amplitudes,
        Newton-polished, graded rotation closing the endpoints exactly)."""
        key = round(float(ell_c), 13)
        hit = self._piece_cache.get(key)
        if hit is not None:
            return hit
        a, ell_c = self.params_at(ell_c)
        a, _ = self._newton(ell_c, a, iters=3)
        piece = self._make_piece(a, ell_c)
        if len(self._piece_cache) > 4096:
            self._piece_cache.clear()
        self._piece_cache[key] = piece
        return piece

    def integrals(self, ell_c):
        """(length, theta, int_T_dsigma, int_T_dtheta) interpolated on the
        family grid; used by the fast average evaluator."""
        if self._tables is None:
            self._build_tables()
        ells = self._tables[0]
        ell_c = float(np.clip(ell_c, ells[0], ells[-1]))
        vals = np.array([float(f(ell_c)) for f in self._int_tables])
        return vals[0], vals[1], vals[2:5], vals[5:8]


def _close_endpoint(pts, p_target, u_target, u_end=None):
    """Apply a graded rotation so the path ends exactly at (p_target,
    u_target); the interpolation miss is tiny, so curvature is unaffected."""
    p_end = pts[-1]
    if u_end is None:
        u_end = pts[-1] - pts[-2]
    u_end = u_end - (u_end @ p_end) * p_end
    u_end = u_end / np.linalg.norm(u_end)
    f1 = np.stack([p_end, u_end, np.cross(p_end, u_end)])
    u_t = u_target - (u_target @ p_target) * p_target
    u_t = u_t / np.linalg.norm(u_t)
    f2 = np.stack([p_target, u_t, np.cross(p_target, u_t)])
    rot = f2.T @ f1  # maps end frame onto target frame
    # rotation vector
    w_vec = np.array([rot[2, 1] - rot[1, 2], rot[0, 2] - rot[2, 0], rot[1, 0] - rot[0, 1]])
    s_norm = np.linalg.norm(w_vec)
    c_tr = (np.trace(rot) - 1) / 2
    angle = np.arctan2(0.5 * s_norm, c_tr)
    if angle < 1e-300:
        out = pts.copy()
        out[-1] = p_target
        return out
    axis = w_vec / max(s_norm, 1e-300)
    t = np.linspace(0.0, 1.0, len(pts))
    ang = _smoothstep5(t) * angle
    # Rodrigues applied per point with graded angle
    k = axis
    cosA = np.cos(ang)[:, None]
    sinA = np.sin(ang)[:, None]
    kxp = np.cross(np.broadcast_to(k, pts.shape), pts)
    kdp = (pts @ k)[:, None]
    out = pts * cosA + kxp * sinA + np.broadcast_to(k, pts.shape) * kdp * (1 - cosA)
    out = _normalize_rows(out)
    out[-1] = p_target
    return out


# ---------------------------------------------------------------------------
# anchor selection and barycentric map
# ---------------------------------------------------------------------------

def _tetra_margins(verts4: np.ndarray, x0: np.ndarray) -> float:
    """Margin of x0 inside the tetrahedron (min signed face distance)."""
    vals = np.empty(4)
    for i in range(4):
        face = np.delete(verts4, i, axis=0)
        n = np.cross(face[1] - face[0], face[2] - face[0])
        nn = np.linalg.norm(n)
        if nn < 1e-300:
            return -np.inf
        n = n / nn
        if n @ (verts4[i] - face[0]) < 0:
            n = -n
        vals[i] = n @ (x0 - face[0])
    return float(np.min(vals))


def _subset_margin(points: np.ndarray, x0: np.ndarray) -> float:
    if len(points) == 4:
        return _tetra_margins(points, x0)
    return hull_margin(points, x0)


def select_anchors(T: SphericalCurve, x0, max_pool: int = 13):
    """Steinitz-style anchor selection: 4 to 6 samples of T whose hull
    contains x0, preferring the minimal count and maximizing the hull margin
    about x0 among searched subsets.  Ball radius is 0.9 x that margin.
    """
    x0 = np.asarray(x0, dtype=float)
    pts = T.points
    if hull_margin(pts, x0) <= 0:
        raise CurveError("average outside hull interior; perturb input (nonflat) first")
    try:
        hull = ConvexHull(pts)
        cand_idx = np.array(hull.vertices)
    except QhullError:
        raise CurveError("average outside hull interior; perturb input (nonflat) first")

    if len(cand_idx) > max_pool:
        cpts = pts[cand_idx]
        chosen = [int(np.argmax(np.linalg.norm(cpts - cpts.mean(axis=0), axis=1)))]
        d = np.linalg.norm(cpts - cpts[chosen[0]], axis=1)
        while len(chosen) < max_pool:
            nxt = int(np.argmax(d))
            chosen.append(nxt)
            d = np.minimum(d, np.linalg.norm(cpts - cpts[nxt], axis=1))
        cand_idx = cand_idx[np.array(chosen)]

    best_margin, best_subset = -np.inf, None
    cpts = pts[cand_idx]
    for quad in itertools.combinations(range(len(cand_idx)), 4):
        m = _tetra_margins(cpts[list(quad)], x0)
        if m > best_margin:
            best_margin, best_subset = m, list(quad)

    # Steinitz-minimal: augment to 5 or 6 anchors only when four cannot
    # contain x0 strictly
    while best_subset is not None and best_margin <= 0 and len(best_subset) < 6:
        gain, gain_k = best_margin, None
        for k in range(len(cand_idx)):
            if k in best_subset:
                continue
            m = _subset_margin(cpts[best_subset + [k]], x0)
            if m > gain:
                gain, gain_k = m, k
        if gain_k is None:
            break
        best_subset.append(gain_k)
        best_margin = gain

    if best_subset is None or best_margin <= 0:
        raise CurveError("average outside hull interior; perturb input (nonflat) first")
    idx = np.sort(cand_idx[np.array(best_subset)])
    return T.params[idx].copy(), pts[idx].copy(), Ball(x0.copy(), 0.9 * best_margin)


def lambda_map(anchor_points: np.ndarray, ball: Ball, lam_floor: float = 0.01):
    """Affine coefficients lambda(x) = P x + o with sum 1 and sum lambda_i v_i = x.

    Minimum-norm construction (affine, hence continuous); when the minimum-
    norm coefficients at the center are not safely positive the map is
    re-centered on an interior solution, and the ball is halved until
    min over the ball of every lambda_i reaches lam_floor.
    Returns (P, o, lam_bar, ball).
    """
    v = np.asarray(anchor_points, dtype=float)
    n = len(v)
    A = np.vstack([v.T, np.ones(n)])  # 4 x n
    if np.linalg.matrix_rank(A, tol=1e-10 * np.max(np.abs(A))) < 4:
        raise CurveError("degenerate anchor set")
    pinv = np.linalg.pinv(A)
    P = pinv[:, :3]
    o = pinv[:, 3]
    x0 = np.asarray(ball.center, dtype=float)
    lam0 = P @ x0 + o
    if np.min(lam0) <= lam_floor:
        res = linprog(
            c=np.concatenate([np.zeros(n), [-1.0]]),
            A_ub=np.hstack([-np.eye(n), np.ones((n, 1))]),
            b_ub=np.zeros(n),
            A_eq=np.hstack([A, np.zeros((4, 1))]),
            b_eq=np.concatenate([x0, [1.0]]),
            bounds=[(None, None)] * n + [(None, None)],
            method="highs",
        )
        if not res.success or res.x[-1] <= 0:
            raise CurveError("degenerate anchor set")
        o = o + (res.x[:n] - lam0)  # shift: still affine, still exact
        lam0 = res.x[:n]
    grad_norm = np.linalg.norm(P, axis=1)
    R = ball.radius
    for _ in range(80):
        lam_bar = float(np.min(lam0 - R * grad_norm))
        if lam_bar >= lam_floor:
            return P, o, lam_bar, Ball(x0.copy(), R)
        R *= 0.5
    raise CurveError("cannot achieve positive lambda floor on any ball")


def tangent_circle(T: SphericalCurve, anchor_param: float, R: float, n_anchors: int,
                   max_kg: float, radius_factor: float = 0.75) -> Circle:
    """Tangent circle at an anchor, on the convex side, with the shared
    radius rule sin(rho) = radius_factor * R/(4n), capped so cot(rho) >= max_kg."""
    p = T.evaluate(anchor_param)
    p = p / np.linalg.norm(p)
    u = T.derivative(anchor_param)
    sp = np.linalg.norm(u)
    if sp <= 0:
        raise CurveError("anchor tangent undefined")
    u = u / sp
    d2 = T.derivative(anchor_param, 2)
    kg_anchor = float(np.cross(p, u) @ d2) / sp**2
    side = 1.0 if kg_anchor >= 0 else -1.0
    sin_rho = min(radius_factor * R / (4 * n_anchors), 0.9 / np.sqrt(1.0 + max_kg**2))
    if sin_rho <= 0 or sin_rho >= 1:
        raise CurveError("shrink R or refine T")
    return Circle.from_anchor(p, u, float(np.arcsin(sin_rho)), side)


def _host_kg(T: SphericalCurve, tt):
    """Invariant geodesic curvature of T from its spline derivatives."""
    tt = np.atleast_1d(tt)
    p = _normalize_rows(np.atleast_2d(T.evaluate(tt)))
    d1 = np.atleast_2d(T.derivative(tt))
    d2 = np.atleast_2d(T.derivative(tt, 2))
    v = np.linalg.norm(d1, axis=1)
    return np.einsum("ij,ij->i", np.cross(p, d1), d2) / np.maximum(v, 1e-300) ** 3


# ---------------------------------------------------------------------------
# anchor windows
# ---------------------------------------------------------------------------

class AnchorWindow:
    """Splice window: the host curve between t_minus and t_plus is replaced
    by [ramp-in clothoid] [circle arc] [ramp-out clothoid].

    Both ramps land on the circle at free angles and are solved once; the
    arc between the landings is the loop-insertion carrier, whose sweep
    varies continuously (wraps included), so inserted length and total
    geodesic curvature are exactly linear in the requested loop length.
    """

    def __init__(self, T: SphericalCurve, t_star: float, circle: Circle,
                 proximity_factor: float = 0.35):
        self.T = T
        self.t_star = float(t_star)
        self.circle = circle
        anchor = circle.point(0.0)
        v_star = max(float(np.linalg.norm(T.derivative(t_star))), 1e-300)
        hw = proximity_factor * circle.rho / v_star
        for _ in range(200):
            tt = np.linspace(t_star - hw, t_star + hw, 33)
            ang = np.arccos(np.clip(np.atleast_2d(T.evaluate(tt)) @ anchor, -1.0, 1.0))
            if np.max(ang) <= proximity_factor * circle.rho:
                break
            hw *= 0.7
        else:
            raise CurveError(f"window at t={t_star}: host never close to the circle")
        self.t_minus = t_star - hw
        self.t_plus = t_star + hw
        kg_edges = _host_kg(T, [self.t_minus, self.t_plus])

        def edge_data(t):
            p = T.evaluate(t)
            p = p / np.linalg.norm(p)
            u = T.derivative(t)
            u = u - (u @ p) * p
            return p, u / np.linalg.norm(u)

        p_in, u_in = edge_data(self.t_minus)
        _, self.beta_in, pts_in = _solve_ramp(p_in, u_in, circle, kg_edges[0], +1)
        self.ramp_in = TablePiece(pts_in, tag="ramp_in", origin=anchor)

        p_out, u_out = edge_data(self.t_plus)
        _, self.beta_out, pts_out = _solve_ramp(p_out, u_out, circle, kg_edges[1], -1)
        self.ramp_out = TablePiece(pts_out, tag="ramp_out", origin=anchor)

        if self.ramp_in.min_kg() <= 0 or self.ramp_out.min_kg() <= 0:
            raise CurveError(f"window at t={t_star}: ramp curvature lost positivity")
        sweep = (self.beta_out - self.beta_in) % (2 * np.pi)
        if sweep < 3 * BASE_SWEEP:
            sweep += 2 * np.pi
        self.base_arc_sweep = sweep
        # the lobe (continuous length knob) occupies the tail of the base arc
        self.gamma_dep = self.beta_in + sweep - BASE_SWEEP
        self.lobe = _LobeFamily(circle, self.gamma_dep, self.beta_out)
        self.pre_lobe_sweep = sweep - BASE_SWEEP

    def base_pieces(self):
        """Pieces at zero insertion: ramp-in, arc, trivial lobe, ramp-out."""
        return [
            self.ramp_in,
            CircleArcPiece(self.circle, self.beta_in, self.pre_lobe_sweep,
                           tag="window_arc"),
            self.lobe.piece(self.lobe.base_len),
            self.ramp_out,
        ]

    def insertion(self, ell: float):
        """Pieces with extra inserted length ell, continuous in ell: whole
        wraps go into the circle arc (C2 there) and the remainder into the
        breathing-wrap lobe."""
        if ell <= 0:
            return self.base_pieces(), 0.0
        wrap = self.circle.circumference
        m = int(np.floor(ell / wrap))
        rem = ell - m * wrap
        lobe = self.lobe.piece(self.lobe.base_len + rem)
        # the lobe table is interpolated; absorb its tiny length defect in
        # the arc so the total inserted length is exact
        arc_sweep = self.pre_lobe_sweep + 2 * np.pi * m + (
            (self.lobe.base_len + rem) - lobe.length
        ) / self.circle.sin_rho
        if arc_sweep < 0:
            arc_sweep = self.pre_lobe_sweep + 2 * np.pi * m
        pieces = [
            self.ramp_in,
            CircleArcPiece(self.circle, self.beta_in, arc_sweep, tag="insert_arc"),
            lobe,
            self.ramp_out,
        ]
        return pieces, 2 * np.pi * m + rem / self.circle.sin_rho


# ---------------------------------------------------------------------------
# public spec-level splice and loop operations
# ---------------------------------------------------------------------------

def splice_anchor(T: SphericalCurve, circle: Circle, window: float | None = None,
                  t_star=None, n_out: int | None = None) -> SphericalCurve:
    """T modified near the anchor to coincide with the tangent circle arc,
    joined by prescribed-curvature ramps; unchanged outside the window.

    The replacement is re-parametrized at constant speed across the window.
    """
    if t_star is None:
        raise CurveError("t_star (anchor parameter) is required")
    win = AnchorWindow(T, t_star, circle)
    if window is not None and (t_star - window <= T.a or t_star + window >= T.b):
        raise CurveError("windows overlap the curve endpoints")
    if win.t_minus <= T.a or win.t_plus >= T.b:
        raise CurveError("windows overlap the curve endpoints")
    pieces = win.base_pieces()
    lens = np.array([p.length for p in pieces])
    starts = np.concatenate([[0.0], np.cumsum(lens)])
    total = starts[-1]

    n = n_out or max(4 * T.n_samples, 4097)
    tt = np.linspace(T.a, T.b, n)
    pts = np.atleast_2d(T.evaluate(tt))
    mask = (tt > win.t_minus) & (tt < win.t_plus)
    if mask.sum() < 64:
        n = min(int(np.ceil(128 * (T.b - T.a) / (win.t_plus - win.t_minus))), 2_000_000)
        tt = np.linspace(T.a, T.b, n)
        pts = np.atleast_2d(T.evaluate(tt))
        mask = (tt > win.t_minus) & (tt < win.t_plus)
    frac = (tt[mask] - win.t_minus) / (win.t_plus - win.t_minus)
    sig = frac * total
    idx = np.clip(np.searchsorted(starts, sig, side="right") - 1, 0, len(pieces) - 1)
    out = np.empty((mask.sum(), 3))
    for i in np.unique(idx):
        sel = idx == i
        out[sel] = np.atleast_2d(pieces[i].point_at_sigma(sig[sel] - starts[i]))
    pts[mask] = out
    pts = _normalize_rows(pts)
    if T.closed:
        pts[-1] = pts[0]
    return SphericalCurve(tt, pts, closed=T.closed)


def _nested_circle(circle: Circle, at_angle: float, circumference: float) -> Circle:
    """Tangent circle of the given circumference at a point of the host
    circle, on the same convex side (contained in the host disk)."""
    sin_rho_n = min(circumference / (2 * np.pi), circle.sin_rho)
    rho_n = float(np.arcsin(sin_rho_n))
    anchor = circle.point(at_angle)
    tangent = circle.tangent(at_angle)
    nested = Circle.from_anchor(anchor, tangent, rho_n, side=1.0)
    if nested.center_dir @ circle.center_dir < float(anchor @ circle.center_dir) * np.cos(rho_n):
        nested = Circle.from_anchor(anchor, tangent, rho_n, side=-1.0)
    return nested


def composite_loop(circle: Circle, ell: float):
    """Loop stack of total length ell at the anchor: full turns around the
    circle plus one nested shrinking loop carrying the remainder.

    The nested family is the tangent circle of circumference rem (same
    tangent, same convex side), which shrinks to the anchor as rem -> 0 and
    has geodesic curvature cot(rho') >= cot(rho).
    """
    if ell < 0:
        raise CurveError("loop length must be nonnegative")
    if ell == 0:
        return []
    wrap = circle.circumference
    m = int(np.floor(ell / wrap))
    rem = ell - m * wrap
    pieces = []
    if m > 0:
        pieces.append(CircleArcPiece(circle, 0.0, 2 * np.pi * m, tag="wrap"))
    if rem > 1e-15 * ell:
        nested = _nested_circle(circle, 0.0, rem)
        pieces.append(CircleArcPiece(nested, 0.0, 2 * np.pi, tag="nested"))
    return pieces


# ---------------------------------------------------------------------------
# loop system, spliced tantrix, composite path
# ---------------------------------------------------------------------------

@dataclass
class LoopSystem:
    anchor_params: np.ndarray
    anchor_points: np.ndarray
    ball: Ball
    lam_matrix: np.ndarray
    lam_offset: np.ndarray
    lam_bar: float
    rho: float
    circles: list

    @property
    def n(self):
        return len(self.anchor_params)

    def lam(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return self.lam_matrix @ x + self.lam_offset
        return x @ self.lam_matrix.T + self.lam_offset

    def to_dict(self):
        return {
            "anchor_params": np.asarray(self.anchor_params).tolist(),
            "anchor_points": np.asarray(self.anchor_points).tolist(),
            "ball": self.ball.to_dict(),
            "lambda_matrix": np.asarray(self.lam_matrix).tolist(),
            "lambda_offset": np.asarray(self.lam_offset).tolist(),
            "lambda_bar": float(self.lam_bar),
            "rho": float(self.rho),
            "circles": [c.to_dict() for c in self.circles],
        }


class SplicedTantrix:
    """Tantrix with splice windows at every anchor, decomposed into fixed
    tantrix spans plus per-anchor windows with variable insertions."""

    def __init__(self, T: SphericalCurve, loop_system: LoopSystem,
                 span_grid_factor: int = SPAN_GRID_FACTOR):
        self.T = T
        self.ls = loop_system
        self.windows = [
            AnchorWindow(T, tp, circ)
            for tp, circ in zip(loop_system.anchor_params, loop_system.circles)
        ]
        for i in range(len(self.windows) - 1):
            if self.windows[i].t_plus >= self.windows[i + 1].t_minus:
                raise CurveError("windows overlap")
        if self.windows[0].t_minus <= T.a or self.windows[-1].t_plus >= T.b:
            raise CurveError("windows overlap the curve endpoints")

        bounds = [T.a]
        for w in self.windows:
            bounds += [w.t_minus, w.t_plus]
        bounds.append(T.b)
        self.spans = [
            self._span_piece(bounds[2 * k], bounds[2 * k + 1], span_grid_factor)
            for k in range(len(self.windows) + 1)
        ]
        self.base_length = sum(p.length for p in self.spans) + sum(
            sum(p.length for p in w.base_pieces()) for w in self.windows
        )

    def _span_piece(self, ta, tb, factor):
        n = max(
            int(np.ceil(factor * (tb - ta) / max(self.T.span, 1e-300) * self.T.n_samples)),
            65,
        )
        tt = np.linspace(ta, tb, n)
        pts = _normalize_rows(np.atleast_2d(self.T.evaluate(tt)))
        return TablePiece(pts, tag="tantrix_span", origin=pts[len(pts) // 2])

    def assemble(self, ells) -> "CompositePath":
        """Full piece list for per-anchor insertion lengths ells."""
        pieces = [self.spans[0]]
        anchor_of = [-1]
        for k, w in enumerate(self.windows):
            win_pieces, _ = w.insertion(float(ells[k]))
            pieces.extend(win_pieces)
            anchor_of.extend([k] * len(win_pieces))
            pieces.append(self.spans[k + 1])
            anchor_of.append(-1)
        return CompositePath(pieces, windows=self.windows, anchor_of=anchor_of,
                             n_anchors=len(self.windows))

    def _fixed_sums(self):
        if not hasattr(self, "_fixed_cache"):
            length = theta = 0.0
            iTds = np.zeros(3)
            iTdth = np.zeros(3)
            per_anchor = []
            for k, w in enumerate(self.windows):
                for p in (w.ramp_in, w.ramp_out):
                    length += p.length
                    theta += p.theta
                    iTds = iTds + p.int_T_dsigma
                    iTdth = iTdth + p.int_T_dtheta
                per_anchor.append((w.ramp_in.theta + w.ramp_out.theta,
                                   w.ramp_in.length + w.ramp_out.length))
            for p in self.spans:
                length += p.length
                theta += p.theta
                iTds = iTds + p.int_T_dsigma
                iTdth = iTdth + p.int_T_dtheta
            self._fixed_cache = (length, theta, iTds, iTdth, per_anchor)
        return self._fixed_cache

    def fast_summary(self, ells, mode="torsion"):
        """Weighted averages without building pieces: closed-form arcs plus
        interpolated lobe integrals.  Returns (F, total_theta, total_length,
        per-anchor window theta, per-anchor window length)."""
        length, theta, iTds, iTdth, _ = self._fixed_sums()
        th_anchor = np.zeros(len(self.windows))
        len_anchor = np.zeros(len(self.windows))
        for k, w in enumerate(self.windows):
            ell = float(ells[k])
            wrap = w.circle.circumference
            if ell <= 0:
                m, rem = 0, 0.0
            else:
                m = int(np.floor(ell / wrap))
                rem = ell - m * wrap
            l_lobe, th_lobe, iTds_lobe, iTdth_lobe = w.lobe.integrals(w.lobe.base_len + rem)
            arc_sweep = w.pre_lobe_sweep + 2 * np.pi * m + (
                (w.lobe.base_len + rem) - l_lobe
            ) / w.circle.sin_rho
            arc = CircleArcPiece(w.circle, w.beta_in, max(arc_sweep, 0.0))
            length += arc.length + l_lobe
            theta += arc.theta + th_lobe
            iTds = iTds + arc.int_T_dsigma + iTds_lobe
            iTdth = iTdth + arc.int_T_dtheta + iTdth_lobe
            th_anchor[k] = arc.theta + th_lobe + self._fixed_sums()[4][k][0]
            len_anchor[k] = arc.length + l_lobe + self._fixed_sums()[4][k][1]
        F = iTdth / theta if mode == "torsion" else iTds / length
        return F, theta, length, th_anchor, len_anchor


def build_spliced(T: SphericalCurve, loop_system: LoopSystem) -> SplicedTantrix:
    return SplicedTantrix(T, loop_system)


class CompositePath:
    """Ordered pieces with prefix-summed integrals; constant-speed evaluation."""

    def __init__(self, pieces, windows=None, anchor_of=None, n_anchors=0):
        self.pieces = list(pieces)
        self.windows = windows or []
        self.anchor_of = list(anchor_of) if anchor_of is not None else [-1] * len(self.pieces)
        self.n_anchors = n_anchors
        lens = np.array([p.length for p in self.pieces])
        ths = np.array([p.theta for p in self.pieces])
        self.sigma_starts = np.concatenate([[0.0], np.cumsum(lens)])
        self.theta_starts = np.concatenate([[0.0], np.cumsum(ths)])
        self.iTds_starts = np.vstack(
            [np.zeros(3), np.cumsum([p.int_T_dsigma for p in self.pieces], axis=0)]
        )
        self.iTdth_starts = np.vstack(
            [np.zeros(3), np.cumsum([p.int_T_dtheta for p in self.pieces], axis=0)]
        )

    @property
    def total_length(self):
        return float(self.sigma_starts[-1])

    @property
    def total_theta(self):
        return float(self.theta_starts[-1])

    def average_theta_weighted(self):
        return self.iTdth_starts[-1] / self.total_theta

    def average_sigma_weighted(self):
        return self.iTds_starts[-1] / self.total_length

    def window_theta_by_anchor(self):
        """Theta carried by each anchor's window (ramps, arc, insertions)."""
        out = np.zeros(max(self.n_anchors, 1))
        for p, k in zip(self.pieces, self.anchor_of):
            if k >= 0:
                out[k] += p.theta
        return out[: self.n_anchors]

    def window_sigma_by_anchor(self):
        out = np.zeros(max(self.n_anchors, 1))
        for p, k in zip(self.pieces, self.anchor_of):
            if k >= 0:
                out[k] += p.length
        return out[: self.n_anchors]

    def _locate(self, values, starts):
        idx = np.clip(np.searchsorted(starts, values, side="right") - 1, 0,
                      len(self.pieces) - 1)
        return idx, values - starts[idx]

    def point_at_sigma(self, s):
        s = np.atleast_1d(np.clip(s, 0.0, self.total_length))
        idx, local = self._locate(s, self.sigma_starts)
        out = np.empty((len(s), 3))
        for i in np.unique(idx):
            m = idx == i
            out[m] = np.atleast_2d(self.pieces[i].point_at_sigma(local[m]))
        return out

    def kg_at_sigma(self, s):
        s = np.atleast_1d(np.clip(s, 0.0, self.total_length))
        idx, local = self._locate(s, self.sigma_starts)
        out = np.empty(len(s))
        for i in np.unique(idx):
            m = idx == i
            out[m] = self.pieces[i].kg_at_sigma(local[m])
        return out

    def sample_constant_torsion(self, t_grid, start_point):
        """Constant-torsion-density field on t_grid.

        Theta(phi(t)) = c (t - a) with c = Theta_total / span; positions are
        start + (1/c) * cumulative int T dTheta from the per-piece integrals.
        Returns (tangent points, positions, c).
        """
        t = np.asarray(t_grid, dtype=float)
        span = t[-1] - t[0]
        c = self.total_theta / span
        targets = np.clip(c * (t - t[0]), 0.0, self.total_theta)
        idx, local_th = self._locate(targets, self.theta_starts)
        pts = np.empty((len(t), 3))
        pos = np.empty((len(t), 3))
        for i in np.unique(idx):
            m = idx == i
            piece = self.pieces[i]
            s_loc = piece.sigma_from_theta(local_th[m])
            pts[m] = np.atleast_2d(piece.point_at_sigma(s_loc))
            pos[m] = self.iTdth_starts[i] + np.atleast_2d(piece.cum_int_T_dtheta(s_loc))
        return pts, np.asarray(start_point) + pos / c, c

    def sample_constant_speed(self, t_grid, start_point):
        """Constant-speed field on t_grid (curvature mode)."""
        t = np.asarray(t_grid, dtype=float)
        span = t[-1] - t[0]
        c = self.total_length / span
        targets = np.clip(c * (t - t[0]), 0.0, self.total_length)
        idx, local_s = self._locate(targets, self.sigma_starts)
        pts = np.empty((len(t), 3))
        pos = np.empty((len(t), 3))
        for i in np.unique(idx):
            m = idx == i
            piece = self.pieces[i]
            pts[m] = np.atleast_2d(piece.point_at_sigma(local_s[m]))
            pos[m] = self.iTds_starts[i] + np.atleast_2d(piece.cum_int_T_dsigma(local_s[m]))
        return pts, np.asarray(start_point) + pos / c, c

    def joint_sigmas(self):
        """Arclength positions of piece boundaries (construction joints)."""
        return self.sigma_starts[1:-1].copy()

    def min_kg(self):
        return float(np.min([p.min_kg() for p in self.pieces]))


def build_composite(spliced: SplicedTantrix, loop_system: LoopSystem, x,
                    L_tilde: float) -> CompositePath:
    """Composite path of total length L_tilde: the spliced tantrix with
    insertions of length lambda_i(x) * (L_tilde - L_base) at the anchors."""
    x = np.asarray(x, dtype=float)
    ball = loop_system.ball
    if np.linalg.norm(x - ball.center) > ball.radius * (1 + 1e-9):
        raise CurveError("x outside ball")
    extra = L_tilde - spliced.base_length
    if extra < -1e-9 * max(1.0, spliced.base_length):
        raise CurveError("requested length below the base composite length")
    lam = loop_system.lam(x)
    ells = np.maximum(lam * max(extra, 0.0), 0.0)
    return spliced.assemble(ells)
