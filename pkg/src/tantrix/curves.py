"""Discrete space and spherical curves with Frenet / geodesic analysis.

Curves are stored as sampled parametric data (strictly increasing parameter
grid, one 3-vector per sample) together with a cubic interpolation rule,
periodic when the curve is closed.  All derivative-based quantities are
computed with 5-point finite-difference stencils on uniformly spaced samples,
which gives O(h^4) accuracy for first and second derivatives and O(h^2) for
third derivatives in the interior.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial import ConvexHull, QhullError

__all__ = [
    "CurveError",
    "SpaceCurve",
    "SphericalCurve",
    "FrenetData",
    "GeodesicProfile",
    "resample_arclength",
    "frenet",
    "tantrix_of",
    "geodesic_profile",
    "average",
    "hull_margin",
    "c1_distance",
]

MIN_SAMPLES = 8


class CurveError(ValueError):
    """Invalid curve data or an operation's precondition failed."""


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise CurveError(f"points must be an (N, 3) array, got shape {pts.shape}")
    return pts


@dataclass
class SpaceCurve:
    """Sampled parametric curve in R^3 with cubic interpolation.

    For closed curves the sample set must contain both endpoints of the
    period, with the last point equal to the first; interpolation is then
    periodic and evaluation wraps modulo the period.
    """

    params: np.ndarray
    points: np.ndarray
    closed: bool = False
    _spline: CubicSpline | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=float)
        self.points = _as_points(self.points)
        if self.params.ndim != 1 or len(self.params) != len(self.points):
            raise CurveError("params and points must have matching length")
        if len(self.params) < MIN_SAMPLES:
            raise CurveError(f"need at least {MIN_SAMPLES} samples, got {len(self.params)}")
        if not np.all(np.diff(self.params) > 0):
            raise CurveError("params must be strictly increasing")
        if self.closed:
            gap = np.linalg.norm(self.points[-1] - self.points[0])
            if gap > 1e-12 * max(self.diameter(), 1e-300):
                raise CurveError(
                    f"closed curve endpoint mismatch {gap:.3e} exceeds 1e-12 of diameter"
                )

    # -- basic geometry -------------------------------------------------

    @property
    def a(self) -> float:
        return float(self.params[0])

    @property
    def b(self) -> float:
        return float(self.params[-1])

    @property
    def span(self) -> float:
        return self.b - self.a

    @property
    def n_samples(self) -> int:
        return len(self.params)

    def diameter(self) -> float:
        lo = self.points.min(axis=0)
        hi = self.points.max(axis=0)
        return float(np.linalg.norm(hi - lo))

    # -- interpolation ---------------------------------------------------

    def spline(self) -> CubicSpline:
        if self._spline is None:
            if self.closed:
                pts = self.points.copy()
                pts[-1] = pts[0]  # exact periodicity for the spline solver
                self._spline = CubicSpline(self.params, pts, bc_type="periodic")
            else:
                self._spline = CubicSpline(self.params, self.points)
        return self._spline

    def _wrap(self, t):
        t = np.asarray(t, dtype=float)
        if self.closed:
            return self.a + np.mod(t - self.a, self.span)
        return t

    def evaluate(self, t) -> np.ndarray:
        return self.spline()(self._wrap(t))

    def derivative(self, t, order: int = 1) -> np.ndarray:
        return self.spline()(self._wrap(t), order)

    def speed(self, t=None) -> np.ndarray:
        """Norm of the interpolant derivative, at the nodes by default."""
        if t is None:
            t = self.params
        d = self.derivative(t)
        return np.linalg.norm(np.atleast_2d(d), axis=-1)

    def integral(self, t0: float, t1: float) -> np.ndarray:
        """Integral of the interpolant over [t0, t1] (componentwise)."""
        anti = self.spline().antiderivative()
        if not self.closed:
            return anti(t1) - anti(t0)
        # split the range into whole periods plus a remainder
        per = self.span
        n_whole, rem = divmod(t1 - t0, per)
        t0w = self._wrap(t0)
        whole = n_whole * (anti(self.b) - anti(self.a))
        t1w = t0w + rem
        if t1w <= self.b:
            part = anti(t1w) - anti(t0w)
        else:
            part = (anti(self.b) - anti(t0w)) + (anti(self.a + (t1w - self.b)) - anti(self.a))
        return whole + part

    def arclength(self, n_refine: int = 8) -> float:
        """Total arclength of the interpolant (per-interval Gauss rule)."""
        s = _cumulative_arclength(self, n_refine)
        return float(s[-1])


class SphericalCurve(SpaceCurve):
    """Sampled curve constrained to the unit sphere."""

    SPHERE_TOL = 1e-10

    def __post_init__(self):
        super().__post_init__()
        norms = np.linalg.norm(self.points, axis=1)
        worst = np.max(np.abs(norms - 1.0))
        if worst > self.SPHERE_TOL:
            raise CurveError(f"samples deviate from unit sphere by {worst:.3e}")


@dataclass
class FrenetData:
    """Per-sample Frenet quantities of a unit-speed curve.

    torsion is defined only where curvature exceeds the floor; elsewhere
    torsion_defined is False and the stored value is 0.
    """

    params: np.ndarray
    speed: np.ndarray
    curvature: np.ndarray
    torsion: np.ndarray
    torsion_defined: np.ndarray
    tangent: np.ndarray
    normal: np.ndarray
    binormal: np.ndarray
    kappa_floor: float


@dataclass
class GeodesicProfile:
    """Speed / geodesic-curvature profile of a spherical curve.

    q = kg * v is the torsion density: its average over the parameter
    interval is the constant torsion achievable by reparametrization, and
    theta is its cumulative integral (total geodesic curvature).
    """

    params: np.ndarray
    speed: np.ndarray
    kg: np.ndarray
    q: np.ndarray
    theta: np.ndarray
    length: float
    closed: bool = False

    @property
    def total_theta(self) -> float:
        return float(self.theta[-1])

    @property
    def span(self) -> float:
        return float(self.params[-1] - self.params[0])


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------

# one-sided 5-point stencils (first row: at the boundary sample, second row:
# one sample in).  Third derivative one-sided is O(h^2).
_FWD1 = np.array([[-25, 48, -36, 16, -3], [-3, -10, 18, -6, 1]]) / 12.0
_FWD2 = np.array([[35, -104, 114, -56, 11], [11, -20, 6, 4, -1]]) / 12.0
_FWD3 = np.array([[-5, 18, -24, 14, -3], [-3, 10, -12, 6, -1]]) / 2.0


def _fd_uniform(values: np.ndarray, h: float, order: int, closed: bool) -> np.ndarray:
    """Derivative of uniformly sampled values by 5-point stencils.

    For closed data the last sample duplicates the first and wrap-around
    stencils are used everywhere.
    """
    y = np.asarray(values, dtype=float)
    n = len(y)
    if n < 6:
        raise CurveError("need at least 6 samples for 5-point stencils")
    if closed:
        core = y[:-1]
        ext = np.concatenate([core[-2:], core, core[:3]], axis=0)
        sl = [ext[i : i + len(core)] for i in range(5)]
        if order == 1:
            d = (sl[0] - 8 * sl[1] + 8 * sl[3] - sl[4]) / (12 * h)
        elif order == 2:
            d = (-sl[0] + 16 * sl[1] - 30 * sl[2] + 16 * sl[3] - sl[4]) / (12 * h * h)
        elif order == 3:
            d = (-sl[0] + 2 * sl[1] - 2 * sl[3] + sl[4]) / (2 * h**3)
        else:
            raise ValueError(f"unsupported derivative order {order}")
        return np.concatenate([d, d[:1]], axis=0)

    out = np.empty_like(y)
    sl = [y[i : n - 4 + i] for i in range(5)]
    if order == 1:
        out[2:-2] = (sl[0] - 8 * sl[1] + 8 * sl[3] - sl[4]) / (12 * h)
        fwd = _FWD1 / h
    elif order == 2:
        out[2:-2] = (-sl[0] + 16 * sl[1] - 30 * sl[2] + 16 * sl[3] - sl[4]) / (12 * h * h)
        fwd = _FWD2 / h**2
    elif order == 3:
        out[2:-2] = (-sl[0] + 2 * sl[1] - 2 * sl[3] + sl[4]) / (2 * h**3)
        fwd = _FWD3 / h**3
    else:
        raise ValueError(f"unsupported derivative order {order}")
    head = y[:5]
    tail = y[-5:][::-1]
    sign = -1.0 if order % 2 else 1.0
    out[0], out[1] = fwd @ head.reshape(5, -1)
    out[-1], out[-2] = (sign * fwd) @ tail.reshape(5, -1)
    return out


def _uniform_samples(curve: SpaceCurve):
    """Sample grid, values and step for FD work; resamples if non-uniform."""
    t = curve.params
    h = np.diff(t)
    if np.max(h) - np.min(h) <= 1e-9 * np.mean(h):
        return t, curve.points, float(np.mean(h))
    tu = np.linspace(curve.a, curve.b, curve.n_samples)
    return tu, curve.evaluate(tu), float(tu[1] - tu[0])


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def _cumulative_arclength(curve: SpaceCurve, n_refine: int = 8) -> np.ndarray:
    """Cumulative arclength at the sample params, via per-interval Gauss-Legendre."""
    nodes, weights = np.polynomial.legendre.leggauss(6)
    t0 = curve.params[:-1]
    t1 = curve.params[1:]
    half = 0.5 * (t1 - t0)
    mid = 0.5 * (t0 + t1)
    tt = mid[:, None] + half[:, None] * nodes[None, :]
    sp = np.linalg.norm(curve.derivative(tt.ravel()), axis=-1).reshape(tt.shape)
    seg = half * (sp @ weights)
    return np.concatenate([[0.0], np.cumsum(seg)])


def resample_arclength(curve: SpaceCurve, n: int) -> SpaceCurve:
    """Resample a curve to n samples uniform in arclength (unit-speed params).

    The returned curve has params spanning [0, L] where L is the total
    arclength, so its interpolant has speed 1 up to interpolation error.
    Raises CurveError("not immersed") when the sampled speed collapses.
    """
    if n < MIN_SAMPLES:
        raise CurveError(f"n must be at least {MIN_SAMPLES}")
    sp = curve.speed()
    if np.min(sp) < 1e-9 * np.mean(sp):
        raise CurveError("not immersed: speed collapses at a sample")
    s = _cumulative_arclength(curve)
    total = s[-1]
    targets = np.linspace(0.0, total, n)
    # locate then polish with Newton on the arclength function
    t_guess = np.interp(targets, s, curve.params)
    t_sol = t_guess.copy()
    anti_targets = targets
    for _ in range(30):
        # residual via local Gauss integration from nearest knot
        idx = np.clip(np.searchsorted(curve.params, t_sol) - 1, 0, len(s) - 2)
        res = s[idx] + _partial_arc(curve, curve.params[idx], t_sol) - anti_targets
        spd = np.linalg.norm(curve.derivative(t_sol), axis=-1)
        step = res / np.maximum(spd, 1e-300)
        t_sol = np.clip(t_sol - step, curve.a, curve.b)
        if np.max(np.abs(step)) < 1e-14 * max(curve.span, 1.0):
            break
    t_sol[0], t_sol[-1] = curve.a, curve.b
    pts = curve.evaluate(t_sol)
    if curve.closed:
        pts[-1] = pts[0]
    return SpaceCurve(targets, pts, closed=curve.closed)


def _partial_arc(curve: SpaceCurve, t0: np.ndarray, t1: np.ndarray) -> np.ndarray:
    """Vectorized arclength of the interpolant between t0 and t1 (Gauss 6-pt)."""
    nodes, weights = np.polynomial.legendre.leggauss(6)
    half = 0.5 * (t1 - t0)
    mid = 0.5 * (t0 + t1)
    tt = mid[:, None] + half[:, None] * nodes[None, :]
    sp = np.linalg.norm(curve.derivative(tt.ravel()), axis=-1).reshape(tt.shape)
    return half * (sp @ weights)


def frenet(curve: SpaceCurve, kappa_floor: float | None = None) -> FrenetData:
    """Frenet data of a unit-speed curve by finite differences.

    curvature = |f''| and torsion = det(f', f'', f''')/curvature^2; torsion is
    flagged undefined where curvature does not exceed the floor (default
    1e-6 / diameter).
    """
    t, pts, h = _uniform_samples(curve)
    if kappa_floor is None:
        kappa_floor = 1e-6 / max(curve.diameter(), 1e-12)
    f1 = _fd_uniform(pts, h, 1, curve.closed)
    f2 = _fd_uniform(pts, h, 2, curve.closed)
    f3 = _fd_uniform(pts, h, 3, curve.closed)
    speed = np.linalg.norm(f1, axis=1)
    kappa = np.linalg.norm(f2, axis=1)
    defined = kappa > kappa_floor
    tau = np.zeros_like(kappa)
    det = np.einsum("ij,ij->i", np.cross(f1, f2), f3)
    tau[defined] = det[defined] / kappa[defined] ** 2

    tangent = f1 / np.maximum(speed, 1e-300)[:, None]
    raw_n = f2 - np.einsum("ij,ij->i", f2, tangent)[:, None] * tangent
    n_norm = np.linalg.norm(raw_n, axis=1)
    normal = np.zeros_like(raw_n)
    ok = n_norm > 1e-300
    normal[ok] = raw_n[ok] / n_norm[ok, None]
    binormal = np.cross(tangent, normal)
    return FrenetData(t, speed, kappa, tau, defined, tangent, normal, binormal, kappa_floor)


def tantrix_of(curve: SpaceCurve) -> SphericalCurve:
    """Unit tangent curve (tantrix) of an immersed unit-speed curve."""
    d = curve.derivative(curve.params)
    sp = np.linalg.norm(d, axis=1)
    if np.min(sp) < 1e-9 * np.mean(sp):
        raise CurveError("not immersed: speed collapses at a sample")
    pts = d / sp[:, None]
    if curve.closed:
        pts[-1] = pts[0]
    return SphericalCurve(curve.params.copy(), pts, closed=curve.closed)


def geodesic_profile(sphere_curve: SphericalCurve, require_positive: bool = False) -> GeodesicProfile:
    """Speed, invariant geodesic curvature, torsion density and cumulatives.

    kg = <T'', T x T'> / v^3 is parametrization invariant; q = kg * v.
    theta is the cumulative trapezoid integral of q over the parameter.
    """
    t, pts, h = _uniform_samples(sphere_curve)
    d1 = _fd_uniform(pts, h, 1, sphere_curve.closed)
    d2 = _fd_uniform(pts, h, 2, sphere_curve.closed)
    v = np.linalg.norm(d1, axis=1)
    if np.min(v) < 1e-9 * max(np.mean(v), 1e-300):
        raise CurveError("spherical curve not immersed")
    kg = np.einsum("ij,ij->i", np.cross(pts, d1), d2) / v**3
    if require_positive and np.min(kg) <= 0:
        raise CurveError("nonpositive geodesic curvature")
    q = kg * v
    theta = np.concatenate([[0.0], np.cumsum(0.5 * (q[1:] + q[:-1]) * np.diff(t))])
    length = float(np.sum(0.5 * (v[1:] + v[:-1]) * np.diff(t)))
    return GeodesicProfile(t, v, kg, q, theta, length, closed=sphere_curve.closed)


def average(curve: SpaceCurve) -> np.ndarray:
    """Parameter average (1/|I|) * integral of the curve over its domain.

    Uses the interpolant's exact integral; for closed curves the duplicated
    endpoint makes this the periodic rule.
    """
    anti = curve.spline().antiderivative()
    return np.asarray(anti(curve.b) - anti(curve.a)) / curve.span


def hull_margin(points, x0) -> float:
    """Signed distance from x0 to the convex hull boundary of the points.

    Positive inside, negative outside, and 0 when the hull is degenerate
    (volume below 1e-12 * diameter^3).
    """
    pts = _as_points(points)
    if len(pts) < 4:
        raise CurveError("hull_margin needs at least 4 points")
    x0 = np.asarray(x0, dtype=float)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    diam = float(np.linalg.norm(hi - lo))
    if diam == 0.0:
        return 0.0
    try:
        hull = ConvexHull(pts)
    except QhullError:
        return 0.0
    if hull.volume < 1e-12 * diam**3:
        return 0.0
    # equations rows are (normal, offset) with normal . x + offset <= 0 inside
    dists = -(hull.equations[:, :3] @ x0 + hull.equations[:, 3])
    return float(np.min(dists))


def c1_distance(f: SpaceCurve, g: SpaceCurve) -> float:
    """C^1 distance: max |f - g| plus max |f' - g'| over a shared fine grid."""
    if f.closed != g.closed:
        raise CurveError("curves must share the closed flag")
    if abs(f.a - g.a) > 1e-12 * max(1.0, abs(f.a)) or abs(f.b - g.b) > 1e-12 * max(1.0, abs(f.b)):
        raise CurveError("curves must share the parameter interval")
    t = np.linspace(f.a, f.b, 4 * max(f.n_samples, g.n_samples))
    d0 = np.max(np.linalg.norm(f.evaluate(t) - g.evaluate(t), axis=1))
    d1 = np.max(np.linalg.norm(f.derivative(t) - g.derivative(t), axis=1))
    return float(d0 + d1)
