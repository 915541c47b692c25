"""Analytic test-curve generators, sampled uniformly in arclength.

Each generator inverts its own analytic arclength (fine Gauss quadrature on
the exact speed plus Newton polish), so the emitted samples sit on the true
curve at near machine precision.  That matters: finite-difference torsion of
spline-resampled points would carry O(h) noise from the interpolation error.
"""

from __future__ import annotations

import math

import numpy as np

from .curves import CurveError, SpaceCurve

__all__ = ["torus_knot", "helix", "circle", "generate"]


def _arclength_uniform_params(xyz_fn, dxyz_fn, t_end: float, n: int, closed: bool) -> np.ndarray:
    """Parameter values t_k with equal arclength spacing on [0, t_end]."""
    fine = np.linspace(0.0, t_end, max(64 * n, 4096) + 1)
    nodes, weights = np.polynomial.legendre.leggauss(8)
    t0, t1 = fine[:-1], fine[1:]
    half = 0.5 * (t1 - t0)
    mid = 0.5 * (t0 + t1)
    tt = mid[:, None] + half[:, None] * nodes[None, :]
    sp = np.linalg.norm(dxyz_fn(tt.ravel()), axis=-1).reshape(tt.shape)
    cum = np.concatenate([[0.0], np.cumsum(half * (sp @ weights))])
    total = cum[-1]
    targets = np.linspace(0.0, total, n)
    t_sol = np.interp(targets, cum, fine)
    for _ in range(40):
        idx = np.clip(np.searchsorted(fine, t_sol) - 1, 0, len(fine) - 2)
        # residual arc from nearest fine knot, single Gauss panel
        h2 = 0.5 * (t_sol - fine[idx])
        m2 = 0.5 * (t_sol + fine[idx])
        tt2 = m2[:, None] + h2[:, None] * nodes[None, :]
        part = h2 * (np.linalg.norm(dxyz_fn(tt2.ravel()), axis=-1).reshape(tt2.shape) @ weights)
        res = cum[idx] + part - targets
        spd = np.linalg.norm(dxyz_fn(t_sol), axis=-1)
        step = res / np.maximum(spd, 1e-300)
        t_sol = np.clip(t_sol - step, 0.0, t_end)
        if np.max(np.abs(step)) < 1e-15 * t_end:
            break
    t_sol[0], t_sol[-1] = 0.0, t_end
    return t_sol, total


def torus_knot(p: int, q: int, r_major: float = 2.0, r_minor: float = 0.8, n: int = 4096) -> SpaceCurve:
    """(p, q) torus knot on the torus of radii (r_major, r_minor), closed,
    sampled uniformly in arclength."""
    if math.gcd(int(p), int(q)) != 1:
        raise CurveError(f"p and q must be coprime, got ({p}, {q})")
    p, q = int(p), int(q)

    def xyz(t):
        t = np.asarray(t, dtype=float)
        w = r_major + r_minor * np.cos(q * t)
        return np.stack([w * np.cos(p * t), w * np.sin(p * t), r_minor * np.sin(q * t)], axis=-1)

    def dxyz(t):
        t = np.asarray(t, dtype=float)
        w = r_major + r_minor * np.cos(q * t)
        dw = -q * r_minor * np.sin(q * t)
        return np.stack(
            [
                dw * np.cos(p * t) - w * p * np.sin(p * t),
                dw * np.sin(p * t) + w * p * np.cos(p * t),
                q * r_minor * np.cos(q * t),
            ],
            axis=-1,
        )

    t_sol, total = _arclength_uniform_params(xyz, dxyz, 2 * np.pi, n, closed=True)
    pts = xyz(t_sol)
    pts[-1] = pts[0]
    return SpaceCurve(np.linspace(0.0, total, n), pts, closed=True)


def helix(a: float, b: float, turns: float = 3.0, n: int = 4096) -> SpaceCurve:
    """Circular helix (a cos, a sin, b t), unit-speed sampled, open.

    Arclength inversion is closed form: s = t * sqrt(a^2 + b^2).
    """
    if a <= 0:
        raise CurveError("helix radius a must be positive")
    scale = math.hypot(a, b)
    total = 2 * np.pi * turns * scale
    s = np.linspace(0.0, total, n)
    u = s / scale
    pts = np.stack([a * np.cos(u), a * np.sin(u), b * u], axis=-1)
    return SpaceCurve(s, pts, closed=False)


def circle(radius: float = 1.0, n: int = 256) -> SpaceCurve:
    """Planar circle of given radius, closed, unit-speed sampled."""
    if radius <= 0:
        raise CurveError("radius must be positive")
    s = np.linspace(0.0, 2 * np.pi * radius, n)
    u = s / radius
    pts = np.stack([radius * np.cos(u), radius * np.sin(u), np.zeros_like(u)], axis=-1)
    pts[-1] = pts[0]
    return SpaceCurve(s, pts, closed=True)


def generate(kind: str, params: list, n: int = 4096) -> SpaceCurve:
    """Dispatch a generator by name with positional parameters."""
    if kind == "torus_knot":
        if len(params) < 2:
            raise CurveError("torus_knot needs p q [R_major r_minor]")
        p, q = int(params[0]), int(params[1])
        r_major = float(params[2]) if len(params) > 2 else 2.0
        r_minor = float(params[3]) if len(params) > 3 else 0.8
        return torus_knot(p, q, r_major, r_minor, n=n)
    if kind == "helix":
        if len(params) < 2:
            raise CurveError("helix needs a b [turns]")
        a, b = float(params[0]), float(params[1])
        turns = float(params[2]) if len(params) > 2 else 3.0
        return helix(a, b, turns, n=n)
    if kind == "circle":
        radius = float(params[0]) if params else 1.0
        return circle(radius, n=n)
    raise CurveError(f"unknown generator kind {kind!r}")
