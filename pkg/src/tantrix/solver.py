"""Average-matching solver with boundary certificate and length escalation.

The map F sends a ball point x to the parameter average of the reparametrized
composite path built with loop lengths lambda_i(x) * (L_tilde - L).  Because
the reparametrization weights parameter time by torsion density, that average
equals the Theta-weighted position integral divided by total Theta, which the
composite machinery assembles per piece; this is the default (fast) path.
The direct path rebuilds the average through the generic curve machinery and
is used for cross-checking only.

A boundary certificate |F(x) - x| < R on a sampled sphere backs the existence
guarantee; the solve itself runs damped fixed-point iteration with a Newton
polish and an exhaustive subdivision fallback.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .curves import CurveError, SphericalCurve, average, geodesic_profile
from .loops import CompositePath, LoopSystem, SplicedTantrix, build_composite
from .reparam import apply_reparam, solve_reparam

__all__ = [
    "AverageProblem",
    "SolveTrace",
    "eval_F",
    "boundary_certificate",
    "solve_average",
    "fibonacci_sphere",
]


@dataclass
class AverageProblem:
    """Average-matching problem on a ball, in torsion or curvature mode.

    f_override, when given, replaces the geometric F entirely (synthetic
    test maps); the loop system then only provides the ball.
    """

    loop_system: LoopSystem
    spliced: SplicedTantrix | None
    x0: np.ndarray
    length_schedule: tuple = ()
    mode: str = "torsion"
    residual_tol: float | None = None
    max_iterations: int = 200
    boundary_samples: int = 128
    safety_margin: float = 0.1
    f_override: object = None

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        if not self.length_schedule and self.spliced is not None:
            base = self.spliced.base_length
            self.length_schedule = tuple(base * (2.0**k) for k in range(1, 9))
        if self.residual_tol is None:
            self.residual_tol = max(1e-8 * self.loop_system.ball.radius, 1e-12)

    def tol(self):
        return self.residual_tol


@dataclass
class SolveTrace:
    iterations: int = 0
    evaluations: int = 0
    residuals: list = field(default_factory=list)
    certificates: list = field(default_factory=list)
    method: str = ""


def fibonacci_sphere(n: int) -> np.ndarray:
    """Spherical Fibonacci point set (unit vectors), deterministic."""
    k = np.arange(n, dtype=float)
    phi = (1 + np.sqrt(5.0)) / 2
    z = 1 - (2 * k + 1) / n
    theta = 2 * np.pi * k / phi
    r = np.sqrt(np.maximum(1 - z * z, 0.0))
    return np.stack([r * np.cos(theta), r * np.sin(theta), z], axis=1)


def eval_F(problem: AverageProblem, x, L_tilde: float, method: str = "fast"):
    """F(x) = average of the reparametrized composite of length L_tilde.

    method='fast' assembles the piecewise Theta-weighted integrals;
    method='direct' densely samples the composite at constant speed and runs
    it through the generic profile / reparametrize / average machinery.
    """
    x = np.asarray(x, dtype=float)
    if problem.f_override is not None:
        return np.asarray(problem.f_override(x), dtype=float)
    ball = problem.loop_system.ball
    if np.linalg.norm(x - ball.center) > ball.radius * (1 + 1e-9):
        raise CurveError("x outside ball")
    if method == "fast":
        spliced = problem.spliced
        extra = max(L_tilde - spliced.base_length, 0.0)
        ells = np.maximum(problem.loop_system.lam(x) * extra, 0.0)
        F, _, _, _, _ = spliced.fast_summary(ells, mode=problem.mode)
        return F
    if method == "pieces":
        path = build_composite(problem.spliced, problem.loop_system, x, L_tilde)
        if problem.mode == "torsion":
            return path.average_theta_weighted()
        return path.average_sigma_weighted()
    if method == "direct":
        path = build_composite(problem.spliced, problem.loop_system, x, L_tilde)
        return _eval_F_direct(problem, path)
    raise ValueError(f"unknown method {method!r}")


def _eval_F_direct(problem: AverageProblem, path: CompositePath, n_dense: int = 200_001):
    """Independent route: dense constant-speed samples -> profile ->
    reparametrize -> parameter average."""
    sig = np.linspace(0.0, path.total_length, n_dense)
    pts = path.point_at_sigma(sig)
    pts = pts / np.linalg.norm(pts, axis=1)[:, None]
    curve = SphericalCurve(sig, pts, closed=False)
    prof = geodesic_profile(curve)
    mode = problem.mode
    rep = solve_reparam(prof, mode=mode)
    reparametrized = apply_reparam(curve, rep)
    return average(reparametrized)


def boundary_certificate(problem: AverageProblem, L_tilde: float):
    """Sample |F(x) - x| on the ball boundary.

    Returns (holds, max_defect): holds when max_defect plus the safety margin
    stays below R on every sampled point.
    """
    ball = problem.loop_system.ball
    dirs = fibonacci_sphere(problem.boundary_samples)
    pts = ball.center + ball.radius * dirs
    defect = 0.0
    for p in pts:
        f = eval_F(problem, p, L_tilde)
        defect = max(defect, float(np.linalg.norm(f - p)))
    holds = defect + problem.safety_margin * ball.radius < ball.radius
    return bool(holds), defect


def _solve_fixed_budget(problem: AverageProblem, L_tilde: float, x_init=None,
                        trace: SolveTrace | None = None):
    """Find x in the ball with |F(x) - x0| <= tol at a fixed length budget.

    Damped fixed-point iteration, then Newton with finite-difference
    Jacobian, then subdivision search; raises if the resolution floor is hit.
    """
    ball = problem.loop_system.ball
    x0 = problem.x0
    tol = problem.tol()
    trace = trace if trace is not None else SolveTrace()

    def F(x):
        trace.evaluations += 1
        return eval_F(problem, x, L_tilde)

    def clip_to_ball(x):
        d = x - ball.center
        r = np.linalg.norm(d)
        if r > ball.radius:
            x = ball.center + d * (ball.radius / r)
        return x

    x = clip_to_ball(np.asarray(x_init, dtype=float) if x_init is not None else x0.copy())
    beta = 1.0
    res_prev = np.inf
    best_x, best_r = x.copy(), np.inf
    for it in range(problem.max_iterations):
        r_vec = F(x) - x0
        res = float(np.linalg.norm(r_vec))
        trace.iterations += 1
        trace.residuals.append(res)
        if res < best_r:
            best_x, best_r = x.copy(), res
        if res <= tol:
            return x, res, trace
        # Newton polish once the iteration stops making fast progress
        if it >= 2 and res > 0.5 * res_prev:
            xn, rn = _newton_polish(problem, F, x, r_vec, clip_to_ball)
            if rn < best_r:
                best_x, best_r = xn.copy(), rn
            if rn <= tol:
                return xn, rn, trace
            x, res = xn, rn
            if res > 0.9 * res_prev:
                break  # stagnated; go to subdivision
        else:
            if res > res_prev:
                beta *= 0.5
                if beta < 1e-6:
                    break
            x = clip_to_ball(x - beta * r_vec)
        res_prev = res

    x, res = _subdivision_search(problem, F, clip_to_ball, best_x, best_r)
    if res <= tol:
        return x, res, trace
    raise CurveError(
        f"solver resolution exceeded: best residual {res:.3e} above tol {tol:.3e}"
    )


def _newton_polish(problem, F, x, r_vec, clip_to_ball, max_steps: int = 25):
    ball = problem.loop_system.ball
    h = 1e-4 * ball.radius
    res = float(np.linalg.norm(r_vec))
    for _ in range(max_steps):
        J = np.empty((3, 3))
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            J[:, k] = (F(clip_to_ball(x + e)) - F(clip_to_ball(x - e))) / (2 * h)
        try:
            step = np.linalg.solve(J, r_vec)
        except np.linalg.LinAlgError:
            break
        x_new = clip_to_ball(x - step)
        r_new = F(x_new) - problem.x0
        res_new = float(np.linalg.norm(r_new))
        if not np.isfinite(res_new) or res_new >= res:
            # damped retry
            x_try = clip_to_ball(x - 0.5 * step)
            r_try = float(np.linalg.norm(F(x_try) - problem.x0))
            if r_try >= res:
                break
            x, res, r_vec = x_try, r_try, F(x_try) - problem.x0
        else:
            x, res, r_vec = x_new, res_new, r_new
        if res <= problem.tol():
            break
    return x, res


def _subdivision_search(problem, F, clip_to_ball, best_x, best_r):
    """Exhaustive octree refinement over the ball down to 1e-6 R resolution."""
    ball = problem.loop_system.ball
    tol = problem.tol()
    cells = [(ball.center.copy(), ball.radius)]
    x_best, r_best = best_x, best_r
    resolution = 1e-6 * ball.radius
    for _ in range(64):
        if not cells:
            break
        new_cells = []
        scored = []
        for center, half in cells:
            c = clip_to_ball(center)
            r = float(np.linalg.norm(F(c) - problem.x0))
            if r < r_best:
                x_best, r_best = c, r
            if r_best <= tol:
                return x_best, r_best
            scored.append((r, center, half))
        scored.sort(key=lambda s: s[0])
        # keep the most promising cells; a Lipschitz-style bound prunes cells
        # whose center residual cannot be beaten within the cell
        lip = max(4.0, 4 * r_best / max(resolution, 1e-300))
        for r, center, half in scored[:16]:
            if half < resolution:
                continue
            if r > r_best + 2.0 * half * lip:
                continue
            for dx in (-0.5, 0.5):
                for dy in (-0.5, 0.5):
                    for dz in (-0.5, 0.5):
                        new_cells.append(
                            (center + half * np.array([dx, dy, dz]), half / 2)
                        )
        cells = new_cells
        if all(h < resolution for _, h in cells) if cells else True:
            break
    return x_best, r_best


def solve_average(problem: AverageProblem, x_init=None):
    """Solve ave(T_x) = x0 at the smallest certified length budget.

    Returns (x_star, L_star, F_x_star, trace).  Escalates through the length
    schedule until the boundary certificate holds, then solves; raises when
    the schedule is exhausted without a certificate.
    """
    trace = SolveTrace()
    for L_tilde in problem.length_schedule:
        holds, defect = boundary_certificate(problem, L_tilde)
        trace.certificates.append(
            {"L_tilde": float(L_tilde), "holds": bool(holds), "max_defect": float(defect)}
        )
        if holds:
            x, res, trace = _solve_fixed_budget(problem, L_tilde, x_init, trace)
            trace.method = "certified"
            return x, float(L_tilde), eval_F(problem, x, L_tilde), trace
    raise CurveError("increase L_tilde schedule: no budget certified")
