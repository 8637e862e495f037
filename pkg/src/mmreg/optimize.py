"""Moment-matching loss, BFGS minimization, and the registration pipeline.

Registration aligns a source cloud to a target cloud by minimizing

    L(theta) = sum_k ( m_k(T(X; theta)) - m_k(Y) )^2

over the six pose parameters, where m_k are empirical Gaussian-RBF moments.
The target moments are computed once; each iteration re-evaluates only the
transformed-source moments and their analytic pose gradient.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from .centers import CenterConfig, allocate_centers
from .core import InvalidInputError, NumericalFailureError, PointCloud, Pose
from .metrics import pose_errors
from .moments import (
    KernelBasis,
    MomentVector,
    empirical_moments,
    transformed_moments_and_gradient,
)

Objective = Callable[[NDArray[np.float64]], tuple[float, NDArray[np.float64]]]


@dataclass(frozen=True)
class MmrConfig:
    """Registration configuration.

    ``sigma_scale`` sets the kernel width as a fraction of the target
    cloud's bounding-box diagonal.  ``translation_bound_eta`` bounds the
    squared translation norm; ``None`` leaves it unbounded, and a finite
    bound is enforced by projection after each accepted step (violations
    are counted in the report, never silently clipped).
    """

    sigma_scale: float = 0.05
    center_cfg: CenterConfig = field(default_factory=CenterConfig)
    max_iters: int = 200
    grad_tol: float = 1e-9
    loss_rel_tol: float = 1e-12
    translation_bound_eta: float | None = None
    init_pose: Pose = field(default_factory=Pose.identity)
    n_workers: int | None = None

    def __post_init__(self) -> None:
        if self.sigma_scale <= 0 or not math.isfinite(self.sigma_scale):
            raise InvalidInputError("sigma_scale must be finite and > 0")
        if self.max_iters < 1:
            raise InvalidInputError("max_iters must be >= 1")
        if self.grad_tol <= 0 or self.loss_rel_tol <= 0:
            raise InvalidInputError("tolerances must be > 0")
        if self.translation_bound_eta is not None and self.translation_bound_eta <= 0:
            raise InvalidInputError("translation_bound_eta must be > 0 or None")


@dataclass(frozen=True)
class RegistrationReport:
    """Outcome of one registration run.

    ``rotation_error`` is in radians (converted to degrees only at output
    boundaries); error fields stay ``None`` unless a ground-truth pose was
    supplied.
    """

    estimated_pose: Pose
    final_loss: float
    iterations: int
    converged: bool
    wall_time: float
    translation_error: float | None = None
    rotation_error: float | None = None
    stop_reason: str = ""
    eta_violations: int = 0

    def __post_init__(self) -> None:
        if self.final_loss < 0 or not math.isfinite(self.final_loss):
            raise InvalidInputError(f"final_loss must be finite and >= 0, got {self.final_loss}")
        if self.iterations < 0:
            raise InvalidInputError("iterations must be >= 0")


def _check_moment_basis(basis: KernelBasis, target_moments: MomentVector) -> None:
    if not basis.matches(target_moments.basis):
        raise InvalidInputError("target moments were computed with a different basis")


def loss(source: PointCloud, target_moments: MomentVector, basis: KernelBasis,
         pose: Pose, n_workers: int | None = None) -> float:
    """Sum of squared per-center moment mismatches; always >= 0."""
    _check_moment_basis(basis, target_moments)
    source.require_nonempty("loss")
    values, _ = transformed_moments_and_gradient(basis, source, pose, n_workers)
    r = values - target_moments.values
    return float(r @ r)


def loss_gradient(source: PointCloud, target_moments: MomentVector,
                  basis: KernelBasis, pose: Pose,
                  n_workers: int | None = None) -> NDArray[np.float64]:
    """Gradient of :func:`loss` wrt (yaw, pitch, roll, tx, ty, tz)."""
    _check_moment_basis(basis, target_moments)
    source.require_nonempty("loss_gradient")
    values, jac = transformed_moments_and_gradient(basis, source, pose, n_workers)
    r = values - target_moments.values
    return 2.0 * (r @ jac)


@dataclass(frozen=True)
class BfgsResult:
    x: NDArray[np.float64]
    fun: float
    grad: NDArray[np.float64]
    iterations: int
    converged: bool
    stop_reason: str
    n_evals: int
    loss_history: tuple[float, ...]
    projections: int = 0


def _line_search(evaluate: Objective, x: NDArray[np.float64], p: NDArray[np.float64],
                 f0: float, g0: NDArray[np.float64], c1: float, c2: float):
    """Strong-Wolfe line search (sufficient decrease + curvature).

    Returns ``(alpha, x_new, f_new, g_new)`` or ``None`` when no acceptable
    step exists along ``p``.  Infinite trial values are treated as
    overshoots and bracketed away; NaNs abort the whole run upstream.
    """
    dphi0 = float(g0 @ p)
    if dphi0 >= 0.0:
        return None

    def trial(a: float):
        f, g = evaluate(x + a * p)
        return f, g, float(g @ p)

    def zoom(a_lo, f_lo, dphi_lo, g_lo, a_hi, f_hi):
        # Invariant: a_lo satisfies sufficient decrease, f_lo is the best
        # such value, and descent continues from a_lo toward a_hi.
        for _ in range(30):
            width = a_hi - a_lo
            denom = 2.0 * (f_hi - f_lo - dphi_lo * width)
            a_j = a_lo - dphi_lo * width * width / denom if denom != 0.0 else a_lo
            margin = 0.1 * abs(width)
            lo, hi = min(a_lo, a_hi), max(a_lo, a_hi)
            if not (lo + margin <= a_j <= hi - margin):
                a_j = 0.5 * (a_lo + a_hi)
            f_j, g_j, dphi_j = trial(a_j)
            if f_j > f0 + c1 * a_j * dphi0 or f_j >= f_lo:
                a_hi, f_hi = a_j, f_j
            else:
                if abs(dphi_j) <= -c2 * dphi0:
                    return a_j, f_j, g_j
                if dphi_j * (a_hi - a_lo) >= 0.0:
                    a_hi, f_hi = a_lo, f_lo
                a_lo, f_lo, dphi_lo, g_lo = a_j, f_j, dphi_j, g_j
            if abs(a_hi - a_lo) <= 1e-14 * max(1.0, abs(a_lo)):
                break
        # Curvature unreachable at this resolution: settle for the best
        # sufficient-decrease point rather than failing the iteration.
        if a_lo > 0.0:
            return a_lo, f_lo, g_lo
        return None

    a_prev, f_prev, dphi_prev, g_prev = 0.0, f0, dphi0, g0
    a = 1.0
    for i in range(25):
        f_a, g_a, dphi_a = trial(a)
        if f_a > f0 + c1 * a * dphi0 or (i > 0 and f_a >= f_prev):
            result = zoom(a_prev, f_prev, dphi_prev, g_prev, a, f_a)
            break
        if abs(dphi_a) <= -c2 * dphi0:
            result = a, f_a, g_a
            break
        if dphi_a >= 0.0:
            result = zoom(a, f_a, dphi_a, g_a, a_prev, f_prev)
            break
        a_prev, f_prev, dphi_prev, g_prev = a, f_a, dphi_a, g_a
        a = 2.0 * a
    else:
        result = None
    if result is None:
        return None
    alpha, f_new, g_new = result
    return alpha, x + alpha * p, f_new, g_new


def bfgs_minimize(
    fun_and_grad: Objective,
    x0: NDArray[np.float64],
    *,
    max_iters: int = 200,
    grad_tol: float = 1e-9,
    loss_rel_tol: float = 1e-12,
    c1: float = 1e-4,
    c2: float = 0.9,
    project: Callable[[NDArray[np.float64]], NDArray[np.float64]] | None = None,
) -> BfgsResult:
    """BFGS with a strong-Wolfe line search (c1 sufficient decrease, c2
    curvature), inverse-Hessian approximation started at the identity.

    Stops when the gradient max-norm falls below ``grad_tol``, the relative
    per-iteration loss decrease falls below ``loss_rel_tol``, or after
    ``max_iters`` iterations.  Curvature-violating secant pairs are skipped.
    ``project``, when given, is applied after each accepted step; a step it
    alters counts as a projection and resets the curvature model.

    Raises :class:`NumericalFailureError`, carrying the last valid iterate,
    when the objective or gradient turns NaN.
    """
    x = np.array(x0, dtype=np.float64).reshape(-1)
    n = x.size
    state = {"evals": 0, "x": x, "f": math.inf}

    def evaluate(z: NDArray[np.float64]) -> tuple[float, NDArray[np.float64]]:
        state["evals"] += 1
        f, g = fun_and_grad(z)
        f = float(f)
        g = np.asarray(g, dtype=np.float64).reshape(n)
        if math.isnan(f) or np.isnan(g).any():
            raise NumericalFailureError(
                "objective or gradient is NaN", last_x=state["x"], last_f=state["f"])
        return f, g

    f, g = evaluate(x)
    if not (math.isfinite(f) and np.all(np.isfinite(g))):
        raise NumericalFailureError(
            "objective or gradient not finite at the starting point", last_x=x, last_f=f)
    state["x"], state["f"] = x, f

    history = [f]
    identity = np.eye(n)
    H = identity.copy()
    projections = 0
    iterations = 0
    converged = False
    stop_reason = "max_iters"

    if float(np.max(np.abs(g))) < grad_tol:
        return BfgsResult(x, f, g, 0, True, "grad_tol", state["evals"], tuple(history))

    while iterations < max_iters:
        step = _line_search(evaluate, x, -(H @ g), f, g, c1, c2)
        if step is None and not np.array_equal(H, identity):
            # Stale curvature model; retry once along steepest descent.
            H = identity.copy()
            step = _line_search(evaluate, x, -g, f, g, c1, c2)
        if step is None:
            stop_reason = "line_search_failed"
            break
        _, x_new, f_new, g_new = step
        iterations += 1

        if project is not None:
            x_proj = project(x_new)
            if not np.array_equal(x_proj, x_new):
                projections += 1
                x_new = x_proj
                f_new, g_new = evaluate(x_new)
                H = identity.copy()

        if not (math.isfinite(f_new) and np.all(np.isfinite(g_new))):
            raise NumericalFailureError(
                "objective or gradient not finite at accepted iterate",
                last_x=x, last_f=f)

        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-10 * float(np.linalg.norm(s) * np.linalg.norm(y)):
            rho = 1.0 / sy
            A = identity - rho * np.outer(s, y)
            H = A @ H @ A.T + rho * np.outer(s, s)

        rel_decrease = (f - f_new) / max(abs(f), 1e-300)
        x, f, g = x_new, f_new, g_new
        state["x"], state["f"] = x, f
        history.append(f)

        if float(np.max(np.abs(g))) < grad_tol:
            converged, stop_reason = True, "grad_tol"
            break
        if rel_decrease < loss_rel_tol:
            converged, stop_reason = True, "loss_rel_tol"
            break

    return BfgsResult(x, f, g, iterations, converged, stop_reason,
                      state["evals"], tuple(history), projections)


def _eta_projection(eta: float) -> Callable[[NDArray[np.float64]], NDArray[np.float64]]:
    def project(x: NDArray[np.float64]) -> NDArray[np.float64]:
        t = x[3:6]
        norm2 = float(t @ t)
        if norm2 <= eta:
            return x
        out = x.copy()
        out[3:6] = t * math.sqrt(eta / norm2)
        return out
    return project


def register(source: PointCloud, target: PointCloud,
             cfg: MmrConfig | None = None,
             truth: Pose | None = None) -> RegistrationReport:
    """Estimate the rigid transform aligning ``source`` onto ``target``.

    Allocates RBF centers from the target, computes the target moments once,
    then minimizes the moment-matching loss with BFGS from ``cfg.init_pose``.
    Supplying ``truth`` fills the error fields of the report.
    """
    cfg = cfg or MmrConfig()
    source.require_nonempty("register")
    target.require_nonempty("register")
    start = time.perf_counter()

    basis = KernelBasis(allocate_centers(target, cfg.center_cfg),
                        cfg.sigma_scale * target.bbox_diagonal())
    target_values = empirical_moments(basis, target, cfg.n_workers).values

    def fun_and_grad(x: NDArray[np.float64]) -> tuple[float, NDArray[np.float64]]:
        values, jac = transformed_moments_and_gradient(
            basis, source, Pose.from_vector(x), cfg.n_workers)
        r = values - target_values
        return float(r @ r), 2.0 * (r @ jac)

    project = (None if cfg.translation_bound_eta is None
               else _eta_projection(cfg.translation_bound_eta))
    result = bfgs_minimize(
        fun_and_grad, cfg.init_pose.as_vector(),
        max_iters=cfg.max_iters, grad_tol=cfg.grad_tol,
        loss_rel_tol=cfg.loss_rel_tol, project=project)

    pose = Pose.from_vector(result.x)
    trans_err = rot_err = None
    if truth is not None:
        errors = pose_errors(truth, pose)
        trans_err, rot_err = errors.translation_error, errors.rotation_error
    return RegistrationReport(
        estimated_pose=pose,
        final_loss=result.fun,
        iterations=result.iterations,
        converged=result.converged,
        wall_time=time.perf_counter() - start,
        translation_error=trans_err,
        rotation_error=rot_err,
        stop_reason=result.stop_reason,
        eta_violations=result.projections,
    )
