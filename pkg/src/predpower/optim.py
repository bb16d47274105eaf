"""First-order minimization driven to tight gradient-norm targets.

Value-based line searches stop certifying descent once per-step decrements
fall below floating-point rounding of the objective (around gradient norm
sqrt(eps * |f|)), far above the 1e-9..1e-12 targets the planner and the
infimal-convolution solver must reach.  The routine here backtracks on
values only while they are informative, then switches to fixed-step
Nesterov iterations monitored purely through gradient norms.
"""

from __future__ import annotations

import numpy as np

from .errors import NoConvergence


def minimize_smooth_convex(val_grad, x0: np.ndarray, tol: float,
                           max_iter: int = 200000) -> tuple[float, np.ndarray]:
    """Minimize a smooth (strongly) convex function to |grad| <= tol.

    val_grad(x) returns (value, gradient).  Returns (value, argmin).
    """
    x = np.asarray(x0, dtype=float).copy()
    val, grad = val_grad(x)
    gnorm = float(np.linalg.norm(grad))
    if gnorm <= tol:
        return float(val), x

    # Phase 1: Armijo-backtracked descent while value comparisons resolve.
    step = 1.0
    iters = 0
    floor = np.sqrt(np.finfo(float).eps) * (1.0 + abs(val))
    while gnorm > max(tol, floor) and iters < max_iter:
        step = min(step * 2.0, 1e8)
        while True:
            cand = x - step * grad
            cand_val, cand_grad = val_grad(cand)
            if cand_val <= val - 0.5 * step * gnorm ** 2:
                break
            step *= 0.5
            if step < 1e-18:
                raise NoConvergence("line search stalled far from the optimum")
        x, val, grad = cand, cand_val, cand_grad
        gnorm = float(np.linalg.norm(grad))
        iters += 1
    if gnorm <= tol:
        return float(val), x

    # Phase 2: fixed-step Nesterov with gradient restart; no value tests.
    # Halve the step promptly on any sign of divergence and restart from
    # the best gradient point seen so far.
    step = 0.5 * step
    y = x.copy()
    x_prev = x.copy()
    x_best = x.copy()
    momentum = 1.0
    best_gnorm = gnorm
    stall = 0
    for _ in range(iters, max_iter):
        val_y, grad_y = val_grad(y)
        gy = float(np.linalg.norm(grad_y))
        if gy <= tol:
            return float(val_y), y
        if not np.isfinite(gy) or gy > 4.0 * best_gnorm:
            step *= 0.5
            if step < 1e-18:
                raise NoConvergence(
                    f"gradient norm plateaued at {best_gnorm:.3e} > {tol}")
            y = x_best.copy()
            x_prev = x_best.copy()
            momentum = 1.0
            stall = 0
            continue
        if gy < best_gnorm:
            best_gnorm = gy
            x_best = y.copy()
            stall = 0
        else:
            stall += 1
            if stall >= 500:
                step *= 0.5
                stall = 0
                y = x_best.copy()
                x_prev = x_best.copy()
                momentum = 1.0
                if step < 1e-18:
                    raise NoConvergence(
                        f"gradient norm plateaued at {best_gnorm:.3e} > {tol}")
                continue
        x_new = y - step * grad_y
        momentum_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * momentum ** 2))
        beta = (momentum - 1.0) / momentum_next
        delta = x_new - x_prev
        if float(np.sum(grad_y * delta)) > 0.0:
            momentum_next, beta = 1.0, 0.0
        y = x_new + beta * delta
        x_prev = x_new
        momentum = momentum_next
    raise NoConvergence(f"gradient norm above {tol} after {max_iter} iterations")
