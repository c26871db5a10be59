"""BFGS quasi-Newton minimizer with Armijo backtracking line search."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ConvergenceError(RuntimeError):
    """Raised when the iteration cap is hit; carries the best point found."""

    def __init__(self, message, result):
        super().__init__(message)
        self.result = result


@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    iterations: int
    converged: bool
    message: str
    inv_hessian: np.ndarray | None = None

    @property
    def grad_norm(self):
        return float(np.max(np.abs(self.grad))) if self.grad.size else 0.0


def bfgs(fg, x0, max_iter=2000, gtol=1e-6, ftol=1e-10, c1=1e-4, shrink=0.5, max_backtracks=50, H0=None):
    """Minimize ``fg(x) -> (f, g)``; ``f`` may be ``inf`` outside the feasible region.

    Stops when the max-norm of the gradient drops below ``gtol`` or the
    relative change of ``f`` between iterations falls below ``ftol``.
    ``H0`` optionally seeds the inverse-Hessian approximation (warm starts).
    """
    x = np.array(x0, dtype=float)
    f, g = fg(x)
    if not np.isfinite(f):
        raise ValueError("objective is not finite at the starting point")
    n = x.size
    gnorm = np.max(np.abs(g)) if n else 0.0
    if gnorm < gtol:
        return OptimizeResult(x, f, g, 0, True, "gradient below tolerance at start", H0)
    warm = H0 is not None
    if warm:
        H = np.array(H0, dtype=float)
    else:
        # scale the first step so it moves at most ~0.1 per coordinate
        H = np.eye(n) * min(1.0, 0.1 / gnorm)
    for it in range(1, max_iter + 1):
        d = -H @ g
        slope = g @ d
        if slope >= 0:
            H = np.eye(n) * min(1.0, 0.1 / max(np.max(np.abs(g)), 1e-12))
            d = -H @ g
            slope = g @ d
        step = 1.0
        for _ in range(max_backtracks):
            x_new = x + step * d
            f_new, g_new = fg(x_new)
            if np.isfinite(f_new) and f_new <= f + c1 * step * slope:
                break
            step *= shrink
        else:
            return OptimizeResult(x, f, g, it, False, "line search failed", H)
        s = x_new - x
        y = g_new - g
        sy = s @ y
        rel = abs(f - f_new) / max(abs(f), abs(f_new), 1e-300)
        x, f_old, f, g = x_new, f, f_new, g_new
        if np.max(np.abs(g)) < gtol:
            return OptimizeResult(x, f, g, it, True, "gradient below tolerance", H)
        if rel < ftol and f <= f_old:
            return OptimizeResult(x, f, g, it, True, "relative change in objective below tolerance", H)
        if sy > 1e-12 * np.sqrt((s @ s) * (y @ y)):
            if it == 1 and not warm:
                H = np.eye(n) * (sy / (y @ y))
            rho = 1.0 / sy
            Hy = H @ y
            u = rho * s
            # H <- (I - rho s y')H(I - rho y s') + rho s s'
            H -= np.outer(u, Hy)
            H -= np.outer(Hy, u)
            H += ((rho * (y @ Hy) + 1.0) * u)[:, None] * s[None, :]
    result = OptimizeResult(x, f, g, max_iter, False, "iteration cap reached", H)
    raise ConvergenceError(f"no convergence within {max_iter} iterations", result)
