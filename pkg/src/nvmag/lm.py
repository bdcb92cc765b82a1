"""Small dense Levenberg-Marquardt solver.

Used by the bias fit (7 parameters) and by the exact field inversion
(3 parameters). Problems are tiny, so each iteration solves the damped
normal equations through an augmented least-squares system rather than
forming J^T J explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NonConvergence


@dataclass
class LMResult:
    x: np.ndarray
    residual: np.ndarray
    jacobian: np.ndarray
    cost: float
    iterations: int
    nfev: int
    converged: bool
    message: str


def central_jacobian(fun: Callable, x: np.ndarray, steps: np.ndarray, f0=None) -> np.ndarray:
    """Central-difference Jacobian of ``fun`` at ``x`` with per-parameter ``steps``."""
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(x.size):
        dx = np.zeros_like(x)
        dx[j] = steps[j]
        cols.append((np.asarray(fun(x + dx)) - np.asarray(fun(x - dx))) / (2.0 * steps[j]))
    return np.stack(cols, axis=-1)


def levenberg_marquardt(
    fun: Callable[[np.ndarray], np.ndarray],
    x0,
    *,
    scale=None,
    jac: Callable | None = None,
    fd_step: float = 1e-4,
    lam0: float = 1e-3,
    ftol: float = 1e-12,
    xtol: float = 1e-14,
    max_iter: int = 200,
    raise_on_failure: bool = True,
) -> LMResult:
    """Minimize ``0.5 * |fun(x)|^2``.

    ``scale`` gives a typical magnitude per parameter; the iteration works in
    ``x / scale`` so that ``fd_step`` and ``xtol`` are dimensionless.
    Damping follows Marquardt: (J^T J + lam diag(J^T J)) dx = -J^T r, with lam
    multiplied by 10 after a rejected step and divided by 10 after an
    accepted one.

    Convergence is declared when an accepted step lowers the cost by less
    than ``ftol`` relative, when the scaled step falls below ``xtol``, or when
    the cost is exactly zero. If no step can reduce the cost even under
    heavy damping, the current point is a minimum to working precision and
    is also reported as converged.
    """
    x0 = np.asarray(x0, dtype=float)
    scale = np.ones_like(x0) if scale is None else np.asarray(scale, dtype=float)
    z = x0 / scale
    steps = np.full(z.shape, fd_step)

    def fz(zz):
        return np.asarray(fun(zz * scale), dtype=float)

    def jz(zz, r):
        if jac is not None:
            return np.asarray(jac(zz * scale), dtype=float) * scale
        return central_jacobian(fz, zz, steps)

    r = fz(z)
    nfev = 1
    cost = 0.5 * float(r @ r)
    lam = lam0
    converged = False
    message = "iteration limit reached"
    it = 0
    J = jz(z, r)
    nfev += 2 * z.size
    while it < max_iter:
        it += 1
        if cost == 0.0:
            converged, message = True, "zero residual"
            break
        g = J.T @ r
        d = np.sqrt(np.maximum(np.sum(J * J, axis=0), 1e-300))
        accepted = False
        while lam < 1e16:
            aug = np.vstack([J, np.sqrt(lam) * np.diag(d)])
            rhs = np.concatenate([-r, np.zeros(z.size)])
            dz = np.linalg.lstsq(aug, rhs, rcond=None)[0]
            r_new = fz(z + dz)
            nfev += 1
            cost_new = 0.5 * float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new < cost:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            converged, message = True, "no further decrease at working precision"
            break
        rel = (cost - cost_new) / cost
        z = z + dz
        r, cost = r_new, cost_new
        lam = max(lam / 10.0, 1e-12)
        if rel < ftol:
            converged, message = True, "relative cost change below ftol"
            break
        if np.max(np.abs(dz)) < xtol * (1.0 + np.max(np.abs(z))):
            converged, message = True, "step below xtol"
            break
        if not np.all(np.isfinite(g)):
            message = "non-finite gradient"
            break
        J = jz(z, r)
        nfev += 2 * z.size

    J = jz(z, r)
    result = LMResult(
        x=z * scale,
        residual=r,
        jacobian=J / scale,
        cost=cost,
        iterations=it,
        nfev=nfev,
        converged=converged,
        message=message,
    )
    if not converged and raise_on_failure:
        raise NonConvergence(f"Levenberg-Marquardt did not converge: {message} after {it} iterations")
    return result
