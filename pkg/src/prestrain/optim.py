"""Limited-memory BFGS with a monotone Armijo backtracking line search."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)


@dataclass
class LBFGSOptions:
    memory: int = 10
    gtol: float = 1e-8
    ftol: float = 0.0
    max_iter: int = 500
    armijo_c1: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 60


@dataclass
class LBFGSResult:
    x: np.ndarray
    f: float
    grad_norm: float
    nit: int
    nfev: int
    converged: bool
    message: str
    history: list = field(default_factory=list)


def _two_loop(g, S, Y, rho, precond=None):
    q = g.copy()
    alpha = []
    for s, y, r in zip(reversed(S), reversed(Y), reversed(rho)):
        a = r * (s @ q)
        alpha.append(a)
        q -= a * y
    if precond is not None:
        q = precond(q)
        if S:
            q *= (S[-1] @ Y[-1]) / (Y[-1] @ precond(Y[-1]))
    elif S:
        q *= (S[-1] @ Y[-1]) / (Y[-1] @ Y[-1])
    for (s, y, r), a in zip(zip(S, Y, rho), reversed(alpha)):
        b = r * (y @ q)
        q += (a - b) * s
    return -q


def lbfgs(fun: Callable[[np.ndarray], tuple[float, np.ndarray]], x0,
          opts: LBFGSOptions | None = None, precond=None) -> LBFGSResult:
    """Minimise ``fun`` (returning value and gradient) from ``x0``.

    ``precond``, if given, applies an SPD approximation of the inverse Hessian
    and serves as the initial matrix of the two-loop recursion.

    Accepted steps satisfy the sufficient-decrease condition, so the recorded
    objective history is non-increasing.  Steps producing non-finite values
    are rejected by backtracking.
    """
    opts = opts or LBFGSOptions()
    x = np.array(x0, dtype=float).ravel()
    f, g = fun(x)
    nfev = 1
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise FloatingPointError("objective is not finite at the starting point")
    S, Y, rho = [], [], []
    history = [float(f)]
    gnorm = float(np.linalg.norm(g))
    msg = "max iterations reached"
    converged = False
    nit = 0
    while nit < opts.max_iter:
        if gnorm <= opts.gtol:
            converged, msg = True, "gradient tolerance reached"
            break
        p = _two_loop(g, S, Y, rho, precond)
        slope = g @ p
        if slope >= 0:
            S, Y, rho = [], [], []
            p = -g if precond is None else -precond(g)
            slope = g @ p
        t = 1.0 if S or precond is not None else min(1.0, 1.0 / gnorm)
        accepted = False
        for _ in range(opts.max_backtracks):
            xn = x + t * p
            fn, gn = fun(xn)
            nfev += 1
            if np.isfinite(fn) and np.all(np.isfinite(gn)) and fn <= f + opts.armijo_c1 * t * slope:
                accepted = True
                break
            t *= opts.backtrack
        if not accepted:
            if S:
                S, Y, rho = [], [], []
                continue
            msg = "line search failed; returning last valid iterate"
            log.warning(msg)
            break
        s, yv = xn - x, gn - g
        sy = s @ yv
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(yv):
            S.append(s)
            Y.append(yv)
            rho.append(1.0 / sy)
            if len(S) > opts.memory:
                S.pop(0)
                Y.pop(0)
                rho.pop(0)
        df = f - fn
        x, f, g = xn, fn, gn
        gnorm = float(np.linalg.norm(g))
        history.append(float(f))
        nit += 1
        if opts.ftol > 0 and df <= opts.ftol * abs(f):
            converged, msg = True, "relative decrease below ftol"
            break
    else:
        if gnorm <= opts.gtol:
            converged, msg = True, "gradient tolerance reached"
    return LBFGSResult(x, float(f), gnorm, nit, nfev, converged, msg, history)
