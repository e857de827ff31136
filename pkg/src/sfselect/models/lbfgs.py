"""Limited-memory BFGS with a strong-Wolfe line search.

Line search follows the bracketing/zoom scheme of Nocedal & Wright
(Numerical Optimization, Alg. 3.5 and 3.6) with safeguarded cubic
interpolation.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

Objective = Callable[[np.ndarray], tuple[float, np.ndarray]]


@dataclass
class LbfgsResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    n_iter: int
    n_evals: int
    converged: bool
    message: str
    history: list[float] = field(default_factory=list)

    @property
    def grad_norm(self) -> float:
        return float(np.max(np.abs(self.grad))) if self.grad.size else 0.0


class LineSearchError(RuntimeError):
    pass


def _cubicmin(a, fa, fpa, b, fb, fpb):
    """Minimizer of the cubic interpolating f and f' at a and b (None if undefined)."""
    d1 = fpa + fpb - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - fpa * fpb
    if disc < 0 or not math.isfinite(disc):
        return None
    d2 = math.copysign(math.sqrt(disc), b - a)
    denom = fpb - fpa + 2.0 * d2
    if denom == 0:
        return None
    t = b - (b - a) * (fpb + d2 - d1) / denom
    return t if math.isfinite(t) else None


def strong_wolfe(evaluate, f0: float, dphi0: float, alpha1: float, *,
                 c1: float = 1e-4, c2: float = 0.9, alpha_max: float = 1e10,
                 max_evals: int = 40):
    """Find a step satisfying the strong Wolfe conditions.

    ``evaluate(alpha)`` returns ``(f, g, dphi)`` at ``x + alpha * d``.
    Returns ``(alpha, f, g, n_evals)``; raises :class:`LineSearchError`.
    """
    n_evals = 0

    def zoom(lo, hi, f_lo, f_hi, d_lo, d_hi):
        nonlocal n_evals
        best = None
        while n_evals < max_evals:
            width = hi - lo
            a = _cubicmin(lo, f_lo, d_lo, hi, f_hi, d_hi)
            lo_b, hi_b = sorted((lo + 0.1 * width, hi - 0.1 * width))
            if a is None or not lo_b <= a <= hi_b:
                a = lo + 0.5 * width
            f, g, d = evaluate(a)
            n_evals += 1
            if f > f0 + c1 * a * dphi0 or f >= f_lo:
                hi, f_hi, d_hi = a, f, d
            else:
                if abs(d) <= -c2 * dphi0:
                    return a, f, g
                best = (a, f, g)
                if d * (hi - lo) >= 0:
                    hi, f_hi, d_hi = lo, f_lo, d_lo
                lo, f_lo, d_lo = a, f, d
            if abs(hi - lo) <= 1e-14 * max(abs(lo), abs(hi)):
                break
        if best is not None and best[1] < f0:
            # Armijo holds, curvature does not; still a descent step.
            return best
        raise LineSearchError("zoom failed to find an acceptable step")

    a_prev, f_prev, d_prev = 0.0, f0, dphi0
    a = alpha1
    first = True
    while n_evals < max_evals:
        f, g, d = evaluate(a)
        n_evals += 1
        if not math.isfinite(f):
            # step overshot into overflow; shrink toward the last good point
            a = a_prev + 0.1 * (a - a_prev)
            continue
        if f > f0 + c1 * a * dphi0 or (not first and f >= f_prev):
            r = zoom(a_prev, a, f_prev, f, d_prev, d)
            return (*r, n_evals)
        if abs(d) <= -c2 * dphi0:
            return a, f, g, n_evals
        if d >= 0:
            r = zoom(a, a_prev, f, f_prev, d, d_prev)
            return (*r, n_evals)
        if a >= alpha_max:
            break
        a_prev, f_prev, d_prev = a, f, d
        a = min(2.0 * a, alpha_max)
        first = False
    raise LineSearchError("line search exhausted its evaluation budget")


def minimize_lbfgs(fun: Objective, x0: np.ndarray, *, memory: int = 10,
                   tol: float = 1e-4, max_iter: int = 1000,
                   c1: float = 1e-4, c2: float = 0.9) -> LbfgsResult:
    """Minimize ``fun`` (returning value and gradient) from ``x0``.

    Stops when the infinity norm of the gradient is <= ``tol`` or after
    ``max_iter`` iterations. Accepted iterates never increase the objective.
    """
    x = np.array(x0, dtype=np.float64)
    f, g = fun(x)
    n_evals = 1
    if not math.isfinite(f):
        raise FloatingPointError("objective is not finite at the starting point")
    history = [f]
    S: deque[np.ndarray] = deque(maxlen=memory)
    Y: deque[np.ndarray] = deque(maxlen=memory)
    rho: deque[float] = deque(maxlen=memory)
    message = "maximum iterations reached"
    converged = False
    it = 0
    while True:
        if np.max(np.abs(g)) <= tol:
            converged, message = True, "gradient norm below tolerance"
            break
        if it >= max_iter:
            break

        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y, r in zip(reversed(S), reversed(Y), reversed(rho)):
            a_i = r * np.dot(s, q)
            alphas.append(a_i)
            q -= a_i * y
        if S:
            q *= np.dot(S[-1], Y[-1]) / np.dot(Y[-1], Y[-1])
        for (s, y, r), a_i in zip(zip(S, Y, rho), reversed(alphas)):
            b = r * np.dot(y, q)
            q += (a_i - b) * s
        d = -q
        dphi0 = float(np.dot(g, d))
        if not dphi0 < 0:
            S.clear(); Y.clear(); rho.clear()
            d = -g
            dphi0 = float(np.dot(g, d))
        alpha1 = 1.0 if S else min(1.0, 1.0 / float(np.sum(np.abs(g))))

        def evaluate(alpha, x=x, d=d):
            fa, ga = fun(x + alpha * d)
            return fa, ga, float(np.dot(ga, d))

        try:
            alpha, f_new, g_new, used = strong_wolfe(evaluate, f, dphi0, alpha1, c1=c1, c2=c2)
        except LineSearchError as exc:
            n_evals += 40
            if S:
                S.clear(); Y.clear(); rho.clear()
                continue
            message = f"stopped: {exc}"
            break
        n_evals += used
        x_new = x + alpha * d
        s = x_new - x
        y = g_new - g
        sy = float(np.dot(s, y))
        if sy > 1e-12 * float(np.dot(y, y)) and sy > 0:
            S.append(s); Y.append(y); rho.append(1.0 / sy)
        x, f, g = x_new, f_new, g_new
        history.append(f)
        it += 1
        if not np.any(s):
            message = "stopped: step underflow"
            break
    return LbfgsResult(x, float(f), g, it, n_evals, converged, message, history)
