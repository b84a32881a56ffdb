"""Limited-memory BFGS with a strong-Wolfe line search.

The line search is :func:`scipy.optimize.line_search`; the two-loop
recursion and the termination rules live here so that the stopping criteria
can compare consecutive accepted iterates exactly.
"""

from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import line_search

TERMINATION_REASONS = ("energy_tol", "grad_tol", "max_steps", "line_search_failure")


@dataclass
class MinimizeResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    steps: int
    reason: str
    trace: list = field(default_factory=list)
    n_evaluations: int = 0


class _Cached:
    """Share one ``(f, g)`` evaluation between the value and gradient calls."""

    def __init__(self, fun):
        self.fun = fun
        self.key = None
        self.value = None
        self.count = 0

    def __call__(self, x):
        key = np.asarray(x, dtype=float).tobytes()
        if key != self.key:
            f, g = self.fun(np.array(x, dtype=float))
            self.key, self.value = key, (float(f), np.asarray(g, dtype=float))
            self.count += 1
        return self.value

    def f(self, x):
        return self(x)[0]

    def g(self, x):
        return self(x)[1]


def _two_loop(g, pairs):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    if pairs:
        s, y, _ = pairs[-1]
        q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def _search(fc, x, d, g, f):
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="The line search algorithm")
        alpha, _, _, f_new, _, _ = line_search(fc.f, fc.g, x, d, g, f, maxiter=30)
    return alpha, f_new


def lbfgs_minimize(
    fun: Callable,
    x0,
    energy_tol: float = 1e-7,
    grad_tol: float = 1e-6,
    max_steps: int = 1000,
    memory: int = 10,
    callback: Callable | None = None,
) -> MinimizeResult:
    """Minimize ``fun`` where ``fun(x)`` returns ``(value, gradient)``.

    Stops when two consecutive accepted iterates differ in value by less than
    ``energy_tol``, when ``max|grad| < grad_tol`` after a step, after
    ``max_steps`` steps, or when the line search fails twice in a row (once
    with the quasi-Newton direction and once with steepest descent).  A
    vanishing gradient yields a null step, which ends the run with reason
    ``"energy_tol"``.

    Returns
    -------
    MinimizeResult
        ``trace`` holds ``(step, value)`` for the start point and every
        accepted step.
    """
    if energy_tol <= 0 or grad_tol <= 0 or max_steps < 1 or memory < 1:
        raise ValueError("tolerances must be positive and step counts >= 1")
    x = np.array(x0, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("initial point must be finite")
    fc = _Cached(fun)
    f, g = fc(x)
    trace = [(0, f)]
    pairs = deque(maxlen=memory)
    reason = "max_steps"
    step = 0
    while step < max_steps:
        step += 1
        if not np.any(g):
            trace.append((step, f))
            reason = "energy_tol"
            break
        d = _two_loop(g, pairs)
        if not pairs or g @ d >= 0:
            pairs.clear()
            d = -g / max(1.0, np.linalg.norm(g))
        alpha, f_new = _search(fc, x, d, g, f)
        if alpha is None and pairs:
            pairs.clear()
            d = -g / max(1.0, np.linalg.norm(g))
            alpha, f_new = _search(fc, x, d, g, f)
        if alpha is None or f_new is None or f_new > f:
            step -= 1
            reason = "line_search_failure"
            break
        x_new = x + alpha * d
        f_new, g_new = fc(x_new)
        s, y = x_new - x, g_new - g
        sy = s @ y
        if sy > 1e-12 * np.sqrt((s @ s) * (y @ y)):
            pairs.append((s, y, 1.0 / sy))
        df = f - f_new
        x, f, g = x_new, f_new, g_new
        trace.append((step, f))
        if callback is not None:
            callback(step, x, f)
        if abs(df) < energy_tol:
            reason = "energy_tol"
            break
        if np.max(np.abs(g)) < grad_tol:
            reason = "grad_tol"
            break
    return MinimizeResult(x, f, g, step, reason, trace, fc.count)
