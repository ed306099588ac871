"""Nelder-Mead simplex minimiser with an explicit function-spread stopping rule."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass
class SimplexResult:
    x: np.ndarray
    fun: float
    n_iter: int
    n_eval: int
    converged: bool
    history: list[float] = field(default_factory=list)  # best value after each iteration


def nelder_mead(func: Callable[[np.ndarray], float], x0, steps, *, rel_tol: float = 1e-8,
                max_iter: int = 2000, max_eval: int | None = None) -> SimplexResult:
    """Minimise ``func`` from ``x0``; the initial simplex offsets coordinate ``i`` by ``steps[i]``.

    Standard coefficients (reflect 1, expand 2, contract 1/2, shrink 1/2).
    Converged when ``max(f) - min(f) < rel_tol * (1 + |min(f)|)`` over the simplex.
    Non-finite values are treated as +inf, so the simplex walks away from them.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    n = x0.shape[0]
    max_eval = max_eval or 200 * (n + 1) * 10
    n_eval = 0

    def f(x):
        nonlocal n_eval
        n_eval += 1
        v = float(func(x))
        return v if np.isfinite(v) else np.inf

    simplex = np.empty((n + 1, n))
    simplex[0] = x0
    for i in range(n):
        simplex[i + 1] = x0
        simplex[i + 1, i] += steps[i]
    fvals = np.array([f(v) for v in simplex])

    history = []
    converged = False
    it = 0
    while it < max_iter and n_eval < max_eval:
        order = np.argsort(fvals, kind="stable")
        simplex, fvals = simplex[order], fvals[order]
        history.append(float(fvals[0]))
        if np.isfinite(fvals[-1]) and fvals[-1] - fvals[0] < rel_tol * (1.0 + abs(fvals[0])):
            converged = True
            break
        it += 1
        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        xr = centroid + (centroid - worst)
        fr = f(xr)
        if fr < fvals[0]:
            xe = centroid + 2.0 * (centroid - worst)
            fe = f(xe)
            if fe < fr:
                simplex[-1], fvals[-1] = xe, fe
            else:
                simplex[-1], fvals[-1] = xr, fr
            continue
        if fr < fvals[-2]:
            simplex[-1], fvals[-1] = xr, fr
            continue
        if fr < fvals[-1]:
            xc = centroid + 0.5 * (xr - centroid)
            fc = f(xc)
            if fc <= fr:
                simplex[-1], fvals[-1] = xc, fc
                continue
        else:
            xc = centroid + 0.5 * (worst - centroid)
            fc = f(xc)
            if fc < fvals[-1]:
                simplex[-1], fvals[-1] = xc, fc
                continue
        best = simplex[0]
        for i in range(1, n + 1):
            simplex[i] = best + 0.5 * (simplex[i] - best)
            fvals[i] = f(simplex[i])

    order = np.argsort(fvals, kind="stable")
    simplex, fvals = simplex[order], fvals[order]
    if not history or history[-1] != fvals[0]:
        history.append(float(fvals[0]))
    return SimplexResult(simplex[0].copy(), float(fvals[0]), it, n_eval, converged, history)
