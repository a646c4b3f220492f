"""Derivative-free root finding for (possibly nonsmooth) estimating equations.

``spectral`` is a df-SANE style iteration: ``x+ = x -/+ a * sigma * F(x)``
with a Barzilai-Borwein steplength ``sigma = s's / s'y`` and a nonmonotone
backtracking line search on ``||F||^2``. ``norm_minimize`` runs Nelder-Mead
on ``||F||^2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import optimize

METHODS = ("spectral", "spectral_multistart", "norm_minimize")

SIGMA_MIN = 1e-10
SIGMA_MAX = 1e10
MAX_HALVINGS = 20
GAMMA = 1e-4


class SolverError(RuntimeError):
    """The estimating function is unusable at the starting point."""


class NonFiniteError(SolverError):
    """The estimating function returned a non-finite value."""


@dataclass(frozen=True)
class SolverConfig:
    """Solver controls.

    ``tol`` is the absolute tolerance on ``max_j |F_j|``; a vector gives one
    tolerance per component.
    """

    tol: float | tuple = 1e-7
    max_iters: int = 500
    method: str = "spectral"
    init: tuple = ()
    nonmonotone_memory: int = 10

    def __post_init__(self):
        if np.any(np.asarray(self.tol, dtype=float) <= 0):
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")


@dataclass(frozen=True)
class SolverResult:
    solution: np.ndarray
    residual_norm: float
    converged: bool
    iterations: int
    method_used: str
    residual: np.ndarray = field(default_factory=lambda: np.empty(0))

    def to_dict(self) -> dict:
        return {
            "solution": np.asarray(self.solution).tolist(),
            "residual_norm": self.residual_norm,
            "converged": self.converged,
            "iterations": self.iterations,
            "method_used": self.method_used,
        }


def _evaluate(f, x) -> np.ndarray:
    v = np.atleast_1d(np.asarray(f(x), dtype=float))
    if v.shape != x.shape:
        raise SolverError(f"estimating function returned shape {v.shape}, expected {x.shape}")
    if not np.all(np.isfinite(v)):
        raise NonFiniteError(f"estimating function is not finite at {x.tolist()}")
    return v


def _trial(f, x):
    """Evaluate at a line-search trial point; non-finite values reject the step."""
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            v = _evaluate(f, x)
            merit = float(v @ v)
    except (NonFiniteError, FloatingPointError):
        return None, np.inf
    return v, merit


def _within(v, tol) -> bool:
    return bool(np.all(np.abs(v) <= tol))


def _spectral(f, x0, cfg: SolverConfig, tol) -> SolverResult:
    x = x0.copy()
    F = _evaluate(f, x)
    merit = float(F @ F)
    best = (merit, x.copy(), F.copy())
    hist = [merit]
    merit0 = merit
    sigma = 1.0
    it = 0
    while it < cfg.max_iters:
        if _within(F, tol):
            break
        it += 1
        d = -sigma * F
        eta = merit0 / (1.0 + it) ** 2
        ref = max(hist[-cfg.nonmonotone_memory:])
        a_pos = a_neg = 1.0
        accepted = None
        for _ in range(MAX_HALVINGS + 1):
            xp = x + a_pos * d
            Fp, mp = _trial(f, xp)
            if mp <= ref + eta - GAMMA * a_pos**2 * merit:
                accepted = (xp, Fp, mp)
                break
            # the reversed direction gets no nonmonotone slack: on a flat tail it
            # would otherwise accept long moves that make no progress
            xn = x - a_neg * d
            Fn, mn = _trial(f, xn)
            if mn <= merit - GAMMA * a_neg**2 * merit:
                accepted = (xn, Fn, mn)
                break
            a_pos *= 0.5
            a_neg *= 0.5
        if accepted is None:
            if sigma == 1.0:
                break
            # restart with a unit steplength before giving up
            sigma = 1.0
            continue
        xn_, Fn_, mn_ = accepted
        s = xn_ - x
        y = Fn_ - F
        sy = float(s @ y)
        sigma = float(s @ s) / sy if sy != 0 else np.inf
        if not np.isfinite(sigma) or not SIGMA_MIN <= abs(sigma) <= SIGMA_MAX:
            fn = float(np.sqrt(mn_))
            sigma = 1.0 if fn > 1 else (1.0 / fn if fn >= 1e-5 else 1e5)
        x, F, merit = xn_, Fn_, mn_
        hist.append(merit)
        if merit < best[0]:
            best = (merit, x.copy(), F.copy())
    if not _within(F, tol) and best[0] < merit:
        _, x, F = best
    return SolverResult(x, float(np.max(np.abs(F), initial=0.0)), _within(F, tol), it, "spectral", F)


def _multistart(f, x0, cfg, tol) -> SolverResult:
    res = _spectral(f, x0, cfg, tol)
    if res.converged:
        return replace(res, method_used="spectral_multistart")
    best = res
    total = res.iterations
    p = x0.size
    starts = []
    for j in range(p):
        for sgn in (1.0, -1.0):
            e = np.zeros(p)
            e[j] = 0.5 * sgn
            starts.append(x0 + e)
    for st in starts[: 2 * p]:
        r = _spectral(f, st, cfg, tol)
        total += r.iterations
        if r.converged:
            return replace(r, iterations=total, method_used="spectral_multistart")
        if r.residual_norm < best.residual_norm:
            best = r
    return replace(best, iterations=total, method_used="spectral_multistart")


def _simplex(f, x0, cfg, tol, step: float = 0.25) -> SolverResult:
    p = x0.size
    evals = {"n": 0}

    def obj(x):
        evals["n"] += 1
        return _trial(f, np.asarray(x, dtype=float))[1]

    simplex = np.vstack([x0] + [x0 + step * np.eye(p)[j] for j in range(p)])
    xtol = float(np.min(np.atleast_1d(tol)))
    opt = optimize.minimize(
        obj,
        x0,
        method="Nelder-Mead",
        options={
            "initial_simplex": simplex,
            "xatol": xtol,
            "fatol": 0.0,
            "maxiter": cfg.max_iters * max(p, 1),
            "maxfev": 10 * cfg.max_iters * max(p, 1),
            "adaptive": False,
        },
    )
    x = np.asarray(opt.x, dtype=float)
    F = _evaluate(f, x)
    return SolverResult(x, float(np.max(np.abs(F))), _within(F, tol), int(opt.nit), "norm_minimize", F)


def solve_root(f: Callable, config: SolverConfig | None = None, init=None) -> SolverResult:
    """Find ``x`` with ``|F(x)| <= tol`` componentwise.

    Non-convergence is reported through ``converged=False`` with the best
    point found; a non-finite ``F`` raises :class:`SolverError`.
    """
    cfg = config or SolverConfig()
    x0 = np.atleast_1d(np.asarray(cfg.init if init is None else init, dtype=float)).copy()
    tol = np.asarray(cfg.tol, dtype=float)
    if x0.size == 0:
        return SolverResult(x0, 0.0, True, 0, cfg.method, np.empty(0))
    if cfg.method == "spectral":
        return _spectral(f, x0, cfg, tol)
    if cfg.method == "spectral_multistart":
        return _multistart(f, x0, cfg, tol)
    return _simplex(f, x0, cfg, tol)


def minimize_norm(f: Callable, config: SolverConfig | None = None, init=None) -> SolverResult:
    """Nelder-Mead on ``||F||^2``; converged only if ``|F| <= tol`` at the minimizer."""
    cfg = replace(config or SolverConfig(), method="norm_minimize")
    return solve_root(f, cfg, init)


def solve_with_fallback(f: Callable, config: SolverConfig | None = None, init=None) -> tuple[SolverResult, list[SolverResult]]:
    """Run the ladder spectral -> spectral_multistart -> norm_minimize.

    Starts at ``config.method`` and stops at the first converged rung. Returns
    the best result and every rung's result. Later rungs restart from the best
    point found so far.
    """
    cfg = config or SolverConfig()
    x0 = np.atleast_1d(np.asarray(cfg.init if init is None else init, dtype=float))
    rungs = list(METHODS[METHODS.index(cfg.method):])
    trail: list[SolverResult] = []
    best = None
    start = x0
    for method in rungs:
        r = solve_root(f, replace(cfg, method=method), start)
        trail.append(r)
        if best is None or r.residual_norm < best.residual_norm or r.converged:
            best = r
        if r.converged:
            break
        start = best.solution
    return best, trail
