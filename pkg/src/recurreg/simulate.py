"""Simulate recurrent and terminal events from the joint frailty scale-change model.

Conditional on ``(Z, X)`` recurrent events form a Poisson process with
cumulative rate ``Lambda(t) = Z exp(X'(beta - alpha)) Lambda0(t exp(X'alpha))``
(the integral of ``Z lambda0(t exp(X'alpha)) exp(X'beta)``) and the terminal
time has cumulative hazard ``H(t) = Z exp(X'(theta - eta)) H0(t exp(X'eta))``.
Subject ``i`` draws from its own stream keyed by ``(seed, i)``, so output does
not depend on the number of workers.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field, replace
from functools import partial
from typing import Callable

import numpy as np

from ._ranks import parallel_map
from .data import RecurrentDataset, from_arrays, validate

BRACKET_HI = 1e12
BISECT_TOL = 1e-10


class SimulationError(ValueError):
    """Invalid simulation configuration or a baseline that cannot be inverted."""


class Baseline:
    """Nonnegative nondecreasing cumulative baseline with ``f(0) = 0``.

    ``inverse`` is optional; without it :meth:`invert` bisects on
    ``[0, 1e12]`` to absolute tolerance ``1e-10``.
    """

    def __init__(self, func: Callable, inverse: Callable | None = None, name: str = "custom"):
        self.func = func
        self.inverse = inverse
        self.name = name

    def __call__(self, t):
        return self.func(t)

    def invert(self, u: float) -> float:
        if self.inverse is not None:
            return float(self.inverse(u))
        if float(self.func(BRACKET_HI)) < u:
            raise SimulationError(f"baseline {self.name} never reaches {u:.6g} on [0, {BRACKET_HI:g}]")
        lo, hi = 0.0, BRACKET_HI
        while hi - lo > BISECT_TOL * max(1.0, lo):
            mid = 0.5 * (lo + hi)
            if float(self.func(mid)) < u:
                lo = mid
            else:
                hi = mid
        return hi

    def __repr__(self):
        return f"Baseline({self.name})"


class LogBaseline(Baseline):
    """``a * log(1 + t)`` with analytic inverse ``exp(u / a) - 1``."""

    def __init__(self, a: float):
        if a <= 0:
            raise SimulationError("log baseline multiplier must be positive")
        self.a = float(a)
        super().__init__(self._f, self._inv, f"{a:g}*log(1+t)")

    def _f(self, t):
        return self.a * np.log1p(t)

    def _inv(self, u):
        v = u / self.a
        return math.expm1(v) if v < 700.0 else math.inf

    def __reduce__(self):
        return (LogBaseline, (self.a,))


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    ``xmat`` is ``"default"`` (``X1 ~ Bernoulli(0.5)``, ``X2 ~ N(0, 1)``) or an
    explicit ``n x p`` matrix. ``censoring`` is ``"default"`` (uniform on
    ``[0, 2 tau X1 + 2 Z^2 tau (1 - X1)]``; falls back to ``"uniform"`` for a
    user matrix), ``"uniform"`` (uniform on ``[0, 2 tau]``) or explicit
    values. ``frailty`` is ``("gamma", variance)``, ``("constant", z)`` or
    explicit values. ``convention="cumulative"`` multiplies the cumulative
    functions directly, ``Lambda(t) = Z exp(X'beta) Lambda0(t exp(X'alpha))``
    and ``H(t) = Z exp(X'theta) H0(t exp(X'eta))``, which equals the default
    ``"rate"`` convention with ``beta + alpha`` and ``theta + eta``.
    """

    n: int = 200
    alpha: tuple = (0.0, 0.0)
    beta: tuple = (-1.0, -1.0)
    eta: tuple = (0.0, 0.0)
    theta: tuple = (1.0, 1.0)
    xmat: object = "default"
    censoring: object = "default"
    frailty: object = ("gamma", 0.25)
    tau: float = 60.0
    origin: object = 0.0
    lam0: Baseline = field(default_factory=lambda: LogBaseline(2.0))
    haz0: Baseline = field(default_factory=lambda: LogBaseline(0.2))
    seed: int = 0
    convention: str = "rate"

    @property
    def p(self) -> int:
        if isinstance(self.xmat, str):
            return 2
        return np.asarray(self.xmat, dtype=float).reshape(self.n, -1).shape[1]

    def params(self) -> dict[str, np.ndarray]:
        return {k: np.asarray(getattr(self, k), dtype=float).reshape(-1) for k in ("alpha", "beta", "eta", "theta")}

    def to_dict(self) -> dict:
        def enc(v):
            if isinstance(v, str):
                return v
            if isinstance(v, tuple) and v and isinstance(v[0], str):
                return [v[0], float(v[1])]
            return np.asarray(v, dtype=float).tolist()

        d = {k: v.tolist() for k, v in self.params().items()}
        d.update(
            n=self.n, tau=self.tau, seed=self.seed, xmat=enc(self.xmat), censoring=enc(self.censoring),
            frailty=enc(self.frailty), origin=enc(self.origin), lam0=self.lam0.name, haz0=self.haz0.name,
            convention=self.convention,
        )
        return d


@dataclass(frozen=True)
class SimTruth:
    Z: np.ndarray
    C: np.ndarray
    D: np.ndarray
    config: SimConfig

    def to_csv(self, stream=None, ids=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "Z", "C", "D"])
        ids = range(1, self.Z.size + 1) if ids is None else ids
        for i, z, c, d in zip(ids, self.Z, self.C, self.D):
            w.writerow([i, repr(float(z)), repr(float(c)), repr(float(d))])
        out = buf.getvalue()
        if stream is not None:
            stream.write(out)
        return out


def default_config(n: int = 200, seed: int = 0) -> SimConfig:
    """Package defaults: ``alpha = eta = 0``, ``beta = (-1, -1)``, ``theta = (1, 1)``."""
    return SimConfig(n=n, seed=seed)


def paper_display_preset(n: int = 200, seed: int = 0) -> SimConfig:
    """Parameters giving rate ``2Z / (1 + t exp(-X1 - X2))`` and hazard ``Z / (5 (1 + t exp(X1 + X2)))``."""
    return SimConfig(n=n, alpha=(-1.0, -1.0), beta=(0.0, 0.0), eta=(1.0, 1.0), theta=(0.0, 0.0), seed=seed)


def _probe(base: Baseline, upper: float, what: str):
    grid = np.concatenate([[0.0], np.geomspace(1e-6, max(upper, 1e-6), 200)])
    vals = np.array([float(base(t)) for t in grid])
    if not np.all(np.isfinite(vals)):
        raise SimulationError(f"{what} is not finite on [0, {upper:.6g}]")
    if abs(vals[0]) > 1e-12:
        raise SimulationError(f"{what} must vanish at 0")
    if np.any(vals < 0) or np.any(np.diff(vals) < -1e-12):
        raise SimulationError(f"{what} is not nonnegative and nondecreasing")
    # f(2t)/f(t) constant means f is a power of t (Weibull-type), which the
    # scale-change model cannot separate from the size parameter
    pos = vals[1:] > 0
    t = grid[1:][pos]
    if t.size >= 10:
        r = np.array([float(base(2 * s)) for s in t]) / vals[1:][pos]
        if np.ptp(np.log(r)) < 1e-6:
            warnings.warn(
                f"{what} looks like a power law; shape and size are not identifiable", UserWarning, stacklevel=3
            )


def _check(cfg: SimConfig):
    if cfg.n < 0:
        raise SimulationError("n must be nonnegative")
    if not cfg.tau > 0:
        raise SimulationError("tau must be positive")
    p = cfg.p
    for k, v in cfg.params().items():
        if v.size != p:
            raise SimulationError(f"{k} has length {v.size}, expected {p}")
    for name in ("censoring", "frailty", "origin"):
        v = getattr(cfg, name)
        if not isinstance(v, (str, tuple, float, int)) and np.asarray(v).size != cfg.n:
            raise SimulationError(f"{name} must have one value per subject")
    if isinstance(cfg.frailty, tuple) and cfg.frailty and isinstance(cfg.frailty[0], str):
        kind, val = cfg.frailty
        if kind not in ("gamma", "constant") or val < 0:
            raise SimulationError(f"bad frailty spec {cfg.frailty!r}")
    if cfg.convention not in ("rate", "cumulative"):
        raise SimulationError("convention must be 'rate' or 'cumulative'")
    if isinstance(cfg.censoring, str) and cfg.censoring not in ("default", "uniform"):
        raise SimulationError(f"bad censoring spec {cfg.censoring!r}")


def _subject(i: int, cfg: SimConfig, entropy: int):
    rng = np.random.default_rng(np.random.SeedSequence([entropy, i]))
    par = cfg.params()
    if isinstance(cfg.xmat, str):
        x = np.array([float(rng.random() < 0.5), rng.standard_normal()])
    else:
        x = np.asarray(cfg.xmat, dtype=float).reshape(cfg.n, -1)[i]
    fr = cfg.frailty
    if isinstance(fr, tuple) and fr and isinstance(fr[0], str):
        kind, v = fr
        z = (1.0 if v == 0 else rng.gamma(1.0 / v, v)) if kind == "gamma" else float(v)
    else:
        z = float(np.asarray(fr, dtype=float).reshape(-1)[i])
    cens = cfg.censoring
    if isinstance(cens, str):
        if cens == "default" and isinstance(cfg.xmat, str):
            c = rng.uniform(0.0, 2 * cfg.tau * x[0] + 2 * z * z * cfg.tau * (1 - x[0]))
        else:
            c = rng.uniform(0.0, 2 * cfg.tau)
    else:
        c = float(np.asarray(cens, dtype=float).reshape(-1)[i])
    # terminal time
    se = math.exp(x @ par["eta"])
    lit = cfg.convention == "cumulative"
    ch = z * math.exp(x @ (par["theta"] if lit else par["theta"] - par["eta"]))
    e = rng.exponential()
    d = math.inf if ch == 0 else cfg.haz0.invert(e / ch) / se
    end = min(c, cfg.tau)
    y = min(d, end)
    delta = d <= end
    # recurrent events by inversion of exponential gaps
    sa = math.exp(x @ par["alpha"])
    cr = z * math.exp(x @ (par["beta"] if lit else par["beta"] - par["alpha"]))
    times = []
    if cr > 0 and y > 0:
        total = cr * float(cfg.lam0(y * sa))
        u = rng.exponential()
        while u < total:
            t = cfg.lam0.invert(u / cr) / sa
            if t >= y:
                break
            times.append(t)
            u += rng.exponential()
    return x, z, c, d, y, bool(delta), times


def _chunk(idx, cfg, entropy):
    return [_subject(i, cfg, entropy) for i in idx]


def simulate_gsc(config: SimConfig, workers: int = 1) -> tuple[RecurrentDataset, SimTruth]:
    """Draw a dataset and the latent quantities that produced it."""
    cfg = config
    _check(cfg)
    par = cfg.params()
    xmax = 3.0 if isinstance(cfg.xmat, str) else float(np.max(np.abs(np.asarray(cfg.xmat, dtype=float)), initial=0))
    span = lambda v: cfg.tau * math.exp(min(xmax * float(np.abs(v).sum()), 50.0))  # noqa: E731
    _probe(cfg.lam0, span(par["alpha"]), "Lam0")
    _probe(cfg.haz0, span(par["eta"]), "Haz0")
    entropy = cfg.seed if cfg.seed is not None else int(np.random.SeedSequence().entropy % (2**63))
    n = cfg.n
    if workers > 1 and n > 1:
        chunks = np.array_split(np.arange(n), workers * 4)
        rows = [r for part in parallel_map(partial(_chunk, cfg=cfg, entropy=entropy), chunks, workers) for r in part]
    else:
        rows = _chunk(range(n), cfg, entropy)
    p = cfg.p
    X = np.array([r[0] for r in rows]).reshape(n, p)
    origin = cfg.origin
    origins = None if np.isscalar(origin) and float(origin) == 0 else np.broadcast_to(np.asarray(origin, float), (n,))
    ds = from_arrays(
        [str(i + 1) for i in range(n)],
        [r[6] for r in rows],
        [r[4] for r in rows],
        [r[5] for r in rows],
        X,
        [f"x{j + 1}" for j in range(p)],
        origins,
        cfg.tau if n else None,
    )
    report = validate(ds, "hard")
    if not report.ok:
        raise SimulationError("generated data failed validation:\n" + report.to_text())
    truth = SimTruth(
        np.array([r[1] for r in rows], dtype=float),
        np.array([r[2] for r in rows], dtype=float),
        np.array([r[3] for r in rows], dtype=float),
        cfg,
    )
    return ds, truth


def with_overrides(cfg: SimConfig, **kw) -> SimConfig:
    """``dataclasses.replace`` that accepts lists for parameter vectors."""
    for k in ("alpha", "beta", "eta", "theta"):
        if k in kw and kw[k] is not None:
            kw[k] = tuple(float(v) for v in np.atleast_1d(kw[k]))
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
