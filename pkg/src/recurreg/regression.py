"""Joint frailty scale-change regression for recurrent and terminal events.

The rate model is fitted first (shape parameter from the rank equation, then
the size part from the frailty-mean equation), subject-level frailties are
formed from the fitted rate, and the terminal-event hazard model borrows
those frailties as weights.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from functools import partial

import numpy as np
from scipy import stats

from ._ranks import parallel_map
from .data import DataError, RecurrentDataset, resample_clusters
from .equations import (
    EQ_TYPES,
    baseline_hazard,
    baseline_rate_gsc,
    empty_hazard_terms,
    rate_weights,
    s1n,
    s2n,
    s3n,
    s4n,
)
from .nonparametric import EstimationError, npmle_shape
from .solver import SolverConfig, SolverResult, solve_with_fallback
from .stepfun import StepFunction

RATE_FORMS = ("cox", "ar", "am", "gsc")
HAZARD_FORMS = ("none", "cox", "ar", "am", "gsc")
# Labels follow the model definitions: shape = 0 leaves the Cox-type model,
# shape = size (gamma = 0) the accelerated mean model and size = 0 the
# accelerated rate model. Some published output swaps the last two names.
TEST_LABELS = {
    "cox_shape_zero": "Ho: shape = 0 (Cox-type model)",
    "am_gamma_zero": "Ho: shape = size (Accelerated mean model)",
    "ar_beta_zero": "Ho: size = 0 (Accelerated rate model)",
}


class ModelError(ValueError):
    """Invalid model specification or a model that is not identifiable on the data."""


@dataclass(frozen=True)
class ModelSpec:
    rate_form: str = "cox"
    hazard_form: str = "none"
    eq_type: str = "logrank"
    solver: SolverConfig = field(default_factory=SolverConfig)
    init: dict = field(default_factory=dict)
    epsilon: float = 0.001
    boot: int = 0
    parallel: bool = False
    workers: int = 1
    warm_start: bool = False

    def __post_init__(self):
        if self.rate_form not in RATE_FORMS:
            raise ModelError(f"unknown rate form {self.rate_form!r}; choose from {RATE_FORMS}")
        if self.hazard_form not in HAZARD_FORMS:
            raise ModelError(f"unknown hazard form {self.hazard_form!r}; choose from {HAZARD_FORMS}")
        if self.eq_type not in EQ_TYPES:
            raise ModelError(f"eq_type must be one of {EQ_TYPES}")
        if self.epsilon < 0:
            raise ModelError("epsilon must be nonnegative")
        if self.boot < 0:
            raise ModelError("boot must be nonnegative")

    @property
    def model_string(self) -> str:
        return self.rate_form if self.hazard_form == "none" else f"{self.rate_form}|{self.hazard_form}"

    def start(self, name: str, p: int) -> np.ndarray:
        v = self.init.get(name)
        if v is None:
            return np.zeros(p)
        v = np.atleast_1d(np.asarray(v, dtype=float))
        if v.size == 1 and p != 1:
            v = np.full(p, float(v[0]))
        if v.size != p:
            raise ModelError(f"init {name} has length {v.size}, expected {p}")
        return v


def parse_model(model: str, **kwargs) -> ModelSpec:
    """Turn ``"cox"``, ``"gsc"``, ``"cox|ar"`` ... into a :class:`ModelSpec`.

    ``"cox.LWYY"`` is not a frailty model; use :func:`recurreg.lwyy.fit_lwyy`.
    """
    text = model.strip()
    parts = [s.strip() for s in text.split("|")]
    if len(parts) > 2 or parts[0] not in RATE_FORMS or (len(parts) == 2 and parts[1] not in RATE_FORMS):
        valid = list(RATE_FORMS) + [f"{a}|{b}" for a in RATE_FORMS for b in RATE_FORMS] + ["cox.LWYY"]
        raise ModelError(f"unknown model {model!r}; valid models: {', '.join(valid)}")
    hazard = parts[1] if len(parts) == 2 else "none"
    return ModelSpec(rate_form=parts[0], hazard_form=hazard, **kwargs)


@dataclass(frozen=True)
class RateFit:
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    log_mu_z: float
    baseline: StepFunction
    diagnostics: tuple[SolverResult, ...] = ()
    converged: bool = True

    @property
    def mu_z(self) -> float:
        return float(np.exp(self.log_mu_z))


@dataclass(frozen=True)
class HazardFit:
    eta: np.ndarray
    theta: np.ndarray
    baseline: StepFunction
    diagnostics: tuple[SolverResult, ...] = ()
    converged: bool = True
    empty_risk_terms: int = 0


@dataclass(frozen=True)
class TestResult:
    name: str
    statistic: float
    df: int
    p_value: float

    @property
    def label(self) -> str:
        return TEST_LABELS.get(self.name, self.name)


@dataclass(frozen=True)
class JointFit:
    spec: ModelSpec
    rate: RateFit
    hazard: HazardFit | None
    zhat: np.ndarray
    covariate_names: tuple[str, ...]
    n: int
    vcov: dict = field(default_factory=dict)
    boot_used: int = 0
    notes: tuple[str, ...] = ()

    @property
    def converged(self) -> bool:
        return self.rate.converged and (self.hazard is None or self.hazard.converged)

    def params(self) -> dict[str, np.ndarray]:
        out = {
            "alpha": self.rate.alpha,
            "beta": self.rate.beta,
            "gamma": self.rate.gamma,
            "log_mu_z": np.array([self.rate.log_mu_z]),
        }
        if self.hazard is not None:
            out["eta"] = self.hazard.eta
            out["theta"] = self.hazard.theta
        return out

    def se(self, block: str) -> np.ndarray | None:
        v = self.vcov.get(block)
        if v is None:
            return None
        return np.sqrt(np.clip(np.diag(v), 0.0, None))

    def tests(self) -> list[TestResult]:
        """Submodel tests for a gsc rate fit: alpha = 0, gamma = 0, beta = 0."""
        if self.spec.rate_form != "gsc":
            raise ModelError("submodel tests need a gsc rate model")
        if not self.vcov:
            raise ModelError("submodel tests need bootstrap covariance (boot >= 2)")
        return [
            wald_test(self.rate.alpha, self.vcov["alpha"], "cox_shape_zero"),
            wald_test(self.rate.gamma, self.vcov["gamma"], "am_gamma_zero"),
            wald_test(self.rate.beta, self.vcov["beta"], "ar_beta_zero"),
        ]

    def to_dict(self, tests: bool = False) -> dict:
        from .report import fit_to_dict

        return fit_to_dict(self, tests)

    def summary(self, tests: bool = False) -> str:
        from .report import fit_summary_text

        return fit_summary_text(self, tests)


# ---------------------------------------------------------------------------
# Rate model


def _span_tol(values: np.ndarray, n: int, tol: float, factor: float = 1.0) -> np.ndarray:
    """Per-component acceptance for step-valued estimating functions.

    A rank equation changes in jumps of at most one observation's
    contribution, ``span(x_j) / n``; an exact zero usually does not exist.
    """
    span = values.max(axis=0) - values.min(axis=0) if values.size else np.zeros(values.shape[1])
    return np.maximum(tol, factor * span / max(n, 1))


def _check_varying(dataset: RecurrentDataset, what: str):
    if dataset.p and dataset.n:
        const = np.ptp(dataset.X, axis=0) == 0
        if np.any(const):
            names = [dataset.covariate_names[j] for j in np.flatnonzero(const)]
            raise ModelError(f"{what} is not identifiable with constant covariate(s) {names}")


def _solve(f, spec: ModelSpec, init, tol) -> tuple[np.ndarray, list[SolverResult], bool]:
    cfg = replace(spec.solver, tol=tuple(np.atleast_1d(tol)) if np.size(tol) > 1 else float(np.max(tol)))
    best, trail = solve_with_fallback(f, cfg, init)
    return best.solution, trail, best.converged


def _size_equation(dataset, spec, alpha, baseline, gamma0):
    w = rate_weights(dataset, alpha, baseline)
    if not np.any(w > 0):
        raise EstimationError("no subject with recurrent events")
    psi0 = np.concatenate([[np.log(w.mean())], gamma0])

    def f(psi):
        return s2n(dataset, alpha, psi, weights=w)

    return f, psi0, w


def estimate_rate(dataset: RecurrentDataset, spec: ModelSpec) -> RateFit:
    """Fit the rate part of the model named by ``spec.rate_form``.

    ``cox`` solves the size equation with ``alpha = 0`` and the product-limit
    baseline; ``ar`` solves the rank equation only (``beta = 0``); ``am``
    solves the profiled equation ``n^-1 sum X_i [m_i / Lambda0(Y*_i) - mu_Z]``
    with ``alpha = beta``; ``gsc`` solves the rank equation for ``alpha`` and
    then the size equation for ``gamma``.
    """
    if dataset.n == 0:
        raise DataError("empty dataset")
    if dataset.event_times.size == 0:
        raise EstimationError("rate model needs at least one recurrent event")
    p = dataset.p
    form = spec.rate_form
    tol = float(np.min(spec.solver.tol))
    a0 = spec.start("alpha", p)
    b0 = spec.start("beta", p)
    diags: list[SolverResult] = []
    ok = True
    if form != "cox":
        _check_varying(dataset, f"rate model {form!r}")

    if form in ("ar", "gsc"):
        factor = max(1.0, dataset.event_times.size / dataset.n) if spec.eq_type == "gehan" else 1.0
        atol = _span_tol(dataset.X, dataset.n, tol, factor)
        alpha, trail, conv = _solve(lambda a: s1n(dataset, a, spec.eq_type), spec, a0, atol)
        diags += trail
        ok &= conv
    elif form == "am":
        atol = _span_tol(dataset.X, dataset.n, tol, 1.0)

        def f_am(a):
            w = rate_weights(dataset, a, baseline_rate_gsc(dataset, a))
            return dataset.X.T @ (w - w.mean()) / dataset.n

        # scale of w is ~ mean(m); rescale the acceptance accordingly
        wscale = max(1.0, float(dataset.event_counts.mean()))
        alpha, trail, conv = _solve(f_am, spec, a0, atol * wscale)
        diags += trail
        ok &= conv
    else:
        alpha = np.zeros(p)

    if form == "cox" or p == 0:
        baseline, _ = npmle_shape(dataset)
    else:
        baseline = baseline_rate_gsc(dataset, alpha)

    if form in ("cox", "gsc"):
        f, psi0, _ = _size_equation(dataset, spec, alpha, baseline, b0 - a0 if form == "gsc" else b0)
        psi, trail, conv = _solve(f, spec, psi0, tol)
        diags += trail
        ok &= conv
        log_mu, gamma = float(psi[0]), psi[1:]
        beta = alpha + gamma
    elif form == "ar":
        gamma = -alpha
        beta = np.zeros(p)
        w = rate_weights(dataset, alpha, baseline)
        log_mu = float(np.log(np.mean(w * np.exp(-dataset.X @ gamma))))
    else:  # am
        gamma = np.zeros(p)
        beta = alpha.copy()
        w = rate_weights(dataset, alpha, baseline)
        log_mu = float(np.log(w.mean()))
    return RateFit(
        np.asarray(alpha, float), np.asarray(beta, float), np.asarray(gamma, float),
        log_mu, baseline, tuple(diags), bool(ok),
    )


def estimate_frailties(dataset: RecurrentDataset, rate: RateFit, epsilon: float = 0.001) -> np.ndarray:
    """``Zhat_i = (m_i + eps) / (Lambda0(Y*_i(alpha)) exp(X_i'gamma) + eps)``."""
    ystar = dataset.followup * np.exp(dataset.X @ rate.alpha)
    denom = np.asarray(rate.baseline(ystar), dtype=float) * np.exp(dataset.X @ rate.gamma)
    m = dataset.event_counts.astype(float)
    num = m + epsilon
    den = denom + epsilon
    if np.any(den <= 0):
        i = int(np.flatnonzero(den <= 0)[0])
        raise EstimationError(
            f"frailty of subject {dataset.subjects[i].id} undefined (zero denominator with epsilon = 0)"
        )
    return num / den


# ---------------------------------------------------------------------------
# Hazard model


def estimate_hazard(dataset: RecurrentDataset, zhat, form: str, spec: ModelSpec) -> HazardFit:
    """Fit the terminal-event hazard with frailty weights ``zhat``.

    ``cox`` solves ``S3n(0, theta)``, ``ar`` ``S3n(eta, 0)``, ``am``
    ``S3n(eta, eta)`` and ``gsc`` the stacked ``(S3n, S4n)`` in ``(eta, theta)``.
    """
    if form not in HAZARD_FORMS or form == "none":
        raise ModelError(f"hazard form must be one of {HAZARD_FORMS[1:]}")
    if not dataset.terminal.any():
        raise EstimationError("hazard model is not identifiable: no terminal events")
    zhat = np.asarray(zhat, dtype=float)
    p, n = dataset.p, dataset.n
    tol = float(np.min(spec.solver.tol))
    eq = spec.eq_type
    if form != "cox":
        _check_varying(dataset, f"hazard model {form!r}")
    norm = float(n) if eq == "logrank" else float(n) * max(float(zhat.sum()), 1e-300)
    eta0 = spec.start("eta", p)
    theta0 = spec.start("theta", p)
    if spec.warm_start and form != "cox":
        warm = estimate_hazard(dataset, zhat, "cox", replace(spec, warm_start=False))
        theta0 = warm.theta.copy()
    xtol = _span_tol(dataset.X, n, tol)
    zero = np.zeros(p)

    if form == "cox":
        theta, trail, ok = _solve(lambda th: s3n(dataset, zhat, zero, th, eq) / norm, spec, theta0, tol)
        eta = zero
    elif form == "ar":
        eta, trail, ok = _solve(lambda e: s3n(dataset, zhat, e, zero, eq) / norm, spec, eta0, xtol)
        theta = zero
    elif form == "am":
        eta, trail, ok = _solve(lambda e: s3n(dataset, zhat, e, e, eq) / norm, spec, eta0, xtol)
        theta = eta.copy()
    else:
        ybar = float(dataset.followup.mean()) or 1.0
        ytol = _span_tol(dataset.X * (dataset.followup / ybar)[:, None], n, tol)

        def f(v):
            e, th = v[:p], v[p:]
            return np.concatenate([
                s3n(dataset, zhat, e, th, eq) / norm,
                s4n(dataset, zhat, e, th, eq) / (norm * ybar),
            ])

        sol, trail, ok = _solve(f, spec, np.concatenate([eta0, theta0]), np.concatenate([xtol, ytol]))
        eta, theta = sol[:p], sol[p:]
    base = baseline_hazard(dataset, zhat, eta, theta)
    return HazardFit(
        np.asarray(eta, float), np.asarray(theta, float), base, tuple(trail), bool(ok),
        empty_hazard_terms(dataset, zhat, eta, theta),
    )


# ---------------------------------------------------------------------------
# Orchestration, resampling inference, tests, prediction


def _point_fit(dataset: RecurrentDataset, spec: ModelSpec) -> JointFit:
    rate = estimate_rate(dataset, spec)
    zhat = estimate_frailties(dataset, rate, spec.epsilon)
    hazard = None
    if spec.hazard_form != "none":
        hazard = estimate_hazard(dataset, zhat, spec.hazard_form, spec)
    return JointFit(spec, rate, hazard, zhat, dataset.covariate_names, dataset.n)


def fit_joint(dataset: RecurrentDataset, spec: ModelSpec, seed: int = 0) -> JointFit:
    """Fit rate, frailties and (optionally) hazard; bootstrap if ``spec.boot >= 2``."""
    fit = _point_fit(dataset, spec)
    if spec.boot >= 2:
        vcov, used, notes = bootstrap_covariance(dataset, spec, seed)
        fit = replace(fit, vcov=vcov, boot_used=used, notes=tuple(notes))
    elif spec.boot == 1:
        raise ModelError("boot must be 0 or at least 2")
    return fit


def _boot_replicate(child, dataset, spec):
    sample = resample_clusters(dataset, np.random.default_rng(child))
    try:
        fit = _point_fit(sample, spec)
    except (EstimationError, ModelError, DataError, FloatingPointError):
        return None
    if not fit.converged:
        return None
    return fit.params()


def bootstrap_covariance(dataset: RecurrentDataset, spec: ModelSpec, seed: int = 0):
    """Cluster-bootstrap covariance blocks for every parameter vector.

    Returns ``(vcov, boot_used, notes)``. Replicates whose fit fails or does
    not converge are dropped and counted.
    """
    B = spec.boot
    if B < 2:
        raise ModelError("bootstrap needs boot >= 2")
    inner = replace(spec, boot=0)
    children = np.random.SeedSequence(seed).spawn(B)
    workers = spec.workers if spec.parallel else 1
    reps = parallel_map(partial(_boot_replicate, dataset=dataset, spec=inner), children, workers)
    good = [r for r in reps if r is not None]
    notes = []
    failed = B - len(good)
    if failed:
        notes.append(f"{failed} of {B} bootstrap replicates failed or did not converge")
    if failed > 0.1 * B:
        warnings.warn(notes[-1], RuntimeWarning, stacklevel=2)
    if len(good) < 2:
        raise EstimationError(f"only {len(good)} bootstrap replicates converged")
    vcov = {}
    for key in good[0]:
        mat = np.array([r[key] for r in good])
        k = mat.shape[1]
        vcov[key] = np.cov(mat, rowvar=False, ddof=1).reshape(k, k) if k else np.zeros((0, 0))
    return vcov, len(good), notes


def wald_test(estimate, cov, name: str = "wald") -> TestResult:
    """``T = est' cov^-1 est`` against chi-square with ``len(est)`` df."""
    est = np.atleast_1d(np.asarray(estimate, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    k = est.size
    if cov.shape != (k, k):
        raise ValueError(f"covariance shape {cov.shape} does not match estimate length {k}")
    if not np.any(est):
        return TestResult(name, 0.0, k, 1.0)
    try:
        if np.linalg.cond(cov) > 1e12:
            raise np.linalg.LinAlgError
        inv = np.linalg.inv(cov)
    except np.linalg.LinAlgError:
        warnings.warn("covariance is singular; using the pseudo-inverse", RuntimeWarning, stacklevel=2)
        inv = np.linalg.pinv(cov)
    stat = float(max(est @ inv @ est, 0.0))
    return TestResult(name, stat, k, float(stats.chi2.sf(stat, k)))


def predict_cumulative(fit: JointFit, x, frailty: float | None = None) -> tuple[StepFunction, StepFunction | None]:
    """Predicted cumulative rate and hazard for covariates ``x``.

    ``rate(t) = z exp(x'gamma) Lambda0(t exp(x'alpha))`` and likewise for the
    hazard; ``z`` defaults to the estimated frailty mean. Both curves start
    at 0.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float)) if fit.rate.alpha.size else np.zeros(0)
    if x.size != fit.rate.alpha.size:
        raise ValueError(f"x has length {x.size}, expected {fit.rate.alpha.size}")
    z = fit.rate.mu_z if frailty is None else float(frailty)
    r = fit.rate
    base = r.baseline
    rate = StepFunction(
        base.knots / np.exp(x @ r.alpha),
        z * np.exp(x @ r.gamma) * base.values,
        0.0,
    )
    hazard = None
    if fit.hazard is not None:
        h = fit.hazard
        hb = h.baseline
        hazard = StepFunction(
            hb.knots / np.exp(x @ h.eta),
            z * np.exp(x @ (h.theta - h.eta)) * hb.values,
            0.0,
        )
    return rate, hazard
