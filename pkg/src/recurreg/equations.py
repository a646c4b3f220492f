"""Estimating functions of the joint frailty scale-change model.

Model convention (reduces to the Cox-type frailty model when the shape
parameters vanish)::

    rate:    lambda(t) = Z * lambda0(t * exp(X'alpha)) * exp(X'beta)
    hazard:  h(t)      = Z * h0(t * exp(X'eta))       * exp(X'theta)

On the transformed axis ``t* = t exp(X'a)`` the rate becomes multiplicative
with factor ``Z exp(X'(beta - alpha))``, which is what every equation below
exploits.
"""

from __future__ import annotations

import numpy as np

from ._ranks import at_risk_sums, pair_risk_sums
from .data import RecurrentDataset
from .nonparametric import EstimationError
from .stepfun import StepFunction

EQ_TYPES = ("logrank", "gehan")


def _vec(a, p) -> np.ndarray:
    a = np.zeros(p) if a is None else np.atleast_1d(np.asarray(a, dtype=float))
    if a.size != p:
        raise ValueError(f"parameter has length {a.size}, expected {p}")
    return a


def transform_times(dataset: RecurrentDataset, a) -> tuple[np.ndarray, np.ndarray]:
    """Event times and follow-up times on the ``t exp(X'a)`` scale.

    Returns ``(t_star, y_star)``: ``t_star`` aligned with
    ``dataset.event_times`` and ``y_star`` with subjects.
    """
    a = _vec(a, dataset.p)
    scale = np.exp(dataset.X @ a)
    return dataset.event_times * scale[dataset.event_subject], dataset.followup * scale


def _require_events(dataset):
    if dataset.event_times.size == 0:
        raise EstimationError("no recurrent events")


def s1n(dataset: RecurrentDataset, alpha, eq_type: str = "logrank") -> np.ndarray:
    """Rank-based estimating function for the shape parameter.

    ``n^-1 sum_ik phi_ik [X_i - Xbar(t*_ik)]`` where ``Xbar`` averages ``X_j``
    over event pairs with ``t*_jl <= t*_ik <= Y*_j``. ``phi = 1`` (log-rank)
    or ``R(t*_ik) / n`` (Gehan).
    """
    _require_events(dataset)
    if eq_type not in EQ_TYPES:
        raise ValueError(f"eq_type must be one of {EQ_TYPES}")
    tstar, ystar = transform_times(dataset, alpha)
    sub = dataset.event_subject
    Xe = dataset.X[sub]
    R, SX = pair_risk_sums(tstar, ystar[sub], tstar, Xe)
    # each event is in its own risk set, so R >= 1
    bracket = Xe - SX / R[:, None]
    if eq_type == "gehan":
        bracket = bracket * (R / dataset.n)[:, None]
    return bracket.sum(axis=0) / dataset.n


def baseline_rate_gsc(dataset: RecurrentDataset, alpha) -> StepFunction:
    """Exponential-form baseline cumulative rate on the transformed axis.

    ``Lambda0(t) = exp(-sum_{ik: t*_ik > t} 1 / R(t*_ik))``, normalized so
    that it equals 1 beyond the largest transformed event time.
    """
    _require_events(dataset)
    tstar, ystar = transform_times(dataset, alpha)
    R = pair_risk_sums(tstar, ystar[dataset.event_subject], tstar)
    knots, inv = np.unique(tstar, return_inverse=True)
    inc = np.zeros(knots.size)
    np.add.at(inc, inv, 1.0 / R)
    tail = np.concatenate([np.cumsum(inc[::-1])[::-1][1:], [0.0]])
    return StepFunction(knots, np.exp(-tail), float(np.exp(-inc.sum())))


def rate_weights(dataset: RecurrentDataset, alpha, baseline: StepFunction) -> np.ndarray:
    """``m_i / Lambda0(Y*_i)``, with 0 for subjects without events."""
    _, ystar = transform_times(dataset, alpha)
    m = dataset.event_counts
    lam = np.asarray(baseline(ystar), dtype=float)
    bad = (m > 0) & (lam <= 0)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise EstimationError(
            f"baseline is zero at transformed follow-up {ystar[i]:.6g} of subject "
            f"{dataset.subjects[i].id} with {m[i]} events"
        )
    w = np.zeros(dataset.n)
    pos = m > 0
    w[pos] = m[pos] / lam[pos]
    return w


def design(dataset: RecurrentDataset) -> np.ndarray:
    return np.column_stack([np.ones(dataset.n), dataset.X])


def s2n(dataset: RecurrentDataset, alpha, psi, baseline: StepFunction | None = None, weights=None) -> np.ndarray:
    """``n^-1 sum Xbar_i [m_i / Lambda0(Y*_i(alpha)) - exp(Xbar_i' psi)]``.

    ``psi = (log mu_Z, gamma)`` with ``gamma = beta - alpha``. The baseline
    defaults to :func:`baseline_rate_gsc` at ``alpha``; precomputed
    ``weights`` skip the baseline entirely.
    """
    if weights is None:
        if baseline is None:
            baseline = baseline_rate_gsc(dataset, alpha)
        weights = rate_weights(dataset, alpha, baseline)
    Xb = design(dataset)
    psi = _vec(psi, dataset.p + 1)
    return Xb.T @ (weights - np.exp(Xb @ psi)) / dataset.n


def s2n_jacobian(dataset: RecurrentDataset, psi) -> np.ndarray:
    Xb = design(dataset)
    psi = _vec(psi, dataset.p + 1)
    e = np.exp(Xb @ psi)
    return -(Xb.T * e) @ Xb / dataset.n


def _hazard_parts(dataset, zhat, eta, theta):
    eta = _vec(eta, dataset.p)
    theta = _vec(theta, dataset.p)
    ystar = dataset.followup * np.exp(dataset.X @ eta)
    v = np.asarray(zhat, dtype=float) * np.exp(dataset.X @ (theta - eta))
    return ystar, v


def _hazard_score(dataset, zhat, eta, theta, eq_type, with_y):
    if eq_type not in EQ_TYPES:
        raise ValueError(f"eq_type must be one of {EQ_TYPES}")
    ystar, v = _hazard_parts(dataset, zhat, eta, theta)
    d = dataset.terminal
    p = dataset.p
    if not d.any():
        return np.zeros(p), 0
    X = dataset.X
    q = ystar[d]
    sums = at_risk_sums(ystar, q, np.column_stack([v, v[:, None] * X]))
    s0, s1 = sums[:, 0], sums[:, 1:]
    empty = s0 <= 0
    safe = np.where(empty, 1.0, s0)
    bracket = X[d] - s1 / safe[:, None]
    if with_y:
        # the time factor is the failure time Y*_i for every risk-set member
        bracket = bracket * q[:, None]
    bracket[empty] = 0.0
    if eq_type == "gehan":
        bracket = bracket * s0[:, None]
    return bracket.sum(axis=0), int(empty.sum())


def s3n(dataset: RecurrentDataset, zhat, eta, theta, eq_type: str = "logrank") -> np.ndarray:
    """Borrowing-strength estimating function for the hazard model.

    ``sum_i Delta_i phi_i [X_i - sum_j w_j X_j / sum_j w_j]`` over the
    transformed risk set ``Y*_j(eta) >= Y*_i(eta)`` with weights
    ``w_j = Zhat_j exp(X_j'(theta - eta))``. Empty risk sets contribute 0.
    """
    return _hazard_score(dataset, zhat, eta, theta, eq_type, False)[0]


def s4n(dataset: RecurrentDataset, zhat, eta, theta, eq_type: str = "logrank") -> np.ndarray:
    """As :func:`s3n` with the bracket multiplied by ``Y*_i(eta)``.

    ``Y*_i [X_i - Xbar(Y*_i)]``: both the failing subject and the risk-set
    average carry the failure time ``Y*_i``, which keeps the integrand
    predictable and the equation unbiased at the true parameters.
    """
    return _hazard_score(dataset, zhat, eta, theta, eq_type, True)[0]


def empty_hazard_terms(dataset, zhat, eta, theta) -> int:
    return _hazard_score(dataset, zhat, eta, theta, "logrank", False)[1]


def baseline_hazard(dataset: RecurrentDataset, zhat, eta, theta) -> StepFunction:
    """Cumulative baseline hazard with jumps ``1 / sum_{Y*_j >= Y*_i} w_j`` at terminal times."""
    d = dataset.terminal
    if not d.any():
        raise EstimationError("no terminal events")
    ystar, v = _hazard_parts(dataset, zhat, eta, theta)
    q = ystar[d]
    s0 = at_risk_sums(ystar, q, v)
    if np.any(s0 <= 0):
        t = float(q[np.flatnonzero(s0 <= 0)[0]])
        raise EstimationError(f"all frailty weights vanish in the risk set at transformed time {t:.6g}")
    return StepFunction.from_jumps(q, 1.0 / s0, 0.0)
