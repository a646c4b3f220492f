"""Andersen-Gill proportional rates fit with a cluster-robust sandwich variance.

Each subject is at risk on ``(0, Y_i]`` in person time with time-fixed
covariates; ties use the Breslow approximation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from ._ranks import at_risk_sums
from .data import RecurrentDataset
from .nonparametric import EstimationError


class LwyyError(EstimationError):
    """Newton-Raphson failed or the partial likelihood is monotone."""


@dataclass(frozen=True)
class LwyyFit:
    coef: np.ndarray
    naive_se: np.ndarray
    robust_se: np.ndarray
    vcov_naive: np.ndarray
    vcov_robust: np.ndarray
    loglik: float
    score: np.ndarray
    iterations: int
    covariate_names: tuple[str, ...]
    n: int
    n_events: int

    def to_dict(self) -> dict:
        z = self.coef / self.robust_se
        return {
            "model": "cox.LWYY",
            "n": self.n,
            "n_events": self.n_events,
            "covariates": list(self.covariate_names),
            "coef": self.coef.tolist(),
            "exp_coef": np.exp(self.coef).tolist(),
            "se": self.naive_se.tolist(),
            "robust_se": self.robust_se.tolist(),
            "z": z.tolist(),
            "p_value": (2 * stats.norm.sf(np.abs(z))).tolist(),
            "loglik": self.loglik,
            "iterations": self.iterations,
            "score_max_abs": float(np.max(np.abs(self.score), initial=0.0)),
            "vcov_robust": self.vcov_robust.tolist(),
        }

    def summary(self) -> str:
        d = self.to_dict()
        head = f"{'':<8}{'coef':>11}{'exp(coef)':>11}{'se(coef)':>11}{'robust se':>11}{'z':>9}{'Pr(>|z|)':>10}"
        lines = ["Andersen-Gill fit with cluster-robust variance", f"n = {self.n}, number of events = {self.n_events}", "", head]
        for j, name in enumerate(self.covariate_names):
            lines.append(
                f"{name:<8}{d['coef'][j]:>11.6f}{d['exp_coef'][j]:>11.6f}{d['se'][j]:>11.6f}"
                f"{d['robust_se'][j]:>11.6f}{d['z'][j]:>9.3f}{d['p_value'][j]:>10.3g}"
            )
        return "\n".join(lines)


def _pieces(dataset: RecurrentDataset, b: np.ndarray):
    X = dataset.X
    y = dataset.followup
    u, d = np.unique(dataset.event_times, return_counts=True)
    r = np.exp(X @ b)
    p = X.shape[1]
    w = np.column_stack([r, r[:, None] * X, (r[:, None, None] * X[:, :, None] * X[:, None, :]).reshape(-1, p * p)])
    s = at_risk_sums(y, u, w)
    s0, s1, s2 = s[:, 0], s[:, 1 : 1 + p], s[:, 1 + p :].reshape(-1, p, p)
    return u, d.astype(float), r, s0, s1, s2


def lwyy_score(dataset: RecurrentDataset, b) -> np.ndarray:
    """Partial-likelihood score ``sum_events [X_i - S1(t) / S0(t)]``."""
    b = np.asarray(b, dtype=float)
    u, d, _, s0, s1, _ = _pieces(dataset, b)
    return dataset.X[dataset.event_subject].sum(axis=0) - (d[:, None] * s1 / s0[:, None]).sum(axis=0)


def _loglik_info(dataset, b):
    u, d, r, s0, s1, s2 = _pieces(dataset, b)
    X = dataset.X
    xbar = s1 / s0[:, None]
    score = X[dataset.event_subject].sum(axis=0) - (d[:, None] * xbar).sum(axis=0)
    info = (d[:, None, None] * (s2 / s0[:, None, None] - xbar[:, :, None] * xbar[:, None, :])).sum(axis=0)
    ll = float((X[dataset.event_subject] @ b).sum() - (d * np.log(s0)).sum())
    return ll, score, info, (u, d, r, s0, xbar)


def fit_lwyy(dataset: RecurrentDataset, max_iter: int = 50, tol: float = 1e-10) -> LwyyFit:
    """Newton-Raphson with step halving; robust variance ``A^-1 B A^-1``.

    ``B`` sums outer products of per-subject score residuals
    ``sum_k [X_i - Xbar(t_ik)] - int e^{X_i'b} [X_i - Xbar(u)] dLambda0_hat(u)``.
    """
    if dataset.event_times.size == 0:
        raise LwyyError("no recurrent events")
    p = dataset.p
    if p == 0:
        raise LwyyError("no covariates")
    if np.any(np.ptp(dataset.X, axis=0) == 0):
        raise LwyyError("a covariate is constant")
    b = np.zeros(p)
    ll, score, info, parts = _loglik_info(dataset, b)
    it = 0
    for it in range(1, max_iter + 1):
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError as exc:
            raise LwyyError("singular information matrix") from exc
        for _ in range(30):
            nb = b + step
            nll, nscore, ninfo, nparts = _loglik_info(dataset, nb)
            if np.isfinite(nll) and nll >= ll - 1e-12 * abs(ll):
                break
            step = step / 2
        else:
            raise LwyyError("step halving failed")
        b, ll, score, info, parts = nb, nll, nscore, ninfo, nparts
        if np.max(np.abs(b)) > 50:
            raise LwyyError("monotone likelihood: coefficients diverge")
        if np.max(np.abs(step)) < tol and np.max(np.abs(score)) <= 1e-9:
            break
    else:
        raise LwyyError(f"Newton-Raphson did not converge in {max_iter} iterations")
    if np.linalg.cond(info) > 1e12:
        raise LwyyError("information matrix is singular; likelihood may be monotone")
    ainv = np.linalg.inv(info)
    u, d, r, s0, xbar = parts
    X = dataset.X
    resid = np.zeros((dataset.n, p))
    # event part: X_i - Xbar(t_ik) at each own event
    k = np.searchsorted(u, dataset.event_times)
    np.add.at(resid, dataset.event_subject, X[dataset.event_subject] - xbar[k])
    # compensator part via cumulative sums over event times up to Y_i
    c0 = np.concatenate([[0.0], np.cumsum(d / s0)])
    c1 = np.vstack([np.zeros((1, p)), np.cumsum((d / s0)[:, None] * xbar, axis=0)])
    idx = np.searchsorted(u, dataset.followup, side="right")
    resid -= r[:, None] * (X * c0[idx][:, None] - c1[idx])
    B = resid.T @ resid
    rob = ainv @ B @ ainv
    rob = (rob + rob.T) / 2
    return LwyyFit(
        b, np.sqrt(np.diag(ainv)), np.sqrt(np.diag(rob)), ainv, rob, ll, score, it,
        dataset.covariate_names, dataset.n, int(dataset.event_times.size),
    )
