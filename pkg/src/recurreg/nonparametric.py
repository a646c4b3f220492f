"""Nonparametric cumulative rate estimators.

* Nelson-Aalen mean cumulative function (and the unadjusted cumulative
  sample mean) under independent censoring.
* Product-limit NPMLE of the normalized baseline ``F(t) = Lambda0(t) /
  Lambda0(tau)`` under frailty-induced informative censoring, together with
  the frailty-mean estimator ``mu_Z = mean(m_i / F(Y_i))``.
* Cluster-bootstrap pointwise confidence bands for all of the above.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from scipy import stats

from ._ranks import pair_risk_sums, parallel_map
from .data import DataError, RecurrentDataset, resample_clusters
from .stepfun import StepFunction

ESTIMATORS = ("mcf", "sample_mean", "npmle", "shape")


class EstimationError(ValueError):
    """An estimator is undefined on the supplied data."""


@dataclass(frozen=True)
class NpmleTable:
    s: np.ndarray
    d: np.ndarray
    R: np.ndarray


@dataclass(frozen=True)
class McfCurve:
    estimate: StepFunction
    lower: StepFunction | None = None
    upper: StepFunction | None = None
    level: float = 0.95
    n_boot: int = 0
    label: str = ""
    warnings: tuple[str, ...] = field(default=())

    def to_dict(self) -> dict:
        d = {
            "label": self.label,
            "level": self.level,
            "n_boot": self.n_boot,
            "estimate": self.estimate.to_dict(),
            "lower": None if self.lower is None else self.lower.to_dict(),
            "upper": None if self.upper is None else self.upper.to_dict(),
            "warnings": list(self.warnings),
        }
        return d

    def to_csv(self, stream=None, header: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(["time", "estimate", "lower", "upper", "label"])
        for k, t in enumerate(self.estimate.knots):
            lo = "" if self.lower is None else repr(float(self.lower(t)))
            hi = "" if self.upper is None else repr(float(self.upper(t)))
            w.writerow([repr(float(t)), repr(float(self.estimate.values[k])), lo, hi, self.label])
        out = buf.getvalue()
        if stream is not None:
            stream.write(out)
        return out


def nelson_aalen_mcf(dataset: RecurrentDataset, adjust_riskset: bool = True, label: str = "") -> McfCurve:
    """Nelson-Aalen mean cumulative function.

    Jumps at each distinct recurrent event time ``u`` by ``d(u) / #{j: Y_j >= u}``;
    with ``adjust_riskset=False`` the denominator is ``n`` (cumulative sample
    mean function).
    """
    if dataset.n == 0:
        raise DataError("empty dataset")
    t = dataset.event_times
    if t.size == 0:
        return McfCurve(StepFunction(np.empty(0), np.empty(0), 0.0), label=label)
    knots, d = np.unique(t, return_counts=True)
    if adjust_riskset:
        y = np.sort(dataset.followup)
        at_risk = y.size - np.searchsorted(y, knots, side="left")
    else:
        at_risk = np.full(knots.size, dataset.n)
    return McfCurve(StepFunction(knots, np.cumsum(d / at_risk), 0.0), label=label)


def npmle_table(dataset: RecurrentDataset) -> NpmleTable:
    t = dataset.event_times
    if t.size == 0:
        raise EstimationError("NPMLE undefined: no recurrent events")
    ty = dataset.followup[dataset.event_subject]
    s, d = np.unique(t, return_counts=True)
    R = pair_risk_sums(t, ty, s)
    return NpmleTable(s, d.astype(float), R)


def npmle_shape(dataset: RecurrentDataset) -> tuple[StepFunction, NpmleTable]:
    """Product-limit estimate ``F(t) = prod_{s_l > t} (1 - d_l / R_l)``.

    ``R_l`` counts event pairs with ``t_ik <= s_l <= Y_i``; the result rises to
    1 at the largest event time.
    """
    tab = npmle_table(dataset)
    factors = 1.0 - tab.d / tab.R
    # value on [s_k, s_{k+1}) is the product over l > k
    suffix = np.concatenate([np.cumprod(factors[::-1])[::-1][1:], [1.0]])
    before = float(np.prod(factors))
    return StepFunction(tab.s, suffix, before), tab


def estimate_mu_z(dataset: RecurrentDataset, shape: StepFunction) -> float:
    """Frailty mean ``n^-1 sum m_i / F(Y_i)``; subjects with ``m_i = 0`` add 0."""
    if dataset.n == 0:
        raise DataError("empty dataset")
    m = dataset.event_counts
    f = np.asarray(shape(dataset.followup), dtype=float)
    bad = (m > 0) & (f <= 0)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise EstimationError(
            f"shape function is zero at follow-up {dataset.followup[i]} of subject "
            f"{dataset.subjects[i].id} who has {m[i]} events"
        )
    ratio = np.zeros(dataset.n)
    pos = m > 0
    ratio[pos] = m[pos] / f[pos]
    return float(ratio.mean())


def mean_cumulative(dataset: RecurrentDataset, estimator: str = "mcf") -> StepFunction:
    """Point estimate for the named estimator (see :data:`ESTIMATORS`)."""
    if estimator == "mcf":
        return nelson_aalen_mcf(dataset, True).estimate
    if estimator == "sample_mean":
        return nelson_aalen_mcf(dataset, False).estimate
    if estimator in ("npmle", "shape"):
        F, _ = npmle_shape(dataset)
        if estimator == "shape":
            return F
        return F.scaled(estimate_mu_z(dataset, F))
    raise ValueError(f"unknown estimator {estimator!r}; choose from {ESTIMATORS}")


def _replicate(args, dataset, estimator):
    seed = args
    try:
        return mean_cumulative(resample_clusters(dataset, np.random.default_rng(seed)), estimator)
    except (EstimationError, DataError):
        return None


def bootstrap_mcf_ci(
    dataset: RecurrentDataset,
    estimator: str = "mcf",
    B: int = 200,
    level: float = 0.95,
    seed: int = 0,
    workers: int = 1,
    label: str = "",
) -> McfCurve:
    """Pointwise normal-approximation bands from a cluster bootstrap.

    Each replicate resamples whole subjects and re-runs ``estimator``. Bands
    are ``estimate +/- z sd`` on the union of all replicate knots, clipped
    below at 0. Replicate ``b`` draws from the ``b``-th child of
    ``SeedSequence(seed)``, so results do not depend on ``workers``.
    """
    if B < 2:
        raise ValueError("B must be at least 2")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    est = mean_cumulative(dataset, estimator)
    children = np.random.SeedSequence(seed).spawn(B)
    reps = parallel_map(partial(_replicate, dataset=dataset, estimator=estimator), children, workers)
    ok = [r for r in reps if r is not None]
    notes = []
    failed = B - len(ok)
    if failed > 0.1 * B:
        msg = f"estimator failed on {failed} of {B} bootstrap replicates"
        notes.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    if len(ok) < 2:
        raise EstimationError("fewer than 2 successful bootstrap replicates")
    grid = np.unique(np.concatenate([est.knots] + [r.knots for r in ok]))
    vals = np.array([r(grid) for r in ok]).reshape(len(ok), grid.size)
    before = np.array([r.value_before_first_knot for r in ok])
    z = stats.norm.ppf((1 + level) / 2)
    sd = vals.std(axis=0, ddof=1) if grid.size else np.empty(0)
    sd0 = float(before.std(ddof=1))
    centre = est(grid) if grid.size else np.empty(0)
    c0 = est.value_before_first_knot
    lower = StepFunction(grid, np.maximum(centre - z * sd, 0.0), max(c0 - z * sd0, 0.0))
    upper = StepFunction(grid, centre + z * sd, c0 + z * sd0)
    return McfCurve(est.on_grid(grid), lower, upper, level, B, label, tuple(notes))
