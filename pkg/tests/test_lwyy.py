import numpy as np
import pytest

import naive
from recurreg.data import from_arrays
from recurreg.lwyy import LwyyError, fit_lwyy, lwyy_score
from recurreg.simulate import default_config, simulate_gsc


def single_interval(seed, n=150):
    rng = np.random.default_rng(seed)
    X = np.column_stack([rng.integers(0, 2, n), rng.normal(size=n)])
    t = rng.exponential(1 / np.exp(X @ [0.7, -0.4]))
    c = rng.exponential(1.5, size=n)
    y = np.round(np.minimum(t, c), 4) + 1e-4
    ev = t <= c
    ds = from_arrays(range(n), [[yi] if e else [] for yi, e in zip(y, ev)], y, np.zeros(n), X)
    return ds, y, ev, X


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_single_interval_matches_cox(seed):
    ds, y, ev, X = single_interval(seed)
    fit = fit_lwyy(ds)
    assert np.max(np.abs(fit.coef - naive.cox_newton(y, ev, X))) <= 1e-6


def test_score_and_sandwich():
    ds = simulate_gsc(default_config(300, seed=4))[0]
    fit = fit_lwyy(ds)
    assert np.max(np.abs(lwyy_score(ds, fit.coef))) <= 1e-8
    v = fit.vcov_robust
    assert np.allclose(v, v.T) and np.all(np.linalg.eigvalsh(v) >= 0)
    assert np.all(fit.robust_se > 0) and np.all(fit.naive_se > 0)
    d = fit.to_dict()
    assert d["model"] == "cox.LWYY" and len(d["coef"]) == 2
    assert "robust se" in fit.summary()


def test_permutation_null():
    ds = simulate_gsc(default_config(2000, seed=12))[0]
    rng = np.random.default_rng(0)
    perm = ds.with_covariates(ds.X[rng.permutation(ds.n)], ds.covariate_names)
    fit = fit_lwyy(perm)
    assert np.all(np.abs(fit.coef) <= 3 * fit.robust_se)


def test_errors():
    with pytest.raises(LwyyError, match="no recurrent"):
        fit_lwyy(from_arrays(["a"], [[]], [1.0], [0], X=[[1.0]]))
    with pytest.raises(LwyyError, match="constant"):
        fit_lwyy(from_arrays(["a", "b"], [[0.5], [0.7]], [1.0, 1.0], [0, 0], X=[[1.0], [1.0]]))
    # perfect separation: only the x = 1 subject has events
    sep = from_arrays(["a", "b"], [[0.5, 0.7], []], [1.0, 2.0], [0, 0], X=[[1.0], [0.0]])
    with pytest.raises(LwyyError):
        fit_lwyy(sep)
