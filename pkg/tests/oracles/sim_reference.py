"""Independent Monte Carlo reference for the default simulation recipe.

Vectorized and rejection-free: given (X, Z, C, D) the number of recurrent
events on [0, Y] is Poisson with mean Z exp(X'(beta - alpha)) Lam0(Y exp(X'alpha)),
so no event times are needed for the counts. Run once; the printed values are
frozen into the test suite.

    python3 tests/oracles/sim_reference.py [n] [seed]
"""

import sys

import numpy as np


def reference(n, alpha, beta, eta, theta, seed, tau=60.0, cumulative=False):
    rng = np.random.default_rng(seed)
    x1 = (rng.random(n) < 0.5).astype(float)
    x2 = rng.standard_normal(n)
    X = np.column_stack([x1, x2])
    z = rng.gamma(4.0, 0.25, n)
    c = rng.uniform(0.0, 2 * tau * x1 + 2 * z**2 * tau * (1 - x1))
    ch = z * np.exp(X @ (theta if cumulative else theta - eta))
    cr = z * np.exp(X @ (beta if cumulative else beta - alpha))
    e = rng.exponential(size=n)
    with np.errstate(over="ignore"):
        d = np.expm1(5.0 * e / ch) / np.exp(X @ eta)
    end = np.minimum(c, tau)
    y = np.minimum(d, end)
    m = rng.poisson(cr * 2.0 * np.log1p(y * np.exp(X @ alpha)))
    return float(m.mean()), float((d <= end).mean())


if __name__ == "__main__":
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 2_000_000
    seed = int(sys.argv[2]) if len(sys.argv) > 2 else 20240
    a = np.array
    print("default", reference(n, a([0.0, 0]), a([-1.0, -1]), a([0.0, 0]), a([1.0, 1]), seed))
    print("preset rate convention", reference(n, a([-1.0, -1]), a([0.0, 0]), a([1.0, 1]), a([0.0, 0]), seed))
    print(
        "preset cumulative convention",
        reference(n, a([-1.0, -1]), a([0.0, 0]), a([1.0, 1]), a([0.0, 0]), seed, cumulative=True),
    )
