"""Independent reference implementations used by the tests."""
import math

import numpy as np


def dummy_ols(y, X, countries):
    """Fixed-effects coefficients from explicit country dummies and the normal equations."""
    labels = sorted(set(countries))
    D = np.array([[c == lab for lab in labels] for c in countries], dtype=float)
    Z = np.column_stack([X, D])
    beta = np.linalg.solve(Z.T @ Z, Z.T @ y)
    return beta[: X.shape[1]]


def pooled_ols(y, X):
    Z = np.column_stack([np.ones(len(y)), X])
    return np.linalg.lstsq(Z, y, rcond=None)[0][1:]


def zscore(X):
    return (X - X.mean(axis=0)) / X.std(axis=0)


def balanced_ml(y, X, codes, n_per, grid_size=2000, refine=200):
    """Maximum-likelihood random-intercept fit on a balanced design.

    The variance ratio ``lam = s2u / s2e`` is searched on a log grid and
    refined by golden section; ``s2e`` and the coefficients are profiled out
    in closed form.  Returns ``(coefficients without intercept, lam)``.
    """
    n = len(y)
    g = int(codes.max()) + 1
    Z = np.column_stack([np.ones(n), X])

    def vinv(A, lam):
        w = lam / (1 + n_per * lam)
        sums = np.zeros((g,) + A.shape[1:])
        np.add.at(sums, codes, A)
        return A - w * sums[codes]

    def profile(lam):
        b = np.linalg.solve(Z.T @ vinv(Z, lam), Z.T @ vinv(y, lam))
        r = y - Z @ b
        s2 = r @ vinv(r, lam) / n
        return -0.5 * (n * math.log(s2) + g * math.log(1 + n_per * lam)), b

    grid = np.concatenate([[0.0], np.logspace(-6, 3, grid_size)])
    ll = [profile(lam)[0] for lam in grid]
    i = int(np.argmax(ll))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    for _ in range(refine):
        a, b = lo + (hi - lo) * 0.381966, lo + (hi - lo) * 0.618034
        if profile(a)[0] > profile(b)[0]:
            hi = b
        else:
            lo = a
    lam = (lo + hi) / 2
    return profile(lam)[1][1:], lam


def balanced_design(seed, n_countries, n_per, k, sigma_u=1.0, sigma_e=0.5, between=0.5):
    rng = np.random.default_rng(seed)
    codes = np.repeat(np.arange(n_countries), n_per)
    X = rng.normal(size=(codes.size, k)) + rng.normal(0, between, (n_countries, k))[codes]
    y = X @ np.linspace(1.0, -0.5, k) + rng.normal(0, sigma_u, n_countries)[codes]
    y += rng.normal(0, sigma_e, codes.size)
    return y, X, codes


def elementary_symmetric(sizes, lo, hi):
    """Sum of e_j(sizes) for j in [lo, hi], expanding the polynomial prod(1 + s t)."""
    poly = np.array([1], dtype=object)
    for s in sizes:
        poly = np.convolve(poly, np.array([1, s], dtype=object))
    return int(sum(poly[j] for j in range(max(lo, 0), min(hi, len(sizes)) + 1)))


def classical_d(focal, other):
    focal, other = np.asarray(focal, float), np.asarray(other, float)
    return 0.5 * float(np.abs(focal / focal.sum() - other / other.sum()).sum())


def classical_p(focal, other):
    focal, other = np.asarray(focal, float), np.asarray(other, float)
    tot = focal + other
    live = tot > 0
    return float(np.sum(focal[live] / focal.sum() * focal[live] / tot[live]))
