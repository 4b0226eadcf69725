"""Linear models for the specification curve: pooled OLS, country fixed effects,
and random-intercept models estimated by feasible GLS.

Two code paths share the same estimators:

* ``fit_pooled`` / ``fit_fixed_effects`` / ``fit_random_intercept`` work on
  explicit row data with a column-pivoted QR decomposition and report rank
  deficiency by column name.
* :class:`SampleMoments` stores the cross-products of one estimation sample
  so that many column subsets (and counterfactual outcomes) can be fitted
  from small Gram matrices.  The bootstrap uses this path.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg as sla

from .errors import RankDeficiencyError, UndefinedCorrelationError, ValidationError

ESTIMATORS = ("pooled", "fixed_effects", "random_intercept")

# relative threshold below which a column is treated as having no within-country variation
WITHIN_TOL = 1e-10


@dataclass(frozen=True)
class DesignMatrix:
    """Outcome, covariates and country labels for one estimation sample."""

    row_ids: tuple
    countries: np.ndarray
    y: np.ndarray
    X: np.ndarray
    names: tuple[str, ...]

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        countries = np.asarray(self.countries)
        n = y.shape[0]
        if X.shape[0] != n or countries.shape[0] != n or len(self.row_ids) != n:
            raise ValidationError("design matrix parts have inconsistent row counts")
        if X.shape[1] != len(self.names):
            raise ValidationError("covariate names do not match covariate columns")
        if len(set(self.names)) != len(self.names):
            raise ValidationError(f"duplicate covariate names: {self.names}")
        if not (np.isfinite(y).all() and np.isfinite(X).all()):
            raise ValidationError("design matrix contains missing or non-finite values")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "countries", countries)
        object.__setattr__(self, "row_ids", tuple(self.row_ids))
        object.__setattr__(self, "names", tuple(self.names))

    @classmethod
    def from_frame(cls, frame, outcome: str, covariates: Sequence[str],
                   country: str = "country", row_id: str = "fua_id") -> "DesignMatrix":
        ids = tuple(frame[row_id]) if row_id in frame else tuple(range(len(frame)))
        return cls(ids, frame[country].to_numpy(), frame[outcome].to_numpy(float),
                   frame[list(covariates)].to_numpy(float).reshape(len(frame), len(covariates)),
                   tuple(covariates))

    @property
    def n(self) -> int:
        return self.y.shape[0]

    def country_codes(self) -> tuple[np.ndarray, np.ndarray]:
        labels, codes = np.unique(self.countries, return_inverse=True)
        return codes, labels

    def with_outcome(self, y) -> "DesignMatrix":
        return DesignMatrix(self.row_ids, self.countries, y, self.X, self.names)

    def take(self, rows) -> "DesignMatrix":
        rows = np.asarray(rows)
        return DesignMatrix(tuple(self.row_ids[i] for i in rows), self.countries[rows],
                            self.y[rows], self.X[rows], self.names)

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.names.index(name)]


@dataclass(frozen=True)
class FitResult:
    coefficients: dict
    estimator: str
    rss: float
    rank: int
    n_obs: int
    standardized: bool
    sigma2_e: float | None = None
    sigma2_u: float | None = None
    intercept: float | None = None
    scales: dict = field(default_factory=dict)
    warnings: tuple[str, ...] = ()

    def __getitem__(self, name):
        return self.coefficients[name]


def _group_means(M: np.ndarray, codes: np.ndarray, n_groups: int):
    counts = np.bincount(codes, minlength=n_groups).astype(float)
    sums = np.zeros((n_groups, M.shape[1]))
    np.add.at(sums, codes, M)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = sums / counts[:, None]
    return means, counts


def _standardize(X: np.ndarray, names: Sequence[str]):
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    for j, s in enumerate(sd):
        if not s > 0:
            raise RankDeficiencyError(f"covariate {names[j]!r} is constant", column=names[j])
    return (X - mean) / sd, sd


def _qr_solve(X: np.ndarray, y: np.ndarray, names: Sequence[str]):
    """Least squares via column-pivoted QR; raise on rank deficiency."""
    n, k = X.shape
    if k == 0:
        return np.zeros(0), float(y @ y)
    if k > n:
        raise RankDeficiencyError(f"{k} covariates but only {n} usable observations")
    Q, R, piv = sla.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = diag[0] * max(n, k) * np.finfo(float).eps * 10
    rank = int(np.sum(diag > tol))
    if rank < k:
        bad = names[piv[rank]]
        raise RankDeficiencyError(f"design is rank deficient (rank {rank} < {k}); "
                                  f"covariate {bad!r} is collinear with the others", column=bad)
    qty = Q.T @ y
    beta = np.empty(k)
    beta[piv] = sla.solve_triangular(R, qty)
    resid = y - X @ beta
    return beta, float(resid @ resid)


def _prepare(design: DesignMatrix, standardize: bool):
    if standardize:
        Xs, sd = _standardize(design.X, design.names)
    else:
        Xs, sd = design.X, np.ones(design.X.shape[1])
    return Xs, sd


def fit_pooled(design: DesignMatrix, standardize: bool = True) -> FitResult:
    """OLS with a common intercept."""
    Xs, sd = _prepare(design, standardize)
    Z = np.column_stack([np.ones(design.n), Xs])
    beta, rss = _qr_solve(Z, design.y, ("(intercept)",) + design.names)
    return FitResult(dict(zip(design.names, beta[1:].tolist())), "pooled", rss, Z.shape[1], design.n,
                     standardize, intercept=float(beta[0]), scales=dict(zip(design.names, sd.tolist())))


def _within_ss(M, codes, n_groups):
    means, _ = _group_means(M, codes, n_groups)
    dm = M - means[codes]
    return dm, np.sum(dm * dm, axis=0)


def fit_fixed_effects(design: DesignMatrix, standardize: bool = True) -> FitResult:
    """OLS with one dummy per country, computed by within-country demeaning.

    Raises
    ------
    RankDeficiencyError
        A covariate has no within-country variation, or the design is
        collinear after demeaning, or there are more covariates than
        residual degrees of freedom.
    """
    codes, labels = design.country_codes()
    g = len(labels)
    if g < 2:
        raise ValidationError("fixed effects need at least two countries")
    k = design.X.shape[1]
    if k > design.n - g:
        raise RankDeficiencyError(
            f"{k} covariates exceed the {design.n - g} degrees of freedom left by {g} country effects"
        )
    Xs, sd = _prepare(design, standardize)
    Xw, within = _within_ss(Xs, codes, g)
    total = np.sum((Xs - Xs.mean(axis=0)) ** 2, axis=0)
    for j, name in enumerate(design.names):
        if within[j] <= WITHIN_TOL * max(total[j], np.finfo(float).tiny):
            raise RankDeficiencyError(f"covariate {name!r} has no within-country variation",
                                      column=name)
    yw = design.y - _group_means(design.y[:, None], codes, g)[0][codes, 0]
    beta, rss = _qr_solve(Xw, yw, design.names)
    return FitResult(dict(zip(design.names, beta.tolist())), "fixed_effects", rss, k + g, design.n,
                     standardize, scales=dict(zip(design.names, sd.tolist())))


def swamy_arora(rss_within: float, dof_within: int, rss_between: float, dof_between: int,
                group_sizes: np.ndarray):
    """Variance components from within and between regressions.

    Returns ``(sigma2_e, sigma2_u, warning)``; ``warning`` is non-empty when
    the moments are unusable and the caller should fall back to pooled OLS.
    """
    if dof_within <= 0:
        return None, None, "no residual degrees of freedom in the within regression"
    sigma2_e = rss_within / dof_within
    if not sigma2_e > 0:
        return sigma2_e, None, "within-regression residual variance is zero"
    if dof_between <= 0:
        return sigma2_e, None, "no residual degrees of freedom in the between regression"
    harmonic = len(group_sizes) / np.sum(1.0 / group_sizes)
    sigma2_u = max(0.0, rss_between / dof_between - sigma2_e / harmonic)
    return sigma2_e, sigma2_u, ""


def quasi_demeaning_weights(sigma2_e: float, sigma2_u: float, group_sizes: np.ndarray) -> np.ndarray:
    return 1.0 - np.sqrt(sigma2_e / (sigma2_e + group_sizes * sigma2_u))


def fit_random_intercept(design: DesignMatrix, standardize: bool = True,
                         theta: float | Mapping | None = None) -> FitResult:
    """Random-intercept model by two-step feasible GLS.

    Variance components come from Swamy-Arora moments (within residuals for
    the idiosyncratic part, country-mean regression for the intercept
    variance, clamped at zero).  Rows are then quasi-demeaned by
    ``theta_c = 1 - sqrt(s2e / (s2e + n_c s2u))`` and fitted by OLS.

    ``theta`` overrides the estimated weights, either one value for all
    countries or a mapping from country label.  When every weight is 1 the
    intercept is dropped and the fit reduces to fixed effects.

    If the variance moments are unusable the model falls back to pooled OLS
    and says so in ``warnings``.
    """
    codes, labels = design.country_codes()
    g = len(labels)
    if g < 2:
        raise ValidationError("random-intercept models need at least two countries")
    Xs, sd = _prepare(design, standardize)
    sizes = np.bincount(codes, minlength=g).astype(float)
    if sizes.max() < 2:
        raise ValidationError("random-intercept models need a country with at least two rows")
    k = Xs.shape[1]
    warnings = []
    sigma2_e = sigma2_u = None

    if theta is None:
        Xw, within = _within_ss(Xs, codes, g)
        total = np.sum((Xs - Xs.mean(axis=0)) ** 2, axis=0)
        varying = within > WITHIN_TOL * np.maximum(total, np.finfo(float).tiny)
        yw = design.y - _group_means(design.y[:, None], codes, g)[0][codes, 0]
        names_w = tuple(n for n, v in zip(design.names, varying) if v)
        _, rss_w = _qr_solve(Xw[:, varying], yw, names_w)
        rss_b, dof_b = float("nan"), g - k - 1
        if dof_b > 0:
            Zm, _ = _group_means(np.column_stack([np.ones(design.n), Xs, design.y]), codes, g)
            try:
                _, rss_b = _qr_solve(Zm[:, :-1], Zm[:, -1], ("(intercept)",) + design.names)
            except RankDeficiencyError:
                dof_b = 0
        sigma2_e, sigma2_u, warn = swamy_arora(
            rss_w, design.n - g - int(varying.sum()), rss_b, dof_b, sizes
        )
        if warn:
            warnings.append(warn + "; fell back to pooled OLS")
            thetas = np.zeros(g)
        else:
            thetas = quasi_demeaning_weights(sigma2_e, sigma2_u, sizes)
    elif isinstance(theta, Mapping):
        thetas = np.array([float(theta[c]) for c in labels])
    else:
        thetas = np.full(g, float(theta))

    Z = np.column_stack([np.ones(design.n), Xs])
    names = ("(intercept)",) + design.names
    means, _ = _group_means(np.column_stack([Z, design.y]), codes, g)
    Zq = Z - thetas[codes, None] * means[codes, :-1]
    yq = design.y - thetas[codes] * means[codes, -1]
    drop_intercept = bool(np.all(thetas == 1.0))
    if drop_intercept:
        Zq, names = Zq[:, 1:], names[1:]
    beta, rss = _qr_solve(Zq, yq, names)
    coefs = dict(zip(names, beta.tolist()))
    intercept = None if drop_intercept else float(coefs.pop("(intercept)"))
    return FitResult(coefs, "random_intercept", rss, len(names), design.n, standardize,
                     sigma2_e=sigma2_e, sigma2_u=sigma2_u, intercept=intercept,
                     scales=dict(zip(design.names, sd.tolist())), warnings=tuple(warnings))


def fit(design: DesignMatrix, estimator: str, standardize: bool = True) -> FitResult:
    if estimator == "fixed_effects":
        return fit_fixed_effects(design, standardize)
    if estimator == "random_intercept":
        return fit_random_intercept(design, standardize)
    if estimator == "pooled":
        return fit_pooled(design, standardize)
    raise ValidationError(f"unknown estimator {estimator!r}")


def correlation(x, y, partial_on=None) -> float:
    """Pearson correlation, optionally partialling out the columns of ``partial_on``."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape or x.size < 3:
        raise ValidationError("correlation needs two vectors of equal length >= 3")
    if partial_on is not None:
        Z = np.asarray(partial_on, dtype=float)
        Z = np.column_stack([np.ones(x.size), Z.reshape(x.size, -1)])
        x = x - Z @ np.linalg.lstsq(Z, x, rcond=None)[0]
        y = y - Z @ np.linalg.lstsq(Z, y, rcond=None)[0]
    xc, yc = x - x.mean(), y - y.mean()
    sxx, syy = xc @ xc, yc @ yc
    scale = max(np.abs(x).max(), np.abs(y).max(), 1.0) ** 2 * x.size * 1e-24
    if sxx <= scale or syy <= scale:
        raise UndefinedCorrelationError("correlation undefined for a zero-variance vector")
    return float(np.clip(xc @ yc / np.sqrt(sxx * syy), -1.0, 1.0))


# ---------------------------------------------------------------------------
# Gram-matrix path


def _chol_solve(G: np.ndarray, rhs: np.ndarray, rcond: float = 1e-10):
    """Solve ``G b = rhs`` for symmetric PSD ``G``; ``None`` when numerically singular."""
    d = np.sqrt(np.diag(G))
    if not np.all(d > 0):
        return None
    C = G / np.outer(d, d)
    try:
        L = np.linalg.cholesky(C)
    except np.linalg.LinAlgError:
        return None
    if np.min(np.diag(L)) ** 2 < rcond:
        return None
    z = sla.cho_solve((L, True), rhs / d)
    return z / d


class SampleMoments:
    """Cross-products of one estimation sample, shared across column subsets.

    Columns are z-scored over the sample before any product is formed.
    Coefficients returned by :meth:`coef` are on that z-score scale when
    ``standardize`` is true and on the raw scale otherwise, matching the QR
    path.

    ``adjust=(j, a)`` replaces the outcome by ``y - a * X[:, j]`` (``a`` in
    raw units of column ``j``), which is how counterfactual outcomes are
    fitted without materialising them.
    """

    def __init__(self, X: np.ndarray, y: np.ndarray, codes: np.ndarray, estimator: str,
                 standardize: bool = True):
        if estimator not in ("fixed_effects", "random_intercept", "pooled"):
            raise ValidationError(f"unknown estimator {estimator!r}")
        self.estimator = estimator
        self.standardize = standardize
        n, k = X.shape
        self.n, self.k = n, k
        labels, codes = np.unique(codes, return_inverse=True)
        self.n_groups = len(labels)
        self.sizes = np.bincount(codes).astype(float)
        mean = X.mean(axis=0)
        sd = X.std(axis=0)
        self.sd = sd
        safe = np.where(sd > 0, sd, 1.0)
        self.valid_col = sd > 0
        Z = np.column_stack([(X - mean) / safe, y - y.mean()])
        means, _ = _group_means(Z, codes, self.n_groups)
        Zw = Z - means[codes]
        self.W = Zw.T @ Zw
        self.total_ss = np.sum(Z * Z, axis=0)
        if estimator in ("random_intercept", "pooled"):
            A = np.column_stack([np.ones(n), Z])
            self.T = A.T @ A
            self.M = np.column_stack([np.ones(self.n_groups), means])
            self.B = self.M.T @ self.M

    def _rhs(self, G, cols, j_y, adjust):
        """Column ``j_y`` (the outcome) of ``G`` restricted to ``cols``, with the adjustment."""
        rhs = G[cols, j_y].copy()
        yy = G[j_y, j_y]
        if adjust is not None:
            j, a = adjust
            rhs -= a * G[cols, j]
            yy = yy - 2 * a * G[j, j_y] + a * a * G[j, j]
        return rhs, yy

    def coef(self, columns: Sequence[int], target: int, adjust: tuple[int, float] | None = None):
        """Coefficient of column ``target`` in the model on ``columns``; NaN if not estimable."""
        cols = list(columns)
        if not all(self.valid_col[c] for c in cols):
            return np.nan
        pos = cols.index(target)
        if adjust is not None:
            adjust = (adjust[0], adjust[1] * self.sd[adjust[0]])
        if self.estimator == "fixed_effects":
            beta = self._fe(cols, adjust)
        elif self.estimator == "pooled":
            beta = self._gls(cols, adjust, np.zeros(self.n_groups))
        else:
            beta = self._ri(cols, adjust)
        if beta is None:
            return np.nan
        b = beta[pos]
        return float(b if self.standardize else b / self.sd[target])

    def _fe(self, cols, adjust):
        if len(cols) > self.n - self.n_groups:
            return None
        within = np.array([self.W[c, c] for c in cols])
        if np.any(within <= WITHIN_TOL * np.maximum(self.total_ss[cols], np.finfo(float).tiny)):
            return None
        rhs, _ = self._rhs(self.W, cols, self.k, adjust)
        return _chol_solve(self.W[np.ix_(cols, cols)], rhs)

    def _ri(self, cols, adjust):
        k_all = len(cols)
        within = np.array([self.W[c, c] for c in cols])
        varying = [c for c, w in zip(cols, within)
                   if w > WITHIN_TOL * max(self.total_ss[c], np.finfo(float).tiny)]
        thetas = np.zeros(self.n_groups)
        if self.sizes.max() >= 2:
            rhs_w, yy_w = self._rhs(self.W, varying, self.k, adjust)
            if varying:
                bw = _chol_solve(self.W[np.ix_(varying, varying)], rhs_w)
                if bw is None:
                    return None
                rss_w = yy_w - bw @ rhs_w
            else:
                rss_w = yy_w
            # between regression on [1, cols] over country means; B indexes shift by one
            bcols = [0] + [c + 1 for c in cols]
            badj = None if adjust is None else (adjust[0] + 1, adjust[1])
            rhs_b, yy_b = self._rhs(self.B, bcols, self.k + 1, badj)
            rss_b, dof_b = 0.0, self.n_groups - k_all - 1
            if dof_b > 0:
                bb = _chol_solve(self.B[np.ix_(bcols, bcols)], rhs_b)
                if bb is None:
                    dof_b = 0  # collinear country means: fall back as the QR path does
                else:
                    rss_b = yy_b - bb @ rhs_b
            s2e, s2u, warn = swamy_arora(max(rss_w, 0.0), self.n - self.n_groups - len(varying),
                                         max(rss_b, 0.0), dof_b, self.sizes)
            if not warn:
                thetas = quasi_demeaning_weights(s2e, s2u, self.sizes)
        return self._gls(cols, adjust, thetas)

    def _gls(self, cols, adjust, thetas):
        w = self.sizes * thetas * (2.0 - thetas)
        Q = self.T - (self.M * w[:, None]).T @ self.M
        qcols = [0] + [c + 1 for c in cols]
        qadj = None if adjust is None else (adjust[0] + 1, adjust[1])
        rhs, _ = self._rhs(Q, qcols, self.k + 1, qadj)
        beta = _chol_solve(Q[np.ix_(qcols, qcols)], rhs)
        return None if beta is None else beta[1:]
