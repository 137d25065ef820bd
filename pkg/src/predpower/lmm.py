"""Gaussian linear mixed model with a single random by-subject intercept.

Maximum-likelihood fitting profiles both the fixed effects and the residual
variance out of the marginal likelihood, leaving a one-dimensional search over
the variance ratio theta = sigma2_subj / sigma2_resid.  For a random intercept
the per-subject covariance blocks are rank-one updates of the identity, so the
Woodbury identity reduces every block operation to scalars:

    (I + theta * 11')^{-1} = I - theta / (1 + theta * n_j) * 11'
    log det(I + theta * 11') = log(1 + theta * n_j)

With per-subject column sums Sx_j = X_j' 1 and Sy_j = y_j' 1 the profiled
quantities are

    A(theta) = X'X - sum_j w_j Sx_j Sx_j'          w_j = theta / (1 + theta n_j)
    b(theta) = X'y - sum_j w_j Sy_j Sx_j
    beta(theta) = A^{-1} b
    n * sigma2(theta) = r'r - sum_j w_j (Sy_j - Sx_j beta)^2

and the profiled deviance to minimize is

    n log(2 pi sigma2) + sum_j log(1 + theta n_j) + n.

The search brackets the optimum with a coarse log-spaced scan over
[0, THETA_MAX], then runs golden-section with a final parabolic refinement.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import scipy.linalg

from .errors import (
    CollinearityError,
    ConvergenceError,
    ModelSpecError,
    NumericError,
    ParameterError,
    SizeError,
)

THETA_MAX = 1e6
DEVIANCE_TOL = 1e-8
MAX_GOLDEN_ITER = 400
DENSE_ORACLE_MAX_N = 2000

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class ModelSpec:
    """Names the response, fixed-effect columns (a global intercept is always
    included implicitly), and the grouping column for the random intercept."""

    response: str
    predictors: tuple[str, ...]
    group_col: str = "subject_id"

    def __post_init__(self):
        if len(set(self.predictors)) != len(self.predictors):
            raise ModelSpecError(f"duplicate predictor names in {self.predictors}")
        if self.response in self.predictors:
            raise ModelSpecError(f"response {self.response!r} is also a predictor")

    @property
    def coef_names(self) -> tuple[str, ...]:
        return ("intercept",) + tuple(self.predictors)


@dataclass(frozen=True)
class LmmFit:
    """ML estimates for one random-intercept model."""

    spec: ModelSpec
    beta: np.ndarray  # (p+1,): intercept first, then spec.predictors order
    sigma2_resid: float
    sigma2_subj: float
    theta: float
    blups: dict[str, float]
    loglik: float
    n_obs: int
    n_iter: int
    converged: bool
    cov_beta: np.ndarray = field(repr=False, default=None)


@dataclass(frozen=True)
class CoefEstimate:
    name: str
    estimate: float
    se: float


def _frame(table) -> pd.DataFrame:
    return table.df if hasattr(table, "df") else table


def _design(df: pd.DataFrame, spec: ModelSpec):
    for col in (spec.response, spec.group_col, *spec.predictors):
        if col not in df.columns:
            raise ModelSpecError(f"column {col!r} not in table")
    X = np.column_stack(
        [np.ones(len(df))] + [df[c].to_numpy(dtype=float) for c in spec.predictors]
    )
    y = df[spec.response].to_numpy(dtype=float)
    groups = df[spec.group_col].to_numpy()
    return X, y, groups


def _check_rank(X: np.ndarray, names: tuple[str, ...]) -> None:
    rank = np.linalg.matrix_rank(X)
    if rank == X.shape[1]:
        return
    # Greedy scan: a column that does not raise the rank of the preceding
    # independent set is offending.
    bad = []
    basis: list[int] = []
    for j in range(X.shape[1]):
        cand = X[:, basis + [j]]
        if np.linalg.matrix_rank(cand) > len(basis):
            basis.append(j)
        else:
            bad.append(names[j])
    raise CollinearityError(bad)


class _SuffStats:
    """Global cross-products plus per-subject column sums (Woodbury inputs)."""

    def __init__(self, X: np.ndarray, y: np.ndarray, groups: np.ndarray):
        self.n, self.p = X.shape
        labels, codes = np.unique(groups, return_inverse=True)
        self.labels = labels
        self.J = len(labels)
        self.XtX = X.T @ X
        self.Xty = X.T @ y
        self.yty = float(y @ y)
        self.nj = np.bincount(codes, minlength=self.J).astype(float)
        self.Sy = np.bincount(codes, weights=y, minlength=self.J)
        self.Sx = np.zeros((self.J, self.p))
        for k in range(self.p):
            self.Sx[:, k] = np.bincount(codes, weights=X[:, k], minlength=self.J)


def _profiled(theta: float, ss: _SuffStats):
    """GLS/ML profile at fixed theta: (deviance, beta, sigma2, t_resid)."""
    w = theta / (1.0 + theta * ss.nj)
    A = ss.XtX - (ss.Sx * w[:, None]).T @ ss.Sx
    b = ss.Xty - ss.Sx.T @ (w * ss.Sy)
    try:
        beta = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"singular GLS system at theta={theta}: {exc}") from None
    ssr = ss.yty - 2.0 * float(beta @ ss.Xty) + float(beta @ (ss.XtX @ beta))
    t = ss.Sy - ss.Sx @ beta
    rwr = ssr - float(w @ (t * t))
    sigma2 = rwr / ss.n
    if not (sigma2 > 0) or not math.isfinite(sigma2):
        raise NumericError(f"non-positive profiled residual variance at theta={theta}")
    dev = ss.n * (math.log(2.0 * math.pi * sigma2)) + float(np.log1p(theta * ss.nj).sum()) + ss.n
    return dev, beta, sigma2, t


def fit_random_intercept_lmm(table, spec: ModelSpec) -> LmmFit:
    """ML fit of ``response ~ predictors + (1 | group)``.

    Returns the fitted fixed effects, variance components, per-subject BLUPs,
    and the maximized marginal log-likelihood (natural log).
    """
    df = _frame(table)
    X, y, groups = _design(df, spec)
    _check_rank(X, spec.coef_names)
    ss = _SuffStats(X, y, groups)
    if ss.J < 2:
        raise ParameterError(f"need at least 2 subjects, got {ss.J}")

    trace: list[tuple[float, float]] = []

    def f(theta: float) -> float:
        dev = _profiled(theta, ss)[0]
        trace.append((theta, dev))
        return dev

    # Coarse bracket: 0 plus a log-spaced scan up to THETA_MAX.
    grid = np.concatenate([[0.0], np.logspace(-8, math.log10(THETA_MAX), 113)])
    devs = np.array([f(t) for t in grid])
    i = int(np.argmin(devs))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, len(grid) - 1)]
    if i == len(grid) - 1:
        hi = THETA_MAX

    # Golden-section until the deviance spread across the bracket is tiny.
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    n_iter = 0
    while n_iter < MAX_GOLDEN_ITER:
        if abs(fc - fd) < DEVIANCE_TOL and (b - a) <= 1e-9 * (1.0 + a):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
        n_iter += 1
    else:
        raise ConvergenceError(
            f"golden-section did not converge within {MAX_GOLDEN_ITER} iterations",
            trace=trace,
        )
    theta_best, dev_best = (c, fc) if fc < fd else (d, fd)

    # Parabolic refinement through the three best bracketing points.
    x1, x2, x3 = a, theta_best, b
    f1, f2, f3 = f(a), dev_best, f(b)
    denom = (x2 - x1) * (f2 - f3) - (x2 - x3) * (f2 - f1)
    if abs(denom) > 0:
        vertex = x2 - 0.5 * (
            (x2 - x1) ** 2 * (f2 - f3) - (x2 - x3) ** 2 * (f2 - f1)
        ) / denom
        if math.isfinite(vertex) and 0.0 <= vertex <= THETA_MAX:
            fv = f(vertex)
            if fv < dev_best:
                theta_best, dev_best = vertex, fv

    dev, beta, sigma2, t = _profiled(theta_best, ss)
    shrink = theta_best / (1.0 + theta_best * ss.nj)
    blup_vals = shrink * t
    blups = {str(lbl): float(v) for lbl, v in zip(ss.labels, blup_vals)}

    w = theta_best / (1.0 + theta_best * ss.nj)
    A = ss.XtX - (ss.Sx * w[:, None]).T @ ss.Sx
    cov_beta = sigma2 * np.linalg.inv(A)

    return LmmFit(
        spec=spec,
        beta=beta,
        sigma2_resid=float(sigma2),
        sigma2_subj=float(theta_best * sigma2),
        theta=float(theta_best),
        blups=blups,
        loglik=-0.5 * dev,
        n_obs=ss.n,
        n_iter=n_iter,
        converged=True,
        cov_beta=cov_beta,
    )


def marginal_loglik_dense_oracle(
    table, spec: ModelSpec, beta: np.ndarray, sigma2_resid: float, sigma2_subj: float
) -> float:
    """Exact Gaussian log-density with the dense n x n covariance
    sigma2_resid * I + sigma2_subj * Z Z'.

    Test oracle only; refuses n > 2000.  Deliberately avoids the Woodbury
    shortcuts used by the fitter.
    """
    df = _frame(table)
    X, y, groups = _design(df, spec)
    n = len(y)
    if n > DENSE_ORACLE_MAX_N:
        raise SizeError(f"dense oracle capped at n={DENSE_ORACLE_MAX_N}, got {n}")
    _, codes = np.unique(groups, return_inverse=True)
    Z = np.zeros((n, codes.max() + 1))
    Z[np.arange(n), codes] = 1.0
    V = sigma2_resid * np.eye(n) + sigma2_subj * (Z @ Z.T)
    try:
        cf = scipy.linalg.cho_factor(V, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise NumericError(f"covariance not positive definite: {exc}") from None
    r = y - X @ np.asarray(beta, dtype=float)
    alpha = scipy.linalg.cho_solve(cf, r)
    logdet = 2.0 * float(np.log(np.diag(cf[0])).sum())
    return -0.5 * (n * _LOG_2PI + logdet + float(r @ alpha))


def predict_heldout_logdensity(fit: LmmFit, rows) -> np.ndarray:
    """Per-row held-out log-density (natural log).

    Subjects seen in training get the plug-in conditional density
    Normal(x'beta + blup_j, sigma2_resid); unseen subjects get the plug-in
    marginal Normal(x'beta, sigma2_resid + sigma2_subj).
    """
    df = _frame(rows)
    X, y, groups = _design(df, fit.spec)
    mean = X @ fit.beta
    var = np.full(len(y), fit.sigma2_resid)
    for i, g in enumerate(groups):
        b = fit.blups.get(str(g))
        if b is None:
            var[i] = fit.sigma2_resid + fit.sigma2_subj
        else:
            mean[i] += b
    resid = y - mean
    return -0.5 * (np.log(2.0 * np.pi * var) + resid * resid / var)


def fixed_effect_summary(fit: LmmFit, table=None, spec: ModelSpec | None = None) -> list[CoefEstimate]:
    """Coefficients with plug-in standard errors from (X' V^-1 X)^{-1} at the
    ML variance estimates; table/spec let the covariance be rebuilt when the
    fit was deserialized without one."""
    cov = fit.cov_beta
    if cov is None:
        if table is None:
            raise ParameterError("fit carries no coefficient covariance; pass the table")
        X, y, groups = _design(_frame(table), spec or fit.spec)
        ss = _SuffStats(X, y, groups)
        w = fit.theta / (1.0 + fit.theta * ss.nj)
        A = ss.XtX - (ss.Sx * w[:, None]).T @ ss.Sx
        cov = fit.sigma2_resid * np.linalg.inv(A)
    ses = np.sqrt(np.diag(cov))
    return [
        CoefEstimate(name=n, estimate=float(b), se=float(s))
        for n, b, s in zip(fit.spec.coef_names, fit.beta, ses)
    ]


def fit_to_json_dict(fit: LmmFit) -> dict:
    """JSON-serializable echo of the fit (coefficients, variances, BLUPs)."""
    return {
        "spec": {
            "response": fit.spec.response,
            "predictors": list(fit.spec.predictors),
            "group_col": fit.spec.group_col,
        },
        "coefficients": {n: float(b) for n, b in zip(fit.spec.coef_names, fit.beta)},
        "sigma2_resid": fit.sigma2_resid,
        "sigma2_subj": fit.sigma2_subj,
        "blups": dict(sorted(fit.blups.items())),
        "loglik": fit.loglik,
        "n_obs": fit.n_obs,
        "converged": fit.converged,
    }


def save_fit(fit: LmmFit, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(fit_to_json_dict(fit), fh, indent=2, sort_keys=True)
        fh.write("\n")
