"""Poisson log-link regression fitted by iteratively reweighted least squares.

MPR1 uses the climate predictors only; MPR2 additionally takes the previous
month's case count as a predictor (its coefficient is reported separately).
Predictors are standardized with the training mean and standard deviation,
and coefficients are returned on both scales.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from ..core_data import CASE_LAG_COLUMN
from ..errors import ColumnMismatch, Diverged, RankDeficient, SchemaError

ETA_CAP = 30.0
LL_SLACK = 1e-12  # float noise allowed in the per-step ascent check


@dataclass
class PoissonFit:
    variant: str
    columns: tuple[str, ...]
    beta0: float  # raw-scale intercept
    betas: np.ndarray  # raw-scale climate coefficients
    c: float | None  # raw-scale case-lag coefficient (MPR2)
    beta_std: np.ndarray  # [intercept, predictors...] on the standardized scale
    mean: np.ndarray
    scale: np.ndarray
    loglik: float
    converged: bool
    iterations: int
    loglik_path: list = field(default_factory=list)
    offset_coef: float = 0.0

    @property
    def n_params(self) -> int:
        return len(self.beta_std)

    def coefficient_rows(self):
        """(term, standardized estimate, raw estimate) rows, intercept first."""
        raw = np.concatenate([[self.beta0], self.betas] + ([[self.c]] if self.c is not None else []))
        terms = ("intercept",) + self.columns
        return list(zip(terms, self.beta_std.tolist(), raw.tolist()))


def poisson_loglik(y, mu) -> float:
    y = np.asarray(y, dtype=float)
    return float(np.sum(y * np.log(mu) - mu - gammaln(y + 1.0)))


def _columns_for(variant, X, columns):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if columns is None:
        columns = tuple(f"x{i}" for i in range(X.shape[1] - (variant == "MPR2"))) + (
            (CASE_LAG_COLUMN,) if variant == "MPR2" else ()
        )
    columns = tuple(columns)
    if len(columns) != X.shape[1]:
        raise ColumnMismatch(f"{X.shape[1]} columns but {len(columns)} names")
    if variant == "MPR2":
        if not columns or columns[-1] != CASE_LAG_COLUMN:
            raise SchemaError(f"MPR2 needs {CASE_LAG_COLUMN} as the last column")
    elif variant == "MPR1":
        if CASE_LAG_COLUMN in columns:
            keep = [i for i, c in enumerate(columns) if c != CASE_LAG_COLUMN]
            X, columns = X[:, keep], tuple(columns[i] for i in keep)
    else:
        raise ValueError(f"unknown Poisson variant {variant!r}")
    return X, columns


def fit_irls(X, y, variant: str = "MPR1", columns=None, max_iter: int = 100, tol: float = 1e-8,
             case_lag_coef: float | None = None) -> PoissonFit:
    """Maximize the Poisson log-likelihood by IRLS with step halving.

    Newton steps continue until they stop changing the coefficients or
    ``max_iter`` is reached; the fit counts as converged when the score norm
    is below ``tol * max(1, sum(y))``. ``case_lag_coef`` pins the MPR2 case-lag
    coefficient (standardized scale) instead of estimating it.
    """
    X, columns = _columns_for(variant, X, columns)
    y = np.asarray(y, dtype=float)
    if np.any(y < 0) or np.any(y != np.round(y)):
        raise SchemaError("Poisson targets must be nonnegative integers")
    n, k = X.shape
    if n != len(y):
        raise ColumnMismatch("X and y lengths differ")
    mean = X.mean(axis=0) if k else np.zeros(0)
    scale = X.std(axis=0) if k else np.zeros(0)
    if k and np.any(scale <= 0):
        bad = [columns[i] for i in np.flatnonzero(scale <= 0)]
        raise RankDeficient(f"constant predictor(s): {', '.join(bad)}")
    Z = np.column_stack([np.ones(n), (X - mean) / scale]) if k else np.ones((n, 1))
    offset = np.zeros(n)
    free = np.ones(Z.shape[1], dtype=bool)
    if case_lag_coef is not None:
        if variant != "MPR2":
            raise ValueError("case_lag_coef only applies to MPR2")
        offset = case_lag_coef * Z[:, -1]
        free[-1] = False
    Zf = Z[:, free]
    if np.linalg.matrix_rank(Zf) < Zf.shape[1]:
        raise RankDeficient("design is not of full column rank")

    beta = np.zeros(Zf.shape[1])
    beta[0] = np.log(y.mean() + 0.5)

    def evaluate(b):
        eta = Zf @ b + offset
        capped = np.clip(eta, -ETA_CAP, ETA_CAP)
        mu = np.exp(capped)
        return eta, mu, poisson_loglik(y, mu)

    eta, mu, ll = evaluate(beta)
    path = [ll]
    threshold = tol * max(1.0, y.sum())
    it = 0
    for it in range(1, max_iter + 1):
        score = Zf.T @ (y - mu)
        info = Zf.T @ (Zf * mu[:, None])
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError:
            raise RankDeficient("singular information matrix") from None
        if np.linalg.norm(step) <= 1e-13 * (1.0 + np.linalg.norm(beta)):
            break
        t = 1.0
        for _ in range(60):
            cand = beta + t * step
            c_eta, c_mu, c_ll = evaluate(cand)
            if np.isfinite(c_ll) and c_ll >= ll - LL_SLACK * max(1.0, abs(ll)):
                break
            t *= 0.5
        else:
            break  # no ascent left along the Newton direction
        beta, eta, mu, ll = cand, c_eta, c_mu, c_ll
        path.append(ll)
    converged = bool(np.linalg.norm(Zf.T @ (y - mu)) < threshold)

    if np.any(np.abs(eta) >= ETA_CAP):
        raise Diverged("linear predictor reached the overflow cap")

    beta_std = np.zeros(Z.shape[1])
    beta_std[free] = beta
    if case_lag_coef is not None:
        beta_std[-1] = case_lag_coef
    slopes = beta_std[1:] / scale if k else np.zeros(0)
    beta0 = beta_std[0] - float(np.dot(slopes, mean)) if k else beta_std[0]
    if variant == "MPR2":
        betas, c = slopes[:-1], float(slopes[-1])
    else:
        betas, c = slopes, None
    return PoissonFit(variant, columns, float(beta0), betas, c, beta_std, mean, scale, ll, converged, it, path)


def predict(fit: PoissonFit, X, recursive: bool = False) -> np.ndarray:
    """Expected counts exp(linear predictor).

    With ``recursive`` (MPR2 only) the case-lag column is replaced after the
    first row by the model's own previous prediction.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :] if len(fit.columns) > 1 else X[:, None]
    if X.shape[1] != len(fit.columns):
        raise ColumnMismatch(f"expected {len(fit.columns)} columns, got {X.shape[1]}")
    coefs = fit.beta_std[1:]
    if not recursive or fit.variant != "MPR2":
        eta = fit.beta_std[0] + ((X - fit.mean) / fit.scale) @ coefs if len(coefs) else np.full(len(X), fit.beta_std[0])
        return np.exp(eta)
    out = np.empty(len(X))
    prev = X[0, -1]
    for t in range(len(X)):
        row = X[t].copy()
        row[-1] = prev
        out[t] = np.exp(fit.beta_std[0] + ((row - fit.mean) / fit.scale) @ coefs)
        prev = out[t]
    return out


def linear_predictor(fit: PoissonFit, X) -> np.ndarray:
    return np.log(predict(fit, X))


def from_coefficients(beta0: float, betas=(), columns=None, variant: str = "MPR1") -> PoissonFit:
    """Build a fit object from raw-scale coefficients (no standardization)."""
    betas = np.asarray(betas, dtype=float)
    k = len(betas)
    columns = tuple(columns) if columns is not None else tuple(f"x{i}" for i in range(k))
    c = float(betas[-1]) if variant == "MPR2" else None
    return PoissonFit(variant, columns, float(beta0), betas[:-1] if c is not None else betas, c,
                      np.concatenate([[beta0], betas]), np.zeros(k), np.ones(k), float("nan"), True, 0)
