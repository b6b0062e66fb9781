"""Seasonal ARIMA with exogenous regressors.

The differenced series is modelled as a regression with multiplicative
seasonal ARMA errors::

    phi(B) Phi(B^s) (w_t - beta'x_t) = theta(B) Theta(B^s) eps_t,
    w_t = (1-B)^d (1-B^s)^D y_t,

with ``phi(B) = 1 - sum phi_i B^i`` and ``theta(B) = 1 + sum theta_i B^i``.
The ARMA part is cast in Harvey's state-space form and evaluated by the
Kalman filter from the stationary state covariance.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.optimize import minimize

from ..diagnostics import aic_bic, ljung_box
from ..errors import (
    AllCandidatesFailed,
    ClimlagError,
    FilterDivergence,
    HorizonMismatch,
    InsufficientHistory,
    NonStationaryParams,
    OptimizationFailed,
    SeriesTooShort,
)
from ..metrics import MetricTriple, metrics

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True, order=True)
class SarimaxOrder:
    p: int = 0
    d: int = 0
    q: int = 0
    P: int = 0
    D: int = 0
    Q: int = 0
    s: int = 12

    def __post_init__(self):
        if min(self.p, self.d, self.q, self.P, self.D, self.Q) < 0:
            raise ValueError("orders must be nonnegative")
        if self.d + self.D > 2:
            raise ValueError("d + D must not exceed 2")
        if self.s < 2:
            raise ValueError("seasonal period must be >= 2")

    @property
    def n_arma(self) -> int:
        return self.p + self.q + self.P + self.Q

    @property
    def n_lost(self) -> int:
        return self.d + self.D * self.s

    def __str__(self) -> str:
        return f"({self.p},{self.d},{self.q})({self.P},{self.D},{self.Q},{self.s})"

    @classmethod
    def parse(cls, text: str) -> "SarimaxOrder":
        """Parse ``(p,d,q)(P,D,Q,s)`` or ``p,d,q,P,D,Q[,s]``."""
        nums = [int(t) for t in text.replace("(", " ").replace(")", " ").replace(",", " ").split()]
        if len(nums) not in (6, 7):
            raise ValueError(f"cannot parse SARIMAX order {text!r}")
        return cls(*nums)


# Candidate orders: p, q in {0,1,2}, d = 1, P = 1, D, Q in {0,1}.
DEFAULT_GRID = tuple(
    SarimaxOrder(p, 1, q, 1, D, Q, 12)
    for p, q, D, Q in itertools.product((0, 1, 2), (0, 1, 2), (0, 1), (0, 1))
)


@dataclass(frozen=True)
class SarimaxParams:
    phi: tuple = ()
    theta: tuple = ()
    Phi: tuple = ()
    Theta: tuple = ()
    beta: tuple = ()
    sigma2: float = 1.0

    def __post_init__(self):
        for name in ("phi", "theta", "Phi", "Theta", "beta"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")

    def check(self, order: SarimaxOrder, k_exog: int) -> None:
        sizes = (len(self.phi), len(self.theta), len(self.Phi), len(self.Theta), len(self.beta))
        if sizes != (order.p, order.q, order.P, order.Q, k_exog):
            raise ValueError(f"parameter sizes {sizes} do not match order {order} with {k_exog} regressors")


# -- polynomials -------------------------------------------------------------

def _expand(nonseasonal, seasonal, s, sign):
    """Coefficients c_1..c_m of (1 + sign*sum a_i B^i)(1 + sign*sum A_j B^{sj}) = 1 + sum c_k B^k."""
    a = np.zeros(len(nonseasonal) + 1)
    a[0] = 1.0
    a[1:] = sign * np.asarray(nonseasonal, dtype=float)
    A = np.zeros(len(seasonal) * s + 1)
    A[0] = 1.0
    for j, v in enumerate(seasonal, start=1):
        A[j * s] = sign * v
    return np.convolve(a, A)[1:]


def reduced_ar(order: SarimaxOrder, params: SarimaxParams) -> np.ndarray:
    """AR coefficients of the expanded polynomial, as ``z_t = sum ar_i z_{t-i} + ...``."""
    return -_expand(params.phi, params.Phi, order.s, -1.0)


def reduced_ma(order: SarimaxOrder, params: SarimaxParams) -> np.ndarray:
    return _expand(params.theta, params.Theta, order.s, 1.0)


def _is_stationary(coefs) -> bool:
    """True if 1 - sum c_i B^i has all roots outside the unit circle."""
    coefs = np.asarray(coefs, dtype=float)
    if coefs.size == 0:
        return True
    companion = np.zeros((coefs.size, coefs.size))
    companion[0] = coefs
    companion[1:, :-1] = np.eye(coefs.size - 1)
    return bool(np.max(np.abs(np.linalg.eigvals(companion))) < 1.0 - 1e-10)


def is_stationary(params: SarimaxParams) -> bool:
    return _is_stationary(params.phi) and _is_stationary(params.Phi)


def is_invertible(params: SarimaxParams) -> bool:
    return _is_stationary(-np.asarray(params.theta)) and _is_stationary(-np.asarray(params.Theta))


# partial-autocorrelation reparameterisation

def _pacf_to_ar(r):
    phi = np.zeros(0)
    for k, rk in enumerate(r):
        phi = np.concatenate([phi - rk * phi[::-1], [rk]]) if k else np.array([rk])
    return phi


def _ar_to_pacf(phi):
    phi = np.asarray(phi, dtype=float)
    r = np.zeros(len(phi))
    for k in range(len(phi) - 1, -1, -1):
        rk = phi[k]
        r[k] = rk
        if k:
            phi = (phi[:k] + rk * phi[:k][::-1]) / (1.0 - rk * rk)
    return r


def constrain(x) -> np.ndarray:
    """Unbounded reals -> stationary AR coefficients (sign-flip for MA blocks)."""
    x = np.asarray(x, dtype=float)
    return _pacf_to_ar(x / np.sqrt(1.0 + x * x))


def unconstrain(coefs) -> np.ndarray:
    r = _ar_to_pacf(coefs)
    if np.any(np.abs(r) >= 1.0):
        raise NonStationaryParams("coefficients outside the stationarity region")
    return r / np.sqrt(1.0 - r * r)


def _split(order: SarimaxOrder, x):
    i = 0
    blocks = []
    for size in (order.p, order.q, order.P, order.Q):
        blocks.append(x[i:i + size])
        i += size
    return blocks


def params_from_unconstrained(order: SarimaxOrder, x, beta=(), sigma2=1.0) -> SarimaxParams:
    xp, xq, xP, xQ = _split(order, np.asarray(x, dtype=float))
    return SarimaxParams(
        phi=constrain(xp),
        theta=-constrain(xq),
        Phi=constrain(xP),
        Theta=-constrain(xQ),
        beta=beta,
        sigma2=sigma2,
    )


def params_to_unconstrained(order: SarimaxOrder, params: SarimaxParams) -> np.ndarray:
    return np.concatenate([
        unconstrain(params.phi),
        unconstrain(-np.asarray(params.theta)),
        unconstrain(params.Phi),
        unconstrain(-np.asarray(params.Theta)),
    ])


# -- differencing --------------------------------------------------------------

def difference(y, d: int, D: int = 0, s: int = 12) -> np.ndarray:
    """Apply (1-B)^d then (1-B^s)^D along the first axis."""
    out = np.asarray(y, dtype=float)
    if len(out) <= d + D * s:
        raise SeriesTooShort(f"series of length {len(out)} too short for d={d}, D={D}, s={s}")
    for _ in range(d):
        out = out[1:] - out[:-1]
    for _ in range(D):
        out = out[s:] - out[:-s]
    return out


def integrate(forecast_diff, history, d: int, D: int = 0, s: int = 12) -> np.ndarray:
    """Undo :func:`difference` for values that continue ``history``."""
    x = np.asarray(forecast_diff, dtype=float)
    history = np.asarray(history, dtype=float)
    need = d + D * s
    if len(history) < need:
        raise InsufficientHistory(f"need {need} history values to integrate, got {len(history)}")
    if need == 0:
        return x.copy()
    # intermediate series y, (1-B)y, ... in the order difference() applies them
    stages = [1] * d + [s] * D
    levels = [history]
    for lag in stages[:-1]:
        prev = levels[-1]
        levels.append(prev[lag:] - prev[:-lag])
    out = x
    for lag, level in zip(reversed(stages), reversed(levels)):
        buf = np.concatenate([level[len(level) - lag:], np.empty(len(out))])
        for i in range(len(out)):
            buf[lag + i] = out[i] + buf[i]
        out = buf[lag:]
    return out


# -- Kalman filter ---------------------------------------------------------------

@numba.njit(cache=True)
def _stationary_cov(ar, rvec, tol, max_iter):
    """Doubling iteration for P = T P T' + R R'; returns (P, converged)."""
    r = ar.shape[0]
    T = np.zeros((r, r))
    for i in range(r):
        T[i, 0] = ar[i]
        if i + 1 < r:
            T[i, i + 1] = 1.0
    P = np.outer(rvec, rvec)
    A = T.copy()
    for _ in range(max_iter):
        inc = A @ P @ A.T
        P = P + inc
        A = A @ A
        if np.max(np.abs(inc)) <= tol * max(1.0, np.max(np.abs(P))):
            return P, True
    return P, False


@numba.njit(cache=True)
def _filter(ar, rvec, P0, Y):
    """Run the filter on every column of Y (shared gains; the recursion is data-linear).

    Returns innovations V (n x m), innovation variances F (n), the predicted
    state after the last observation (r x m) and its covariance, all on the
    sigma^2 = 1 scale.
    """
    n, m = Y.shape
    r = ar.shape[0]
    a = np.zeros((r, m))
    P = P0.copy()
    V = np.empty((n, m))
    F = np.empty(n)
    M = np.empty((r, r))
    for t in range(n):
        f = P[0, 0]
        F[t] = f
        if not (f > 0.0) or not np.isfinite(f):
            return V, F, a, P, False
        for j in range(m):
            V[t, j] = Y[t, j] - a[0, j]
        # K = T P[:,0] / f
        K = np.empty(r)
        for i in range(r):
            nxt = P[i + 1, 0] if i + 1 < r else 0.0
            K[i] = (ar[i] * P[0, 0] + nxt) / f
        # a <- T a + K v
        a_new = np.empty((r, m))
        for j in range(m):
            a0 = a[0, j]
            for i in range(r):
                nxt = a[i + 1, j] if i + 1 < r else 0.0
                a_new[i, j] = ar[i] * a0 + nxt + K[i] * V[t, j]
        a = a_new
        # P <- T P T' + R R' - K K' f
        for i in range(r):
            for k in range(r):
                nxt = P[i + 1, k] if i + 1 < r else 0.0
                M[i, k] = ar[i] * P[0, k] + nxt
        P_new = np.empty((r, r))
        for i in range(r):
            for k in range(r):
                nxt = M[i, k + 1] if k + 1 < r else 0.0
                P_new[i, k] = M[i, 0] * ar[k] + nxt + rvec[i] * rvec[k] - K[i] * K[k] * f
        for i in range(r):
            for k in range(i + 1, r):
                avg = 0.5 * (P_new[i, k] + P_new[k, i])
                P_new[i, k] = avg
                P_new[k, i] = avg
        P = P_new
    return V, F, a, P, True


@dataclass
class _StateSpace:
    ar: np.ndarray
    rvec: np.ndarray
    P0: np.ndarray


def _arma_state_space(ar, ma) -> _StateSpace:
    r = max(len(ar), len(ma) + 1, 1)
    ar_full = np.zeros(r)
    ar_full[:len(ar)] = ar
    rvec = np.zeros(r)
    rvec[0] = 1.0
    rvec[1:1 + len(ma)] = ma
    P0, ok = _stationary_cov(ar_full, rvec, 1e-12, 200)
    if not ok or not np.all(np.isfinite(P0)):
        raise NonStationaryParams("stationary covariance iteration did not converge")
    return _StateSpace(ar_full, rvec, P0)


def _state_space(order: SarimaxOrder, params: SarimaxParams) -> _StateSpace:
    if not is_stationary(params):
        raise NonStationaryParams(f"AR part of {order} is not stationary")
    return _arma_state_space(reduced_ar(order, params), reduced_ma(order, params))


def _run(ss: _StateSpace, Y):
    V, F, a, P, ok = _filter(ss.ar, ss.rvec, ss.P0, np.ascontiguousarray(Y, dtype=float))
    if not ok:
        raise FilterDivergence("non-positive or non-finite innovation variance")
    return V, F, a, P


def kalman_loglik(order: SarimaxOrder, params: SarimaxParams, y, X=None) -> float:
    """Exact Gaussian log-likelihood of ``z = y - X beta`` under the seasonal ARMA.

    ``y`` and ``X`` are already on the differenced scale.
    """
    y = np.asarray(y, dtype=float)
    X = np.zeros((len(y), 0)) if X is None else np.asarray(X, dtype=float).reshape(len(y), -1)
    params.check(order, X.shape[1])
    z = y - X @ np.asarray(params.beta) if X.shape[1] else y
    V, F, _, _ = _run(_state_space(order, params), z[:, None])
    v = V[:, 0]
    s2 = params.sigma2
    ll = -0.5 * np.sum(LOG_2PI + np.log(s2 * F) + v * v / (s2 * F))
    if not np.isfinite(ll):
        raise FilterDivergence("non-finite log-likelihood")
    return float(ll)


@dataclass
class _Profile:
    loglik: float
    beta: np.ndarray
    sigma2: float
    innov: np.ndarray
    F: np.ndarray
    state: np.ndarray
    cov: np.ndarray


def _profile(ss: _StateSpace, Y) -> _Profile:
    """Likelihood with beta (GLS) and sigma^2 concentrated out for fixed ARMA coefficients.

    Column 0 of ``Y`` is the differenced series, the rest are regressors.
    """
    V, F, a, P = _run(ss, Y)
    n = len(Y)
    if Y.shape[1] > 1:
        Vx = V[:, 1:] / F[:, None]
        beta = np.linalg.solve(Vx.T @ V[:, 1:], Vx.T @ V[:, 0])
        e = V[:, 0] - V[:, 1:] @ beta
        state = a[:, 0] - a[:, 1:] @ beta
    else:
        beta = np.zeros(0)
        e = V[:, 0]
        state = a[:, 0]
    sigma2 = float(np.sum(e * e / F) / n)
    if not sigma2 > 0:
        raise FilterDivergence("zero residual variance")
    ll = -0.5 * n * (LOG_2PI + math.log(sigma2) + 1.0) - 0.5 * float(np.sum(np.log(F)))
    return _Profile(ll, beta, sigma2, e, F, state, P)


# -- fitting ---------------------------------------------------------------------

@dataclass
class SarimaxFit:
    order: SarimaxOrder
    params: SarimaxParams
    loglik: float
    n_obs: int
    residuals: np.ndarray
    exog_mean: np.ndarray = field(default_factory=lambda: np.zeros(0))
    exog_tail: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    exog_mode: str = "differenced"
    state: np.ndarray = field(default_factory=lambda: np.zeros(0))
    start_logliks: tuple = ()
    n_evals: int = 0

    @property
    def k_exog(self) -> int:
        return len(self.params.beta)

    @property
    def n_params(self) -> int:
        return self.order.n_arma + self.k_exog + 1

    def information_criteria(self) -> tuple[float, float]:
        return aic_bic(self.loglik, self.n_params, self.n_obs)

    def ljung_box(self, h: int = 12):
        return ljung_box(self.residuals, h, self.order.n_arma)


def _prepare_exog(X, n, order: SarimaxOrder, exog_mode: str):
    X = np.zeros((n, 0)) if X is None else np.asarray(X, dtype=float).reshape(n, -1)
    if exog_mode == "differenced":
        Xd = difference(X, order.d, order.D, order.s) if X.shape[1] else np.zeros((n - order.n_lost, 0))
    elif exog_mode == "levels":
        Xd = X[order.n_lost:]
    else:
        raise ValueError(f"unknown exog_mode {exog_mode!r}")
    mean = Xd.mean(axis=0) if Xd.shape[1] else np.zeros(0)
    return X, Xd - mean, mean


def _start_points(order: SarimaxOrder):
    starts = []
    for value in (0.0, 0.3, -0.3):
        coefs = SarimaxParams(
            phi=[value] * order.p, theta=[value] * order.q, Phi=[value] * order.P, Theta=[value] * order.Q
        )
        try:
            starts.append(params_to_unconstrained(order, coefs))
        except NonStationaryParams:
            continue
    return starts


def fit_mle(y, X=None, order: SarimaxOrder = SarimaxOrder(), exog_mode: str = "differenced",
            max_evals: int = 2000, tol: float = 1e-8) -> SarimaxFit:
    """Maximum-likelihood fit by Nelder-Mead from three deterministic starts.

    AR and MA blocks are searched in the partial-autocorrelation
    parameterisation, so every trial point is stationary and invertible;
    beta and sigma^2 are profiled out in closed form at each trial point.
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    w = difference(y, order.d, order.D, order.s)
    X, Xd, mean = _prepare_exog(X, n, order, exog_mode)
    k = order.n_arma + Xd.shape[1] + 1
    if len(w) < 3 * k:
        raise SeriesTooShort(f"{len(w)} differenced points for {k} parameters of {order}")

    Y = np.column_stack([w, Xd]) if Xd.shape[1] else w[:, None]
    sizes = np.cumsum([order.p, order.q, order.P, order.Q])

    def build(x):
        return params_from_unconstrained(order, x)

    def objective(x):
        # trial points are stationary by construction; skip the root check
        xp, xq, xP, xQ = np.split(x, sizes[:-1])
        ar = -_expand(constrain(xp), constrain(xP), order.s, -1.0)
        ma = _expand(-constrain(xq), -constrain(xQ), order.s, 1.0)
        try:
            ll = _profile(_arma_state_space(ar, ma), Y).loglik
        except (ClimlagError, np.linalg.LinAlgError, FloatingPointError):
            return np.inf
        return -ll if np.isfinite(ll) else np.inf

    n_evals = 0
    start_lls = []
    if order.n_arma == 0:
        best_x = np.zeros(0)
    else:
        best_x, best_val = None, np.inf
        for x0 in _start_points(order):
            f0 = objective(x0)
            n_evals += 1
            start_lls.append(-f0)
            if not np.isfinite(f0):
                continue
            simplex = np.vstack([x0] + [x0 + 0.4 * e for e in np.eye(len(x0))])
            res = minimize(
                objective, x0, method="Nelder-Mead",
                options={"initial_simplex": simplex, "maxfev": max_evals, "fatol": tol,
                         "xatol": np.inf, "adaptive": len(x0) > 4},
            )
            n_evals += int(res.nfev)
            x, val = (res.x, res.fun) if res.fun <= f0 else (x0, f0)
            if val < best_val:
                best_x, best_val = x, val
        if best_x is None:
            raise OptimizationFailed(f"no start point of {order} gives a finite likelihood")

    base = build(best_x)
    prof = _profile(_state_space(order, base), Y)
    params = SarimaxParams(base.phi, base.theta, base.Phi, base.Theta, prof.beta, prof.sigma2)
    resid = prof.innov / np.sqrt(prof.sigma2 * prof.F)
    return SarimaxFit(
        order=order,
        params=params,
        loglik=prof.loglik,
        n_obs=len(w),
        residuals=resid,
        exog_mean=mean,
        exog_tail=X[len(X) - order.n_lost:] if order.n_lost else X[:0],
        exog_mode=exog_mode,
        state=prof.state,
        start_logliks=tuple(start_lls),
        n_evals=n_evals,
    )


def fit_fixed(y, X, order: SarimaxOrder, params: SarimaxParams, exog_mode: str = "differenced") -> SarimaxFit:
    """Filter ``y`` under given parameters (no estimation); useful for forecasting known models."""
    y = np.asarray(y, dtype=float)
    w = difference(y, order.d, order.D, order.s) if order.n_lost else y.copy()
    X, Xd, mean = _prepare_exog(X, len(y), order, exog_mode)
    params.check(order, Xd.shape[1])
    z = w - Xd @ np.asarray(params.beta) if Xd.shape[1] else w
    ss = _state_space(order, params)
    V, F, a, _ = _run(ss, z[:, None])
    ll = kalman_loglik(order, params, w, Xd)
    return SarimaxFit(order, params, ll, len(w), V[:, 0] / np.sqrt(params.sigma2 * F), mean,
                      X[len(X) - order.n_lost:] if order.n_lost else X[:0], exog_mode, a[:, 0])


def _transition(ar):
    r = len(ar)
    T = np.zeros((r, r))
    T[:, 0] = ar
    T[:-1, 1:] += np.eye(r - 1)
    return T


def forecast(fit: SarimaxFit, horizon: int, X_future=None, history=None) -> np.ndarray:
    """Multi-step forecasts on the original scale (unclamped).

    ``history`` is the observed series the fit was estimated on (at least its
    last d + D*s values).
    """
    if horizon < 1:
        raise HorizonMismatch("horizon must be >= 1")
    k = fit.k_exog
    if k:
        if X_future is None:
            raise HorizonMismatch("model has exogenous regressors; X_future required")
        X_future = np.asarray(X_future, dtype=float).reshape(-1, k)
        if len(X_future) != horizon:
            raise HorizonMismatch(f"X_future has {len(X_future)} rows for horizon {horizon}")
    elif X_future is not None and np.asarray(X_future).size:
        raise HorizonMismatch("model has no exogenous regressors")
    order = fit.order
    ar = reduced_ar(order, fit.params)
    ma = reduced_ma(order, fit.params)
    r = max(len(ar), len(ma) + 1, 1)
    ar_full = np.zeros(r)
    ar_full[:len(ar)] = ar
    T = _transition(ar_full)
    a = np.asarray(fit.state, dtype=float).copy()
    z = np.empty(horizon)
    for h in range(horizon):
        z[h] = a[0]
        a = T @ a
    if k:
        if fit.exog_mode == "differenced":
            Xd = difference(np.vstack([fit.exog_tail, X_future]), order.d, order.D, order.s) if order.n_lost else X_future
        else:
            Xd = X_future
        z = z + (Xd - fit.exog_mean) @ np.asarray(fit.params.beta)
    if order.n_lost == 0:
        return z
    if history is None:
        raise InsufficientHistory("history required to integrate the forecast")
    return integrate(z, history, order.d, order.D, order.s)


# -- simulation ------------------------------------------------------------------

def simulate(order: SarimaxOrder, params: SarimaxParams, n: int, rng, burn: int = 200, X=None) -> np.ndarray:
    """Draw a path of length ``n`` (differencing undone from zero initial levels)."""
    ar = reduced_ar(order, params)
    ma = reduced_ma(order, params)
    total = n + burn
    eps = rng.standard_normal(total) * math.sqrt(params.sigma2)
    z = np.zeros(total)
    for t in range(total):
        acc = eps[t]
        for i, c in enumerate(ar, start=1):
            if t - i >= 0:
                acc += c * z[t - i]
        for j, c in enumerate(ma, start=1):
            if t - j >= 0:
                acc += c * eps[t - j]
        z[t] = acc
    w = z[burn:]
    if X is not None and len(params.beta):
        w = w + np.asarray(X, dtype=float).reshape(n, -1)[:n] @ np.asarray(params.beta)
    y = w
    for _ in range(order.D):
        out = np.zeros(len(y))
        for t in range(len(y)):
            out[t] = y[t] + (out[t - order.s] if t >= order.s else 0.0)
        y = out
    for _ in range(order.d):
        y = np.cumsum(y)
    return y


# -- grid search -----------------------------------------------------------------

@dataclass
class GridResult:
    order: SarimaxOrder
    metrics: MetricTriple | None = None
    aic: float | None = None
    bic: float | None = None
    lb_p: float | None = None
    forecast: np.ndarray | None = None
    forecast_raw: np.ndarray | None = None
    fit: SarimaxFit | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def _evaluate_candidate(args):
    order, train, test, X_train, X_test, exog_mode = args
    try:
        fit = fit_mle(train, X_train, order, exog_mode=exog_mode)
        raw = forecast(fit, len(test), X_test, train)
        if not np.all(np.isfinite(raw)):
            raise FilterDivergence("non-finite forecast")
        clamped = np.maximum(raw, 0.0)
        aic, bic = fit.information_criteria()
        lb = fit.ljung_box(12).p if fit.n_obs > 13 else None
        return GridResult(order, metrics(test, clamped), aic, bic, lb, clamped, raw, fit)
    except (ClimlagError, np.linalg.LinAlgError, ValueError) as exc:
        return GridResult(order, error=f"{type(exc).__name__}: {exc}")


def grid_search(train, test, X_train=None, X_test=None, grid=DEFAULT_GRID, exog_mode: str = "differenced",
                n_jobs: int = 1) -> list[GridResult]:
    """Fit every order on ``train``, forecast ``test`` and rank by test RMSE.

    Failed candidates are kept (``ok`` is False) after the ranked successes.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("empty SARIMAX grid")
    train = np.asarray(train, dtype=float)
    test = np.asarray(test, dtype=float)
    jobs = [(o, train, test, X_train, X_test, exog_mode) for o in grid]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_evaluate_candidate, jobs))
    else:
        results = [_evaluate_candidate(j) for j in jobs]
    ok = sorted((r for r in results if r.ok), key=lambda r: (r.metrics.rmse, r.order))
    if not ok:
        raise AllCandidatesFailed("; ".join(f"{r.order}: {r.error}" for r in results[:5]))
    failed = sorted((r for r in results if not r.ok), key=lambda r: r.order)
    return ok + failed
