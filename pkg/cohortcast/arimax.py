"""ARIMAX estimation and forecasting for one short series with exogenous regressors.

The model, written for the d-times differenced series w, is::

    w_t = mu + sum_i phi_i w_{t-i} + sum_k beta_k x_{k,t} - sum_j theta_j e_{t-j} + e_t

Parameters are estimated by conditional sum of squares (pre-sample residuals
are zero, the first p observations are conditioned on), started from a
Hannan-Rissanen regression and refined with L-BFGS-B.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy import optimize, signal

from .errors import (
    DimensionMismatch,
    InsufficientData,
    InsufficientHistory,
    NoFeasibleOrder,
    NonFiniteValue,
    SeriesTooShort,
    SingularDesign,
)

logger = logging.getLogger(__name__)

SIGMA2_FLOOR = 1e-12
MA_BOUND = 0.999
# tanh(7.6) ~ 0.9999995, keeps the AR partial autocorrelations off the unit circle
PACF_Z_BOUND = 7.6
PACF_BOUNDARY = 0.999


class ModelOrder(BaseModel):
    """(p, d, q) of an ARIMAX model. p = q = 0 is regression with a mean."""

    model_config = ConfigDict(frozen=True)

    p: int = Field(0, ge=0)
    d: int = Field(0, ge=0)
    q: int = Field(0, ge=0)

    @property
    def is_degenerate(self) -> bool:
        return self.p + self.q == 0

    @property
    def complexity(self) -> int:
        return self.p + self.d + self.q

    def n_params(self, k_exog: int) -> int:
        """Count of estimated mean-equation parameters (mu, phi, theta, beta)."""
        return 1 + self.p + self.q + k_exog

    def __str__(self) -> str:
        return f"({self.p},{self.d},{self.q})"


def default_order_grid() -> List[ModelOrder]:
    return [ModelOrder(p=p, d=d, q=q) for d in (0, 1) for p in (0, 1, 2) for q in (0, 1)]


class EstimationConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    max_iterations: int = Field(500, ge=1)
    gradient_tolerance: float = Field(1e-8, gt=0)
    order_grid: List[ModelOrder] = Field(default_factory=default_order_grid, min_length=1)
    enforce_stationarity: bool = True
    min_obs_per_param: float = Field(3.0, gt=0)

    @field_validator("order_grid")
    @classmethod
    def _unique_orders(cls, grid: List[ModelOrder]) -> List[ModelOrder]:
        seen = []
        for order in grid:
            if order not in seen:
                seen.append(order)
        return seen

    def is_feasible(self, n: int, order: ModelOrder, k_exog: int) -> bool:
        return n - order.d >= self.min_obs_per_param * order.n_params(k_exog)


@dataclass
class ArimaxFit:
    order: ModelOrder
    mu: float
    phi: np.ndarray
    theta: np.ndarray
    beta: np.ndarray
    sigma2: float
    n_obs: int
    aic: float
    converged: bool = True
    sse: float = float("nan")
    residuals: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)
    message: str = ""

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=float).reshape(-1)
        self.theta = np.asarray(self.theta, dtype=float).reshape(-1)
        self.beta = np.asarray(self.beta, dtype=float).reshape(-1)
        self.residuals = np.asarray(self.residuals, dtype=float).reshape(-1)

    @property
    def n_params(self) -> int:
        return self.order.n_params(len(self.beta))

    def packed(self) -> np.ndarray:
        return pack_params(self.mu, self.phi, self.theta, self.beta)


def pack_params(mu: float, phi, theta, beta) -> np.ndarray:
    return np.concatenate([[mu], np.ravel(phi), np.ravel(theta), np.ravel(beta)]).astype(float)


def unpack_params(params: np.ndarray, p: int, q: int) -> Tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    params = np.asarray(params, dtype=float)
    return float(params[0]), params[1:1 + p], params[1 + p:1 + p + q], params[1 + p + q:]


def _as_series(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise DimensionMismatch(f"series must be one-dimensional, got shape {y.shape}")
    return y


def _as_exog(X, n: int) -> np.ndarray:
    if X is None:
        return np.empty((n, 0))
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2 or X.shape[0] != n:
        raise DimensionMismatch(f"exogenous matrix must have {n} rows, got shape {X.shape}")
    return X


def _lag_matrix(series: np.ndarray, lags: int) -> np.ndarray:
    """Rows t = lags..n-1, column i-1 holds series[t - i]."""
    n = len(series)
    if lags == 0:
        return np.empty((n, 0))
    return np.column_stack([series[lags - i:n - i] for i in range(1, lags + 1)])


# Differencing

def difference(series, d: int) -> np.ndarray:
    series = _as_series(series)
    if d < 0:
        raise DimensionMismatch(f"differencing order must be >= 0, got {d}")
    if len(series) <= d:
        raise SeriesTooShort(f"need more than {d} observations to difference {d} times, got {len(series)}")
    if d == 0:
        return series.copy()
    return np.diff(series, n=d)


def undifference(diff_forecasts, last_levels, d: Optional[int] = None) -> np.ndarray:
    """Integrate forecasts of the d-th difference back to levels.

    ``last_levels`` holds the final d observed levels; their length sets d
    unless ``d`` is given, in which case the two must agree.
    """
    diff_forecasts = _as_series(diff_forecasts)
    last_levels = _as_series(last_levels)
    if d is None:
        d = len(last_levels)
    elif len(last_levels) != d:
        raise DimensionMismatch(f"need {d} level anchors, got {len(last_levels)}")
    out = diff_forecasts.copy()
    # Last value of each intermediate difference, from the highest order down
    for j in range(d - 1, -1, -1):
        anchor = np.diff(last_levels, n=j)[-1] if j else last_levels[-1]
        out = anchor + np.cumsum(out)
    return out


# Conditional sum of squares

def css_residuals(params, y, X, order: ModelOrder) -> np.ndarray:
    """Residuals e_t for t = p..n-1 of the (already differenced) series."""
    residuals, _ = _css_core(params, y, X, order, with_gradient=False)
    return residuals


def css_objective(params, y, X, order: ModelOrder) -> Tuple[float, np.ndarray]:
    """Sum of squared residuals and its analytic gradient.

    ``y`` is the differenced series, ``X`` the exogenous rows aligned with it,
    ``params`` packs (mu, phi_1..p, theta_1..q, beta_1..k). ``order.d`` is ignored.
    """
    residuals, jacobian = _css_core(params, y, X, order, with_gradient=True)
    return float(residuals @ residuals), 2.0 * (residuals @ jacobian)


def _css_core(params, y, X, order: ModelOrder, with_gradient: bool):
    y = _as_series(y)
    X = _as_exog(X, len(y))
    p, q = order.p, order.q
    params = np.asarray(params, dtype=float)
    if len(params) != 1 + p + q + X.shape[1]:
        raise DimensionMismatch(
            f"expected {1 + p + q + X.shape[1]} parameters for order {order} "
            f"with {X.shape[1]} regressors, got {len(params)}"
        )
    if len(y) <= p:
        raise SeriesTooShort(f"need more than {p} observations, got {len(y)}")

    mu, phi, theta, beta = unpack_params(params, p, q)
    lags = _lag_matrix(y, p)
    exog = X[p:]
    driver = y[p:] - mu - lags @ phi - exog @ beta

    # e_t = driver_t + sum_j theta_j e_{t-j}
    denominator = np.concatenate([[1.0], -theta])
    with np.errstate(over="ignore", invalid="ignore"):
        residuals = signal.lfilter([1.0], denominator, driver)
    if not np.all(np.isfinite(residuals)):
        raise NonFiniteValue(f"residual recursion diverged for theta={theta}")
    if not with_gradient:
        return residuals, None

    m = len(residuals)
    lagged_residuals = np.zeros((m, q))
    for j in range(1, q + 1):
        lagged_residuals[j:, j - 1] = residuals[:m - j]
    # d e_t / d params obeys the same recursion as e_t
    forcing = np.column_stack([-np.ones(m), -lags, lagged_residuals, -exog])
    with np.errstate(over="ignore", invalid="ignore"):
        jacobian = signal.lfilter([1.0], denominator, forcing, axis=0)
    if not np.all(np.isfinite(jacobian)):
        raise NonFiniteValue("gradient recursion diverged")
    return residuals, jacobian


# Stationary reparameterization of the AR polynomial

def pacf_to_ar(pacf) -> Tuple[np.ndarray, np.ndarray]:
    """AR coefficients from partial autocorrelations, with the Jacobian d phi / d pacf."""
    pacf = np.asarray(pacf, dtype=float)
    p = len(pacf)
    phi = np.empty(0)
    jac = np.empty((0, p))
    for k in range(p):
        r = pacf[k]
        reversed_phi = phi[::-1]
        reversed_jac = jac[::-1]
        unit = np.zeros(p)
        unit[k] = 1.0
        new_jac = np.vstack([jac - r * reversed_jac - np.outer(reversed_phi, unit), unit])
        phi = np.concatenate([phi - r * reversed_phi, [r]])
        jac = new_jac
    return phi, jac


def ar_to_pacf(phi) -> np.ndarray:
    """Inverse of ``pacf_to_ar``; raises ValueError outside the stationary region."""
    phi = np.asarray(phi, dtype=float).copy()
    p = len(phi)
    pacf = np.empty(p)
    for k in range(p, 0, -1):
        r = phi[k - 1]
        if abs(r) >= 1.0:
            raise ValueError("AR polynomial is not stationary")
        pacf[k - 1] = r
        phi = (phi[:k - 1] + r * phi[:k - 1][::-1]) / (1.0 - r * r)
    return pacf


def is_stationary(phi) -> bool:
    phi = np.asarray(phi, dtype=float)
    if len(phi) == 0:
        return True
    roots = np.roots(np.concatenate([-phi[::-1], [1.0]]))
    return bool(np.all(np.abs(roots) > 1.0))


# Estimation

def _standardize(w: np.ndarray, X: np.ndarray):
    y_loc, y_scale = float(w.mean()), float(w.std())
    if not y_scale > 0:
        y_scale = 1.0
    x_loc = X.mean(axis=0) if X.shape[1] else np.empty(0)
    x_scale = X.std(axis=0) if X.shape[1] else np.empty(0)
    x_scale = np.where(x_scale > 0, x_scale, 1.0)
    return (w - y_loc) / y_scale, (X - x_loc) / x_scale, (y_loc, y_scale, x_loc, x_scale)


def _unstandardize(params: np.ndarray, p: int, q: int, scaling) -> np.ndarray:
    y_loc, y_scale, x_loc, x_scale = scaling
    mu_s, phi, theta, beta_s = unpack_params(params, p, q)
    beta = beta_s * y_scale / x_scale
    mu = y_scale * mu_s + y_loc * (1.0 - phi.sum()) - float(beta @ x_loc)
    return pack_params(mu, phi, theta, beta)


def _least_squares(design: np.ndarray, target: np.ndarray) -> np.ndarray:
    coef, *_ = np.linalg.lstsq(design, target, rcond=None)
    return coef


def hannan_rissanen(w: np.ndarray, X: np.ndarray, p: int, q: int) -> np.ndarray:
    """Starting values (mu, phi, theta, beta) by two-stage regression.

    A long autoregression supplies residual proxies; the second stage regresses
    w_t on a constant, p lags, q lagged proxies and the regressors. For q = 0
    this is exactly the conditional least-squares estimate.
    """
    n = len(w)
    k = X.shape[1]
    if q == 0:
        design = np.column_stack([np.ones(n - p), _lag_matrix(w, p), X[p:]])
        coef = _least_squares(design, w[p:])
        return pack_params(coef[0], coef[1:1 + p], [], coef[1 + p:])

    long_order = max(p + q, min(int(math.ceil(10 * math.log10(n))), n // 4))
    start = long_order + q
    if n - max(start, p) <= 1 + p + q + k:
        # Too short for two stages, start the MA part at zero
        return _ar_start_with_zero_ma(w, X, p, q)

    design = np.column_stack([np.ones(n - long_order), _lag_matrix(w, long_order), X[long_order:]])
    coef = _least_squares(design, w[long_order:])
    proxies = np.zeros(n)
    proxies[long_order:] = w[long_order:] - design @ coef

    first = max(start, p)
    rows = np.arange(first, n)
    columns = [np.ones(len(rows))]
    columns += [w[rows - i] for i in range(1, p + 1)]
    columns += [proxies[rows - j] for j in range(1, q + 1)]
    design = np.column_stack(columns + [X[rows]])
    coef = _least_squares(design, w[rows])
    theta = -coef[1 + p:1 + p + q]
    return pack_params(coef[0], coef[1:1 + p], np.clip(theta, -0.9, 0.9), coef[1 + p + q:])


def _ar_start_with_zero_ma(w: np.ndarray, X: np.ndarray, p: int, q: int) -> np.ndarray:
    start = hannan_rissanen(w, X, p, 0)
    mu, phi, _, beta = unpack_params(start, p, 0)
    return pack_params(mu, phi, np.zeros(q), beta)


def _check_design(X: np.ndarray) -> None:
    design = np.column_stack([np.ones(len(X)), X])
    if np.linalg.matrix_rank(design) < design.shape[1]:
        raise SingularDesign("exogenous columns are collinear with each other or the intercept")


class _CssProblem:
    """CSS objective over an unconstrained vector, remembering the best point seen."""

    def __init__(self, w: np.ndarray, X: np.ndarray, order: ModelOrder, stationary: bool):
        self.w = w
        self.X = X
        self.order = order
        self.stationary = stationary and order.p > 0
        self.best_value = np.inf
        self.best_z: Optional[np.ndarray] = None

    def to_params(self, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        p = self.order.p
        params = np.array(z, dtype=float)
        ar_jacobian = np.eye(p)
        if self.stationary:
            pacf = np.tanh(z[1:1 + p])
            phi, jac = pacf_to_ar(pacf)
            params[1:1 + p] = phi
            ar_jacobian = jac * (1.0 - pacf ** 2)
        return params, ar_jacobian

    def to_unconstrained(self, params: np.ndarray) -> np.ndarray:
        z = np.array(params, dtype=float)
        if self.stationary:
            phi = z[1:1 + self.order.p]
            try:
                pacf = np.clip(ar_to_pacf(phi), -0.95, 0.95)
            except ValueError:
                pacf = np.zeros(len(phi))
            z[1:1 + self.order.p] = np.arctanh(pacf)
        return z

    def __call__(self, z: np.ndarray) -> Tuple[float, np.ndarray]:
        params, ar_jacobian = self.to_params(z)
        try:
            value, gradient = css_objective(params, self.w, self.X, self.order)
        except NonFiniteValue:
            return 1e300, np.zeros_like(z)
        p = self.order.p
        if self.stationary:
            gradient = gradient.copy()
            gradient[1:1 + p] = ar_jacobian.T @ gradient[1:1 + p]
        if value < self.best_value:
            self.best_value = value
            self.best_z = np.array(z, copy=True)
        return value, gradient

    def bounds(self) -> List[Tuple[Optional[float], Optional[float]]]:
        p, q = self.order.p, self.order.q
        k = self.X.shape[1]
        ar_bound = (-PACF_Z_BOUND, PACF_Z_BOUND) if self.stationary else (None, None)
        return [(None, None)] + [ar_bound] * p + [(-MA_BOUND, MA_BOUND)] * q + [(None, None)] * k


def _minimize(problem: _CssProblem, start: np.ndarray, cfg: EstimationConfig) -> Tuple[np.ndarray, bool, str]:
    z0 = problem.to_unconstrained(start)
    lower_upper = problem.bounds()
    for i, (low, high) in enumerate(lower_upper):
        if low is not None:
            z0[i] = min(max(z0[i], low), high)
    result = optimize.minimize(
        problem,
        z0,
        jac=True,
        method="L-BFGS-B",
        bounds=lower_upper,
        options={"maxiter": cfg.max_iterations, "gtol": cfg.gradient_tolerance, "ftol": 1e-12},
    )
    z = result.x if np.isfinite(result.fun) and result.fun <= problem.best_value else problem.best_z
    if z is None:
        raise NonFiniteValue("optimizer never reached a finite objective")
    params, _ = problem.to_params(z)
    converged = bool(result.success)
    message = str(result.message)
    if problem.stationary and np.any(np.abs(np.tanh(z[1:1 + problem.order.p])) > PACF_BOUNDARY):
        converged = False
        message = "AR parameters on the stationarity boundary"
    return params, converged, message


def fit(y, X, order: ModelOrder, cfg: Optional[EstimationConfig] = None) -> ArimaxFit:
    """Estimate one ARIMAX model by conditional sum of squares.

    Raises InsufficientData when the series is too short for the order and
    SingularDesign when the regressors are collinear. A fit that does not
    converge is still returned, with ``converged=False``.
    """
    cfg = cfg or EstimationConfig()
    y = _as_series(y)
    X = _as_exog(X, len(y))
    if not np.all(np.isfinite(y)) or not np.all(np.isfinite(X)):
        raise NonFiniteValue("series and regressors must be finite")
    k = X.shape[1]
    n_params = order.n_params(k)
    if not cfg.is_feasible(len(y), order, k):
        raise InsufficientData(
            f"order {order} with {k} regressors needs {cfg.min_obs_per_param * n_params:g} "
            f"observations after differencing, got {len(y) - order.d}"
        )

    w = difference(y, order.d)
    exog = X[order.d:]
    _check_design(exog)
    ws, Xs, scaling = _standardize(w, exog)
    p, q = order.p, order.q

    start = hannan_rissanen(ws, Xs, p, q)
    if q == 0 and (not cfg.enforce_stationarity or is_stationary(start[1:1 + p])):
        params_s, converged, message = start, True, "closed-form least squares"
    else:
        problem = _CssProblem(ws, Xs, order, cfg.enforce_stationarity)
        params_s, converged, message = _minimize(problem, start, cfg)

    params = _unstandardize(params_s, p, q, scaling)
    residuals = css_residuals(params, w, exog, order)
    sse = float(residuals @ residuals)
    n_eff = len(residuals)
    sigma2 = max(sse / max(n_eff - n_params, 1), SIGMA2_FLOOR)
    aic = n_eff * math.log(sigma2) + 2 * (n_params + 1)

    mu, phi, theta, beta = unpack_params(params, p, q)
    result = ArimaxFit(
        order=order, mu=mu, phi=phi, theta=theta, beta=beta, sigma2=sigma2,
        n_obs=n_eff, aic=aic, converged=converged, sse=sse, residuals=residuals, message=message,
    )
    if not converged:
        logger.warning(f"order {order} did not converge: {message}", extra={"code": "NON_CONVERGENCE"})
    return result


def forecast(fit_result: ArimaxFit, y_history, X_future, h: int) -> np.ndarray:
    """Iterate one-step forecasts h times with future innovations set to zero.

    MA terms use the residuals stored on the fit, so ``y_history`` should be
    the series the model was fitted on.
    """
    order = fit_result.order
    y_history = _as_series(y_history)
    k = len(fit_result.beta)
    if h < 0:
        raise DimensionMismatch(f"forecast steps must be >= 0, got {h}")
    X_future = np.empty((h, 0)) if X_future is None and k == 0 else np.asarray(X_future, dtype=float)
    if X_future.ndim == 1:
        X_future = X_future.reshape(-1, 1) if k == 1 else X_future.reshape(h, -1)
    if X_future.shape != (h, k):
        raise DimensionMismatch(f"future regressors must have shape ({h}, {k}), got {X_future.shape}")
    if len(y_history) < order.d + order.p:
        raise InsufficientHistory(
            f"order {order} needs at least {order.d + order.p} past values, got {len(y_history)}"
        )
    if h == 0:
        return np.empty(0)

    w = np.diff(y_history, n=order.d) if order.d else y_history
    p, q = order.p, order.q
    path = np.concatenate([w[len(w) - p:], np.zeros(h)])
    past_residuals = fit_result.residuals[len(fit_result.residuals) - q:] if q else np.empty(0)
    shocks = np.concatenate([np.zeros(q - len(past_residuals)), past_residuals, np.zeros(h)])

    predictions = np.empty(h)
    for s in range(h):
        value = fit_result.mu + float(X_future[s] @ fit_result.beta)
        for i in range(1, p + 1):
            value += fit_result.phi[i - 1] * path[p + s - i]
        for j in range(1, q + 1):
            value -= fit_result.theta[j - 1] * shocks[q + s - j]
        path[p + s] = value
        predictions[s] = value

    if order.d:
        return undifference(predictions, y_history[len(y_history) - order.d:])
    return predictions


def search_orders(y, X, cfg: Optional[EstimationConfig] = None) -> ArimaxFit:
    """Fit every feasible grid order and return the fit with the lowest AIC.

    Ties go to the smaller p+q+d, then the smaller q.
    """
    cfg = cfg or EstimationConfig()
    y = _as_series(y)
    X = _as_exog(X, len(y))
    k = X.shape[1]
    best: Optional[ArimaxFit] = None
    reasons = []
    for order in cfg.order_grid:
        if not cfg.is_feasible(len(y), order, k):
            reasons.append(f"{order}: too few observations")
            continue
        try:
            candidate = fit(y, X, order, cfg)
        except (SingularDesign, NonFiniteValue, SeriesTooShort) as e:
            reasons.append(f"{order}: {e.detail}")
            continue
        if not np.isfinite(candidate.aic):
            reasons.append(f"{order}: non-finite AIC")
            continue
        key = (candidate.aic, order.complexity, order.q)
        if best is None or key < (best.aic, best.order.complexity, best.order.q):
            best = candidate
    if best is None:
        raise NoFeasibleOrder(f"no order fits {len(y)} observations: {'; '.join(reasons)}")
    return best


def select_order(y, X, cfg: Optional[EstimationConfig] = None) -> ModelOrder:
    return search_orders(y, X, cfg).order


def simulate_arma(n: int, phi: Sequence[float] = (), theta: Sequence[float] = (), mu: float = 0.0,
                  sigma: float = 1.0, seed: Optional[int] = None, burn_in: int = 200) -> np.ndarray:
    """Draw a stationary ARMA path in this module's sign convention (MA enters with minus)."""
    rng = np.random.default_rng(seed)
    phi = np.asarray(phi, dtype=float)
    theta = np.asarray(theta, dtype=float)
    shocks = rng.normal(0.0, sigma, n + burn_in)
    numerator = np.concatenate([[1.0], -theta])
    denominator = np.concatenate([[1.0], -phi])
    intercept = mu / (1.0 - phi.sum()) if len(phi) else mu
    path = signal.lfilter(numerator, denominator, shocks) + intercept
    return path[burn_in:]
