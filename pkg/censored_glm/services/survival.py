"""
Product-limit and Cox proportional-hazards estimation for the censoring time.

Both estimators are fit on (V, 1 - delta): the censorings of the covariate are
the events here. Tied event times are processed before tied censorings, and
tied events share one risk set (Breslow).
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg

from .conf import setting
from .exceptions import (
    ConvergenceError,
    DivergenceError,
    DomainError,
    EstimationError,
    NonIdentifiableError,
)

logger = logging.getLogger(__name__)


class Side(str, Enum):
    RIGHT = "right"
    LEFT_LIMIT = "left"


class SurvivalForm(str, Enum):
    PRODUCT = "product"
    EXPONENTIAL = "exponential"


def _event_table(times: np.ndarray, event: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Distinct event times with their risk-set sizes and event counts."""
    sorted_times = np.sort(times)
    sorted_event_times = np.sort(times[event == 1])
    event_times = np.unique(sorted_event_times)
    at_risk = times.shape[0] - np.searchsorted(sorted_times, event_times, side="left")
    events = (
        np.searchsorted(sorted_event_times, event_times, side="right")
        - np.searchsorted(sorted_event_times, event_times, side="left")
    )
    return event_times, at_risk, events


def _as_matrix(covariates, n_rows: int) -> np.ndarray:
    X = np.asarray(covariates, dtype=float)
    if X.size == 0:
        return np.zeros((n_rows, 0))
    return X.reshape(n_rows, -1)


def _check_survival_input(times, event) -> Tuple[np.ndarray, np.ndarray]:
    times = np.asarray(times, dtype=float)
    event = np.asarray(event, dtype=int)
    if times.size == 0:
        raise EstimationError("survival estimation needs at least one observation")
    if times.shape != event.shape:
        raise EstimationError("times and event indicators must have the same length")
    if np.any(~np.isfinite(times)) or np.any(times < 0):
        raise DomainError("times must be finite and non-negative")
    if np.any((event != 0) & (event != 1)):
        raise DomainError("event indicators must be 0 or 1")
    return times, event


@dataclass(frozen=True, eq=False)
class KmCurve:
    times: np.ndarray
    surv: np.ndarray
    at_risk: np.ndarray
    events: np.ndarray

    def evaluate(self, t, side: Side = Side.RIGHT):
        t = np.asarray(t, dtype=float)
        count = np.searchsorted(self.times, t, side="left" if Side(side) == Side.LEFT_LIMIT else "right")
        padded = np.concatenate([[1.0], self.surv])
        values = padded[count]
        return float(values) if values.ndim == 0 else values


def km_fit(times, event) -> KmCurve:
    times, event = _check_survival_input(times, event)
    event_times, at_risk, events = _event_table(times, event)
    surv = np.cumprod(1 - events / at_risk)
    return KmCurve(times=event_times, surv=surv, at_risk=at_risk, events=events)


def km_eval(curve: KmCurve, t, side: Side = Side.RIGHT):
    return curve.evaluate(t, side)


@dataclass(frozen=True)
class CoxOptions:
    tolerance: float = 1e-8
    max_iter: int = 100
    max_halvings: int = 20
    divergence_norm: float = 50.0
    divergence_patience: int = 5

    @classmethod
    def from_settings(cls, **overrides) -> "CoxOptions":
        values = {
            "tolerance": setting("COX_TOLERANCE", cls.tolerance),
            "max_iter": setting("COX_MAX_ITER", cls.max_iter),
            "max_halvings": setting("COX_MAX_HALVINGS", cls.max_halvings),
            "divergence_norm": setting("COX_DIVERGENCE_NORM", cls.divergence_norm),
            "divergence_patience": setting("COX_DIVERGENCE_PATIENCE", cls.divergence_patience),
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass(frozen=True, eq=False)
class CoxFit:
    theta: np.ndarray
    baseline_times: np.ndarray
    baseline_increments: np.ndarray
    log_partial_likelihood: float
    converged: bool
    covariance: np.ndarray
    iterations: int = 0
    score_norm: float = 0.0
    n_events: int = 0
    # covariate means the baseline refers to; None means the raw origin
    center: Optional[np.ndarray] = None

    def linear_predictor(self, h_rows: np.ndarray) -> np.ndarray:
        if self.center is not None:
            h_rows = h_rows - self.center
        return h_rows @ self.theta

    @property
    def cumulative_baseline(self) -> np.ndarray:
        return np.cumsum(self.baseline_increments)


def _partial_likelihood(theta, times, event, X, with_information=True):
    """Breslow log partial likelihood, score and information; times sorted ascending."""
    eta = X @ theta
    shift = eta.max() if eta.size else 0.0
    risk = np.exp(eta - shift)
    first = np.searchsorted(times, times, side="left")
    s0 = np.cumsum(risk[::-1])[::-1][first]
    s1 = np.cumsum((risk[:, None] * X)[::-1], axis=0)[::-1][first]

    observed = event == 1
    loglik = float(np.sum(eta[observed] - shift - np.log(s0[observed])))
    mean = s1[observed] / s0[observed][:, None]
    score = np.sum(X[observed] - mean, axis=0)
    if not with_information:
        return loglik, score, None

    outer = risk[:, None, None] * X[:, :, None] * X[:, None, :]
    s2 = np.cumsum(outer[::-1], axis=0)[::-1][first]
    information = np.sum(
        s2[observed] / s0[observed][:, None, None] - mean[:, :, None] * mean[:, None, :],
        axis=0,
    )
    return loglik, score, information


def cox_log_partial_likelihood(theta, times, event, covariates) -> float:
    times, event = _check_survival_input(times, event)
    X = _as_matrix(covariates, times.shape[0])
    order = np.argsort(times, kind="mergesort")
    loglik, _, _ = _partial_likelihood(
        np.asarray(theta, dtype=float), times[order], event[order], X[order], with_information=False
    )
    return loglik


def breslow_baseline(theta, times, event, covariates, center=None) -> Tuple[np.ndarray, np.ndarray]:
    """Baseline hazard mass d_j / sum_{k at risk at t_j} exp(theta'h_k) at each distinct event time.

    With `center` the risk scores are exp(theta'(h - center)).
    """
    times, event = _check_survival_input(times, event)
    X = _as_matrix(covariates, times.shape[0])
    order = np.argsort(times, kind="mergesort")
    sorted_times = times[order]
    if center is not None:
        X = X - np.asarray(center, dtype=float)
    risk = np.exp(X[order] @ np.asarray(theta, dtype=float))
    risk_sums = np.cumsum(risk[::-1])[::-1]

    event_times, _, events = _event_table(times, event)
    first = np.searchsorted(sorted_times, event_times, side="left")
    return event_times, events / risk_sums[first]


def _check_covariates(X: np.ndarray) -> None:
    if X.shape[1] == 0:
        return
    constant = [j for j in range(X.shape[1]) if np.ptp(X[:, j]) == 0]
    if constant:
        raise NonIdentifiableError(
            f"covariate column(s) {constant} are constant; their hazard ratio is not identifiable"
        )
    if np.linalg.matrix_rank(X - X.mean(axis=0)) < X.shape[1]:
        raise NonIdentifiableError("covariate columns are collinear")


def _invert_information(information: np.ndarray) -> np.ndarray:
    if information.size == 0:
        return np.zeros((0, 0))
    try:
        covariance = linalg.inv(information)
    except (linalg.LinAlgError, ValueError) as exc:
        raise NonIdentifiableError(f"partial-likelihood information is singular: {exc}") from exc
    return (covariance + covariance.T) / 2


def cox_fit(
    times,
    event,
    covariates,
    opts: Optional[CoxOptions] = None,
    fixed_theta: Optional[Sequence[float]] = None,
) -> CoxFit:
    opts = opts or CoxOptions.from_settings()
    times, event = _check_survival_input(times, event)
    X = _as_matrix(covariates, times.shape[0])
    n_events = int(event.sum())
    if n_events == 0:
        raise EstimationError("Cox model needs at least one event")

    order = np.argsort(times, kind="mergesort")
    sorted_times, sorted_event = times[order], event[order]
    # centering leaves theta, the likelihood and its derivatives unchanged
    means = X.mean(axis=0)
    centered = X[order] - means

    if fixed_theta is not None:
        theta = np.asarray(fixed_theta, dtype=float).reshape(X.shape[1])
        loglik, score, information = _partial_likelihood(theta, sorted_times, sorted_event, centered)
        iterations = 0
    else:
        _check_covariates(X)
        theta, loglik, score, information, iterations = _newton(
            sorted_times, sorted_event, centered, opts
        )

    event_times, increments = breslow_baseline(theta, times, event, X, center=means)
    return CoxFit(
        theta=theta,
        baseline_times=event_times,
        baseline_increments=increments,
        log_partial_likelihood=loglik,
        converged=True,
        covariance=_invert_information(information),
        iterations=iterations,
        score_norm=float(np.max(np.abs(score))) if score.size else 0.0,
        n_events=n_events,
        center=means,
    )


def _newton(times, event, X, opts: CoxOptions):
    theta = np.zeros(X.shape[1])
    loglik, score, information = _partial_likelihood(theta, times, event, X)
    if X.shape[1] == 0:
        return theta, loglik, score, information, 0

    beyond_cap = 0
    for iteration in range(1, opts.max_iter + 1):
        score_norm = float(np.max(np.abs(score)))
        if score_norm <= opts.tolerance:
            return theta, loglik, score, information, iteration - 1

        try:
            step = linalg.solve(information, score, assume_a="pos")
        except (linalg.LinAlgError, ValueError) as exc:
            raise NonIdentifiableError(f"partial-likelihood information is singular: {exc}") from exc

        for _ in range(opts.max_halvings + 1):
            candidate = theta + step
            candidate_loglik, _, _ = _partial_likelihood(
                candidate, times, event, X, with_information=False
            )
            if candidate_loglik >= loglik - 1e-12 * abs(loglik):
                break
            step = step / 2
        else:
            raise ConvergenceError(
                f"step-halving failed to increase the partial likelihood at iteration {iteration}",
                last_iterate=theta,
            )

        theta = candidate
        if np.linalg.norm(theta) > opts.divergence_norm or np.linalg.norm(step) > opts.divergence_norm:
            beyond_cap += 1
            if beyond_cap >= opts.divergence_patience:
                raise DivergenceError(
                    "partial likelihood is monotone; coefficients diverge "
                    f"(|theta| = {np.linalg.norm(theta):.1f})",
                    last_iterate=theta,
                )
        else:
            beyond_cap = 0

        loglik, score, information = _partial_likelihood(theta, times, event, X)
        logger.debug("Cox iteration %d: loglik=%.8f score=%.3e", iteration, loglik, np.max(np.abs(score)))

    if float(np.max(np.abs(score))) <= opts.tolerance:
        return theta, loglik, score, information, opts.max_iter
    raise ConvergenceError(
        f"Cox model did not converge in {opts.max_iter} iterations", last_iterate=theta
    )


class CoxSurvival(NamedTuple):
    value: float
    degenerate: bool


def cox_survival_curve(
    fit: CoxFit,
    h_rows,
    u,
    side: Union[Side, str] = Side.LEFT_LIMIT,
    form: Union[SurvivalForm, str] = SurvivalForm.PRODUCT,
    floor: float = 1e-6,
) -> Tuple[np.ndarray, np.ndarray]:
    """P(C > u | h) for each row; returns the values and a mask of degenerate products."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    h_rows = _as_matrix(h_rows, u.shape[0])
    risk = np.exp(fit.linear_predictor(h_rows))
    included = np.searchsorted(
        fit.baseline_times, u, side="left" if Side(side) == Side.LEFT_LIMIT else "right"
    )
    degenerate = np.zeros(u.shape[0], dtype=bool)
    rows = np.arange(u.shape[0])

    if SurvivalForm(form) == SurvivalForm.EXPONENTIAL:
        cumulative = np.concatenate([[0.0], fit.cumulative_baseline])
        values = np.exp(-cumulative[included] * risk)
    else:
        factors = 1 - fit.baseline_increments[None, :] * risk[:, None]
        products = np.hstack([np.ones((u.shape[0], 1)), np.cumprod(np.clip(factors, 0.0, None), axis=1)])
        lowest = np.hstack([np.ones((u.shape[0], 1)), np.minimum.accumulate(factors, axis=1)])
        values = products[rows, included]
        degenerate = lowest[rows, included] <= 0
        if np.any(degenerate):
            logger.warning(
                "%d survival product(s) hit a nonpositive factor; floored at %g",
                int(degenerate.sum()),
                floor,
            )
            values = np.where(degenerate, np.maximum(values, floor), values)
    return values, degenerate


def cox_survival_at(
    fit: CoxFit,
    h_row,
    u: float,
    side: Union[Side, str] = Side.LEFT_LIMIT,
    form: Union[SurvivalForm, str] = SurvivalForm.PRODUCT,
    floor: float = 1e-6,
) -> CoxSurvival:
    values, degenerate = cox_survival_curve(fit, [h_row], [u], side, form, floor)
    return CoxSurvival(float(values[0]), bool(degenerate[0]))
