"""
Weighted generalized estimating equations for the outcome model.

Solves sum_i w_i h_i (y_i - mu_i) X_i = 0 over the complete cases, with
mu_i = g^{-1}(beta'X_i) and X_i = (1, x_i, z_i, ...). Identity links are solved
in closed form by weighted least squares, log and logit links by iteratively
reweighted least squares with step-halving. Standard errors come from the
sandwich A^{-1} B A^{-T} with the weights held fixed.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg
from scipy.special import expit, logit

from .conf import setting
from .data_model import Dataset, WeightVector
from .exceptions import (
    ConvergenceError,
    DomainError,
    EstimationError,
    NoCompleteCasesError,
    SeparationError,
    SingularMatrixError,
)

logger = logging.getLogger(__name__)


class LinkKind(str, Enum):
    IDENTITY = "identity"
    LOG = "log"
    LOGIT = "logit"


@dataclass(frozen=True)
class LinkFamily:
    kind: LinkKind
    g: Callable[[np.ndarray], np.ndarray]
    g_inverse: Callable[[np.ndarray], np.ndarray]
    dmu_deta: Callable[[np.ndarray], np.ndarray]
    variance: Callable[[np.ndarray], np.ndarray]

    def h_weight(self, eta: np.ndarray) -> np.ndarray:
        # (dmu/deta) / v(mu); identically 1 for the three canonical links
        return self.dmu_deta(eta) / self.variance(self.g_inverse(eta))

    def in_mean_space(self, mu: np.ndarray) -> bool:
        if self.kind == LinkKind.LOG:
            return bool(np.all(mu > 0) and np.all(np.isfinite(mu)))
        if self.kind == LinkKind.LOGIT:
            return bool(np.all((mu > 0) & (mu < 1)))
        return bool(np.all(np.isfinite(mu)))

    def check_mean(self, mu: np.ndarray) -> None:
        if not self.in_mean_space(mu):
            raise DomainError(f"fitted mean outside the {self.kind.value} link's mean space")

    def check_outcome(self, y: np.ndarray) -> None:
        if self.kind == LinkKind.LOG and (np.any(y < 0) or not np.any(y > 0)):
            raise DomainError("log link needs a non-negative outcome with at least one positive value")
        if self.kind == LinkKind.LOGIT and np.any((y < 0) | (y > 1)):
            raise DomainError("logit link needs an outcome in [0, 1]")

    def log_likelihood(self, y: np.ndarray, mu: np.ndarray, w: np.ndarray) -> float:
        if self.kind == LinkKind.LOG:
            return float(np.sum(w * (y * np.log(mu) - mu)))
        if self.kind == LinkKind.LOGIT:
            return float(np.sum(w * (y * np.log(mu) + (1 - y) * np.log1p(-mu))))
        return float(-0.5 * np.sum(w * (y - mu) ** 2))


def _logistic_derivative(eta: np.ndarray) -> np.ndarray:
    mu = expit(eta)
    return mu * (1 - mu)


LINKS = {
    LinkKind.IDENTITY: LinkFamily(
        kind=LinkKind.IDENTITY,
        g=lambda mu: mu,
        g_inverse=lambda eta: eta,
        dmu_deta=np.ones_like,
        variance=np.ones_like,
    ),
    LinkKind.LOG: LinkFamily(
        kind=LinkKind.LOG,
        g=np.log,
        g_inverse=np.exp,
        dmu_deta=np.exp,
        variance=lambda mu: mu,
    ),
    LinkKind.LOGIT: LinkFamily(
        kind=LinkKind.LOGIT,
        g=logit,
        g_inverse=expit,
        dmu_deta=_logistic_derivative,
        variance=lambda mu: mu * (1 - mu),
    ),
}


def get_link(link: Union[LinkFamily, LinkKind, str]) -> LinkFamily:
    if isinstance(link, LinkFamily):
        return link
    return LINKS[LinkKind(link)]


@dataclass(frozen=True)
class SolverOptions:
    tolerance: float = 1e-8
    max_iter: int = 100
    max_halvings: int = 20
    divergence_norm: float = 50.0

    @classmethod
    def from_settings(cls, **overrides) -> "SolverOptions":
        values = {
            "tolerance": setting("GLM_TOLERANCE", cls.tolerance),
            "max_iter": setting("GLM_MAX_ITER", cls.max_iter),
            "max_halvings": setting("GLM_MAX_HALVINGS", cls.max_halvings),
            "divergence_norm": setting("GLM_DIVERGENCE_NORM", cls.divergence_norm),
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass(frozen=True, eq=False)
class GlmFit:
    beta: np.ndarray
    covariance: np.ndarray
    dispersion: float
    iterations: int
    converged: bool
    score_norm: float
    link: LinkKind
    column_names: Tuple[str, ...] = ()
    n_used: int = 0
    score_tolerance: float = 0.0

    @property
    def standard_errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))


def _complete_case_arrays(d: Dataset, wv: WeightVector) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    if wv.n != d.n:
        raise EstimationError(f"weight vector has {wv.n} entries for {d.n} records")
    mask = d.complete_cases
    return d.design()[mask], d.y[mask], wv.w[mask]


def _score(beta, X, y, w, link: LinkFamily) -> np.ndarray:
    eta = X @ beta
    mu = link.g_inverse(eta)
    link.check_mean(mu)
    return X.T @ (w * link.h_weight(eta) * (y - mu))


def _bread(beta, X, w, link: LinkFamily) -> np.ndarray:
    # -dU/dbeta'; the dh/dbeta term vanishes for canonical links
    eta = X @ beta
    factor = w * link.h_weight(eta) * link.dmu_deta(eta)
    return (X * factor[:, None]).T @ X


def _meat(beta, X, y, w, link: LinkFamily) -> np.ndarray:
    eta = X @ beta
    contributions = X * (w * link.h_weight(eta) * (y - link.g_inverse(eta)))[:, None]
    return contributions.T @ contributions


def _sandwich(beta, X, y, w, link: LinkFamily) -> np.ndarray:
    try:
        bread_inv = linalg.inv(_bread(beta, X, w, link))
    except (linalg.LinAlgError, ValueError) as exc:
        raise SingularMatrixError(f"sandwich bread matrix is singular: {exc}") from exc
    covariance = bread_inv @ _meat(beta, X, y, w, link) @ bread_inv.T
    return (covariance + covariance.T) / 2


def _score_tolerance(X, y, w, tolerance: float) -> float:
    scale = float(np.max(np.abs(X).T @ (w * np.abs(y)))) if X.size else 0.0
    return tolerance * max(1.0, scale)


def _weighted_least_squares(X, y, w) -> np.ndarray:
    root = np.sqrt(w)
    try:
        beta, *_ = np.linalg.lstsq(X * root[:, None], y * root, rcond=None)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(f"weighted least squares failed: {exc}") from exc
    return beta


def _starting_beta(X, y, w, link: LinkFamily) -> np.ndarray:
    if link.kind == LinkKind.LOG:
        shift = 0.5 * np.min(y[y > 0])
        return _weighted_least_squares(X, np.log(y + shift), w)
    if link.kind == LinkKind.LOGIT:
        return np.zeros(X.shape[1])
    return _weighted_least_squares(X, y, w)


SATURATED_ETA = 30.0


def _saturated(eta: np.ndarray) -> bool:
    return eta.size > 0 and float(np.max(np.abs(eta))) > SATURATED_ETA


def _irls(X, y, w, link: LinkFamily, opts: SolverOptions, score_tol: float):
    beta = _starting_beta(X, y, w, link)
    eta = X @ beta
    mu = link.g_inverse(eta)
    if not link.in_mean_space(mu):
        raise DomainError("starting values fall outside the mean space")
    loglik = link.log_likelihood(y, mu, w)
    score_norm = float("inf")

    for iteration in range(1, opts.max_iter + 1):
        dmu = link.dmu_deta(eta)
        working_weights = w * dmu ** 2 / link.variance(mu)
        working_response = eta + (y - mu) / dmu
        step = _weighted_least_squares(X, working_response, working_weights) - beta

        for _ in range(opts.max_halvings + 1):
            candidate = beta + step
            mu_candidate = link.g_inverse(X @ candidate)
            if link.in_mean_space(mu_candidate):
                loglik_candidate = link.log_likelihood(y, mu_candidate, w)
                if loglik_candidate >= loglik - 1e-12 * abs(loglik):
                    break
            step = step / 2
        else:
            if link.kind == LinkKind.LOGIT and _saturated(eta):
                raise SeparationError(
                    "logistic likelihood stopped improving with the linear predictor saturated "
                    f"(max |eta| = {np.max(np.abs(eta)):.0f}); the outcome is (quasi-)completely "
                    "separated, often by a covariate on a large scale. Rescale, drop or merge it.",
                    last_iterate=beta,
                )
            raise ConvergenceError(
                f"step-halving failed to improve the likelihood at iteration {iteration}",
                last_iterate=beta,
            )

        beta_change = float(np.max(np.abs(step)))
        beta = candidate
        eta = X @ beta
        mu = mu_candidate
        loglik = loglik_candidate

        if link.kind == LinkKind.LOGIT and np.linalg.norm(beta) > opts.divergence_norm:
            raise SeparationError(
                "logistic coefficients diverge; the outcome is (quasi-)completely separated "
                "by the covariates. Drop or merge the separating covariate.",
                last_iterate=beta,
            )

        score_norm = float(np.max(np.abs(_score(beta, X, y, w, link))))
        logger.debug("IRLS iteration %d: max|dbeta|=%.3e score=%.3e", iteration, beta_change, score_norm)
        if beta_change <= opts.tolerance * (1 + np.max(np.abs(beta))) and score_norm <= score_tol:
            return beta, iteration, score_norm

    if link.kind == LinkKind.LOGIT and (_saturated(eta) or np.any((mu < 1e-10) | (mu > 1 - 1e-10))):
        raise SeparationError(
            "logistic fit did not converge and fitted probabilities saturate at 0 or 1; "
            "check for complete separation",
            last_iterate=beta,
        )
    raise ConvergenceError(
        f"IRLS did not converge in {opts.max_iter} iterations (score norm {score_norm:.3e})",
        last_iterate=beta,
    )


def fit_glm_design(
    X: np.ndarray,
    y: np.ndarray,
    w: np.ndarray,
    link: Union[LinkFamily, LinkKind, str],
    opts: Optional[SolverOptions] = None,
    column_names: Sequence[str] = (),
) -> GlmFit:
    link = get_link(link)
    opts = opts or SolverOptions.from_settings()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    n_rows, n_columns = X.shape

    if n_rows == 0:
        raise NoCompleteCasesError("no complete cases to fit")
    if np.any(w < 0):
        raise EstimationError("weights must be non-negative")
    if n_rows < n_columns or np.linalg.matrix_rank(X * np.sqrt(w)[:, None]) < n_columns:
        raise SingularMatrixError(
            f"design with {n_rows} rows and {n_columns} columns is rank deficient"
        )
    link.check_outcome(y)

    score_tol = _score_tolerance(X, y, w, opts.tolerance)
    if link.kind == LinkKind.IDENTITY:
        beta = _weighted_least_squares(X, y, w)
        iterations = 0
        score_norm = float(np.max(np.abs(_score(beta, X, y, w, link))))
        if score_norm > score_tol:
            # one refinement step for ill-conditioned designs
            beta = beta + linalg.solve(_bread(beta, X, w, link), _score(beta, X, y, w, link))
            iterations = 1
            score_norm = float(np.max(np.abs(_score(beta, X, y, w, link))))
            if score_norm > score_tol:
                raise ConvergenceError(
                    f"weighted least squares left a score norm of {score_norm:.3e}",
                    last_iterate=beta,
                )
    else:
        beta, iterations, score_norm = _irls(X, y, w, link, opts, score_tol)

    covariance = _sandwich(beta, X, y, w, link)
    degrees_of_freedom = n_rows - n_columns
    if degrees_of_freedom > 0:
        dispersion = _dispersion(beta, X, y, w, link, degrees_of_freedom)
    else:
        logger.warning("No residual degrees of freedom; dispersion left undefined")
        dispersion = float("nan")

    return GlmFit(
        beta=beta,
        covariance=covariance,
        dispersion=dispersion,
        iterations=iterations,
        converged=True,
        score_norm=score_norm,
        link=link.kind,
        column_names=tuple(column_names),
        n_used=n_rows,
        score_tolerance=score_tol,
    )


def glm_score(
    beta: np.ndarray, d: Dataset, wv: WeightVector, link: Union[LinkFamily, LinkKind, str]
) -> np.ndarray:
    X, y, w = _complete_case_arrays(d, wv)
    return _score(np.asarray(beta, dtype=float), X, y, w, get_link(link))


def fit_glm(
    d: Dataset,
    wv: WeightVector,
    link: Union[LinkFamily, LinkKind, str],
    opts: Optional[SolverOptions] = None,
) -> GlmFit:
    X, y, w = _complete_case_arrays(d, wv)
    if X.shape[0] == 0:
        raise NoCompleteCasesError("no complete cases (every record is censored)")
    return fit_glm_design(X, y, w, link, opts, column_names=d.design_names)


def sandwich_covariance(
    fit: GlmFit, d: Dataset, wv: WeightVector, link: Union[LinkFamily, LinkKind, str]
) -> np.ndarray:
    if not fit.converged:
        raise ConvergenceError("sandwich covariance needs a converged fit", last_iterate=fit.beta)
    X, y, w = _complete_case_arrays(d, wv)
    return _sandwich(fit.beta, X, y, w, get_link(link))


def _dispersion(beta, X, y, w, link: LinkFamily, degrees_of_freedom: int) -> float:
    if link.kind == LinkKind.LOGIT:
        return 1.0
    mu = link.g_inverse(X @ beta)
    return float(np.sum(w * (y - mu) ** 2 / link.variance(mu)) / degrees_of_freedom)


def estimate_dispersion(
    fit: GlmFit, d: Dataset, wv: WeightVector, link: Union[LinkFamily, LinkKind, str]
) -> float:
    link = get_link(link)
    if link.kind == LinkKind.LOGIT:
        return 1.0
    X, y, w = _complete_case_arrays(d, wv)
    degrees_of_freedom = X.shape[0] - X.shape[1]
    if degrees_of_freedom <= 0:
        raise EstimationError(
            f"{X.shape[0]} complete cases leave no degrees of freedom for {X.shape[1]} parameters"
        )
    return _dispersion(fit.beta, X, y, w, link, degrees_of_freedom)
