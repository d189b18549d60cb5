"""
Selection probabilities and inverse-probability-of-censoring weights.

pi_i estimates P(delta = 1 | Y, H) and complete cases get w_i = 1 / pi_i
(censored records always get 0). Four schemes are available: complete case
(w = delta), logistic regression of delta on (1, Y, H), the reverse Kaplan-Meier
curve of the censoring time, and a Cox model for the censoring time with a
Breslow baseline.
"""
import logging
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import expit

from .conf import setting
from .data_model import Dataset, WeightScheme, WeightVector
from .exceptions import EstimationError, NoCompleteCasesError, SchemaError
from .glm import LinkKind, SolverOptions, fit_glm_design
from .survival import CoxOptions, Side, SurvivalForm, cox_fit, cox_survival_curve, km_fit

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WeightSpec:
    scheme: WeightScheme = WeightScheme.CC
    include_outcome: bool = True
    stabilize: bool = False
    floor: float = 1e-6
    truncate_percentile: Optional[float] = None
    side: Side = Side.LEFT_LIMIT
    survival_form: SurvivalForm = SurvivalForm.PRODUCT

    def __post_init__(self):
        object.__setattr__(self, "scheme", WeightScheme(self.scheme))
        object.__setattr__(self, "side", Side(self.side))
        object.__setattr__(self, "survival_form", SurvivalForm(self.survival_form))
        errors = {}
        if not self.floor > 0:
            errors["floor"] = ["must be positive"]
        if self.truncate_percentile is not None and not 0.5 < self.truncate_percentile <= 1:
            errors["truncate_percentile"] = ["must lie in (0.5, 1]"]
        if errors:
            raise SchemaError("invalid weight specification", errors)

    @classmethod
    def from_settings(cls, scheme: Union[WeightScheme, str] = WeightScheme.CC, **overrides) -> "WeightSpec":
        values = {
            "floor": setting("WEIGHT_FLOOR", cls.floor),
            "side": setting("WEIGHT_SIDEDNESS", cls.side.value),
            "survival_form": setting("COX_SURVIVAL_FORM", cls.survival_form.value),
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(scheme=scheme, **values)


def _require_complete_cases(d: Dataset) -> None:
    if not d.complete_cases.any():
        raise NoCompleteCasesError("every record is censored; no complete cases to weight")


def _from_probabilities(
    d: Dataset,
    pi: np.ndarray,
    spec: WeightSpec,
    selection_model=None,
    degenerate: Optional[np.ndarray] = None,
) -> WeightVector:
    complete = d.complete_cases
    floored = pi < spec.floor
    if degenerate is not None:
        # already clamped to the floor by the survival product
        floored = floored | degenerate
    floored = floored & complete
    if floored.any():
        logger.warning(
            "%d selection probabilities below %g were floored (%s)",
            int(floored.sum()),
            spec.floor,
            spec.scheme.value,
        )
    pi = np.maximum(pi, spec.floor)
    w = np.zeros(d.n)
    w[complete] = 1.0 / pi[complete]
    return WeightVector(
        pi=pi,
        w=w,
        scheme=spec.scheme,
        floored=floored,
        selection_model=selection_model,
    )


def _finish(wv: WeightVector, d: Dataset, spec: WeightSpec) -> WeightVector:
    if spec.stabilize:
        wv = stabilize(wv, d, side=spec.side, floor=spec.floor)
    if spec.truncate_percentile is not None:
        wv = truncate_weights(wv, spec.truncate_percentile)
    return wv


def weights_cc(d: Dataset) -> WeightVector:
    _require_complete_cases(d)
    return WeightVector.unit(d.delta, WeightScheme.CC)


def weights_ipcw_logistic(
    d: Dataset, spec: Optional[WeightSpec] = None, opts: Optional[SolverOptions] = None
) -> WeightVector:
    spec = replace(spec or WeightSpec.from_settings(), scheme=WeightScheme.IPCW_LOGISTIC)
    _require_complete_cases(d)
    if d.n_censored == 0:
        # intercept would diverge; every subject is certainly observed
        return _finish(WeightVector.unit(d.delta, spec.scheme), d, spec)

    covariates = d.selection_covariates(spec.include_outcome)
    X = np.column_stack([np.ones(d.n), covariates])
    fit = fit_glm_design(
        X,
        d.delta.astype(float),
        np.ones(d.n),
        LinkKind.LOGIT,
        opts,
        column_names=["(Intercept)", *d.selection_names(spec.include_outcome)],
    )
    pi = expit(X @ fit.beta)
    return _finish(_from_probabilities(d, pi, spec, selection_model=fit), d, spec)


def weights_ipcw_km(d: Dataset, spec: Optional[WeightSpec] = None) -> WeightVector:
    spec = replace(spec or WeightSpec.from_settings(), scheme=WeightScheme.IPCW_KM)
    _require_complete_cases(d)
    if d.n_censored == 0:
        return _finish(WeightVector.unit(d.delta, spec.scheme), d, spec)

    curve = km_fit(d.v, d.delta_star)
    pi = np.asarray(curve.evaluate(d.v, spec.side), dtype=float)
    return _finish(_from_probabilities(d, pi, spec, selection_model=curve), d, spec)


def weights_ipcw_cox(
    d: Dataset,
    spec: Optional[WeightSpec] = None,
    opts: Optional[CoxOptions] = None,
    fixed_theta: Optional[Sequence[float]] = None,
) -> WeightVector:
    spec = replace(spec or WeightSpec.from_settings(), scheme=WeightScheme.IPCW_COX)
    _require_complete_cases(d)
    if d.n_censored == 0:
        return _finish(WeightVector.unit(d.delta, spec.scheme), d, spec)

    covariates = d.selection_covariates(spec.include_outcome)
    fit = cox_fit(d.v, d.delta_star, covariates, opts, fixed_theta=fixed_theta)
    pi, degenerate = cox_survival_curve(fit, covariates, d.v, spec.side, spec.survival_form, spec.floor)
    wv = _from_probabilities(d, pi, spec, selection_model=fit, degenerate=degenerate)
    return _finish(wv, d, spec)


def stabilize(
    wv: WeightVector,
    d: Dataset,
    side: Union[Side, str] = Side.LEFT_LIMIT,
    floor: float = 1e-6,
) -> WeightVector:
    """Multiply the weights by the marginal probability of remaining uncensored."""
    if wv.stabilized:
        raise EstimationError("weights are already stabilized")
    if wv.scheme == WeightScheme.CC:
        return replace(wv, stabilized=True, stabilizer=np.ones(d.n))

    if wv.scheme == WeightScheme.IPCW_LOGISTIC:
        factor = np.full(d.n, d.delta.sum() / d.n)
    elif d.n_censored == 0:
        factor = np.ones(d.n)
    else:
        marginal = km_fit(d.v, d.delta_star)
        factor = np.maximum(np.asarray(marginal.evaluate(d.v, side), dtype=float), floor)

    complete = wv.w > 0
    w = np.zeros(d.n)
    # equal to 1 exactly when pi is constant and matches the factor
    w[complete] = factor[complete] / wv.pi[complete]
    return replace(wv, w=w, stabilized=True, stabilizer=factor)


def truncate_weights(wv: WeightVector, percentile: float) -> WeightVector:
    complete = wv.w > 0
    upper = np.quantile(wv.w[complete], percentile)
    lower = np.quantile(wv.w[complete], 1 - percentile)
    w = np.where(complete, np.clip(wv.w, lower, upper), 0.0)
    n_truncated = int(np.count_nonzero(w != wv.w))
    if n_truncated:
        logger.info("Truncated %d weights to [%g, %g]", n_truncated, lower, upper)
    return replace(wv, w=w, n_truncated=n_truncated)


def build_weights(
    d: Dataset,
    spec: WeightSpec,
    solver: Optional[SolverOptions] = None,
    cox: Optional[CoxOptions] = None,
) -> WeightVector:
    if spec.scheme == WeightScheme.CC:
        return _finish(weights_cc(d), d, spec)
    if spec.scheme == WeightScheme.IPCW_LOGISTIC:
        return weights_ipcw_logistic(d, spec, solver)
    if spec.scheme == WeightScheme.IPCW_KM:
        return weights_ipcw_km(d, spec)
    return weights_ipcw_cox(d, spec, cox)
