import logging
from dataclasses import dataclass, replace
from typing import List, Optional, Union

from .data_model import Dataset, WeightVector, validate_dataset
from .exceptions import NoCompleteCasesError
from .glm import GlmFit, LinkKind, SolverOptions, fit_glm
from .reporting import CoefficientRow, coefficient_rows, weight_rows
from .survival import CoxOptions
from .weights import WeightSpec, build_weights, stabilize, truncate_weights

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class FitReport:
    method: str
    link: str
    stabilized: bool
    n: int
    n_complete: int
    n_censored: int
    n_floored: int
    n_truncated: int
    dispersion: float
    iterations: int
    converged: bool
    coefficients: List[CoefficientRow]
    fit: GlmFit
    weights: WeightVector


class CensoredGlmService:
    """Weights a dataset under one scheme and fits the outcome GLM on it."""

    def __init__(self, solver: Optional[SolverOptions] = None, cox: Optional[CoxOptions] = None):
        self.solver = solver or SolverOptions.from_settings()
        self.cox = cox or CoxOptions.from_settings()

    def check(self, dataset: Dataset) -> None:
        report = validate_dataset(dataset)
        for flag in report.flags:
            logger.warning("Dataset check: %s", flag)
        if report.n_complete == 0:
            raise NoCompleteCasesError("every record is censored; no complete cases to fit")

    def weights(self, dataset: Dataset, spec: WeightSpec) -> WeightVector:
        self.check(dataset)
        return build_weights(dataset, spec, self.solver, self.cox)

    def fit(self, dataset: Dataset, spec: WeightSpec, link: Union[LinkKind, str]) -> FitReport:
        link = LinkKind(link)
        wv = self.weights(dataset, spec)
        fit = fit_glm(dataset, wv, link, self.solver)
        logger.info(
            "Fitted %s/%s on %d complete cases in %d iterations",
            spec.scheme.value,
            link.value,
            fit.n_used,
            fit.iterations,
        )
        return FitReport(
            method=spec.scheme.value,
            link=link.value,
            stabilized=wv.stabilized,
            n=dataset.n,
            n_complete=int(dataset.complete_cases.sum()),
            n_censored=dataset.n_censored,
            n_floored=wv.n_floored,
            n_truncated=wv.n_truncated,
            dispersion=fit.dispersion,
            iterations=fit.iterations,
            converged=fit.converged,
            coefficients=coefficient_rows(fit),
            fit=fit,
            weights=wv,
        )

    def weight_table(self, dataset: Dataset, spec: WeightSpec) -> List[tuple]:
        """Per-row (row_id, v, delta, pi, w, stabilized_w, floored); truncation applies to both columns."""
        self.check(dataset)
        base = build_weights(
            dataset, replace(spec, stabilize=False, truncate_percentile=None), self.solver, self.cox
        )
        stabilized = stabilize(base, dataset, side=spec.side, floor=spec.floor)
        if spec.truncate_percentile is not None:
            base = truncate_weights(base, spec.truncate_percentile)
            stabilized = truncate_weights(stabilized, spec.truncate_percentile)
        return weight_rows(dataset, base, stabilized)
