"""
Plain renderings of library results: coefficient tables, per-row weights and
Monte Carlo metrics, as aligned text or CSV.
"""
import csv
import io
import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm

from .conf import setting
from .data_model import Dataset, WeightVector
from .glm import GlmFit
from .monte_carlo import MetricsRow
from .scenarios import ScenarioFamily


@dataclass(frozen=True)
class CoefficientRow:
    name: str
    estimate: float
    se: float
    t_value: Optional[float]
    p_value: Optional[float]


def coefficient_rows(fit: GlmFit) -> List[CoefficientRow]:
    """Estimate, sandwich SE, t = estimate / SE and a two-sided normal-reference p-value."""
    names = fit.column_names or tuple(f"beta{j}" for j in range(fit.beta.size))
    rows = []
    for name, estimate, se in zip(names, fit.beta, fit.standard_errors):
        if se > 0:
            t_value = float(estimate / se)
            p_value = float(2 * norm.sf(abs(t_value)))
        else:
            t_value = p_value = None
        rows.append(CoefficientRow(name, float(estimate), float(se), t_value, p_value))
    return rows


def _precision(precision: Optional[int]) -> int:
    return setting("OUTPUT_PRECISION", 4) if precision is None else precision


def format_number(value: Optional[float], precision: Optional[int] = None) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "NA"
    return f"{value:.{_precision(precision)}f}"


def format_p_value(p_value: Optional[float], precision: Optional[int] = None) -> str:
    precision = _precision(precision)
    if p_value is None:
        return "NA"
    threshold = 10.0**-precision
    if p_value < threshold:
        return f"< {threshold:.{precision}f}"
    return f"{p_value:.{precision}f}"


def _align(header: Sequence[str], body: Sequence[Sequence[str]]) -> str:
    widths = [max(len(row[k]) for row in [header, *body]) for k in range(len(header))]
    lines = []
    for row in [header, *body]:
        cells = [row[0].ljust(widths[0])] + [cell.rjust(w) for cell, w in zip(row[1:], widths[1:])]
        lines.append("  ".join(cells).rstrip())
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def format_coefficient_table(rows: Iterable[CoefficientRow], precision: Optional[int] = None) -> str:
    body = [
        [
            row.name,
            format_number(row.estimate, precision),
            format_number(row.se, precision),
            format_number(row.t_value, precision),
            format_p_value(row.p_value, precision),
        ]
        for row in rows
    ]
    return _align(["", "Estimate", "SE", "t-value", "p-value"], body)


def _write_csv(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(["" if value is None else value for value in row])
    return buffer.getvalue()


def coefficients_to_csv(rows: Iterable[CoefficientRow]) -> str:
    return _write_csv(
        ["term", "estimate", "se", "t_value", "p_value"],
        ([r.name, repr(r.estimate), repr(r.se), r.t_value, r.p_value] for r in rows),
    )


WEIGHT_COLUMNS = ("row_id", "v", "delta", "pi", "w", "stabilized_w", "floored")


def weight_rows(d: Dataset, weights: WeightVector, stabilized: WeightVector) -> List[Tuple]:
    return [
        (
            i + 1,
            float(d.v[i]),
            int(d.delta[i]),
            float(weights.pi[i]),
            float(weights.w[i]),
            float(stabilized.w[i]),
            int(weights.floored[i]),
        )
        for i in range(d.n)
    ]


def weights_to_csv(rows: Iterable[Tuple]) -> str:
    return _write_csv(
        WEIGHT_COLUMNS,
        ([row_id, repr(v), delta, repr(pi), repr(w), repr(sw), flag] for row_id, v, delta, pi, w, sw, flag in rows),
    )


# (exponent for bias, SE and SD; exponent for MSE), as reference in the result tables
METRIC_SCALES = {
    ScenarioFamily.INDEPENDENT: (-1, -4),
    ScenarioFamily.OUTCOME_DEPENDENT: (-1, -4),
    ScenarioFamily.COVARIATE_DEPENDENT: (-2, -6),
    ScenarioFamily.COVARIATE_DEPENDENT_INTERACTION: (-2, -6),
}

METRIC_COLUMNS = (
    "method",
    "parameter",
    "truth",
    "bias",
    "pct_bias",
    "se_model",
    "sd_empirical",
    "mse",
    "achieved_censoring",
    "censor_scale",
    "n_failed_reps",
    "n_reps",
    "valid",
    "sd_defined",
)


def metrics_to_dicts(rows: Iterable[MetricsRow]) -> List[Dict[str, Any]]:
    dicts = []
    for row in rows:
        values = asdict(row)
        values["method"] = row.method.value
        dicts.append(values)
    return dicts


def metrics_to_csv(rows: Iterable[MetricsRow]) -> str:
    return _write_csv(
        METRIC_COLUMNS,
        ([values[column] for column in METRIC_COLUMNS] for values in metrics_to_dicts(rows)),
    )


def format_metrics_table(
    rows: Sequence[MetricsRow], family: ScenarioFamily, precision: Optional[int] = None
) -> str:
    """Methods as rows; bias, SE and SD scaled together, MSE on its own scale."""
    precision = _precision(precision)
    moment_exp, mse_exp = METRIC_SCALES[ScenarioFamily(family)]
    moment_scale, mse_scale = 10.0**-moment_exp, 10.0**-mse_exp
    show_parameter = len({row.parameter for row in rows}) > 1

    header = ["Method"]
    if show_parameter:
        header.append("Parameter")
    header += ["Bias", "Bias(%)", "SE", "SD", "MSE", "Censored(%)", "Failed"]

    body = []
    for row in rows:
        cells = [row.method.label]
        if show_parameter:
            cells.append(row.parameter)
        sd = row.sd_empirical * moment_scale if row.sd_defined else float("nan")
        cells += [
            format_number(row.bias * moment_scale, precision),
            format_number(row.pct_bias, 2),
            format_number(row.se_model * moment_scale, precision),
            format_number(sd, precision),
            format_number(row.mse * mse_scale, precision),
            format_number(100 * row.achieved_censoring, 1),
            f"{row.n_failed_reps}/{row.n_reps}",
        ]
        body.append(cells)

    scale_note = f"Bias, SE, SD x 10^{moment_exp}; MSE x 10^{mse_exp}\n"
    return scale_note + _align(header, body)


def finite_or_none(value: Any) -> Any:
    if isinstance(value, (float, np.floating)) and not np.isfinite(value):
        return None
    return value
