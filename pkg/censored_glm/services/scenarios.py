"""
Data generators for the simulation scenarios and censoring-scale calibration.

Weibull(a, b) means shape a and scale b; N(m, s) means mean m and variance s.
Every generator draws its components in a fixed order and always draws every
censoring component, so one seed yields one dataset regardless of options.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional, Tuple, Union

import numpy as np

from .conf import setting
from .data_model import ColumnSchema, Dataset
from .exceptions import CalibrationError, SchemaError

logger = logging.getLogger(__name__)


class ScenarioFamily(str, Enum):
    INDEPENDENT = "independent"
    OUTCOME_DEPENDENT = "outcome_dependent"
    COVARIATE_DEPENDENT = "covariate_dependent"
    COVARIATE_DEPENDENT_INTERACTION = "covariate_dependent_interaction"

    @property
    def mimics_real_data(self) -> bool:
        return self in (
            ScenarioFamily.COVARIATE_DEPENDENT,
            ScenarioFamily.COVARIATE_DEPENDENT_INTERACTION,
        )


class CensorLevel(str, Enum):
    LIGHT = "light"
    HEAVY = "heavy"
    C20 = "c20"
    C40 = "c40"
    C65 = "c65"


REFERENCE_SCALES = {
    CensorLevel.LIGHT: 2.0,
    CensorLevel.HEAVY: 0.35,
    CensorLevel.C20: 2.50,
    CensorLevel.C40: 1.50,
    CensorLevel.C65: 0.70,
}

NOMINAL_FRACTIONS = {
    CensorLevel.LIGHT: 0.20,
    CensorLevel.HEAVY: 0.40,
    CensorLevel.C20: 0.20,
    CensorLevel.C40: 0.40,
    CensorLevel.C65: 0.65,
}

LEVELS_BY_FAMILY = {
    ScenarioFamily.INDEPENDENT: (CensorLevel.LIGHT, CensorLevel.HEAVY),
    ScenarioFamily.OUTCOME_DEPENDENT: (CensorLevel.LIGHT, CensorLevel.HEAVY),
    ScenarioFamily.COVARIATE_DEPENDENT: (CensorLevel.C20, CensorLevel.C40, CensorLevel.C65),
    ScenarioFamily.COVARIATE_DEPENDENT_INTERACTION: (CensorLevel.C20, CensorLevel.C40, CensorLevel.C65),
}

# (intercept, z1, z2, x)
BETA_A = (0.005, 0.01, -0.01, -0.05)
BETA_B = (4.90, 0.0037, 0.10, 0.045)
BETA_B_INTERACTION = 0.05

SCENARIO_SCHEMA = ColumnSchema(v="x", delta="delta", y="y", z=("z1", "z2"))
SCENARIO_SCHEMA_INTERACTION = ColumnSchema(
    v="x", delta="delta", y="y", z=("z1", "z2"), interactions=("z1",)
)


@dataclass(frozen=True, eq=False)
class ScenarioTruth:
    beta: np.ndarray
    x: np.ndarray
    parameter_names: Tuple[str, ...]
    target_indices: Tuple[int, ...]
    censor_scale: float

    @property
    def targets(self) -> Tuple[Tuple[str, float], ...]:
        return tuple((self.parameter_names[j], float(self.beta[j])) for j in self.target_indices)


class LatentDraws(NamedTuple):
    z: np.ndarray
    x: np.ndarray
    eps: np.ndarray
    c_unit: np.ndarray


def check_level(family: ScenarioFamily, censor: CensorLevel) -> None:
    if CensorLevel(censor) not in LEVELS_BY_FAMILY[ScenarioFamily(family)]:
        allowed = ", ".join(level.value for level in LEVELS_BY_FAMILY[family])
        raise SchemaError(
            "censoring level does not match the scenario family",
            {"censor_level": [f"{family.value} accepts {allowed}"]},
        )


def _draw_scenario_a(n: int, family: ScenarioFamily, rng: np.random.Generator) -> LatentDraws:
    z1 = rng.normal(18.5, np.sqrt(3.0), n)
    z2 = rng.binomial(1, 0.5, n).astype(float)
    x = 0.25 * rng.weibull(0.2, n)
    eps = rng.normal(0.0, np.sqrt(0.1), n)
    unit_exponential = rng.weibull(1.0, n)
    unit_shape_15 = rng.weibull(1.5, n)
    if family == ScenarioFamily.OUTCOME_DEPENDENT:
        c_unit = np.where(eps > 0, unit_exponential, unit_shape_15)
    else:
        c_unit = unit_exponential
    return LatentDraws(np.column_stack([z1, z2]), x, eps, c_unit)


def _draw_scenario_b(n: int, rng: np.random.Generator) -> LatentDraws:
    z1 = rng.binomial(1, 0.53, n).astype(float)
    z2 = rng.binomial(1, 0.52, n).astype(float)
    x = rng.uniform(0.3, 1.30, n)
    eps = rng.normal(0.0, np.sqrt(0.01), n)
    unit_shape_075 = rng.weibull(0.75, n)
    unit_shape_125 = rng.weibull(1.25, n)
    c_unit = np.where(z1 == 0, unit_shape_075, unit_shape_125)
    return LatentDraws(np.column_stack([z1, z2]), x, eps, c_unit)


def latent_draws(
    family: ScenarioFamily, n: int, rng: np.random.Generator
) -> LatentDraws:
    family = ScenarioFamily(family)
    if family.mimics_real_data:
        return _draw_scenario_b(n, rng)
    return _draw_scenario_a(n, family, rng)


def _observe(draws: LatentDraws, scale: float, no_censoring: bool):
    c = np.full(draws.x.shape, np.inf) if no_censoring else scale * draws.c_unit
    # ties go to delta = 1
    delta = (draws.x <= c).astype(int)
    return np.minimum(draws.x, c), delta


def generate_scenario_A(
    n: int,
    censor: Union[CensorLevel, str],
    family: Union[ScenarioFamily, str],
    rng: np.random.Generator,
    censor_scale: Optional[float] = None,
    no_censoring: bool = False,
    noise_free: bool = False,
) -> Tuple[Dataset, ScenarioTruth]:
    family, censor = ScenarioFamily(family), CensorLevel(censor)
    if family.mimics_real_data:
        raise SchemaError("scenario A covers the independent and outcome-dependent families")
    check_level(family, censor)
    scale = censor_scale or REFERENCE_SCALES[censor]

    draws = _draw_scenario_a(n, family, rng)
    v, delta = _observe(draws, scale, no_censoring)
    b0, b1, b2, b3 = BETA_A
    noise = np.zeros(n) if noise_free else draws.eps
    y = b0 + b1 * draws.z[:, 0] + b2 * draws.z[:, 1] + b3 * draws.x + noise

    dataset = Dataset.from_arrays(v=v, delta=delta, y=y, z=draws.z, schema=SCENARIO_SCHEMA)
    truth = ScenarioTruth(
        beta=np.array([b0, b3, b1, b2]),
        x=draws.x,
        parameter_names=tuple(dataset.design_names),
        target_indices=(1,),
        censor_scale=scale,
    )
    return dataset, truth


def generate_scenario_B(
    n: int,
    censor: Union[CensorLevel, str],
    interaction: bool,
    rng: np.random.Generator,
    censor_scale: Optional[float] = None,
    no_censoring: bool = False,
    noise_free: bool = False,
) -> Tuple[Dataset, ScenarioTruth]:
    censor = CensorLevel(censor)
    check_level(ScenarioFamily.COVARIATE_DEPENDENT, censor)
    scale = censor_scale or REFERENCE_SCALES[censor]

    draws = _draw_scenario_b(n, rng)
    v, delta = _observe(draws, scale, no_censoring)
    b0, b1, b2, b3 = BETA_B
    noise = np.zeros(n) if noise_free else draws.eps
    y = b0 + b1 * draws.z[:, 0] + b2 * draws.z[:, 1] + b3 * draws.x + noise

    beta = [b0, b3, b1, b2]
    if interaction:
        y = y + BETA_B_INTERACTION * draws.x * draws.z[:, 0]
        beta.append(BETA_B_INTERACTION)

    dataset = Dataset.from_arrays(
        v=v,
        delta=delta,
        y=y,
        z=draws.z,
        schema=SCENARIO_SCHEMA_INTERACTION if interaction else SCENARIO_SCHEMA,
        interactions=(0,) if interaction else (),
    )
    truth = ScenarioTruth(
        beta=np.array(beta),
        x=draws.x,
        parameter_names=tuple(dataset.design_names),
        target_indices=(1, 4) if interaction else (1,),
        censor_scale=scale,
    )
    return dataset, truth


class CalibrationResult(NamedTuple):
    scale: float
    achieved_fraction: float
    iterations: int


def calibrate_scale(
    x: np.ndarray,
    c_unit: np.ndarray,
    target: float,
    tol: float = 0.01,
    start: float = 1.0,
    max_iter: int = 200,
) -> CalibrationResult:
    """Bisect (on the log scale) the censoring scale s so that P(s * C_unit < X) hits target."""
    if not 0.05 < target < 0.95:
        raise CalibrationError(f"target censoring fraction {target} outside (0.05, 0.95)")

    def fraction(scale: float) -> float:
        return float(np.mean(scale * c_unit < x))

    achieved = fraction(start)
    if abs(achieved - target) <= tol:
        return CalibrationResult(start, achieved, 0)

    low, high = start / 1e3, start * 1e3
    if fraction(low) < target or fraction(high) > target:
        raise CalibrationError(
            f"scales in [{low:g}, {high:g}] do not bracket a censoring fraction of {target}"
        )

    for iteration in range(1, max_iter + 1):
        middle = np.sqrt(low * high)
        achieved = fraction(middle)
        if abs(achieved - target) <= tol:
            logger.info("Calibrated censoring scale %.6g (fraction %.4f)", middle, achieved)
            return CalibrationResult(float(middle), achieved, iteration)
        # larger scale means later censoring and a smaller censored fraction
        if achieved > target:
            low = middle
        else:
            high = middle
    raise CalibrationError(
        f"calibration did not reach {target} +/- {tol} in {max_iter} bisection steps"
    )


def calibrate_censoring(
    family: Union[ScenarioFamily, str],
    censor: Union[CensorLevel, str],
    target: float,
    tol: float = 0.01,
    rng: Optional[np.random.Generator] = None,
    draws: Optional[int] = None,
) -> CalibrationResult:
    family, censor = ScenarioFamily(family), CensorLevel(censor)
    check_level(family, censor)
    rng = rng if rng is not None else np.random.default_rng(0)
    latent = latent_draws(family, draws or setting("CALIBRATION_DRAWS", 100_000), rng)
    return calibrate_scale(latent.x, latent.c_unit, target, tol, start=REFERENCE_SCALES[censor])
