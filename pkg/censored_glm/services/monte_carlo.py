"""
Monte Carlo driver: repeat (generate, weight, fit) over replications and
aggregate bias, model SE, empirical SD and MSE per method and target parameter.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .conf import setting
from .data_model import WeightScheme
from .exceptions import CensoredGlmError, SchemaError
from .glm import LinkKind, SolverOptions, fit_glm
from .scenarios import (
    REFERENCE_SCALES,
    CensorLevel,
    ScenarioFamily,
    calibrate_censoring,
    check_level,
    generate_scenario_A,
    generate_scenario_B,
)
from .survival import CoxOptions
from .weights import WeightSpec, build_weights, weights_cc

logger = logging.getLogger(__name__)


class Method(str, Enum):
    FULL = "full"
    CC = "cc"
    IPCW_LOGISTIC = "ipcw"
    IPCW_KM = "ipcw-km"
    IPCW_COX = "ipcw-cox"

    @property
    def label(self) -> str:
        return METHOD_LABELS[self]


METHOD_LABELS = {
    Method.FULL: "Full",
    Method.CC: "CC",
    Method.IPCW_LOGISTIC: "IPCW",
    Method.IPCW_KM: "IPCW-KM",
    Method.IPCW_COX: "IPCW-Cox",
}

SCHEME_BY_METHOD = {
    Method.CC: WeightScheme.CC,
    Method.IPCW_LOGISTIC: WeightScheme.IPCW_LOGISTIC,
    Method.IPCW_KM: WeightScheme.IPCW_KM,
    Method.IPCW_COX: WeightScheme.IPCW_COX,
}


@dataclass(frozen=True)
class ScenarioConfig:
    family: ScenarioFamily
    n: int
    censor_level: CensorLevel
    n_reps: int = 1000
    seed: int = 0
    methods: Tuple[Method, ...] = tuple(Method)
    stabilize: bool = False
    target_fraction: Optional[float] = None
    censor_scale: Optional[float] = None
    noise_free: bool = False
    no_censoring: bool = False

    def __post_init__(self):
        errors: Dict[str, List[str]] = {}
        try:
            object.__setattr__(self, "family", ScenarioFamily(self.family))
            object.__setattr__(self, "censor_level", CensorLevel(self.censor_level))
            object.__setattr__(self, "methods", tuple(Method(m) for m in self.methods))
        except ValueError as exc:
            raise SchemaError("invalid scenario config", {"config": [str(exc)]}) from exc

        if self.n < 50:
            errors["n"] = ["must be at least 50"]
        if self.n_reps < 1:
            errors["n_reps"] = ["must be at least 1"]
        if not 0 <= self.seed < 2**64:
            errors["seed"] = ["must be a non-negative 64-bit integer"]
        if not self.methods:
            errors["methods"] = ["at least one method is required"]
        elif len(set(self.methods)) != len(self.methods):
            errors["methods"] = ["methods must not repeat"]
        if self.target_fraction is not None and not 0 < self.target_fraction < 1:
            errors["target_fraction"] = ["must lie in (0, 1)"]
        if self.censor_scale is not None and not self.censor_scale > 0:
            errors["censor_scale"] = ["must be positive"]
        if self.target_fraction is not None and self.censor_scale is not None:
            errors["censor_scale"] = ["give either censor_scale or target_fraction, not both"]
        if errors:
            raise SchemaError("invalid scenario config", errors)
        check_level(self.family, self.censor_level)

    @property
    def interaction(self) -> bool:
        return self.family == ScenarioFamily.COVARIATE_DEPENDENT_INTERACTION


@dataclass(frozen=True)
class MetricsRow:
    method: Method
    parameter: str
    truth: float
    bias: float
    pct_bias: float
    se_model: float
    sd_empirical: float
    mse: float
    achieved_censoring: float
    n_failed_reps: int
    n_reps: int
    censor_scale: float = float("nan")
    valid: bool = True
    sd_defined: bool = True


def compute_metrics(estimates: Sequence[float], ses: Sequence[float], truth: float) -> Dict[str, float]:
    estimates = np.asarray(estimates, dtype=float)
    ses = np.asarray(ses, dtype=float)
    if estimates.size == 0 or estimates.shape != ses.shape:
        raise ValueError("estimates and standard errors must be non-empty and of equal length")

    bias = float(np.mean(estimates) - truth)
    se_model = float(np.mean(ses))
    sd_defined = estimates.size > 1
    return {
        "bias": bias,
        "pct_bias": 100.0 * abs(bias / truth) if truth != 0 else float("nan"),
        "se_model": se_model,
        "sd_empirical": float(np.std(estimates, ddof=1)) if sd_defined else 0.0,
        "mse": bias**2 + se_model**2,
        "sd_defined": sd_defined,
    }


def replication_rng(seed: int, rep: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0, rep)))


def calibration_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))


@dataclass(frozen=True)
class _ReplicationTask:
    cfg: ScenarioConfig
    rep: int
    censor_scale: float
    solver: SolverOptions
    cox: CoxOptions
    weight_spec: WeightSpec


@dataclass
class _ReplicationResult:
    rep: int
    censoring_fraction: float
    targets: Tuple[Tuple[str, float], ...]
    estimates: Dict[Method, Optional[Tuple[np.ndarray, np.ndarray]]] = field(default_factory=dict)


def generate(cfg: ScenarioConfig, rng: np.random.Generator, censor_scale: Optional[float] = None):
    options = {
        "censor_scale": censor_scale,
        "no_censoring": cfg.no_censoring,
        "noise_free": cfg.noise_free,
    }
    if cfg.family.mimics_real_data:
        return generate_scenario_B(cfg.n, cfg.censor_level, cfg.interaction, rng, **options)
    return generate_scenario_A(cfg.n, cfg.censor_level, cfg.family, rng, **options)


def _run_replication(task: _ReplicationTask) -> _ReplicationResult:
    cfg = task.cfg
    dataset, truth = generate(cfg, replication_rng(cfg.seed, task.rep), task.censor_scale)
    index = list(truth.target_indices)
    result = _ReplicationResult(
        rep=task.rep,
        censoring_fraction=dataset.censoring_fraction,
        targets=truth.targets,
    )

    for method in cfg.methods:
        try:
            if method == Method.FULL:
                observed = dataset.with_latent_x(truth.x)
                wv = weights_cc(observed)
            else:
                observed = dataset
                spec = replace(task.weight_spec, scheme=SCHEME_BY_METHOD[method])
                wv = build_weights(dataset, spec, task.solver, task.cox)
            fit = fit_glm(observed, wv, LinkKind.IDENTITY, task.solver)
        except (CensoredGlmError, np.linalg.LinAlgError) as exc:
            logger.debug("Replication %d: %s failed (%s)", task.rep, method.value, exc)
            result.estimates[method] = None
            continue
        result.estimates[method] = (fit.beta[index], fit.standard_errors[index])
    return result


def resolve_censor_scale(cfg: ScenarioConfig) -> float:
    if cfg.censor_scale is not None:
        return cfg.censor_scale
    if cfg.target_fraction is not None:
        calibration = calibrate_censoring(
            cfg.family, cfg.censor_level, cfg.target_fraction, rng=calibration_rng(cfg.seed)
        )
        return calibration.scale
    return REFERENCE_SCALES[cfg.censor_level]


def _aggregate(cfg: ScenarioConfig, results: List[_ReplicationResult], scale: float) -> List[MetricsRow]:
    achieved = float(np.mean([r.censoring_fraction for r in results]))
    targets = results[0].targets
    rows = []
    for method in cfg.methods:
        succeeded = [r.estimates[method] for r in results if r.estimates[method] is not None]
        n_failed = len(results) - len(succeeded)
        if n_failed:
            logger.warning(
                "%s failed in %d of %d replications", method.label, n_failed, len(results)
            )
        for k, (parameter, truth) in enumerate(targets):
            common = {
                "method": method,
                "parameter": parameter,
                "truth": truth,
                "achieved_censoring": achieved,
                "n_failed_reps": n_failed,
                "n_reps": len(results),
                "censor_scale": scale,
            }
            if not succeeded:
                nan = float("nan")
                rows.append(
                    MetricsRow(
                        bias=nan,
                        pct_bias=nan,
                        se_model=nan,
                        sd_empirical=nan,
                        mse=nan,
                        valid=False,
                        sd_defined=False,
                        **common,
                    )
                )
                continue
            metrics = compute_metrics(
                [estimate[k] for estimate, _ in succeeded],
                [se[k] for _, se in succeeded],
                truth,
            )
            rows.append(MetricsRow(**metrics, **common))
    return rows


def run_monte_carlo(cfg: ScenarioConfig, workers: Optional[int] = None) -> List[MetricsRow]:
    """
    Run cfg.n_reps replications and aggregate one MetricsRow per method and
    target parameter. Replication r always draws from the substream keyed by
    (seed, r), so the result does not depend on the number of workers.
    """
    workers = workers or setting("SIM_WORKERS", 1)
    scale = resolve_censor_scale(cfg)
    # options are resolved here so worker processes never consult settings
    solver = SolverOptions.from_settings()
    cox = CoxOptions.from_settings()
    weight_spec = WeightSpec.from_settings(stabilize=cfg.stabilize)
    tasks = [
        _ReplicationTask(cfg, rep, scale, solver, cox, weight_spec) for rep in range(cfg.n_reps)
    ]

    logger.info(
        "Running %d replications of %s/%s (n=%d, scale=%.4g) on %d worker(s)",
        cfg.n_reps,
        cfg.family.value,
        cfg.censor_level.value,
        cfg.n,
        scale,
        workers,
    )
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunksize = max(1, cfg.n_reps // (4 * workers))
            results = list(pool.map(_run_replication, tasks, chunksize=chunksize))
    else:
        results = [_run_replication(task) for task in tasks]

    return _aggregate(cfg, results, scale)

