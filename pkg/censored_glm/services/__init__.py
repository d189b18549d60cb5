from .data_model import ColumnSchema, Dataset, ObservedRecord, WeightScheme, WeightVector, load_csv, validate_dataset
from .fitting import CensoredGlmService, FitReport
from .glm import GlmFit, LinkKind, SolverOptions, fit_glm
from .monte_carlo import Method, MetricsRow, ScenarioConfig, run_monte_carlo
from .survival import CoxOptions, Side, km_fit, cox_fit
from .weights import WeightSpec, build_weights
