"""Estimators of higher moments of errors and random effects in linear mixed models."""

__version__ = "0.1.0"

from .asymptotics import (  # noqa: E402
    FirstStepVariance,
    MomentSpec,
    VarianceReport,
    mu_firststep,
    mu_fourth,
    mu_second,
    mu_third,
    standard_errors,
    variance_report,
)
from .dataset import Group, GroupedDataset, emit_csv, load_csv, read_csv, validate_for_order, write_csv  # noqa: E402
from .errors import (  # noqa: E402
    EmptyData,
    GroupTooSmall,
    HarnessError,
    LMMError,
    MissingMoment,
    MomentUndefined,
    ParseError,
    SingularDesign,
    UsageError,
)
from .gls import DesignDiagnostics, FixedEffectsFit, design_diagnostics, gls_fit  # noqa: E402
from .mc import McReport, compare_variants, run_mc  # noqa: E402
from .moments import MomentEstimates, estimate_moments, power_sums  # noqa: E402
from .sim import ScenarioConfig, simulate, truth_spec  # noqa: E402
