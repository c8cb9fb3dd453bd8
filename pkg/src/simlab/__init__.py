"""simlab: sequential treatment-allocation procedures and a Monte Carlo
laboratory for two-arm clinical trials with covariates."""

from .cara import (
    BandyopadhyayBiswas,
    CaraDaOptimal,
    CaraLogistic,
    StratifiedDbcd,
    TargetKind,
    dbcd_assign,
    expected_failures,
    target_allocation,
)
from .core import (
    CovariateProfile,
    CovariateSpec,
    PatientRecord,
    ScenarioSpec,
    TreatmentArm,
    TrialState,
    generate_covariates,
    response_probability,
    simulate_response,
)
from .covadaptive import (
    AtkinsonDOptimal,
    Discretizer,
    PocockSimonMinimization,
    RaghavaraoDistance,
    TavesMinimization,
    WeiMarginalUrn,
    default_discretizer,
)
from .engine import (
    StudySummary,
    TrialResult,
    fixed_design_report,
    run_replication,
    run_study,
    summaries_to_csv,
    summaries_to_json,
)
from .errors import (
    BoundaryError,
    InvalidParameterError,
    NotEstimableError,
    NotReadyError,
    ScenarioError,
    SimlabError,
    UnsupportedProcedureError,
)
from .estimation import (
    FittedLogisticModel,
    fit_logistic,
    ks_distance,
    log_odds_ratio,
    rerandomization_test,
    stratified_logor_test,
    wald_test_at_z0,
)
from .registry import PROCEDURE_IDS, build_procedure
from .restricted import (
    CompleteRandomization,
    EfronBiasedCoin,
    PermutedBlocks,
    SmithPowerRule,
    StratifiedPermutedBlocks,
)
from .rng import RngStream, make_stream

__version__ = "0.1.0"

__all__ = [
    "AtkinsonDOptimal",
    "BandyopadhyayBiswas",
    "BoundaryError",
    "CaraDaOptimal",
    "CaraLogistic",
    "CompleteRandomization",
    "CovariateProfile",
    "CovariateSpec",
    "Discretizer",
    "EfronBiasedCoin",
    "FittedLogisticModel",
    "InvalidParameterError",
    "NotEstimableError",
    "NotReadyError",
    "PatientRecord",
    "PermutedBlocks",
    "PocockSimonMinimization",
    "PROCEDURE_IDS",
    "RaghavaraoDistance",
    "RngStream",
    "ScenarioError",
    "ScenarioSpec",
    "SimlabError",
    "SmithPowerRule",
    "StratifiedDbcd",
    "StratifiedPermutedBlocks",
    "StudySummary",
    "TargetKind",
    "TavesMinimization",
    "TreatmentArm",
    "TrialResult",
    "TrialState",
    "UnsupportedProcedureError",
    "WeiMarginalUrn",
    "build_procedure",
    "dbcd_assign",
    "default_discretizer",
    "expected_failures",
    "fit_logistic",
    "fixed_design_report",
    "generate_covariates",
    "ks_distance",
    "log_odds_ratio",
    "make_stream",
    "rerandomization_test",
    "response_probability",
    "run_replication",
    "run_study",
    "simulate_response",
    "stratified_logor_test",
    "summaries_to_csv",
    "summaries_to_json",
    "target_allocation",
    "wald_test_at_z0",
]
