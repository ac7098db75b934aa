"""Soft gating ensembles with global, local and lead-time weighting."""

from .core import (
    CsgeError,
    Dataset,
    EtaVector,
    PredictionCube,
    Scorer,
    WeightBreakdown,
    score,
    validate_dataset,
)
from .ensemble import (
    CsgeModel,
    FoldPlan,
    build_prediction_cube,
    cross_validate,
    evaluate,
    fit,
    fit_from_cube,
    make_fold_plan,
    make_holdout_plan,
)
from .estimators import EstimatorSpec
from .io import (
    import_external_predictions,
    load_csv,
    load_diabetes,
    load_model,
    save_model,
    write_external_predictions,
)
from .optim import ObjectiveConfig
from .softgate import SoftGateConfig, eta_penalty, soft_gate, soft_gate_raw

__version__ = "0.1.0"
