"""Adaptive sampling of parameter stability regions with a calibrated SVM."""
from ._backend import BACKEND
from .adaptive import (
    ArgmaxResult,
    AsmConfig,
    AsmConfigError,
    AsmHistory,
    DiskOracle,
    InfeasibleSample,
    LabeledSample,
    PowerSystemOracle,
    argmax_probability,
    label_set,
    map_csv,
    probability_map,
    refine,
    run_asm,
    sample_uniform,
    unit_grid,
)
from .svm import (
    ConvergenceError,
    DegenerateLabelsError,
    ExtrapolationWarning,
    SvmError,
    SvmModel,
    fit_platt,
    predict_probability,
    train_svm,
)

__all__ = [
    "BACKEND", "ArgmaxResult", "AsmConfig", "AsmConfigError", "AsmHistory", "DiskOracle", "InfeasibleSample",
    "LabeledSample", "PowerSystemOracle", "argmax_probability", "label_set", "map_csv", "probability_map",
    "refine", "run_asm", "sample_uniform", "unit_grid", "ConvergenceError", "DegenerateLabelsError",
    "ExtrapolationWarning", "SvmError", "SvmModel", "fit_platt", "predict_probability", "train_svm",
]
