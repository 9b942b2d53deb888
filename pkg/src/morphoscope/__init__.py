"""Intrinsic probing of embedding dimensions with a decomposable Gaussian probe."""

__version__ = "0.1.0"

from .exceptions import (  # noqa: E402
    ConsistencyError,
    DataError,
    DegenerateSplit,
    FormatError,
    InsufficientData,
    InvalidInput,
    InvalidSpec,
    InvalidTag,
    MorphoscopeError,
    NotPositiveDefinite,
    TooLarge,
    UnknownAttribute,
)
from .gaussian import CholFactor, GaussianParams, chol_extend, chol_factor, log_pdf, marginalize  # noqa: E402
from .giw import (  # noqa: E402
    GIWHyperparams,
    SufficientStats,
    default_hyperparams,
    iw_log_density,
    map_estimate,
    posterior_update,
)
from .probe import (  # noqa: E402
    AttributeSchema,
    GaussianProbe,
    ProbeModel,
    SubsetEvaluator,
    fit_probe,
    load_model,
    param_count,
    save_model,
)
from .selection import GreedyDimensionSelector, SelectionTrace, exhaustive_select, greedy_select  # noqa: E402
from .metrics import (  # noqa: E402
    accuracy,
    conditional_entropy_upper,
    entropy_plugin,
    lba,
    lbmi,
    lbnmi,
    mi_estimate,
)

__all__ = [
    "AttributeSchema",
    "CholFactor",
    "ConsistencyError",
    "DataError",
    "DegenerateSplit",
    "FormatError",
    "GIWHyperparams",
    "GaussianParams",
    "GaussianProbe",
    "GreedyDimensionSelector",
    "InsufficientData",
    "InvalidInput",
    "InvalidSpec",
    "InvalidTag",
    "MorphoscopeError",
    "NotPositiveDefinite",
    "ProbeModel",
    "SelectionTrace",
    "SubsetEvaluator",
    "SufficientStats",
    "TooLarge",
    "UnknownAttribute",
    "accuracy",
    "chol_extend",
    "chol_factor",
    "conditional_entropy_upper",
    "default_hyperparams",
    "entropy_plugin",
    "exhaustive_select",
    "fit_probe",
    "greedy_select",
    "iw_log_density",
    "lba",
    "lbmi",
    "lbnmi",
    "load_model",
    "log_pdf",
    "map_estimate",
    "marginalize",
    "mi_estimate",
    "param_count",
    "posterior_update",
    "save_model",
]
