"""Symmetric non-negative latent factor models trained by damped Gauss-Newton-CG."""

from .cg import CgOutcome, NumericalError, cg_solve
from .curvature import (
    CurvatureOperator,
    damped_product,
    explicit_gn_matrix,
    gn_vector_product,
    hvp_finite_difference,
    jacobian_vector_product,
    regularized_gn_vector_product,
)
from .evaluation import (
    CaseReport,
    CaseResult,
    DataCaseSpec,
    generate_synthetic,
    planted_model,
    rmse,
    run_data_case,
)
from .model import (
    Model,
    ModelConfig,
    gradient,
    init_params,
    objective,
    predict,
    predict_edges,
    sigmoid,
    sigmoid_prime,
)
from .network import (
    EdgeSplit,
    NetworkFormatError,
    SymmetricSparseNetwork,
    WeightMap,
    load_edge_list,
    scale_weights,
    split_edges,
)
from .trainer import StepControl, StoppingMonitor, TrainReport, train_first_order, train_second_order

__all__ = [
    "CaseReport", "CaseResult", "CgOutcome", "CurvatureOperator", "DataCaseSpec", "EdgeSplit",
    "Model", "ModelConfig", "NetworkFormatError", "NumericalError", "StepControl",
    "StoppingMonitor", "SymmetricSparseNetwork", "TrainReport", "WeightMap", "cg_solve",
    "damped_product", "explicit_gn_matrix", "generate_synthetic", "gn_vector_product",
    "gradient", "hvp_finite_difference", "init_params", "jacobian_vector_product",
    "load_edge_list", "objective", "planted_model", "predict", "predict_edges",
    "regularized_gn_vector_product", "rmse", "run_data_case", "scale_weights", "sigmoid",
    "sigmoid_prime", "split_edges", "train_first_order", "train_second_order",
]

__version__ = "0.1.0"
