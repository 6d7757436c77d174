"""Tensor-train sequence modelling and forecasting toolkit."""

from .tensor import (
    DenseTensor,
    ElementCountMismatch,
    ModeIndexOutOfRange,
    ModeSizeMismatch,
    contract,
    frobenius_norm_sq,
    reshape,
)
from .ttformat import (
    TTMatrix,
    TTVector,
    mpo_reconstruct,
    mpo_to_matrix,
    tt_param_count,
    tt_reconstruct,
    tt_svd,
)
from .neural import (
    TTLinearLayer,
    TTRNNModel,
    TrainConfig,
    backward,
    cross_entropy_loss,
    forward_sequence,
    init_model,
    sgd_step,
    train,
    tt_linear_forward,
    ttrnn_cell_forward,
)
from .features import AssetPanel, FeaturePanel, SynthConfig, assemble, synth_panel
from .backtest import BacktestReport, directional_accuracy, run_backtest, sharpe, size_positions
from .interpret import CoreChangeLog, core_change, modal_ranking

__version__ = "0.1.0"

__all__ = [
    "AssetPanel",
    "BacktestReport",
    "CoreChangeLog",
    "DenseTensor",
    "ElementCountMismatch",
    "FeaturePanel",
    "ModeIndexOutOfRange",
    "ModeSizeMismatch",
    "SynthConfig",
    "TTLinearLayer",
    "TTMatrix",
    "TTRNNModel",
    "TTVector",
    "TrainConfig",
    "assemble",
    "backward",
    "contract",
    "core_change",
    "cross_entropy_loss",
    "directional_accuracy",
    "forward_sequence",
    "frobenius_norm_sq",
    "init_model",
    "modal_ranking",
    "mpo_reconstruct",
    "mpo_to_matrix",
    "reshape",
    "run_backtest",
    "sgd_step",
    "sharpe",
    "size_positions",
    "synth_panel",
    "train",
    "tt_linear_forward",
    "tt_param_count",
    "tt_reconstruct",
    "tt_svd",
    "ttrnn_cell_forward",
]
