"""Dense float64 compute with reverse-mode gradients, Adam, and checkpoints."""

from threatshare.diffcore.tensor import (
    NumericError,
    ParamSet,
    ShapeError,
    Tensor,
    add,
    backward,
    concat,
    l2_norm_rows,
    layer_norm,
    leaky_relu,
    mae,
    matmul,
    mean_rows,
    mse,
    mul,
    relu,
    reshape,
    softmax,
    sub,
    transpose,
)
from threatshare.diffcore.optim import (
    AdamState,
    adam_step,
    init_params,
    schedule_and_stop,
)
from threatshare.diffcore.checkpoint import (
    CHECKPOINT_VERSION,
    load_container,
    save_container,
)

__all__ = [
    "AdamState",
    "CHECKPOINT_VERSION",
    "NumericError",
    "ParamSet",
    "ShapeError",
    "Tensor",
    "adam_step",
    "add",
    "backward",
    "concat",
    "init_params",
    "l2_norm_rows",
    "layer_norm",
    "leaky_relu",
    "load_container",
    "mae",
    "matmul",
    "mean_rows",
    "mse",
    "mul",
    "relu",
    "reshape",
    "save_container",
    "schedule_and_stop",
    "softmax",
    "sub",
    "transpose",
]
