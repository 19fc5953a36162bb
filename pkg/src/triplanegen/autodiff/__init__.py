from .tensor import (
    Tensor,
    as_tensor,
    no_grad,
    nan_guard,
    backward,
    add,
    sub,
    mul,
    div,
    neg,
    power,
    absolute,
    exp,
    log,
    sqrt,
    sin,
    cos,
    tanh,
    sigmoid,
    softplus,
    relu,
    gelu,
    matmul,
    tsum,
    tmean,
    tmax,
    cumsum,
    reshape,
    transpose,
    getitem,
    concat,
    pad2d,
    take,
    put_rows,
    softmax,
    layer_norm,
    conv2d,
    conv2d_transpose,
    ShapeError,
    NonFiniteError,
    GraphError,
)
from .module import Module, ModuleList, Parameter
from .optim import Adam
from .rng import RandomSource, ALGORITHM
from .gradcheck import gradcheck
from .checkpoint import save_checkpoint, load_checkpoint, CheckpointFormatError

__all__ = [
    "Tensor", "as_tensor", "no_grad", "nan_guard", "backward",
    "add", "sub", "mul", "div", "neg", "power", "absolute",
    "exp", "log", "sqrt", "sin", "cos", "tanh", "sigmoid", "softplus",
    "relu", "gelu", "matmul", "tsum", "tmean", "tmax", "cumsum",
    "reshape", "transpose", "getitem", "concat", "pad2d", "take",
    "put_rows", "softmax", "layer_norm", "conv2d", "conv2d_transpose",
    "ShapeError", "NonFiniteError", "GraphError",
    "Module", "ModuleList", "Parameter", "Adam",
    "RandomSource", "ALGORITHM", "gradcheck",
    "save_checkpoint", "load_checkpoint", "CheckpointFormatError",
]
