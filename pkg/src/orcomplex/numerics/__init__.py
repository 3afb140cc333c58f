from .gradcheck import finite_diff_grad, max_relative_error, relative_error
from .optim import Adam, adam_step, zero_grad
from .rng import RngStream
from .tensor import (
    AllMasked,
    IndexOutOfRange,
    NoTape,
    NonFiniteValue,
    NumericsError,
    Parameter,
    Segments,
    ShapeMismatch,
    Tape,
    Tensor,
    add,
    as_tensor,
    backward,
    concat,
    concat_rows,
    cross_entropy,
    get_tape,
    index,
    is_grad_enabled,
    log_softmax,
    matmul,
    mean,
    mul,
    no_grad,
    relu,
    reshape,
    scale,
    segment_softmax,
    segment_sum,
    sigmoid,
    slice_rows,
    softmax_row,
    stack,
    sub,
    take_rows,
    tanh,
    transpose,
    tsum,
)
