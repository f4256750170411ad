"""Dense float64 matrix kernel used by every model.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64.  The
helpers here add the shape and finiteness checks the models rely on; all
functions return new arrays and never mutate their inputs.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

Matrix = np.ndarray

_SIGMOID_LO = np.finfo(np.float64).tiny
_SIGMOID_HI = np.nextafter(1.0, 0.0)
_TANH_LO = np.nextafter(-1.0, 0.0)
_TANH_HI = np.nextafter(1.0, 0.0)


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class NonFiniteError(FloatingPointError):
    """Raised when an operation would emit NaN or Inf."""


def as_matrix(values, cols: int | None = None) -> Matrix:
    """Coerce ``values`` to a 2-D float64 array.

    A 1-D input becomes a single row unless ``cols`` is given, in which case
    it is reshaped row-major to ``(-1, cols)``.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, cols) if cols is not None else arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ShapeError(f"expected at most 2 dimensions, got {arr.ndim}")
    return arr


def _check_finite(out: Matrix, op: str) -> Matrix:
    if not np.isfinite(out).all():
        raise NonFiniteError(f"{op} produced non-finite values")
    return out


def identity(n: int) -> Matrix:
    return np.eye(n, dtype=np.float64)


def zeros(rows: int, cols: int) -> Matrix:
    return np.zeros((rows, cols), dtype=np.float64)


def matmul(a: Matrix, b: Matrix) -> Matrix:
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError("matmul expects 2-D operands")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        out = a @ b
    return _check_finite(out, "matmul")


def _same_shape(a: Matrix, b: Matrix, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape {a.shape} != {b.shape}")


def add(a: Matrix, b: Matrix) -> Matrix:
    _same_shape(a, b, "add")
    return _check_finite(a + b, "add")


def add_row(a: Matrix, row: Matrix) -> Matrix:
    """Add a 1×n row vector to every row of ``a``."""
    if row.shape != (1, a.shape[1]):
        raise ShapeError(f"add_row: row {row.shape} does not fit {a.shape}")
    return _check_finite(a + row, "add_row")


def hadamard(a: Matrix, b: Matrix) -> Matrix:
    _same_shape(a, b, "hadamard")
    return _check_finite(a * b, "hadamard")


def scale(a: Matrix, k: float) -> Matrix:
    return _check_finite(a * float(k), "scale")


def concat_cols(a: Matrix, b: Matrix) -> Matrix:
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f"concat_cols: row counts {a.shape[0]} != {b.shape[0]}")
    return np.concatenate([a, b], axis=1)


def sigmoid(x: Matrix) -> Matrix:
    # Saturated outputs are pinned strictly inside (0, 1).
    return np.clip(expit(x), _SIGMOID_LO, _SIGMOID_HI)


def tanh_act(x: Matrix) -> Matrix:
    return np.clip(np.tanh(x), _TANH_LO, _TANH_HI)


def sigmoid_grad(s: Matrix) -> Matrix:
    """Derivative of the sigmoid expressed through its output ``s``."""
    return s * (1.0 - s)


def tanh_grad(t: Matrix) -> Matrix:
    """Derivative of tanh expressed through its output ``t``."""
    return 1.0 - t * t
