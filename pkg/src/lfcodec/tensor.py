"""Dense 4-axis tensors and the parameter containers of the layer primitives.

Tensors are plain ``numpy.ndarray`` objects with axes (batch, channels,
height, width), C-contiguous so the flat buffer is batch-major, then
channel, then row, then column.  The helpers here centralize the shape
checks that every layer performs.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError

Tensor = np.ndarray


def require_4d(x: np.ndarray, name: str = "input") -> None:
    if x.ndim != 4:
        raise ShapeError(f"{name} must be 4-D (batch, channels, height, width), got shape {x.shape}")


def require_same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shapes {a.shape} and {b.shape} differ")


def require_finite(x: np.ndarray, name: str = "tensor") -> None:
    if not np.all(np.isfinite(x)):
        raise ShapeError(f"{name} contains non-finite values")


@dataclass
class ConvParams:
    """Weights for one (transposed) convolution layer.

    ``weights`` has shape (axis0, axis1, kh, kw).  Used as a forward
    convolution, axis0 is the output-channel axis and axis1 the input
    channels; used as a transposed convolution the roles swap, so one
    weight array serves as its own adjoint.  ``bias`` length must match
    the output channels of whichever direction the layer is applied in.
    """

    weights: np.ndarray
    bias: np.ndarray
    stride: int = 2

    def __post_init__(self) -> None:
        if self.weights.ndim != 4:
            raise ShapeError(f"conv weights must be 4-D, got shape {self.weights.shape}")
        if self.bias.ndim != 1:
            raise ShapeError(f"conv bias must be 1-D, got shape {self.bias.shape}")
        if self.stride < 1:
            raise ShapeError(f"stride must be >= 1, got {self.stride}")

    @property
    def kernel(self) -> tuple[int, int]:
        return self.weights.shape[2], self.weights.shape[3]


@dataclass
class BatchNormParams:
    """Per-channel affine batch normalization with running statistics."""

    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = 1e-5
    momentum: float = 0.1

    def __post_init__(self) -> None:
        n = self.gamma.shape[0]
        for name in ("beta", "running_mean", "running_var"):
            v = getattr(self, name)
            if v.shape != (n,):
                raise ShapeError(f"batchnorm {name} must have shape ({n},), got {v.shape}")
        if self.epsilon <= 0:
            raise ShapeError(f"batchnorm epsilon must be positive, got {self.epsilon}")
        if not 0.0 < self.momentum < 1.0:
            raise ShapeError(f"batchnorm momentum must lie in (0, 1), got {self.momentum}")
        if np.any(self.running_var < 0):
            raise ShapeError("batchnorm running_var has negative entries")

    @property
    def channels(self) -> int:
        return self.gamma.shape[0]


def bn_params(channels: int, dtype=np.float32, epsilon: float = 1e-5,
              momentum: float = 0.1) -> BatchNormParams:
    """Fresh batch-norm parameters: identity affine, running stats (0, 1)."""
    return BatchNormParams(
        gamma=np.ones(channels, dtype=dtype),
        beta=np.zeros(channels, dtype=dtype),
        running_mean=np.zeros(channels, dtype=dtype),
        running_var=np.ones(channels, dtype=dtype),
        epsilon=epsilon,
        momentum=momentum,
    )


@dataclass
class BatchNormCache:
    """Intermediates saved by the training-mode forward for the backward pass."""

    x_hat: np.ndarray
    inv_std: np.ndarray
    gamma: np.ndarray
    count: int = field(default=0)
