"""Training objective: reconstruction MSE plus LUT smoothness and monotonicity.

The two regularisers are evaluated on the composed LUT (residual + identity),
not on the residual itself.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .lut import Lut3D, compose_with_identity
from .tensor import ShapeError, Tensor, as_tensor


REDUCTIONS = ("sum", "mean")


@dataclass(frozen=True)
class LossWeights:
    """Trade-off weights for the two LUT regularisers.

    ``reduction="sum"`` adds up every adjacent-pair term. ``"mean"`` averages
    each axis's terms over channels and pairs before summing the three axes,
    which keeps the regularisers on the same scale as the per-pixel MSE.
    """

    lambda_s: float = 1e-4
    lambda_m: float = 10.0
    reduction: str = "sum"

    def __post_init__(self):
        if self.lambda_s < 0 or self.lambda_m < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.reduction not in REDUCTIONS:
            raise ValueError(f"reduction must be one of {REDUCTIONS}, got {self.reduction!r}")


@dataclass
class LossBreakdown:
    mse: Tensor
    smooth: Tensor
    mono: Tensor
    total: Tensor

    def values(self) -> dict[str, float]:
        return {k: getattr(self, k).item() for k in ("mse", "smooth", "mono", "total")}


def mse_loss(pred, target) -> Tensor:
    """Mean squared error over all ``3 * H * W`` values."""
    pred = as_tensor(pred)
    target = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=pred.dtype)
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss: prediction {pred.shape} and target {target.shape} differ")
    return ops.mean(ops.square(ops.sub(pred, Tensor._wrap(target))))


def _reduce(x: Tensor, reduction: str) -> Tensor:
    if reduction == "sum":
        return ops.sum(x)
    if reduction == "mean":
        return ops.mean(x)
    raise ValueError(f"unknown reduction {reduction!r}")


def _over_axes(term, lut: Lut3D, reduction: str) -> Tensor:
    parts = [_reduce(term(ops.axis_diff(lut.grid, axis)), reduction) for axis in (1, 2, 3)]
    return ops.add(ops.add(parts[0], parts[1]), parts[2])


def smoothness_loss(lut: Lut3D, reduction: str = "sum") -> Tensor:
    """Squared forward differences along the three input axes, all channels."""
    return _over_axes(ops.square, lut, reduction)


def monotonicity_loss(lut: Lut3D, reduction: str = "sum") -> Tensor:
    """``max(0, grid[i] - grid[i+1])`` along the three input axes, all channels."""
    return _over_axes(lambda d: ops.relu(ops.neg(d)), lut, reduction)


def total_loss(pred, target, residual: Lut3D, weights: LossWeights = LossWeights()) -> LossBreakdown:
    composed = compose_with_identity(residual)
    mse = mse_loss(pred, target)
    smooth = smoothness_loss(composed, weights.reduction)
    mono = monotonicity_loss(composed, weights.reduction)
    total = ops.add(ops.add(mse, ops.mul(smooth, weights.lambda_s)), ops.mul(mono, weights.lambda_m))
    return LossBreakdown(mse, smooth, mono, total)
