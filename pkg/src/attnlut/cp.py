"""Rebuilding a dense residual LUT from canonical polyadic (CP) factors.

The factor bank has shape ``9 x X x N``. For component ``x``, rows 0-2 hold the
red-axis factors of output channels (r, g, b), rows 3-5 the green-axis factors
and rows 6-8 the blue-axis factors, so that::

    grid[c, i, j, k] = sum_x R[c, x, i] * G[c, x, j] * B[c, x, k]
"""
from __future__ import annotations

import numpy as np

from .lut import Lut3D
from .tensor import NonFiniteError, ShapeError, Tensor, record


def _check_bank(factors: Tensor) -> tuple[int, int]:
    if factors.ndim != 3 or factors.shape[0] != 9:
        raise ShapeError(f"CP factor bank must be 9 x X x N, got {factors.shape}")
    _, x, n = factors.shape
    if x < 1 or n < 2:
        raise ShapeError(f"CP factor bank needs X >= 1 and N >= 2, got X={x}, N={n}")
    if not np.all(np.isfinite(factors.data)):
        raise NonFiniteError("CP factor bank contains non-finite values")
    return x, n


def reconstruct(factors: Tensor) -> Lut3D:
    """Sum of ``X`` rank-1 outer products per output channel, as a dense LUT."""
    x, n = _check_bank(factors)
    f = factors.data
    r, g, b = f[0:3], f[3:6], f[6:9]
    # rg[c, i, j, x] = R[c, x, i] * G[c, x, j]
    rg = r.transpose(0, 2, 1)[:, :, None, :] * g.transpose(0, 2, 1)[:, None, :, :]
    grid = np.matmul(rg.reshape(3, n * n, x), b).reshape(3, n, n, n)

    def backward(gout):
        g2 = gout.reshape(3, n * n, n)
        db = np.matmul(rg.reshape(3, n * n, x).transpose(0, 2, 1), g2)
        drg = np.matmul(g2, b.transpose(0, 2, 1)).reshape(3, n, n, x)
        dr = np.einsum("cijx,cxj->cxi", drg, g)
        dg = np.einsum("cijx,cxi->cxj", drg, r)
        return (np.concatenate([dr, dg, db], axis=0),)

    return Lut3D(record(grid, (factors,), backward))


def param_count(x: int, n: int) -> tuple[int, int]:
    """Scalars stored by a rank-``x`` CP bank versus a dense ``n``-grid LUT."""
    if x < 1 or n < 2:
        raise ValueError(f"need x >= 1 and n >= 2, got x={x}, n={n}")
    return 9 * x * n, 3 * n ** 3
