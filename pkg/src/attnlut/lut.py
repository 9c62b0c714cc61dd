"""3D lookup tables: construction, trilinear lookup and ``.cube`` interchange.

A LUT of size ``N`` stores a ``3 x N x N x N`` grid. ``grid[c, r, g, b]`` is the
value of output channel ``c`` at the input lattice point ``(r, g, b) / (N - 1)``.
"""
from __future__ import annotations

import itertools
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import ops
from .image import as_image
from .tensor import NonFiniteError, ShapeError, Tensor, record

# corner order used everywhere: red offset slowest, blue fastest
CORNERS = tuple(itertools.product((0, 1), repeat=3))
BLOCK_PIXELS = 1 << 16


@dataclass(frozen=True)
class Lut3D:
    grid: Tensor

    def __post_init__(self):
        shape = self.grid.shape
        if len(shape) != 4 or shape[0] != 3 or not (shape[1] == shape[2] == shape[3]):
            raise ShapeError(f"LUT grid must be 3 x N x N x N, got {shape}")
        if shape[1] < 2:
            raise ShapeError(f"LUT size must be at least 2, got {shape[1]}")

    @classmethod
    def from_array(cls, grid, dtype=np.float64) -> "Lut3D":
        return cls(Tensor(np.asarray(grid, dtype=dtype)))

    @property
    def n(self) -> int:
        return self.grid.shape[1]

    @property
    def values(self) -> np.ndarray:
        return self.grid.data


def identity_lut(n: int, dtype=np.float64) -> Lut3D:
    """The LUT whose lattice point ``(i, j, k)`` stores ``(i, j, k) / (n - 1)``."""
    if n < 2:
        raise ValueError(f"LUT size must be at least 2, got {n}")
    axis = np.arange(n, dtype=dtype) / np.dtype(dtype).type(n - 1)
    r, g, b = np.meshgrid(axis, axis, axis, indexing="ij")
    return Lut3D(Tensor(np.stack([r, g, b]), dtype=dtype))


def constant_lut(n: int, value, dtype=np.float64) -> Lut3D:
    """A LUT storing ``value`` (a scalar or per-channel triple) everywhere."""
    v = np.asarray(value, dtype=dtype).reshape(-1, 1, 1, 1)
    return Lut3D(Tensor(np.broadcast_to(v, (3, n, n, n)), dtype=dtype))


def _cell_coordinates(pixels: np.ndarray, n: int):
    """Flat base indices and fractional offsets of each pixel's enclosing cell."""
    scale = pixels.dtype.type(n - 1)
    s = np.clip(pixels, 0.0, 1.0) * scale
    idx = np.minimum(np.floor(s), n - 2).astype(np.intp)
    frac = s - idx.astype(pixels.dtype)
    base = (idx[:, 0] * n + idx[:, 1]) * n + idx[:, 2]
    return base, frac


def _corner_terms(base: np.ndarray, frac: np.ndarray, n: int):
    """Yield (flat index, weight) for the 8 corners in :data:`CORNERS` order."""
    one = frac.dtype.type(1)
    dr, dg, db = frac[:, 0], frac[:, 1], frac[:, 2]
    wr = (one - dr, dr)
    wg = (one - dg, dg)
    wb = (one - db, db)
    for cr, cg, cb in CORNERS:
        yield base + (cr * n + cg) * n + cb, wr[cr] * wg[cg] * wb[cb]


def _lerp(a: np.ndarray, b: np.ndarray, f: np.ndarray) -> np.ndarray:
    out = a + f * (b - a)
    # rounding may not leave the segment: constants stay exact, outputs stay in the corner hull
    return np.minimum(np.maximum(out, np.minimum(a, b)), np.maximum(a, b))


def _lookup(table: np.ndarray, pixels: np.ndarray, n: int) -> np.ndarray:
    """Trilinear lookup of ``P x 3`` pixels in an ``N^3 x 3`` point-major table.

    Evaluated as nested blends along blue, green, then red; mathematically the
    8-corner weighted sum.
    """
    base, frac = _cell_coordinates(pixels, n)
    fr, fg, fb = (frac[:, k:k + 1] for k in range(3))
    corner = {c: table[base + (c[0] * n + c[1]) * n + c[2]] for c in CORNERS}
    along_b = {(r, g): _lerp(corner[r, g, 0], corner[r, g, 1], fb) for r in (0, 1) for g in (0, 1)}
    along_g = {r: _lerp(along_b[r, 0], along_b[r, 1], fg) for r in (0, 1)}
    return _lerp(along_g[0], along_g[1], fr)


def _check_pixels(img: np.ndarray) -> None:
    if np.isnan(img).any():
        raise NonFiniteError("apply_trilinear: image contains NaN")


def apply_trilinear(lut: Lut3D, image) -> Tensor:
    """Map every pixel of ``image`` through ``lut`` by trilinear interpolation.

    Inputs are clamped to ``[0, 1]`` before lookup; the result is not clamped.
    The output is differentiable with respect to the LUT grid.
    """
    img = as_image(image)
    _check_pixels(img)
    n = lut.n
    dtype = np.result_type(img.dtype, lut.grid.dtype)
    h, w, _ = img.shape
    pixels = img.reshape(-1, 3).astype(dtype, copy=False)
    grid = lut.grid.data.astype(dtype, copy=False)
    table = np.ascontiguousarray(grid.reshape(3, -1).T)
    out = _lookup(table, pixels, n).reshape(h, w, 3)
    grid_shape = lut.grid.shape

    def backward(g):
        g = g.reshape(-1, 3)
        base, frac = _cell_coordinates(pixels, n)
        dgrid = np.zeros((3, n ** 3), dtype=g.dtype)
        for flat, wt in _corner_terms(base, frac, n):
            for c in range(3):
                dgrid[c] += np.bincount(flat, weights=wt * g[:, c], minlength=n ** 3)
        return (dgrid.reshape(grid_shape).astype(lut.grid.dtype, copy=False),)

    return record(out, (lut.grid,), backward)


def apply_trilinear_parallel(lut: Lut3D, image, threads: int = 1, chunk_rows: int | None = None) -> np.ndarray:
    """Inference-only lookup split over row blocks; bitwise equal to the serial path."""
    img = as_image(image)
    _check_pixels(img)
    n = lut.n
    dtype = np.result_type(img.dtype, lut.grid.dtype)
    h, w, _ = img.shape
    table = np.ascontiguousarray(lut.grid.data.astype(dtype, copy=False).reshape(3, -1).T)
    out = np.empty((h, w, 3), dtype=dtype)
    if chunk_rows is None:
        # ~64k pixels per block keeps the temporaries cache-sized
        chunk_rows = max(1, BLOCK_PIXELS // w)
    blocks = [(r, min(h, r + chunk_rows)) for r in range(0, h, chunk_rows)]

    def work(block):
        r0, r1 = block
        px = img[r0:r1].reshape(-1, 3).astype(dtype, copy=False)
        out[r0:r1] = _lookup(table, px, n).reshape(r1 - r0, w, 3)

    if threads <= 1:
        for block in blocks:
            work(block)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, blocks))
    return out


def compose_with_identity(residual: Lut3D) -> Lut3D:
    """Return ``residual + identity``; differentiable in the residual grid."""
    ident = identity_lut(residual.n, dtype=residual.grid.dtype)
    return Lut3D(ops.add(residual.grid, ident.grid))


def enhance_residual(image, residual: Lut3D, clamp: bool = True):
    """``image + residual(image)``, clamped to ``[0, 1]`` unless ``clamp=False``.

    The unclamped form returns a :class:`Tensor` (for training); the clamped
    form returns a plain array.
    """
    img = as_image(image)
    delta = apply_trilinear(residual, img)
    out = ops.add(delta, Tensor._wrap(img.astype(delta.dtype, copy=False)))
    if not clamp:
        return out
    return np.clip(out.data, 0.0, 1.0)


# .cube interchange ---------------------------------------------------------

class CubeParseError(ValueError):
    """Malformed ``.cube`` file; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where = f"{os.fspath(path)}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


def format_cube(lut: Lut3D, title: str | None = None) -> str:
    grid = lut.grid.data
    if not np.all(np.isfinite(grid)):
        raise NonFiniteError("cannot write a LUT with non-finite values")
    n = lut.n
    lines = []
    if title:
        lines.append(f'TITLE "{title}"')
    lines += [f"LUT_3D_SIZE {n}", "DOMAIN_MIN 0 0 0", "DOMAIN_MAX 1 1 1"]
    # red index varies fastest
    rows = grid.transpose(3, 2, 1, 0).reshape(-1, 3)
    lines += ["%.9g %.9g %.9g" % tuple(map(float, row)) for row in rows]
    return "\n".join(lines) + "\n"


def parse_cube(text: str, path=None) -> Lut3D:
    size = None
    values: list[tuple[float, float, float]] = []
    first_data_line = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        head = line.split()[0]
        if head[0].isalpha():
            if values:
                raise CubeParseError(f"keyword {head} after table data", lineno, path)
            parts = line.split()
            if head == "TITLE":
                continue
            if head == "LUT_3D_SIZE":
                if len(parts) != 2 or not parts[1].isdigit():
                    raise CubeParseError("LUT_3D_SIZE expects one integer", lineno, path)
                size = int(parts[1])
                if size < 2:
                    raise CubeParseError(f"LUT_3D_SIZE {size} is below 2", lineno, path)
            elif head in ("DOMAIN_MIN", "DOMAIN_MAX"):
                want = 0.0 if head == "DOMAIN_MIN" else 1.0
                try:
                    dom = [float(p) for p in parts[1:]]
                except ValueError:
                    raise CubeParseError(f"non-numeric {head} value", lineno, path) from None
                if len(dom) != 3:
                    raise CubeParseError(f"{head} expects three values", lineno, path)
                if any(d != want for d in dom):
                    raise CubeParseError(f"unsupported {head} {' '.join(parts[1:])}", lineno, path)
            elif head == "LUT_1D_SIZE":
                raise CubeParseError("1D LUTs are not supported", lineno, path)
            else:
                raise CubeParseError(f"unknown keyword {head}", lineno, path)
            continue
        parts = line.split()
        if len(parts) != 3:
            raise CubeParseError(f"expected 3 values, found {len(parts)}", lineno, path)
        try:
            values.append((float(parts[0]), float(parts[1]), float(parts[2])))
        except ValueError:
            raise CubeParseError(f"non-numeric token in {line!r}", lineno, path) from None
        if first_data_line is None:
            first_data_line = lineno
    if size is None:
        raise CubeParseError("missing LUT_3D_SIZE", None, path)
    if len(values) != size ** 3:
        raise CubeParseError(
            f"expected {size ** 3} table lines for LUT_3D_SIZE {size}, found {len(values)}",
            first_data_line,
            path,
        )
    table = np.asarray(values, dtype=np.float64).reshape(size, size, size, 3)
    # file order is (b, g, r) with r fastest
    return Lut3D(Tensor(np.ascontiguousarray(table.transpose(3, 2, 1, 0))))


def write_cube(lut: Lut3D, path, title: str | None = None) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(format_cube(lut, title))


def read_cube(path) -> Lut3D:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_cube(text, path)
