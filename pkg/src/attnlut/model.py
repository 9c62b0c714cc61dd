"""The enhancement network: image feature, attention fusion and LUT head.

Pipeline for one image ``I``:

1. ``f = backbone(resize(I, 256, 256))`` -- five stride-2 3x3 convolutions with
   leaky ReLU, then global average pooling, giving a ``d``-vector.
2. Priori K/Q/V token matrices (``T x d``) are each projected together with
   ``f`` into image-adaptive K/Q/V; scaled dot-product attention mixes the
   value tokens.
3. A per-token head maps every mixed token to its ``9 x N`` slice of the CP
   factor bank (or, in ``lut_mode="dense"``, to a chunk of a dense grid).
4. The rebuilt residual LUT is looked up at every pixel and added to ``I``.

``fusion_mode="linear"`` replaces step 2-3 with a linear blend of learned
basis banks weighted by ``weight_head(f)``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import ops
from .cp import reconstruct
from .image import as_image, bilinear_resize
from .lut import Lut3D, enhance_residual
from .tensor import ShapeError, Tensor

FUSION_MODES = ("attention", "linear")
LUT_MODES = ("cp", "dense")

# externally reported totals, shown as labelled references only
REPORTED_PARAM_TOTALS = {
    "attention + CP (full model)": "593k",
    "linear fusion + CP": "294k",
    "attention + dense 3D LUT": "3,239k",
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    x: int = 15
    n: int = 33
    d: int = 128
    t: int | None = None
    fusion_mode: str = "attention"
    lut_mode: str = "cp"
    backbone_channels: tuple[int, ...] = (16, 32, 64, 128, 128)
    basis_count: int = 3
    heads: int = 1
    input_size: int = 256
    slope: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "backbone_channels", tuple(int(c) for c in self.backbone_channels))
        if self.t is None:
            object.__setattr__(self, "t", self.x)
        if self.x < 1 or self.n < 2 or self.d < 1 or self.t < 1:
            raise ConfigError(f"invalid sizes x={self.x} n={self.n} d={self.d} t={self.t}")
        if self.fusion_mode not in FUSION_MODES:
            raise ConfigError(f"fusion_mode must be one of {FUSION_MODES}, got {self.fusion_mode!r}")
        if self.lut_mode not in LUT_MODES:
            raise ConfigError(f"lut_mode must be one of {LUT_MODES}, got {self.lut_mode!r}")
        if self.backbone_channels and self.backbone_channels[-1] != self.d:
            raise ConfigError(
                f"backbone must end with d={self.d} channels, got {self.backbone_channels}"
            )
        if self.fusion_mode == "attention" and self.lut_mode == "cp" and self.t != self.x:
            raise ConfigError(f"cp attention mode needs one token per component (t={self.t}, x={self.x})")
        if self.heads < 1 or self.d % self.heads:
            raise ConfigError(f"heads={self.heads} must divide d={self.d}")
        if self.basis_count < 1 or self.input_size < 1:
            raise ConfigError("basis_count and input_size must be positive")

    @property
    def dense_chunk(self) -> int:
        """Grid values produced per token by the dense head."""
        return -(-3 * self.n ** 3 // self.t)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["backbone_channels"] = list(self.backbone_channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Ordered name -> shape map of every learnable tensor."""
    c = config
    shapes: dict[str, tuple[int, ...]] = {}
    c_in = 3
    for k, c_out in enumerate(c.backbone_channels, start=1):
        shapes[f"conv{k}.weight"] = (c_out, c_in, 3, 3)
        shapes[f"conv{k}.bias"] = (c_out,)
        c_in = c_out
    if c.fusion_mode == "attention":
        for a in "KQV":
            shapes[f"priori_{a}"] = (c.t, c.d)
        for a in "KQV":
            shapes[f"proj_{a}.weight"] = (c.d, 2 * c.d)
            shapes[f"proj_{a}.bias"] = (c.d,)
        if c.lut_mode == "cp":
            shapes["z_head.weight"] = (9 * c.n, c.d)
            shapes["z_head.bias"] = (9 * c.n,)
        else:
            shapes["dense_head.weight"] = (c.dense_chunk, c.d)
            shapes["dense_head.bias"] = (c.dense_chunk,)
    else:
        shapes["weight_head.weight"] = (c.basis_count, c.d)
        shapes["weight_head.bias"] = (c.basis_count,)
        if c.lut_mode == "cp":
            shapes["basis_cp"] = (c.basis_count, 9, c.x, c.n)
        else:
            shapes["basis_lut"] = (c.basis_count, 3, c.n, c.n, c.n)
    return shapes


HEAD_PARAMS = ("z_head.weight", "z_head.bias", "dense_head.weight", "dense_head.bias", "basis_cp", "basis_lut")


def identity_cp_bias(n: int, x: int, dtype=np.float64) -> np.ndarray:
    """Per-token head bias whose rank-``x`` CP bank rebuilds an all-zero residual.

    Each output channel's factor along its own input axis (bank rows 0, 4, 8)
    is zero, so the rebuilt grid is exactly 0, while its two cross-axis factors
    are ``1/sqrt(x)``: the own-axis factors still receive gradient and the
    ``x`` components start out averaged rather than summed.
    """
    bias = np.full((9, n), 1.0 / math.sqrt(x), dtype=dtype)
    bias[[0, 4, 8]] = 0.0
    return bias.reshape(-1)


def init_params(config: ModelConfig, seed: int = 0, dtype=np.float64) -> dict[str, Tensor]:
    """Seeded initialisation whose forward pass is the identity mapping."""
    rng = np.random.default_rng(seed)
    shapes = param_shapes(config)
    params = {}
    for name, shape in shapes.items():
        if name.startswith("priori_"):
            value = rng.normal(0.0, 0.02, size=shape)
        elif name == "z_head.bias":
            value = identity_cp_bias(config.n, config.x, dtype)
        elif name == "basis_cp":
            value = np.broadcast_to(identity_cp_bias(config.n, config.x).reshape(9, 1, config.n), shape)
        elif name in HEAD_PARAMS:
            value = np.zeros(shape)
        else:
            weight_shape = shapes[name.rsplit(".", 1)[0] + ".weight"]
            fan_in = int(np.prod(weight_shape[1:]))
            bound = 1.0 / math.sqrt(fan_in)
            value = rng.uniform(-bound, bound, size=shape)
        params[name] = Tensor(value, requires_grad=True, name=name, dtype=dtype)
    return params


def zero_heads(params: dict[str, Tensor]) -> dict[str, Tensor]:
    """Copy of ``params`` with every LUT-producing head set to zero."""
    out = {}
    for name, p in params.items():
        data = np.zeros_like(p.data) if name in HEAD_PARAMS else p.data
        out[name] = Tensor(data, requires_grad=p.requires_grad, name=name)
    return out


def check_params(params: dict[str, Tensor], config: ModelConfig) -> None:
    shapes = param_shapes(config)
    if list(params) != list(shapes):
        missing = sorted(set(shapes) - set(params))
        extra = sorted(set(params) - set(shapes))
        raise ShapeError(f"parameter set does not match config (missing={missing}, unexpected={extra})")
    for name, shape in shapes.items():
        if params[name].shape != shape:
            raise ShapeError(f"{name}: shape {params[name].shape} != expected {shape}")
        if not np.all(np.isfinite(params[name].data)):
            raise ValueError(f"{name}: non-finite values")


# forward pieces -------------------------------------------------------------

def downsample(image, config: ModelConfig) -> np.ndarray:
    size = config.input_size
    return bilinear_resize(image, size, size)


def backbone(small: np.ndarray, params: dict[str, Tensor], config: ModelConfig) -> Tensor:
    """Feature vector of an already-downsampled ``S x S x 3`` image."""
    dtype = params["conv1.weight"].dtype if config.backbone_channels else np.float64
    h = Tensor(np.transpose(small, (2, 0, 1)), dtype=dtype)
    for k in range(1, len(config.backbone_channels) + 1):
        h = ops.conv2d(h, params[f"conv{k}.weight"], params[f"conv{k}.bias"], stride=2, padding=1)
        h = ops.leaky_relu(h, config.slope)
    return ops.global_avg_pool(h)


def extract_feature(image, params: dict[str, Tensor], config: ModelConfig) -> Tensor:
    img = as_image(image)
    if img.size == 0:
        raise ValueError("empty image")
    return backbone(downsample(img, config), params, config)


def attention_map(f: Tensor, params: dict[str, Tensor], config: ModelConfig):
    """Mixed value tokens ``T x d`` and the per-head ``T x T`` attention weights."""
    if f.shape != (config.d,):
        raise ShapeError(f"feature must have shape ({config.d},), got {f.shape}")
    ft = ops.tile_rows(f, config.t)
    adapted = {}
    for a in "KQV":
        joined = ops.concat([params[f"priori_{a}"], ft], axis=-1)
        adapted[a] = ops.linear(joined, params[f"proj_{a}.weight"], params[f"proj_{a}.bias"])
    width = config.d // config.heads
    scale = 1.0 / math.sqrt(width)
    mixed, weights = [], []
    for hd in range(config.heads):
        cols = slice(hd * width, (hd + 1) * width)
        q = adapted["Q"] if config.heads == 1 else ops.getitem(adapted["Q"], (slice(None), cols))
        k = adapted["K"] if config.heads == 1 else ops.getitem(adapted["K"], (slice(None), cols))
        v = adapted["V"] if config.heads == 1 else ops.getitem(adapted["V"], (slice(None), cols))
        attn = ops.softmax_rows(ops.mul(ops.matmul(q, ops.transpose(k)), scale))
        mixed.append(ops.matmul(attn, v))
        weights.append(attn)
    out = mixed[0] if config.heads == 1 else ops.concat(mixed, axis=-1)
    return out, weights


def fuse_attention(f: Tensor, params: dict[str, Tensor], config: ModelConfig) -> Tensor:
    """CP factor bank ``9 x X x N`` from the image feature via attention."""
    if config.fusion_mode != "attention" or config.lut_mode != "cp":
        raise ConfigError("fuse_attention needs fusion_mode='attention' and lut_mode='cp'")
    mixed, _ = attention_map(f, params, config)
    rows = ops.linear(mixed, params["z_head.weight"], params["z_head.bias"])
    bank = ops.reshape(rows, (config.t, 9, config.n))
    return ops.transpose(bank, (1, 0, 2))


def fuse_linear(f: Tensor, params: dict[str, Tensor], config: ModelConfig) -> Tensor:
    """Blend of the basis banks (or dense basis grids) weighted by ``weight_head(f)``."""
    if config.fusion_mode != "linear":
        raise ConfigError("fuse_linear needs fusion_mode='linear'")
    w = ops.linear(ops.reshape(f, (1, config.d)), params["weight_head.weight"], params["weight_head.bias"])
    basis = params["basis_cp"] if config.lut_mode == "cp" else params["basis_lut"]
    flat = ops.reshape(basis, (config.basis_count, -1))
    return ops.reshape(ops.matmul(w, flat), basis.shape[1:])


def dense_residual(f: Tensor, params: dict[str, Tensor], config: ModelConfig) -> Tensor:
    mixed, _ = attention_map(f, params, config)
    chunks = ops.linear(mixed, params["dense_head.weight"], params["dense_head.bias"])
    total = 3 * config.n ** 3
    flat = ops.getitem(ops.reshape(chunks, (-1,)), slice(0, total))
    return ops.reshape(flat, (3, config.n, config.n, config.n))


def residual_from_feature(f: Tensor, params: dict[str, Tensor], config: ModelConfig) -> Lut3D:
    if config.fusion_mode == "attention":
        if config.lut_mode == "cp":
            return reconstruct(fuse_attention(f, params, config))
        return Lut3D(dense_residual(f, params, config))
    mixed = fuse_linear(f, params, config)
    return reconstruct(mixed) if config.lut_mode == "cp" else Lut3D(mixed)


def predict_residual(image, params: dict[str, Tensor], config: ModelConfig) -> Lut3D:
    return residual_from_feature(extract_feature(image, params, config), params, config)


def forward(image, params: dict[str, Tensor], config: ModelConfig, clamp: bool = True):
    """Return ``(residual_lut, enhanced)``.

    With ``clamp=False`` the enhanced image is the raw differentiable sum
    (a :class:`Tensor`); otherwise it is a clamped array.
    """
    img = as_image(image)
    residual = predict_residual(img, params, config)
    return residual, enhance_residual(img, residual, clamp=clamp)


# parameter accounting --------------------------------------------------------

@dataclass
class ParamReport:
    config: ModelConfig
    entries: list[tuple[str, tuple[int, ...], int]] = field(default_factory=list)

    @property
    def total(self) -> int:
        return sum(count for _, _, count in self.entries)

    def group_totals(self) -> dict[str, int]:
        groups: dict[str, int] = {}
        for name, _, count in self.entries:
            key = _group_of(name)
            groups[key] = groups.get(key, 0) + count
        return groups

    def format(self) -> str:
        c = self.config
        lines = [f"config: fusion={c.fusion_mode} lut={c.lut_mode} x={c.x} n={c.n} d={c.d} t={c.t}"]
        for name, shape, count in self.entries:
            dims = "x".join(map(str, shape))
            lines.append(f"  {name:<20} {dims:<18} {count:>10,}")
        for group, count in self.group_totals().items():
            lines.append(f"{group:<22} {count:>29,}")
        lines.append(f"{'total':<22} {self.total:>29,}")
        if c.lut_mode == "cp":
            cp_values, dense_values = 9 * c.x * c.n, 3 * c.n ** 3
            lines.append(f"cp factor values per image: {cp_values:,} (dense grid: {dense_values:,})")
        lines.append("paper-reported, architecture under-specified (reference only, not expected to match):")
        for label, value in REPORTED_PARAM_TOTALS.items():
            lines.append(f"  {label:<28} {value:>7}")
        return "\n".join(lines)


def _group_of(name: str) -> str:
    if name.startswith("conv"):
        return "backbone"
    if name.startswith("priori_"):
        return "priori tokens"
    if name.startswith("proj_"):
        return "projections"
    return name.split(".")[0]


def count_params(config: ModelConfig) -> ParamReport:
    report = ParamReport(config)
    for name, shape in param_shapes(config).items():
        report.entries.append((name, shape, int(np.prod(shape))))
    return report
