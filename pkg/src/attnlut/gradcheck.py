"""Finite-difference verification of every differentiable operation.

Each check builds a scalar ``L = sum(op(inputs) * P)`` with a fixed random
projection ``P``, differentiates it on the tape and compares against central
differences with step ``eps``. The error reported per input is
``|g_tape - g_fd| / max(|g_tape|, |g_fd|)`` (vector 2-norms) and a check keeps
the worst input.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import cp, losses, ops
from .lut import Lut3D, apply_trilinear, compose_with_identity, enhance_residual
from .model import ModelConfig, downsample, init_params, residual_from_feature
from .tensor import Tape, Tensor

EPS = 1e-4
OP_TOLERANCE = 1e-5
END_TO_END_TOLERANCE = 1e-4


@dataclass(frozen=True)
class CheckResult:
    name: str
    error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.error < self.tolerance)


@dataclass
class GradcheckReport:
    results: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def failures(self) -> list[str]:
        return [r.name for r in self.results if not r.passed]

    def format(self) -> str:
        lines = [f"{'check':<28} {'max rel err':>12} {'tolerance':>10}  status"]
        for r in self.results:
            lines.append(f"{r.name:<28} {r.error:>12.3e} {r.tolerance:>10.0e}  {'ok' if r.passed else 'FAIL'}")
        verdict = "all checks passed" if self.passed else "FAILED: " + ", ".join(self.failures)
        lines.append(verdict)
        return "\n".join(lines)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / scale)


def _scalar(fn: Callable, arrays: list[np.ndarray], proj) -> tuple[float, list[np.ndarray]]:
    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    with Tape() as tape:
        out = fn(*leaves)
        loss = ops.sum(ops.mul(out, Tensor(proj))) if proj is not None else out
    grads = tape.backward(loss)
    return loss.item(), [grads[t] for t in leaves]


def _value(fn: Callable, arrays: list[np.ndarray], proj) -> float:
    out = fn(*[Tensor(a) for a in arrays])
    return float(np.sum(out.data * proj)) if proj is not None else out.item()


def check_function(name: str, fn: Callable, arrays: list[np.ndarray], rng: np.random.Generator,
                   eps: float = EPS, tolerance: float = OP_TOLERANCE) -> CheckResult:
    """Compare tape gradients of ``fn`` with central differences for all inputs."""
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    probe = fn(*[Tensor(a) for a in arrays])
    proj = None if probe.ndim == 0 else rng.uniform(-1.0, 1.0, probe.shape)
    _, analytic = _scalar(fn, arrays, proj)
    worst = 0.0
    for k, base in enumerate(arrays):
        numeric = np.zeros_like(base)
        for idx in np.ndindex(base.shape):
            saved = base[idx]
            base[idx] = saved + eps
            up = _value(fn, arrays, proj)
            base[idx] = saved - eps
            down = _value(fn, arrays, proj)
            base[idx] = saved
            numeric[idx] = (up - down) / (2 * eps)
        worst = max(worst, relative_error(analytic[k], numeric))
    return CheckResult(name, worst, tolerance)


# inputs ------------------------------------------------------------------------

def _uniform(rng, *shape):
    return rng.uniform(-2.0, 2.0, shape)


def _away_from_zero(rng, *shape, margin=0.1):
    """Uniform on ``[-2, -margin] U [margin, 2]``: keeps kinks out of reach of ``eps``."""
    return rng.choice([-1.0, 1.0], shape) * rng.uniform(margin, 2.0, shape)


def _hinge_safe_grid(rng, n, margin=0.05):
    """Random ``3 x n^3`` grid whose adjacent differences all avoid 0."""
    while True:
        grid = _uniform(rng, 3, n, n, n)
        if all(np.abs(np.diff(grid, axis=a)).min() > margin for a in (1, 2, 3)):
            return grid


def op_cases(rng: np.random.Generator) -> list[tuple[str, Callable, list[np.ndarray]]]:
    pixels = rng.uniform(0.0, 1.0, (4, 5, 3))
    target = rng.uniform(0.0, 1.0, (4, 5, 3))
    return [
        ("add", ops.add, [_uniform(rng, 3, 4), _uniform(rng, 3, 4)]),
        ("sub", ops.sub, [_uniform(rng, 3, 4), _uniform(rng, 3, 4)]),
        ("neg", ops.neg, [_uniform(rng, 3, 4)]),
        ("mul", ops.mul, [_uniform(rng, 3, 4), _uniform(rng, 3, 4)]),
        ("mul_scalar", lambda a: ops.mul(a, -1.7), [_uniform(rng, 5)]),
        ("square", ops.square, [_uniform(rng, 2, 3)]),
        ("leaky_relu", lambda a: ops.leaky_relu(a, 0.2), [_away_from_zero(rng, 4, 5)]),
        ("relu", ops.relu, [_away_from_zero(rng, 4, 5)]),
        ("sum", ops.sum, [_uniform(rng, 3, 4)]),
        ("mean", ops.mean, [_uniform(rng, 3, 4)]),
        ("reshape", lambda a: ops.reshape(a, (4, 3)), [_uniform(rng, 3, 4)]),
        ("transpose", lambda a: ops.transpose(a, (2, 0, 1)), [_uniform(rng, 2, 3, 4)]),
        ("getitem", lambda a: ops.getitem(a, (slice(1, 3), slice(None, None, 2))), [_uniform(rng, 4, 5)]),
        ("concat", lambda a, b: ops.concat([a, b], axis=-1), [_uniform(rng, 3, 2), _uniform(rng, 3, 4)]),
        ("tile_rows", lambda a: ops.tile_rows(a, 4), [_uniform(rng, 5)]),
        ("axis_diff", lambda a: ops.axis_diff(a, 1), [_uniform(rng, 3, 4, 2)]),
        ("matmul", ops.matmul, [_uniform(rng, 3, 4), _uniform(rng, 4, 2)]),
        ("linear", ops.linear, [_uniform(rng, 3, 4), _uniform(rng, 5, 4), _uniform(rng, 5)]),
        ("softmax_rows", ops.softmax_rows, [_uniform(rng, 3, 5)]),
        ("conv2d", lambda x, w, b: ops.conv2d(x, w, b, stride=2, padding=1),
         [_uniform(rng, 2, 7, 6), _uniform(rng, 3, 2, 3, 3), _uniform(rng, 3)]),
        ("conv2d_stride1", lambda x, w, b: ops.conv2d(x, w, b, stride=1, padding=0),
         [_uniform(rng, 2, 5, 5), _uniform(rng, 2, 2, 3, 3), _uniform(rng, 2)]),
        ("global_avg_pool", ops.global_avg_pool, [_uniform(rng, 3, 4, 5)]),
        ("apply_trilinear", lambda g: apply_trilinear(Lut3D(g), pixels), [_uniform(rng, 3, 3, 3, 3)]),
        ("cp_reconstruct", lambda f: cp.reconstruct(f).grid, [_uniform(rng, 9, 2, 4)]),
        ("compose_with_identity", lambda g: compose_with_identity(Lut3D(g)).grid, [_uniform(rng, 3, 3, 3, 3)]),
        ("mse_loss", lambda p: losses.mse_loss(p, target), [_uniform(rng, 4, 5, 3)]),
        ("smoothness_loss", lambda g: losses.smoothness_loss(Lut3D(g)), [_uniform(rng, 3, 4, 4, 4)]),
        ("smoothness_loss_mean", lambda g: losses.smoothness_loss(Lut3D(g), "mean"), [_uniform(rng, 3, 4, 4, 4)]),
        ("monotonicity_loss", lambda g: losses.monotonicity_loss(Lut3D(g)), [_hinge_safe_grid(rng, 3)]),
        ("monotonicity_loss_mean", lambda g: losses.monotonicity_loss(Lut3D(g), "mean"), [_hinge_safe_grid(rng, 3)]),
    ]


# end to end -----------------------------------------------------------------------

END_TO_END_PARAMS = (
    "conv1.weight", "conv3.bias", "conv5.weight", "priori_Q", "priori_K",
    "proj_V.weight", "proj_Q.bias", "z_head.weight", "z_head.bias",
    "weight_head.weight", "basis_cp", "dense_head.weight", "basis_lut",
)


def _perturbed_params(config: ModelConfig, seed: int):
    """Default initialisation with small random heads so every path carries gradient."""
    rng = np.random.default_rng(seed + 1)
    params = init_params(config, seed=seed)
    for name in ("z_head.weight", "dense_head.weight", "weight_head.weight", "basis_cp", "basis_lut"):
        if name in params:
            params[name].data = params[name].data + rng.normal(0.0, 0.01, params[name].shape)
    return params


def end_to_end_check(config: ModelConfig, seed: int, name: str, samples_per_param: int = 2,
                     eps: float = EPS, tolerance: float = END_TO_END_TOLERANCE) -> CheckResult:
    """d(total loss)/d(sampled scalars) of the full pipeline against central differences."""
    rng = np.random.default_rng(seed)
    image = rng.uniform(0.0, 1.0, (12, 12, 3))
    target = image ** (1.0 / 1.8)
    weights = losses.LossWeights(reduction="mean")
    params = _perturbed_params(config, seed)

    small = downsample(image, config)

    def objective():
        # backbone spelled out so the leaky ReLU sign pattern can be recorded
        active = []
        h = Tensor(np.transpose(small, (2, 0, 1)))
        for k in range(1, len(config.backbone_channels) + 1):
            h = ops.conv2d(h, params[f"conv{k}.weight"], params[f"conv{k}.bias"], stride=2, padding=1)
            active.append(np.packbits(h.data > 0).tobytes())
            h = ops.leaky_relu(h, config.slope)
        residual = residual_from_feature(ops.global_avg_pool(h), params, config)
        pred = enhance_residual(image, residual, clamp=False)
        composed = compose_with_identity(residual).grid.data
        active += [np.packbits(np.diff(composed, axis=a) < 0).tobytes() for a in (1, 2, 3)]
        return losses.total_loss(pred, target, residual, weights).total, tuple(active)

    with Tape() as tape:
        loss, active = objective()
    grads = tape.backward(loss)
    analytic, numeric = [], []
    for pname in END_TO_END_PARAMS:
        if pname not in params:
            continue
        p = params[pname]
        kept, attempts = 0, 0
        while kept < samples_per_param and attempts < 20 * samples_per_param:
            attempts += 1
            idx = tuple(int(rng.integers(0, s)) for s in p.shape)
            saved = p.data[idx]
            p.data[idx] = saved + eps
            up, active_up = objective()
            p.data[idx] = saved - eps
            down, active_down = objective()
            p.data[idx] = saved
            if active_up != active or active_down != active:
                continue  # the step crosses a kink, so the difference quotient is meaningless
            analytic.append(grads[p][idx])
            numeric.append((up.item() - down.item()) / (2 * eps))
            kept += 1
    return CheckResult(name, relative_error(np.array(analytic), np.array(numeric)), tolerance)


def run_gradcheck(seed: int = 0, end_to_end: bool = True) -> GradcheckReport:
    rng = np.random.default_rng(seed)
    report = GradcheckReport()
    for name, fn, arrays in op_cases(rng):
        report.results.append(check_function(name, fn, arrays, rng))
    if end_to_end:
        report.results.append(end_to_end_check(ModelConfig(), seed, "end_to_end"))
        small = ModelConfig(x=3, n=5, backbone_channels=(4, 8), d=8, input_size=16)
        report.results.append(end_to_end_check(replace(small, heads=2), seed, "end_to_end[heads=2]"))
        report.results.append(end_to_end_check(replace(small, fusion_mode="linear"), seed, "end_to_end[linear]"))
        report.results.append(end_to_end_check(replace(small, lut_mode="dense"), seed, "end_to_end[dense]"))
    return report
