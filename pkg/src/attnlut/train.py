"""Paired-image datasets, the training loop, checkpoints and evaluation."""
from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics
from .image import as_image, bilinear_resize, read_ppm
from .losses import LossWeights, total_loss
from .lut import enhance_residual
from .model import ModelConfig, backbone, check_params, downsample, forward, init_params, residual_from_feature
from .optim import AdamState, adam_step
from .tensor import Tape, Tensor
from .weights import ContainerError, load_container, load_weights, save_container, save_weights

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".ppm",)
CSV_FIELDS = ("epoch", "mse", "smooth", "mono", "total", "train_psnr")


class DatasetError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("; ".join(problems))


class TrainingError(RuntimeError):
    pass


@dataclass
class PairedDataset:
    names: list[str]
    inputs: list[np.ndarray]
    targets: list[np.ndarray]

    def __post_init__(self):
        problems = []
        if not self.names:
            problems.append("dataset is empty")
        if not (len(self.names) == len(self.inputs) == len(self.targets)):
            problems.append("names, inputs and targets differ in length")
        for name, a, b in zip(self.names, self.inputs, self.targets):
            if np.shape(a) != np.shape(b):
                problems.append(f"{name}: input {np.shape(a)} and target {np.shape(b)} differ in size")
        if problems:
            raise DatasetError(problems)
        self.inputs = [as_image(a) for a in self.inputs]
        self.targets = [as_image(b) for b in self.targets]

    def __len__(self) -> int:
        return len(self.names)

    @classmethod
    def from_directory(cls, root) -> "PairedDataset":
        """Pairs ``root/input/NAME`` with ``root/target/NAME``; all problems are reported together."""
        root = Path(root)
        in_dir, tg_dir = root / "input", root / "target"
        problems = [f"missing directory {d}" for d in (in_dir, tg_dir) if not d.is_dir()]
        if problems:
            raise DatasetError(problems)

        def listing(d):
            return {p.name: p for p in sorted(d.iterdir()) if p.suffix.lower() in IMAGE_SUFFIXES}

        inputs, targets = listing(in_dir), listing(tg_dir)
        problems += [f"{name}: no matching target" for name in inputs if name not in targets]
        problems += [f"{name}: target has no matching input" for name in targets if name not in inputs]
        names, ins, tgs = [], [], []
        for name in sorted(set(inputs) & set(targets)):
            try:
                a, b = read_ppm(inputs[name]), read_ppm(targets[name])
            except (OSError, ValueError) as exc:
                problems.append(str(exc))
                continue
            if a.shape != b.shape:
                problems.append(f"{name}: input {a.shape[1]}x{a.shape[0]} and target {b.shape[1]}x{b.shape[0]} differ")
                continue
            names.append(name)
            ins.append(a)
            tgs.append(b)
        if not inputs and not targets:
            problems.append(f"no {'/'.join(IMAGE_SUFFIXES)} images under {root}")
        if problems:
            raise DatasetError(problems)
        return cls(names, ins, tgs)


@dataclass
class TrainConfig:
    epochs: int = 400
    lr: float = 1e-4
    seed: int = 0
    # per-term mean keeps the published weights on the MSE's scale
    loss: LossWeights = field(default_factory=lambda: LossWeights(reduction="mean"))
    model: ModelConfig = field(default_factory=ModelConfig)
    checkpoint_every: int = 0
    checkpoint_dir: str | None = None
    train_size: int | None = None
    batch_size: int = 1

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be at least 1, got {self.epochs}")
        if not self.lr > 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.batch_size != 1:
            raise ValueError("only batch_size=1 is supported")
        if self.checkpoint_every and not self.checkpoint_dir:
            raise ValueError("checkpoint_every needs checkpoint_dir")


@dataclass
class EpochLog:
    epoch: int
    mse: float
    smooth: float
    mono: float
    total: float
    train_psnr: float

    def row(self) -> dict:
        return {k: getattr(self, k) for k in CSV_FIELDS}


@dataclass
class TrainResult:
    params: dict[str, Tensor]
    config: ModelConfig
    adam: AdamState
    epochs: list[EpochLog]
    step_losses: list[float]
    epochs_done: int


def epoch_order(seed: int, epoch: int, count: int) -> np.ndarray:
    """Fisher-Yates permutation keyed by (seed, epoch)."""
    rng = np.random.Generator(np.random.Philox(key=[seed & (2**64 - 1), epoch]))
    return rng.permutation(count)


# checkpoints -----------------------------------------------------------------

def save_checkpoint(path, params, model_config: ModelConfig, adam: AdamState, epochs_done: int, seed: int) -> None:
    """Weights container at ``path`` plus an optimizer sidecar at ``path + '.adam'``."""
    path = os.fspath(path)
    save_weights(params, model_config, path)
    names = list(params)
    tensors = {}
    for name, m, v in zip(names, adam.m, adam.v):
        tensors[f"m/{name}"] = m
        tensors[f"v/{name}"] = v
    extra = {
        "t": adam.t, "lr": adam.lr, "beta1": adam.beta1, "beta2": adam.beta2, "eps": adam.eps,
        "epochs_done": epochs_done, "seed": seed, "params": names,
    }
    save_container(path + ".adam", tensors, model_config.to_dict(), extra)


def load_checkpoint(path):
    """Return ``(params, model_config, adam_state, epochs_done, seed)``."""
    path = os.fspath(path)
    params, config = load_weights(path)
    header, arrays = load_container(path + ".adam")
    extra = header.get("extra") or {}
    names = extra.get("params")
    if names != list(params):
        raise ContainerError(f"{path}.adam: optimizer state does not match the weights")
    adam = AdamState(lr=extra["lr"], beta1=extra["beta1"], beta2=extra["beta2"], eps=extra["eps"], t=extra["t"])
    adam.m = [arrays[f"m/{n}"] for n in names]
    adam.v = [arrays[f"v/{n}"] for n in names]
    return params, config, adam, int(extra["epochs_done"]), int(extra["seed"])


def write_csv_log(path, epochs: list[EpochLog]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for e in epochs:
            writer.writerow(e.row())


# training --------------------------------------------------------------------

def _prepare(dataset: PairedDataset, config: TrainConfig):
    items = []
    for name, a, b in zip(dataset.names, dataset.inputs, dataset.targets):
        if config.train_size:
            a = bilinear_resize(a, config.train_size, config.train_size)
            b = bilinear_resize(b, config.train_size, config.train_size)
        items.append((name, a, b, downsample(a, config.model)))
    return items


def train(dataset: PairedDataset, config: TrainConfig, resume=None, log_path=None) -> TrainResult:
    """Minimise the reconstruction + regulariser objective with Adam, one pair per step.

    ``resume`` is a checkpoint path; training continues from its epoch count
    up to ``config.epochs`` and reproduces an uninterrupted run bit for bit.
    """
    if resume is not None:
        params, model_config, adam, start, seed = load_checkpoint(resume)
        if model_config != config.model or seed != config.seed:
            raise TrainingError("checkpoint model config / seed differ from the training config")
        adam.lr = config.lr
    else:
        model_config = config.model
        params = init_params(model_config, seed=config.seed)
        start = 0
    check_params(params, model_config)
    plist = list(params.values())
    if resume is None:
        adam = AdamState.for_params(plist, lr=config.lr)

    items = _prepare(dataset, config)
    epochs: list[EpochLog] = []
    step_losses: list[float] = []
    for epoch in range(start, config.epochs):
        sums = np.zeros(5)
        for position, idx in enumerate(epoch_order(config.seed, epoch, len(items))):
            name, img, target, small = items[idx]
            with Tape() as tape:
                residual = residual_from_feature(backbone(small, params, model_config), params, model_config)
                pred = enhance_residual(img, residual, clamp=False)
                parts = total_loss(pred, target, residual, config.loss)
            values = parts.values()
            if not math.isfinite(values["total"]):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch + 1}, step {position + 1} (pair {name}): {values}"
                )
            grads = tape.backward(parts.total)
            adam_step(adam, plist, grads.for_params(plist))
            step_losses.append(values["total"])
            p = metrics.psnr(np.clip(pred.data, 0.0, 1.0), target)
            sums += [values["mse"], values["smooth"], values["mono"], values["total"], p]
        mean = sums / len(items)
        entry = EpochLog(epoch + 1, *map(float, mean))
        epochs.append(entry)
        log.info("epoch %d: total=%.6g mse=%.6g psnr=%.3f", entry.epoch, entry.total, entry.mse, entry.train_psnr)
        if config.checkpoint_every and (epoch + 1) % config.checkpoint_every == 0:
            os.makedirs(config.checkpoint_dir, exist_ok=True)
            ckpt = os.path.join(config.checkpoint_dir, f"epoch_{epoch + 1:04d}.alut")
            save_checkpoint(ckpt, params, model_config, adam, epoch + 1, config.seed)
        if log_path is not None:
            write_csv_log(log_path, epochs)
    return TrainResult(params, model_config, adam, epochs, step_losses, config.epochs)


# evaluation ------------------------------------------------------------------

@dataclass
class ImageScores:
    name: str
    psnr: float
    ssim: float
    delta_e: float


@dataclass
class EvalReport:
    images: list[ImageScores]

    @property
    def psnr(self) -> float:
        return float(np.mean([s.psnr for s in self.images]))

    @property
    def ssim(self) -> float:
        return float(np.mean([s.ssim for s in self.images]))

    @property
    def delta_e(self) -> float:
        return float(np.mean([s.delta_e for s in self.images]))

    def format(self) -> str:
        lines = [f"{s.name}\tpsnr={s.psnr:.4f}\tssim={s.ssim:.4f}\tdelta_e={s.delta_e:.4f}" for s in self.images]
        lines.append(f"mean\tpsnr={self.psnr:.4f}\tssim={self.ssim:.4f}\tdelta_e={self.delta_e:.4f}")
        return "\n".join(lines)


def evaluate(dataset: PairedDataset, params: dict[str, Tensor], config: ModelConfig) -> EvalReport:
    check_params(params, config)
    scores = []
    for name, img, target in zip(dataset.names, dataset.inputs, dataset.targets):
        _, out = forward(img, params, config)
        scores.append(ImageScores(name, metrics.psnr(out, target), metrics.ssim(out, target), metrics.delta_e(out, target)))
    return EvalReport(scores)


# synthetic data ----------------------------------------------------------------

def synthetic_image(rng: np.random.Generator, height: int = 32, width: int = 32) -> np.ndarray:
    """Smooth sinusoidal colour field with mild noise, values in [0, 1]."""
    yy, xx = np.mgrid[0:height, 0:width] / max(height, width)
    chans = []
    for _ in range(3):
        fx, fy, phase = rng.uniform(0.5, 3.0, 3)
        chans.append(0.5 + 0.5 * np.sin(2 * np.pi * (fx * xx + fy * yy) + 3 * phase))
    img = np.stack(chans, axis=-1) * rng.uniform(0.6, 1.0)
    return np.clip(img + rng.normal(0.0, 0.02, img.shape), 0.0, 1.0)


def gamma_pairs(count: int = 8, gamma: float = 1.8, seed: int = 0, size: int = 32) -> PairedDataset:
    """Toy set whose targets are the inputs gamma-encoded (``x ** (1 / gamma)``)."""
    rng = np.random.default_rng(seed)
    inputs = [synthetic_image(rng, size, size) for _ in range(count)]
    targets = [x ** (1.0 / gamma) for x in inputs]
    return PairedDataset([f"toy_{k:02d}" for k in range(count)], inputs, targets)


def identity_baseline(dataset: PairedDataset) -> float:
    return float(np.mean([metrics.psnr(a, b) for a, b in zip(dataset.inputs, dataset.targets)]))
