"""``attnlut`` command line: enhance, train, eval, LUT interchange, checks, benchmark."""
from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import bench, gradcheck, train
from .image import read_ppm, write_ppm
from .lut import apply_trilinear_parallel, compose_with_identity, read_cube, write_cube
from .model import FUSION_MODES, LUT_MODES, ModelConfig, count_params, forward, predict_residual
from .weights import load_weights, save_weights

PROG = "attnlut"


class CliError(Exception):
    """Failure reported as a single ``attnlut: error: ...`` line."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(f"usage: {self.prog}: {message}")


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _threads(args) -> int:
    return args.threads if args.threads else bench.default_threads()


# subcommands --------------------------------------------------------------------

def cmd_enhance(args) -> None:
    params, config = load_weights(args.weights)
    image, maxval = read_ppm(args.input, return_maxval=True)
    start = time.perf_counter()
    residual, out = forward(image, params, config)
    elapsed = time.perf_counter() - start
    write_ppm(out, args.output, maxval=maxval)
    if args.export_lut:
        write_cube(compose_with_identity(residual), args.export_lut, title=os.path.basename(args.input))
    mpix = image.shape[0] * image.shape[1] / 1e6
    print(f"wrote {args.output} ({image.shape[1]}x{image.shape[0]})")
    print(f"wall time {elapsed:.4f} s, {mpix / max(elapsed, 1e-9):.3f} MPix/s")


def cmd_apply_lut(args) -> None:
    lut = read_cube(args.lut)
    image, maxval = read_ppm(args.input, return_maxval=True)
    out = apply_trilinear_parallel(lut, image, threads=_threads(args))
    write_ppm(np.clip(out, 0.0, 1.0), args.output, maxval=maxval)
    print(f"wrote {args.output} ({image.shape[1]}x{image.shape[0]})")


def cmd_export_lut(args) -> None:
    params, config = load_weights(args.weights)
    image = read_ppm(args.input)
    write_cube(compose_with_identity(predict_residual(image, params, config)), args.output,
               title=os.path.basename(args.input))
    print(f"wrote {args.output} (N={config.n})")


def _model_config(args) -> ModelConfig:
    return ModelConfig(x=args.x, n=args.n, fusion_mode=args.fusion, lut_mode=args.lut, heads=args.heads)


def cmd_train(args) -> None:
    dataset = train.PairedDataset.from_directory(args.data)
    config = train.TrainConfig(
        epochs=args.epochs, lr=args.lr, seed=args.seed, model=_model_config(args),
        checkpoint_every=args.checkpoint_every, checkpoint_dir=args.checkpoint_dir,
        train_size=args.train_size,
    )
    log_path = args.log or os.path.splitext(args.out)[0] + ".csv"
    baseline = train.identity_baseline(dataset)
    result = train.train(dataset, config, resume=args.resume, log_path=log_path)
    save_weights(result.params, result.config, args.out)
    final = result.epochs[-1] if result.epochs else None
    print(f"pairs {len(dataset)}, identity baseline psnr {baseline:.4f} dB")
    if final is not None:
        print(f"epoch {final.epoch}: total {final.total:.6g}, train psnr {final.train_psnr:.4f} dB")
    print(f"wrote {args.out} and {log_path}")


def cmd_eval(args) -> None:
    params, config = load_weights(args.weights)
    dataset = train.PairedDataset.from_directory(args.data)
    print(train.evaluate(dataset, params, config).format())


def cmd_gradcheck(args) -> int:
    report = gradcheck.run_gradcheck(args.seed)
    print(report.format())
    if not report.passed:
        raise CliError("gradcheck failed: " + ", ".join(report.failures))
    return 0


def cmd_bench(args) -> None:
    result = bench.run_bench(args.width, args.height, n=args.n, threads=_threads(args),
                             repeats=args.repeats, seed=args.seed)
    print(result.format())
    if not result.bitwise_equal:
        raise CliError("bench: parallel output differs from serial output")


def cmd_params(args) -> None:
    print(count_params(_model_config(args)).format())


# parser ---------------------------------------------------------------------------

def _add_model_flags(p) -> None:
    p.add_argument("--x", type=_positive_int, default=15, help="CP rank (default 15)")
    p.add_argument("--n", type=int, default=33, help="LUT size (default 33)")
    p.add_argument("--fusion", choices=FUSION_MODES, default="attention")
    p.add_argument("--lut", choices=LUT_MODES, default="cp")
    p.add_argument("--heads", type=_positive_int, default=1, help="attention heads (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog=PROG, description="Attention-fused CP 3D LUT image enhancement.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("enhance", help="enhance one PPM image")
    p.add_argument("--weights", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--export-lut", dest="export_lut", help="also write the composed LUT as .cube")
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("apply-lut", help="map a PPM image through a .cube LUT")
    p.add_argument("--lut", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--threads", type=_positive_int, default=None)
    p.set_defaults(func=cmd_apply_lut)

    p = sub.add_parser("export-lut", help="write the composed LUT predicted for an image")
    p.add_argument("--weights", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_export_lut)

    p = sub.add_parser("train", help="train on DIR/input and DIR/target")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=_positive_int, default=400)
    p.add_argument("--lr", type=_positive_float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    _add_model_flags(p)
    p.add_argument("--log", help="CSV log path (default: OUT with .csv suffix)")
    p.add_argument("--checkpoint-every", dest="checkpoint_every", type=int, default=0)
    p.add_argument("--checkpoint-dir", dest="checkpoint_dir")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--train-size", dest="train_size", type=_positive_int,
                   help="resize pairs to this square size before training")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="mean PSNR / SSIM / delta E of a model on a dataset")
    p.add_argument("--weights", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of every gradient")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("bench", help="LUT lookup throughput, serial vs threaded")
    p.add_argument("--width", type=_positive_int, required=True)
    p.add_argument("--height", type=_positive_int, required=True)
    p.add_argument("--n", type=int, default=33)
    p.add_argument("--threads", type=_positive_int, default=None)
    p.add_argument("--repeats", type=_positive_int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("params", help="parameter count report")
    _add_model_flags(p)
    p.set_defaults(func=cmd_params)
    return parser


def _one_line(exc: BaseException) -> str:
    text = str(exc) or type(exc).__name__
    return " ".join(text.split())


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.func(args)
    except CliError as exc:
        print(f"{PROG}: error: {_one_line(exc)}", file=sys.stderr)
        return 1
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"{PROG}: error: {type(exc).__name__}: {_one_line(exc)}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
