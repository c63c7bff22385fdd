"""Command-line entry point.

Subcommands: prepare (build a patch dataset), train, infer, eval, inspect
(parameter counts / weight-file dump), noise (apply a degradation spec to an
image).  Flags may also be supplied via --config FILE containing "key = value"
lines named after the long flags (without the leading dashes, dashes or
underscores both accepted); explicit flags win.  --seed falls back to the
SURDNET_SEED environment variable when neither flag nor config sets it.
"""

import argparse
import os
import sys

import numpy as np

from .errors import SurdnetError
from .imaging import load_ppm, save_ppm
from .model import (build_surdcnn, count_params, load_weights, read_trailer,
                    save_weights)
from .noise import (NoiseParams, NoiseSpec, apply_noise, build_dataset,
                    read_manifest)
from .rng import SeededRng
from .training import (DESK_CLIP, DESK_LR, LITERAL_EPOCHS, LITERAL_LR, TrainConfig,
                       evaluate, format_eval_report, infer, train,
                       write_eval_csv)


def _default_seed():
    return int(os.environ.get("SURDNET_SEED", "0"))


def _apply_config_file(parser, args, argv):
    """Overlay config-file values onto options the command line left default."""
    if not getattr(args, "config", None):
        return args
    entries = read_manifest(args.config)  # same key = value syntax
    explicit = set()
    for tok in argv:
        if tok.startswith("--"):
            explicit.add(tok[2:].split("=")[0].replace("-", "_"))
    for action in parser._actions:
        if not action.option_strings or action.dest in ("help", "config"):
            continue
        key = action.dest
        raw = entries.get(key, entries.get(key.replace("_", "-")))
        if raw is None or key in explicit:
            continue
        if isinstance(action, (argparse._StoreTrueAction,)):
            setattr(args, key, raw.lower() in ("1", "true", "yes"))
        elif action.type is not None:
            setattr(args, key, action.type(raw))
        else:
            setattr(args, key, raw)
    return args


def _add_common(p):
    p.add_argument("--config", help="key = value file mirroring the flags")
    p.add_argument("--seed", type=int, default=None,
                   help="RNG seed (default: $SURDNET_SEED or 0)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="surdnet",
        description="Joint super-resolution and denoising residual CNN")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="build a degraded-patch dataset")
    _add_common(p)
    p.add_argument("--images", required=True, help="directory of P6 PPM images")
    p.add_argument("--data", required=True, help="output dataset file")
    p.add_argument("--manifest", default=None,
                   help="output manifest (default: DATA.manifest)")
    p.add_argument("--patches-per-image", type=int, default=1000)
    p.add_argument("--gaussian-var-max", type=float, default=4e-4)
    p.add_argument("--poisson-scale-min", type=float, default=125.0)
    p.add_argument("--poisson-scale-max", type=float, default=1e5)

    p = sub.add_parser("train", help="train the network on a dataset")
    _add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--manifest", default=None)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--metrics", required=True, help="metrics CSV path")
    p.add_argument("--lr", type=float, default=DESK_LR)
    p.add_argument("--clip-norm", type=float, default=DESK_CLIP,
                   help="global gradient-norm clip; <= 0 disables")
    p.add_argument("--epochs", type=int, default=15)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--precision", choices=("f32", "f64"), default="f32")
    p.add_argument("--resume", action="store_true")
    p.add_argument("--paper-literal", action="store_true",
                   help="use lr=2e-9, 50 epochs, no clipping")
    p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("infer", help="super-resolve + denoise one image")
    _add_common(p)
    p.add_argument("--weights", required=True)
    p.add_argument("--input", required=True, help="noisy low-res PPM")
    p.add_argument("--output", required=True, help="restored PPM, 2x size")

    p = sub.add_parser("eval", help="PSNR table: bicubic vs network")
    _add_common(p)
    p.add_argument("--weights", required=True)
    p.add_argument("--pairs", nargs="+", required=True,
                   metavar="CLEAN:DEGRADED",
                   help="clean HR and degraded LR image paths, colon-separated")
    p.add_argument("--csv", default=None, help="also write the table as CSV")

    p = sub.add_parser("inspect", help="parameter counts and weight-file dump")
    _add_common(p)
    p.add_argument("--weights", default=None,
                   help="weight file (default: a fresh default build)")

    p = sub.add_parser("noise", help="apply a degradation spec to an image")
    _add_common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--gaussian-var", type=float, default=None)
    p.add_argument("--poisson-scale", type=float, default=None)

    subparsers = dict(sub.choices)
    return parser, subparsers


def _cmd_prepare(args, seed):
    manifest = args.manifest or args.data + ".manifest"
    params = NoiseParams(gaussian_var_max=args.gaussian_var_max,
                         poisson_scale_min=args.poisson_scale_min,
                         poisson_scale_max=args.poisson_scale_max)
    info = build_dataset(args.images, manifest, args.data, seed,
                         patches_per_image=args.patches_per_image, params=params)
    print("wrote %s (%s train + %s val patches) and %s"
          % (args.data, info["train_count"], info["val_count"], manifest))


def _cmd_train(args, seed):
    lr, clip, epochs = args.lr, args.clip_norm, args.epochs
    if args.paper_literal:
        lr, clip, epochs = LITERAL_LR, None, LITERAL_EPOCHS
    if clip is not None and clip <= 0:
        clip = None
    config = TrainConfig(
        dataset_path=args.dataset, checkpoint_path=args.checkpoint,
        metrics_path=args.metrics, learning_rate=lr, clip_norm=clip,
        epochs=epochs, batch_size=args.batch_size, seed=seed,
        resume=args.resume, precision=args.precision,
        manifest_path=args.manifest, verbose=not args.quiet)
    train(config)
    print("final checkpoint: %s; metrics: %s" % (args.checkpoint, args.metrics))


def _cmd_inspect(args):
    if args.weights:
        net = load_weights(args.weights)
        trailer = read_trailer(args.weights)
    else:
        net = build_surdcnn(rng=SeededRng(_default_seed()))
        trailer = None
    trainable, non_trainable, total = count_params(net)
    print("trainable: %d, non-trainable: %d, total: %d"
          % (trainable, non_trainable, total))
    cfg = net.config
    print("depth: %d, width: %d, bn layers: %s, tanh layers: %s"
          % (cfg.depth, cfg.width, sorted(cfg.bn_layers), sorted(cfg.tanh_layers)))
    for i, layer in enumerate(net.layers):
        counts = layer.param_counts()
        print("  layer %2d: %-12s params=%d+%d" % (i, type(layer).__name__,
                                                   counts[0], counts[1]))
    if trailer:
        print("checkpoint: epoch=%d lr=%g clip=%s seed=%d"
              % (trailer["epoch"], trailer["learning_rate"],
                 trailer["clip_norm"], trailer["seed"]))


def _cmd_noise(args, seed):
    image = load_ppm(args.input)
    spec = NoiseSpec(args.gaussian_var, args.poisson_scale, seed)
    save_ppm(np.asarray(apply_noise(image, spec)), args.output)
    print("wrote %s" % args.output)


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subparsers = build_parser()
    args = parser.parse_args(argv)
    args = _apply_config_file(subparsers[args.command], args, argv)
    seed = args.seed if args.seed is not None else _default_seed()
    try:
        if args.command == "prepare":
            _cmd_prepare(args, seed)
        elif args.command == "train":
            _cmd_train(args, seed)
        elif args.command == "infer":
            infer(args.weights, args.input, args.output)
            print("wrote %s" % args.output)
        elif args.command == "eval":
            pairs = []
            for spec in args.pairs:
                clean, _, degraded = spec.partition(":")
                if not degraded:
                    parser.error("--pairs entries must be CLEAN:DEGRADED")
                pairs.append((clean, degraded))
            report = evaluate(args.weights, pairs)
            print(format_eval_report(report))
            if args.csv:
                write_eval_csv(report, args.csv)
        elif args.command == "inspect":
            _cmd_inspect(args)
        elif args.command == "noise":
            _cmd_noise(args, seed)
    except (SurdnetError, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
