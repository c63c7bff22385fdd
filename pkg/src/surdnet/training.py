"""Training loop, full-image inference and PSNR evaluation.

Per epoch: deterministic shuffle (derived from seed and epoch number, so a
checkpoint resume replays the identical schedule), minibatch SGD in train
mode, then a validation pass in infer mode.  A checkpoint (weights plus a
trailer with epoch/optimizer/seed state) and one metrics CSV row are written
per epoch.

The desk default learning rate is 0.1 with a global gradient-norm clip of
0.1; the literal lr = 2e-9 / 50-epoch setting remains selectable but produces
negligible updates at small scale.
"""

import csv
import math
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, TrainingError
from .imaging import bicubic_resize, load_ppm, psnr, save_ppm
from .layers import SgdOptimizer, mse_loss
from .model import (SurdcnnConfig, build_surdcnn, load_weights, predict_residual,
                    read_trailer, save_weights)
from .noise import read_dataset, read_manifest
from .rng import SeededRng

METRICS_HEADER = ["epoch", "train_loss", "val_loss", "val_psnr_gain"]

# learning-rate presets: desk-scale default vs the literal reference setting
DESK_LR = 0.1
DESK_CLIP = 0.1
LITERAL_LR = 2e-9
LITERAL_EPOCHS = 50


@dataclass
class TrainConfig:
    dataset_path: str
    checkpoint_path: str
    metrics_path: str
    learning_rate: float = DESK_LR
    clip_norm: Optional[float] = DESK_CLIP
    epochs: int = 15
    batch_size: int = 64
    seed: int = 0
    resume: bool = False
    precision: str = "f32"  # or "f64"
    manifest_path: Optional[str] = None
    model_config: Optional[SurdcnnConfig] = None
    verbose: bool = False

    def validate(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        if self.precision not in ("f32", "f64"):
            raise ConfigError("precision must be f32 or f64")


def _psnr_floored(a, b):
    mse = max(float(np.mean((np.asarray(a, dtype=np.float64) - b) ** 2)), 1e-12)
    return 10.0 * math.log10(1.0 / mse)


def _diagnose_nonfinite(net, batch):
    x = batch
    for i, layer in enumerate(net.layers):
        x = layer.forward(x, training=net.training)
        if not np.all(np.isfinite(x)):
            return "layer %d (%s)" % (i, type(layer).__name__)
    return "loss"


def _epoch_passes(net, inputs, targets, batch_size, order, opt=None):
    """One pass over inputs[order]; trains when opt is given.  Returns mean loss."""
    total, count = 0.0, 0
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        x = inputs[idx]
        t = targets[idx]
        pred = net.forward(x)
        loss, grad = mse_loss(pred, t)
        if not math.isfinite(loss):
            raise TrainingError("non-finite loss; first offender: %s"
                                % _diagnose_nonfinite(net, x))
        total += loss * len(idx)
        count += len(idx)
        if opt is not None:
            net.backward(grad)
            opt.step(net)
    return total / count


def _validation_metrics(net, inputs, targets, batch_size):
    """(val_loss, mean PSNR gain of the denoised estimate over the input)."""
    net.infer_mode()
    total, gains = 0.0, []
    for start in range(0, len(inputs), batch_size):
        x = inputs[start:start + batch_size]
        t = targets[start:start + batch_size]
        pred = net.forward(x)
        loss, _ = mse_loss(pred, t)
        total += loss * len(x)
        original = x - t  # residual definition: target = input - original
        restored = np.clip(x - pred, 0.0, 1.0)
        for j in range(len(x)):
            gains.append(_psnr_floored(original[j], restored[j])
                         - _psnr_floored(original[j], x[j]))
    return total / len(inputs), float(np.mean(gains))


def _append_metrics(path, row, fresh):
    mode = "w" if fresh else "a"
    with open(path, mode, newline="") as fh:
        writer = csv.writer(fh)
        if fresh:
            writer.writerow(METRICS_HEADER)
        writer.writerow(["%d" % row[0], "%.10g" % row[1], "%.10g" % row[2],
                         "%.10g" % row[3]])


def train(config: TrainConfig):
    """Run (or resume) training; returns (network, metrics rows)."""
    config.validate()
    dtype = np.float64 if config.precision == "f64" else np.float32

    inputs, targets, _ = read_dataset(config.dataset_path)
    manifest_path = config.manifest_path or config.dataset_path + ".manifest"
    if os.path.exists(manifest_path):
        n_train = int(read_manifest(manifest_path)["train_count"])
    else:
        n_train = int(len(inputs) * 0.8)
    inputs = inputs.astype(dtype)
    targets = targets.astype(dtype)
    train_x, train_t = inputs[:n_train], targets[:n_train]
    val_x, val_t = inputs[n_train:], targets[n_train:]

    start_epoch = 0
    if config.resume and os.path.exists(config.checkpoint_path):
        trailer = read_trailer(config.checkpoint_path)
        if trailer is None:
            raise TrainingError("%s has no checkpoint trailer; cannot resume"
                                % config.checkpoint_path)
        net = load_weights(config.checkpoint_path, dtype=dtype)
        start_epoch = int(trailer["epoch"])
    else:
        net = build_surdcnn(config.model_config, SeededRng(config.seed), dtype=dtype)

    opt = SgdOptimizer(config.learning_rate, clip_norm=config.clip_norm)
    rows = []
    for epoch in range(start_epoch + 1, config.epochs + 1):
        shuffle_rng = SeededRng(config.seed).split(epoch)
        order = np.argsort(shuffle_rng.uniform(len(train_x)), kind="stable")
        net.train_mode()
        train_loss = _epoch_passes(net, train_x, train_t, config.batch_size,
                                   order, opt)
        if len(val_x):
            val_loss, val_gain = _validation_metrics(net, val_x, val_t,
                                                     config.batch_size)
        else:
            val_loss, val_gain = float("nan"), float("nan")
        save_weights(net, config.checkpoint_path, trailer={
            "epoch": epoch, "learning_rate": config.learning_rate,
            "clip_norm": config.clip_norm, "seed": config.seed,
            "rng_state": SeededRng(config.seed).split(epoch).state})
        row = (epoch, train_loss, val_loss, val_gain)
        rows.append(row)
        _append_metrics(config.metrics_path, row, fresh=(epoch == start_epoch + 1
                                                         and start_epoch == 0))
        if config.verbose:
            print("epoch %d: train_loss=%.6g val_loss=%.6g val_psnr_gain=%.4f"
                  % row, flush=True)
    return net, rows


def enhance_image(net, lr_image):
    """Bicubic x2 upscale then residual subtraction; (3,h,w) in, (3,2h,2w) out."""
    _, h, w = lr_image.shape
    upscaled = bicubic_resize(lr_image, 2 * h, 2 * w)
    net.infer_mode()
    residual = predict_residual(net, upscaled.astype(np.float32)[None])
    return np.clip(upscaled - residual[0].astype(np.float64), 0.0, 1.0)


def infer(weights_path, noisy_image_path, out_path):
    net = load_weights(weights_path)
    lr_image = load_ppm(noisy_image_path)
    out = enhance_image(net, lr_image)
    save_ppm(out, out_path)
    return out


def evaluate(weights_path, pairs):
    """PSNR of bicubic vs network output against clean images.

    pairs: list of (clean_hr_path, degraded_lr_path).  Returns a dict with
    per-image rows and the mean gain; rows with mismatched dimensions are
    reported and skipped.
    """
    net = load_weights(weights_path)
    rows, errors = [], []
    for clean_path, degraded_path in pairs:
        clean = load_ppm(clean_path)
        degraded = load_ppm(degraded_path)
        _, ch, cw = clean.shape
        _, dh, dw = degraded.shape
        if (ch, cw) != (2 * dh, 2 * dw):
            errors.append((clean_path, "clean %dx%d is not 2x degraded %dx%d"
                           % (ch, cw, dh, dw)))
            continue
        upscaled = bicubic_resize(degraded, ch, cw)
        restored = enhance_image(net, degraded)
        p_bicubic = psnr(clean, upscaled)
        p_net = psnr(clean, restored)
        gain = 0.0 if p_bicubic == p_net else p_net - p_bicubic
        rows.append((os.path.basename(clean_path), p_bicubic, p_net, gain))
    mean_gain = float(np.mean([r[3] for r in rows])) if rows else float("nan")
    return {"rows": rows, "errors": errors, "mean_gain": mean_gain}


def format_eval_report(report):
    lines = ["%-24s %12s %12s %8s" % ("image", "bicubic_db", "network_db", "gain")]
    for name, pb, pn, gain in report["rows"]:
        lines.append("%-24s %12.2f %12.2f %+8.2f" % (name, pb, pn, gain))
    lines.append("mean gain: %+.3f dB" % report["mean_gain"])
    for path, msg in report["errors"]:
        lines.append("skipped %s: %s" % (path, msg))
    return "\n".join(lines)


def write_eval_csv(report, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image", "bicubic_psnr_db", "network_psnr_db", "gain_db"])
        for name, pb, pn, gain in report["rows"]:
            writer.writerow([name, "%.6g" % pb, "%.6g" % pn, "%.6g" % gain])
