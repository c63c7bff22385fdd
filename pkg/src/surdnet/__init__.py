"""surdnet: joint single-image super-resolution and denoising.

A 20-layer residual CNN (3x3 convs, batch norm, tanh) trained on degraded
32x32 patches, with a hand-written backward pass, a seeded degradation
pipeline, PPM imaging utilities and a CLI for dataset preparation, training,
inference and PSNR evaluation.
"""

from .errors import (ConfigError, FormatError, ModeError, ParameterError,
                     ShapeError, SizeError, StateError, SurdnetError,
                     TrainingError)
from .estimator import ResidualDenoiserSR
from .imaging import bicubic_resize, load_ppm, psnr, save_ppm
from .layers import BatchNorm2D, Conv2D, SgdOptimizer, TanhLayer, mse_loss
from .model import (Network, SurdcnnConfig, build_surdcnn, count_params,
                    load_weights, predict_residual, save_weights)
from .noise import (NoiseParams, NoiseSpec, PatchSample, add_gaussian,
                    add_poisson, build_dataset, degrade, extract_patches,
                    random_noise_spec)
from .rng import SeededRng
from .tensor import Shape4, normal_fill, zeros
from .training import TrainConfig, enhance_image, evaluate, infer, train

__version__ = "0.1.0"
