"""edgescout: predict deep-network trainability without training.

Train shallow per-layer decoders against a frozen random network, measure
how the entropy of their input reconstructions evolves with depth, and read
off the saturation cutoff as a correlation-length proxy: a cutoff that
reaches the full depth marks the trainable (near-critical) region of the
(sigma_w^2, sigma_b^2) phase space.
"""

from .cascade import (
    Cascade,
    DecoderLayer,
    DecoderTrainConfig,
    jacobian_vector_product,
    reconstruct,
    reconstruct_from_output,
    train_all_decoders,
    train_decoder,
)
from .cutoff import CutoffResult, detect_cutoff, detect_cutoff_bruteforce
from .data import Dataset, Pmf, load_cifar10, load_mnist_idx, to_pmf, white_noise
from .entropy import (
    EntropyCurve,
    differential_entropy_curve,
    gaussianity_report,
    kl_divergence,
    pixel_differential_entropy,
    relative_entropy_curve,
)
from .meanfield import (
    MeanFieldPoint,
    correlation_depth,
    critical_sigma_w,
    meanfield_point,
    variance_fixed_point,
)
from .nn import (
    MLP,
    ActivationTrace,
    DenseLayer,
    DivergenceError,
    NetworkConfig,
    OptimizerState,
    backprop_mse,
    forward_record,
    init_random,
    optimizer_step,
    train_classifier,
)
from .sweep import PhaseGrid, SweepSpec, run_benchmark, run_sweep, run_validation

__version__ = "0.1.0"
