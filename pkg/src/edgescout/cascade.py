"""Shallow per-layer decoders and their composition into cascades.

For every layer ell of a frozen network, a single dense decoder is trained
(one epoch, Adam) to reconstruct the layer's input z^{ell-1} from its output
z^ell. Chaining decoders ell, ell-1, ..., 1 maps any hidden activation back
to input space. Decoder training never touches the frozen network, and each
decoder trains independently of the others, so the work parallelizes freely.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .nn import (
    MLP,
    DenseLayer,
    DivergenceError,
    OptimizerState,
    _derived_rng,
    backprop_mse,
    optimizer_step,
)

_SEED_DECODER_INIT = 0xDEC0DE
_SEED_BATCH_ORDER = 0x0BA7C4


class CascadeTrainingError(RuntimeError):
    """One or more decoders failed to train; carries (layer, reason) pairs."""

    def __init__(self, failures: list[tuple[int, str]]):
        self.failures = failures
        detail = "; ".join(f"layer {ell}: {msg}" for ell, msg in failures)
        super().__init__(f"decoder training failed: {detail}")


@dataclass
class DecoderTrainConfig:
    """Hyperparameters for decoder training (single epoch by default)."""

    epochs: int = 1
    learning_rate: float = 1e-3
    batch_size: int = 64
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    max_images: int | None = None  # cap on training rows, None = all

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")


@dataclass
class DecoderLayer:
    """Trained decoder for one network layer: maps N_ell back to N_{ell-1}."""

    layer_index: int
    inner: DenseLayer
    final_training_loss: float


@dataclass
class Cascade:
    """Ordered decoders c^1..c^ell with chained shapes."""

    decoders: list[DecoderLayer]

    def __post_init__(self):
        for m in range(1, len(self.decoders)):
            upper, lower = self.decoders[m], self.decoders[m - 1]
            if upper.inner.n_out != lower.inner.n_in:
                raise ValueError(
                    f"decoder chain broken between layers {m + 1} and {m}: "
                    f"{upper.inner.n_out} -> {lower.inner.n_in}"
                )

    @property
    def depth(self) -> int:
        return len(self.decoders)


def _decoder_list(decoders) -> list[DecoderLayer]:
    return decoders.decoders if isinstance(decoders, Cascade) else list(decoders)


def _init_decoder(dnn: MLP, ell: int, seed: int) -> DenseLayer:
    """Fresh decoder for layer ell: shape-reversed, generic trainable init.

    Weights ~ N(0, 1/N_ell) (fan-in scaled, unit variance parameter), zero
    bias. The first decoder outputs raw pixels, so it is linear; deeper
    decoders target tanh activations in (-1, 1), so they are tanh.
    """
    n_in = dnn.config.widths[ell]
    n_out = dnn.config.widths[ell - 1]
    rng = _derived_rng(seed, _SEED_DECODER_INIT, ell)
    weights = rng.standard_normal((n_out, n_in)) / np.sqrt(n_in)
    activation = "linear" if ell == 1 else "tanh"
    return DenseLayer(weights, np.zeros(n_out), activation)


def _training_images(dataset, cfg: DecoderTrainConfig) -> np.ndarray:
    images = np.asarray(getattr(dataset, "images", dataset), dtype=np.float64)
    if images.ndim != 2 or images.shape[0] < 1:
        raise ValueError("training data must be a nonempty (B, N) matrix")
    if cfg.max_images is not None:
        images = images[: cfg.max_images]
    return images


def _batch_orders(n: int, cfg: DecoderTrainConfig) -> list[list[np.ndarray]]:
    """Shuffled batch index lists, one list per epoch.

    The order depends only on (seed, n, batch size), never on the layer
    index, so every decoder sees the same stream and serial/parallel
    schedules produce identical updates.
    """
    rng = _derived_rng(cfg.seed, _SEED_BATCH_ORDER)
    orders = []
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        orders.append(
            [perm[s : s + cfg.batch_size] for s in range(0, n, cfg.batch_size)]
        )
    return orders


def _train_subset(
    dnn: MLP,
    images: np.ndarray,
    layer_indices: list[int],
    cfg: DecoderTrainConfig,
) -> tuple[dict[int, DecoderLayer], list[tuple[int, str]]]:
    """Train the decoders for layer_indices in one stream over the data.

    Each batch is pushed once through the frozen network up to the highest
    requested layer; every decoder in the subset then takes its own Adam
    step on its (z^ell -> z^{ell-1}) pair.
    """
    top = max(layer_indices)
    live = {
        ell: (
            _init_decoder(dnn, ell, cfg.seed),
            OptimizerState(
                kind="adam",
                learning_rate=cfg.learning_rate,
                beta1=cfg.beta1,
                beta2=cfg.beta2,
                eps=cfg.eps,
            ),
        )
        for ell in layer_indices
    }
    loss_sums = {ell: 0.0 for ell in layer_indices}
    loss_counts = {ell: 0 for ell in layer_indices}
    failures: list[tuple[int, str]] = []

    for epoch_batches in _batch_orders(images.shape[0], cfg):
        for ell in layer_indices:
            loss_sums[ell] = 0.0
            loss_counts[ell] = 0
        for idx in epoch_batches:
            x = images[idx]
            zs = [x]
            z = x
            for layer in dnn.layers[:top]:
                z = layer.forward(z)
                zs.append(z)
            for ell in list(live):
                decoder, state = live[ell]
                grad_w, grad_b, loss = backprop_mse(decoder, zs[ell], zs[ell - 1])
                try:
                    if not np.isfinite(loss):
                        raise DivergenceError("non-finite training loss")
                    optimizer_step(
                        [decoder.weights, decoder.bias], [grad_w, grad_b], state
                    )
                except DivergenceError as err:
                    failures.append((ell, str(err)))
                    del live[ell]
                    continue
                loss_sums[ell] += loss * len(idx)
                loss_counts[ell] += len(idx)

    trained = {
        ell: DecoderLayer(
            layer_index=ell,
            inner=decoder,
            final_training_loss=loss_sums[ell] / max(loss_counts[ell], 1),
        )
        for ell, (decoder, _) in live.items()
    }
    return trained, failures


def train_decoder(dnn: MLP, ell: int, dataset, cfg: DecoderTrainConfig) -> DecoderLayer:
    """Train the single decoder for layer ell against the frozen network."""
    if not 1 <= ell <= dnn.depth:
        raise ValueError(f"layer index must be in [1, {dnn.depth}], got {ell}")
    images = _training_images(dataset, cfg)
    trained, failures = _train_subset(dnn, images, [ell], cfg)
    if failures:
        raise CascadeTrainingError(failures)
    return trained[ell]


def train_all_decoders(
    dnn: MLP, dataset, cfg: DecoderTrainConfig, workers: int = 1
) -> list[DecoderLayer]:
    """Train decoders for every layer 1..L; returns them in layer order.

    With workers > 1 the layer indices are split over a thread pool (numpy
    releases the GIL in the dense kernels). Results are bit-identical to the
    serial path because each decoder's update stream is self-contained.
    """
    images = _training_images(dataset, cfg)
    indices = list(range(1, dnn.depth + 1))
    if workers <= 1 or dnn.depth == 1:
        trained, failures = _train_subset(dnn, images, indices, cfg)
    else:
        workers = min(workers, dnn.depth)
        chunks = [indices[i::workers] for i in range(workers)]
        trained = {}
        failures = []
        with ThreadPoolExecutor(max_workers=workers) as pool:
            jobs = [
                pool.submit(_train_subset, dnn, images, chunk, cfg)
                for chunk in chunks
            ]
            for job in jobs:
                part, fails = job.result()
                trained.update(part)
                failures.extend(fails)
    if failures:
        raise CascadeTrainingError(sorted(failures))
    return [trained[ell] for ell in indices]


def reconstruct(decoders, ell: int, z_ell: np.ndarray) -> np.ndarray:
    """Map activations at layer ell back to input space: c^1(...c^ell(z))."""
    decs = _decoder_list(decoders)
    if ell < 0 or ell > len(decs):
        raise ValueError(f"need decoders 1..{ell}, have {len(decs)}")
    z = np.asarray(z_ell, dtype=np.float64)
    if ell == 0:
        return z.copy()
    if z.shape[-1] != decs[ell - 1].inner.n_in:
        raise ValueError(
            f"layer-{ell} activations must have width "
            f"{decs[ell - 1].inner.n_in}, got {z.shape[-1]}"
        )
    for m in range(ell, 0, -1):
        z = decs[m - 1].inner.forward(z)
    return z


def reconstruct_from_output(decoders, output_template: np.ndarray) -> np.ndarray:
    """Feed a synthetic top-layer vector backwards through the full cascade.

    Produces the image the network's internal representation corresponds to;
    with class-wise templates on a trained network these are its archetype
    images.
    """
    decs = _decoder_list(decoders)
    if not decs:
        raise ValueError("no decoders available")
    template = np.asarray(output_template, dtype=np.float64)
    squeeze = template.ndim == 1
    image = reconstruct(decs, len(decs), np.atleast_2d(template))
    return image[0] if squeeze else image


def _layer_jvp(layer: DenseLayer, z: np.ndarray, v: np.ndarray) -> np.ndarray:
    u = v @ layer.weights.T
    if layer.activation == "tanh":
        out = np.tanh(layer.preactivation(z))
        u = u * (1.0 - out * out)
    return u


def jacobian_vector_product(decoder, point: np.ndarray, direction: np.ndarray):
    """Directional derivative of a decoder (or a whole cascade) at a point.

    Accepts a single DecoderLayer, a Cascade, or a decoder list [c^1..c^ell];
    for composites the chain rule is applied in application order (c^ell
    first). Computed analytically, no finite differences.
    """
    if isinstance(decoder, DecoderLayer):
        layers = [decoder.inner]
    else:
        layers = [d.inner for d in reversed(_decoder_list(decoder))]
    z = np.asarray(point, dtype=np.float64)
    v = np.asarray(direction, dtype=np.float64)
    if v.shape != z.shape:
        raise ValueError(f"direction shape {v.shape} != point shape {z.shape}")
    if z.shape[-1] != layers[0].n_in:
        raise ValueError(
            f"point width {z.shape[-1]} does not match decoder input "
            f"{layers[0].n_in}"
        )
    for layer in layers:
        v = _layer_jvp(layer, z, v)
        z = layer.forward(z)
    return v
