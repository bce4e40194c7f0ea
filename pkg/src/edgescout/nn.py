"""Dense feedforward network primitives.

Gaussian-initialized random networks, forward passes with activation
recording, analytic MSE/cross-entropy gradients, and first-order optimizers.
Both the frozen network under study and the trainable shallow decoders are
built from these pieces.

Weights are drawn with fan-in scaling, W_ij ~ N(0, sigma_w_sq / N_in), so the
preactivation variance is width-independent and the critical point sits where
the infinite-width theory puts it. All arithmetic is float64.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("tanh", "linear")

_SEED_READOUT = 0x52454144  # stream tags for derived RNG seeds
_SEED_SHUFFLE = 0x53485546


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss or gradient."""


def _derived_rng(*keys: int) -> np.random.Generator:
    """Deterministic generator for a (seed, stream-tag, ...) tuple."""
    return np.random.default_rng(np.random.SeedSequence(list(keys)))


@dataclass(frozen=True)
class NetworkConfig:
    """Full description of a random feedforward network.

    depth:       number of layers L
    widths:      layer widths N_0..N_L (length L+1; N_0 is the input width)
    sigma_w_sq:  weight variance parameter (fan-in scaled at init)
    sigma_b_sq:  bias variance
    activation:  'tanh' or 'linear'
    seed:        init seed; equal configs give bit-identical networks
    """

    depth: int
    widths: tuple[int, ...]
    sigma_w_sq: float
    sigma_b_sq: float
    activation: str = "tanh"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if len(self.widths) != self.depth + 1:
            raise ValueError(
                f"widths must have depth+1={self.depth + 1} entries, "
                f"got {len(self.widths)}"
            )
        if any(w < 1 for w in self.widths):
            raise ValueError("all widths must be >= 1")
        if self.sigma_w_sq < 0 or self.sigma_b_sq < 0:
            raise ValueError("variances must be nonnegative")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")


class DenseLayer:
    """One dense layer: out = phi(x @ W.T + b)."""

    def __init__(self, weights: np.ndarray, bias: np.ndarray, activation: str):
        weights = np.asarray(weights, dtype=np.float64)
        bias = np.asarray(bias, dtype=np.float64)
        if weights.ndim != 2 or bias.ndim != 1 or bias.shape[0] != weights.shape[0]:
            raise ValueError(
                f"inconsistent layer shapes: W {weights.shape}, b {bias.shape}"
            )
        if activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if not (np.isfinite(weights).all() and np.isfinite(bias).all()):
            raise ValueError("layer parameters must be finite")
        self.weights = weights
        self.bias = bias
        self.activation = activation

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]

    def preactivation(self, x: np.ndarray) -> np.ndarray:
        return x @ self.weights.T + self.bias

    def forward(self, x: np.ndarray) -> np.ndarray:
        z = self.preactivation(x)
        return np.tanh(z) if self.activation == "tanh" else z


@dataclass
class MLP:
    """A depth-L stack of dense layers sharing one activation."""

    config: NetworkConfig
    layers: list[DenseLayer]

    def __post_init__(self):
        expect = self.config.widths
        for ell, layer in enumerate(self.layers):
            if layer.weights.shape != (expect[ell + 1], expect[ell]):
                raise ValueError(
                    f"layer {ell + 1} has shape {layer.weights.shape}, "
                    f"expected {(expect[ell + 1], expect[ell])}"
                )

    @property
    def depth(self) -> int:
        return self.config.depth


@dataclass
class ActivationTrace:
    """Recorded activations z^0..z^L for one input batch.

    activations[0] is the input itself; entry ell has shape (B, N_ell).
    """

    batch_size: int
    activations: list[np.ndarray]


def init_random(config: NetworkConfig) -> MLP:
    """Draw a random network from the config's Gaussian ensemble.

    Weights of layer ell are i.i.d. N(0, sigma_w_sq / N_{ell-1}) and biases
    N(0, sigma_b_sq). The draw order is fixed (layer-major, weights before
    bias, row-major within a matrix) so a given seed is reproducible.
    """
    rng = np.random.default_rng(config.seed)
    layers = []
    for ell in range(config.depth):
        n_in, n_out = config.widths[ell], config.widths[ell + 1]
        w_std = np.sqrt(config.sigma_w_sq / n_in)
        b_std = np.sqrt(config.sigma_b_sq)
        weights = rng.standard_normal((n_out, n_in)) * w_std
        bias = rng.standard_normal(n_out) * b_std
        layers.append(DenseLayer(weights, bias, config.activation))
    return MLP(config=config, layers=layers)


def forward_record(mlp: MLP, x: np.ndarray) -> ActivationTrace:
    """Run the network on a batch, recording every layer's activations."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != mlp.config.widths[0]:
        raise ValueError(
            f"input must be (B, {mlp.config.widths[0]}), got {x.shape}"
        )
    if not np.isfinite(x).all():
        raise ValueError("input contains non-finite entries")
    activations = [x.copy()]
    z = x
    for layer in mlp.layers:
        z = layer.forward(z)
        activations.append(z)
    return ActivationTrace(batch_size=x.shape[0], activations=activations)


def forward_to(mlp: MLP, x: np.ndarray, ell: int) -> tuple[np.ndarray, np.ndarray]:
    """Return (z^{ell-1}, z^ell) without storing the whole trace.

    Streaming variant used by decoder training, where only one adjacent pair
    of activations is needed per batch.
    """
    if not 1 <= ell <= mlp.depth:
        raise ValueError(f"layer index must be in [1, {mlp.depth}], got {ell}")
    z = np.asarray(x, dtype=np.float64)
    prev = z
    for layer in mlp.layers[:ell]:
        prev = z
        z = layer.forward(z)
    return prev, z


def backprop_mse(
    layer: DenseLayer, x: np.ndarray, target: np.ndarray
) -> tuple[np.ndarray, np.ndarray, float]:
    """Analytic gradients of mean squared error through one dense layer.

    Loss is the MSE averaged over both the batch and the output dimension.
    Returns (grad_weights, grad_bias, loss).
    """
    x = np.asarray(x, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != layer.n_in:
        raise ValueError(f"input must be (B, {layer.n_in}), got {x.shape}")
    if target.shape != (x.shape[0], layer.n_out):
        raise ValueError(
            f"target must be {(x.shape[0], layer.n_out)}, got {target.shape}"
        )
    out = layer.forward(x)
    resid = out - target
    loss = float(np.mean(resid * resid))
    dz = resid
    dz *= 2.0 / resid.size
    if layer.activation == "tanh":
        np.multiply(out, out, out=out)  # out is dead after this point
        out -= 1.0
        dz *= out
        dz = np.negative(dz, out=dz)
    grad_w = dz.T @ x
    grad_b = dz.sum(axis=0)
    return grad_w, grad_b, loss


@dataclass
class OptimizerState:
    """State for plain SGD or Adam over a list of parameter tensors.

    Adam moments are allocated lazily (zeros shaped like the parameters) on
    the first step. The step counter increases by one per optimizer_step.
    """

    kind: str
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list[np.ndarray] | None = field(default=None, repr=False)
    v: list[np.ndarray] | None = field(default=None, repr=False)
    _scratch: list[np.ndarray] | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")


def optimizer_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    state: OptimizerState,
) -> tuple[list[np.ndarray], OptimizerState]:
    """Apply one in-place SGD or Adam update to the parameter list."""
    if len(params) != len(grads):
        raise ValueError("params and grads must have equal length")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ValueError(f"shape mismatch: param {p.shape} vs grad {g.shape}")
    for g in grads:
        if not np.isfinite(g).all():
            raise DivergenceError("non-finite gradient; aborting step")

    state.step_count += 1
    lr = state.learning_rate
    if state.kind == "sgd":
        for p, g in zip(params, grads):
            p -= lr * g
        return params, state

    if state.m is None:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
        state._scratch = [np.empty_like(p) for p in params]
    b1, b2 = state.beta1, state.beta2
    t = state.step_count
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    # p -= lr*(m/bc1)/(sqrt(v/bc2)+eps), refactored to one scratch buffer:
    # equals (lr*sqrt(bc2)/bc1) * m / (sqrt(v) + eps*sqrt(bc2))
    alpha = lr * np.sqrt(bc2) / bc1
    eps_t = state.eps * np.sqrt(bc2)
    for p, g, m, v, s in zip(params, grads, state.m, state.v, state._scratch):
        m *= b1
        np.multiply(g, 1.0 - b1, out=s)
        m += s
        v *= b2
        np.multiply(g, g, out=s)
        s *= 1.0 - b2
        v += s
        np.sqrt(v, out=s)
        s += eps_t
        np.divide(m, s, out=s)
        s *= alpha
        p -= s
    return params, state


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class TrainedClassifier:
    """A trained MLP plus its linear softmax readout."""

    mlp: MLP
    readout: DenseLayer
    accuracies: list[float]

    def logits(self, images: np.ndarray) -> np.ndarray:
        z = np.asarray(images, dtype=np.float64)
        for layer in self.mlp.layers:
            z = layer.forward(z)
        return self.readout.preactivation(z)

    def predict(self, images: np.ndarray) -> np.ndarray:
        return self.logits(images).argmax(axis=1)

    def accuracy(self, images: np.ndarray, labels: np.ndarray) -> float:
        return float(np.mean(self.predict(images) == np.asarray(labels)))


def make_readout(mlp: MLP, n_classes: int, seed: int) -> DenseLayer:
    """Linear class readout on top of z^L: fan-in scaled weights, zero bias."""
    n_in = mlp.config.widths[-1]
    rng = _derived_rng(seed, _SEED_READOUT)
    weights = rng.standard_normal((n_classes, n_in)) / np.sqrt(n_in)
    return DenseLayer(weights, np.zeros(n_classes), "linear")


def train_classifier(
    mlp: MLP,
    train_images: np.ndarray,
    train_labels: np.ndarray,
    test_images: np.ndarray,
    test_labels: np.ndarray,
    epochs: int,
    learning_rate: float = 0.001,
    batch_size: int = 64,
    seed: int = 0,
    n_classes: int = 10,
) -> TrainedClassifier:
    """Train the full network as a classifier with mini-batch SGD.

    A linear readout (width = class count) plus softmax cross-entropy is
    appended on top of z^L; the MLP layers are trained jointly with it. Only
    the training-validation mode uses this; trainability prediction never
    touches the network's parameters.

    Returns the trained classifier with one test accuracy per epoch. Raises
    DivergenceError (with the epoch index) if the loss goes non-finite.
    """
    train_images = np.asarray(train_images, dtype=np.float64)
    train_labels = np.asarray(train_labels, dtype=np.int64)
    if train_labels.max(initial=0) >= n_classes:
        raise ValueError("labels exceed class count")
    readout = make_readout(mlp, n_classes, seed)
    rng = _derived_rng(seed, _SEED_SHUFFLE)
    n = train_images.shape[0]
    clf = TrainedClassifier(mlp=mlp, readout=readout, accuracies=[])

    for epoch in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            x = train_images[idx]
            y = train_labels[idx]
            zs = [x]
            z = x
            for layer in mlp.layers:
                z = layer.forward(z)
                zs.append(z)
            logits = readout.preactivation(z)
            probs = _softmax(logits)
            batch = x.shape[0]
            loss = -np.mean(np.log(probs[np.arange(batch), y] + 1e-300))
            if not np.isfinite(loss):
                raise DivergenceError(f"loss diverged at epoch {epoch}")

            delta = probs
            delta[np.arange(batch), y] -= 1.0
            delta /= batch
            grad_wr = delta.T @ zs[-1]
            grad_br = delta.sum(axis=0)
            dz = delta @ readout.weights
            tanh_net = mlp.config.activation == "tanh"
            grads_w, grads_b = [], []
            for ell in range(mlp.depth, 0, -1):
                da = dz * (1.0 - zs[ell] * zs[ell]) if tanh_net else dz
                grads_w.append(da.T @ zs[ell - 1])
                grads_b.append(da.sum(axis=0))
                if ell > 1:
                    dz = da @ mlp.layers[ell - 1].weights
            if not all(np.isfinite(g).all() for g in grads_w):
                raise DivergenceError(f"gradients diverged at epoch {epoch}")

            readout.weights -= learning_rate * grad_wr
            readout.bias -= learning_rate * grad_br
            for ell, (gw, gb) in enumerate(zip(reversed(grads_w), reversed(grads_b))):
                mlp.layers[ell].weights -= learning_rate * gw
                mlp.layers[ell].bias -= learning_rate * gb
        clf.accuracies.append(clf.accuracy(test_images, test_labels))
    return clf


def params_checksum(arrays: list[np.ndarray]) -> str:
    """SHA-256 over raw parameter bytes; detects any mutation."""
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()


def mlp_checksum(mlp: MLP) -> str:
    tensors = []
    for layer in mlp.layers:
        tensors.extend([layer.weights, layer.bias])
    return params_checksum(tensors)
