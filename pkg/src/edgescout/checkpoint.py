"""Versioned flat-binary checkpoints for decoders and trained classifiers.

Layout (all integers little-endian):

    bytes 0..7   magic b"EDGSCKPT"
    u32          format version (currently 1)
    u32          metadata length, then that many bytes of UTF-8 JSON
    u32          tensor count T
    T times      u32 ndim, then ndim u32 dimensions
    payload      the T tensors as float64, C-order, little-endian,
                 concatenated in header order

The JSON metadata carries everything that is not a float tensor (layer
indices, activations, network config, accuracies).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .cascade import DecoderLayer
from .nn import MLP, DenseLayer, NetworkConfig, TrainedClassifier

MAGIC = b"EDGSCKPT"
VERSION = 1


class CheckpointError(ValueError):
    """Checkpoint file is malformed or of an unsupported version."""


def save_tensors(path, tensors: list[np.ndarray], meta: dict) -> None:
    meta_bytes = json.dumps(meta).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", VERSION)]
    parts.append(struct.pack("<I", len(meta_bytes)))
    parts.append(meta_bytes)
    parts.append(struct.pack("<I", len(tensors)))
    for t in tensors:
        t = np.asarray(t, dtype=np.float64)
        parts.append(struct.pack("<I", t.ndim))
        parts.append(struct.pack(f"<{t.ndim}I", *t.shape))
    for t in tensors:
        parts.append(np.ascontiguousarray(t, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_tensors(path) -> tuple[list[np.ndarray], dict]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not an edgescout checkpoint")
    pos = 8
    (version,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    (meta_len,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    meta = json.loads(raw[pos : pos + meta_len].decode("utf-8"))
    pos += meta_len
    (count,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    shapes = []
    for _ in range(count):
        (ndim,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        shape = struct.unpack_from(f"<{ndim}I", raw, pos)
        pos += 4 * ndim
        shapes.append(shape)
    tensors = []
    for shape in shapes:
        n = int(np.prod(shape)) if shape else 1
        end = pos + 8 * n
        if end > len(raw):
            raise CheckpointError(f"{path}: truncated tensor payload")
        tensors.append(
            np.frombuffer(raw[pos:end], dtype="<f8").reshape(shape).copy()
        )
        pos = end
    return tensors, meta


def save_cascade(path, decoders: list[DecoderLayer]) -> None:
    meta = {
        "kind": "cascade",
        "layer_indices": [d.layer_index for d in decoders],
        "activations": [d.inner.activation for d in decoders],
        "losses": [d.final_training_loss for d in decoders],
    }
    tensors = []
    for d in decoders:
        tensors.extend([d.inner.weights, d.inner.bias])
    save_tensors(path, tensors, meta)


def load_cascade(path) -> list[DecoderLayer]:
    tensors, meta = load_tensors(path)
    if meta.get("kind") != "cascade":
        raise CheckpointError(f"{path}: not a cascade checkpoint")
    decoders = []
    for i, ell in enumerate(meta["layer_indices"]):
        decoders.append(
            DecoderLayer(
                layer_index=int(ell),
                inner=DenseLayer(
                    tensors[2 * i], tensors[2 * i + 1], meta["activations"][i]
                ),
                final_training_loss=float(meta["losses"][i]),
            )
        )
    return decoders


def save_classifier(path, clf: TrainedClassifier) -> None:
    cfg = clf.mlp.config
    meta = {
        "kind": "classifier",
        "config": {
            "depth": cfg.depth,
            "widths": list(cfg.widths),
            "sigma_w_sq": cfg.sigma_w_sq,
            "sigma_b_sq": cfg.sigma_b_sq,
            "activation": cfg.activation,
            "seed": cfg.seed,
        },
        "accuracies": clf.accuracies,
    }
    tensors = []
    for layer in clf.mlp.layers:
        tensors.extend([layer.weights, layer.bias])
    tensors.extend([clf.readout.weights, clf.readout.bias])
    save_tensors(path, tensors, meta)


def load_classifier(path) -> TrainedClassifier:
    tensors, meta = load_tensors(path)
    if meta.get("kind") != "classifier":
        raise CheckpointError(f"{path}: not a classifier checkpoint")
    cfg = NetworkConfig(**meta["config"])
    layers = [
        DenseLayer(tensors[2 * i], tensors[2 * i + 1], cfg.activation)
        for i in range(cfg.depth)
    ]
    readout = DenseLayer(tensors[-2], tensors[-1], "linear")
    return TrainedClassifier(
        mlp=MLP(config=cfg, layers=layers),
        readout=readout,
        accuracies=[float(a) for a in meta["accuracies"]],
    )
