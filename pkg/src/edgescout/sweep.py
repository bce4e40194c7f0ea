"""Phase-space experiment orchestration.

For every (sigma_w_sq, sigma_b_sq) grid cell: draw an untrained network,
train its decoder cascade, measure the entropy curve on held-out images, and
detect the cutoff; optionally train the actual classifier on selected cells
to validate the prediction. The prediction path never updates the network
under study, and cells are independent jobs with their own derived seeds,
so any schedule gives identical results.

Phase-space scans and hyperparameter scans are deliberately separate
operations (run_sweep vs run_validation): scanning M_w phase cells plus M_r
training settings costs O(M_w + M_r) runs, never the product.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cascade import DecoderTrainConfig, train_all_decoders, train_decoder
from .cutoff import DEFAULT_ETA_DIFFERENTIAL, DEFAULT_ETA_RELATIVE, detect_cutoff
from .data import Dataset
from .entropy import (
    EntropyCurve,
    differential_entropy_curve,
    relative_entropy_curve,
)
from .nn import (
    DivergenceError,
    NetworkConfig,
    init_random,
    mlp_checksum,
    train_classifier,
)

DISPLAY_CLIP = -10.0  # heatmap contrast clip for differential values

_STREAM_NET = 1
_STREAM_CASCADE = 2
_STREAM_EVAL = 3
_STREAM_VALIDATE = 4

CSV_HEADER = [
    "sigma_w_sq",
    "sigma_b_sq",
    "seed",
    "layer",
    "entropy",
    "cutoff",
    "accuracy",
    "wall_time_s",
]


def _cell_seed(base: int, *keys: int) -> int:
    ss = np.random.SeedSequence([int(base), *[int(k) for k in keys]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass
class SweepSpec:
    """Axes and per-cell settings for a phase-space sweep."""

    sigma_w_sq_values: tuple[float, ...]
    sigma_b_sq_values: tuple[float, ...] = (0.05,)
    depth: int = 50
    widths: tuple[int, ...] | None = None  # None: input-width hidden, 400 top
    entropy_kind: str = "relative"
    eta: float | None = None  # None: kind-specific default
    sample_size: int = 100
    seeds_per_cell: int = 3
    base_seed: int = 0
    train_images: int = 10_000
    batch_size: int = 64
    decoder_lr: float = 1e-3
    validation_epochs: int = 20
    validation_lr: float = 1e-3
    validation_cells: tuple[tuple[float, float], ...] | None = None  # None: all

    def __post_init__(self):
        self.sigma_w_sq_values = tuple(float(v) for v in self.sigma_w_sq_values)
        self.sigma_b_sq_values = tuple(float(v) for v in self.sigma_b_sq_values)
        if not self.sigma_w_sq_values or not self.sigma_b_sq_values:
            raise ValueError("sweep axes must be nonempty")
        if list(self.sigma_w_sq_values) != sorted(self.sigma_w_sq_values) or list(
            self.sigma_b_sq_values
        ) != sorted(self.sigma_b_sq_values):
            raise ValueError("axis values must be ascending")
        if self.depth < 1:
            raise ValueError("depth must be positive")
        if self.seeds_per_cell < 1:
            raise ValueError("seeds_per_cell must be >= 1")
        if self.entropy_kind not in ("relative", "differential"):
            raise ValueError(f"unknown entropy kind {self.entropy_kind!r}")

    def resolved_eta(self) -> float:
        if self.eta is not None:
            return self.eta
        return (
            DEFAULT_ETA_RELATIVE
            if self.entropy_kind == "relative"
            else DEFAULT_ETA_DIFFERENTIAL
        )

    def resolved_widths(self, n_pixels: int) -> tuple[int, ...]:
        if self.widths is not None:
            return tuple(self.widths)
        top = min(400, n_pixels)
        return tuple([n_pixels] * self.depth + [top])


@dataclass
class CellResult:
    """Aggregated outcome for one phase-space cell."""

    sigma_w_sq: float
    sigma_b_sq: float
    cutoffs: list[int] = field(default_factory=list)  # one per seed
    curves: list[EntropyCurve] = field(default_factory=list)
    accuracy: float | None = None
    wall_time_s: float = 0.0
    error: str | None = None

    @property
    def mean_cutoff(self) -> float:
        return float(np.mean(self.cutoffs)) if self.cutoffs else math.nan

    def mean_curve(self) -> np.ndarray:
        return np.mean([c.values for c in self.curves], axis=0)


@dataclass
class PhaseGrid:
    spec: SweepSpec
    cells: list[list[CellResult]]  # [i_w][i_b]

    def cell(self, sigma_w_sq: float, sigma_b_sq: float) -> CellResult:
        i = self.spec.sigma_w_sq_values.index(sigma_w_sq)
        j = self.spec.sigma_b_sq_values.index(sigma_b_sq)
        return self.cells[i][j]


def eval_batch(spec: SweepSpec, eval_ds: Dataset) -> np.ndarray:
    """Deterministic held-out subsample shared by every cell."""
    n = eval_ds.n_images
    take = min(spec.sample_size, n)
    rng = np.random.default_rng(
        np.random.SeedSequence([spec.base_seed, _STREAM_EVAL])
    )
    idx = rng.choice(n, size=take, replace=False)
    return eval_ds.images[np.sort(idx)]


def _run_cell(
    spec: SweepSpec,
    train_ds: Dataset,
    inputs: np.ndarray,
    i_w: int,
    i_b: int,
    decoder_workers: int = 1,
) -> CellResult:
    w2 = spec.sigma_w_sq_values[i_w]
    b2 = spec.sigma_b_sq_values[i_b]
    result = CellResult(sigma_w_sq=w2, sigma_b_sq=b2)
    widths = spec.resolved_widths(train_ds.n_pixels)
    eta = spec.resolved_eta()
    start = time.perf_counter()
    try:
        for k in range(spec.seeds_per_cell):
            net = init_random(
                NetworkConfig(
                    depth=spec.depth,
                    widths=widths,
                    sigma_w_sq=w2,
                    sigma_b_sq=b2,
                    activation="tanh",
                    seed=_cell_seed(spec.base_seed, _STREAM_NET, i_w, i_b, k),
                )
            )
            before = mlp_checksum(net)
            cfg = DecoderTrainConfig(
                learning_rate=spec.decoder_lr,
                batch_size=spec.batch_size,
                seed=_cell_seed(spec.base_seed, _STREAM_CASCADE, i_w, i_b, k),
                max_images=spec.train_images,
            )
            decoders = train_all_decoders(net, train_ds, cfg, workers=decoder_workers)
            if mlp_checksum(net) != before:
                raise RuntimeError("frozen network was mutated during training")
            if spec.entropy_kind == "relative":
                curve = relative_entropy_curve(net, decoders, inputs)
            else:
                curve = differential_entropy_curve(net, decoders, inputs)
            result.curves.append(curve)
            result.cutoffs.append(detect_cutoff(curve, eta).cutoff)
    except Exception as err:  # record and keep sweeping
        result.error = f"{type(err).__name__}: {err}"
    result.wall_time_s = time.perf_counter() - start
    return result


def run_sweep(
    spec: SweepSpec,
    train_ds: Dataset,
    eval_ds: Dataset,
    workers: int = 1,
) -> PhaseGrid:
    """Predict trainability for every grid cell; the network is never trained."""
    inputs = eval_batch(spec, eval_ds)
    coords = [
        (i_w, i_b)
        for i_w in range(len(spec.sigma_w_sq_values))
        for i_b in range(len(spec.sigma_b_sq_values))
    ]
    if workers <= 1:
        results = [_run_cell(spec, train_ds, inputs, i, j) for i, j in coords]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            jobs = [
                pool.submit(_run_cell, spec, train_ds, inputs, i, j)
                for i, j in coords
            ]
            results = [job.result() for job in jobs]
    cells: list[list[CellResult]] = [
        [None] * len(spec.sigma_b_sq_values)  # type: ignore[list-item]
        for _ in spec.sigma_w_sq_values
    ]
    for (i_w, i_b), res in zip(coords, results):
        cells[i_w][i_b] = res
    return PhaseGrid(spec=spec, cells=cells)


def run_validation(
    grid: PhaseGrid,
    train_ds: Dataset,
    eval_ds: Dataset,
    epochs: int | None = None,
    learning_rate: float | None = None,
) -> PhaseGrid:
    """Actually train the classifier on selected cells and record accuracy.

    Uses the same seed-derivation scheme as the prediction path so the
    trained network is the same draw the cascades analyzed (seed index 0).
    """
    spec = grid.spec
    epochs = spec.validation_epochs if epochs is None else epochs
    lr = spec.validation_lr if learning_rate is None else learning_rate
    n_classes = int(train_ds.labels.max()) + 1
    selected = spec.validation_cells
    for i_w, w2 in enumerate(spec.sigma_w_sq_values):
        for i_b, b2 in enumerate(spec.sigma_b_sq_values):
            if selected is not None and (w2, b2) not in selected:
                continue
            cell = grid.cells[i_w][i_b]
            start = time.perf_counter()
            net = init_random(
                NetworkConfig(
                    depth=spec.depth,
                    widths=spec.resolved_widths(train_ds.n_pixels),
                    sigma_w_sq=w2,
                    sigma_b_sq=b2,
                    activation="tanh",
                    seed=_cell_seed(spec.base_seed, _STREAM_NET, i_w, i_b, 0),
                )
            )
            try:
                clf = train_classifier(
                    net,
                    train_ds.images[: spec.train_images],
                    train_ds.labels[: spec.train_images],
                    eval_ds.images,
                    eval_ds.labels,
                    epochs=epochs,
                    learning_rate=lr,
                    batch_size=spec.batch_size,
                    seed=_cell_seed(spec.base_seed, _STREAM_VALIDATE, i_w, i_b),
                    n_classes=n_classes,
                )
                if epochs == 0:
                    cell.accuracy = clf.accuracy(eval_ds.images, eval_ds.labels)
                else:
                    cell.accuracy = clf.accuracies[-1]
            except DivergenceError as err:
                cell.error = f"DivergenceError: {err}"
            cell.wall_time_s += time.perf_counter() - start
    return grid


@dataclass
class BenchmarkReport:
    """Wall-time comparison: full-network epoch vs cascade-based prediction."""

    epoch_seconds: list[float]
    prediction_seconds: list[float]
    decoder_seconds: list[float]

    @staticmethod
    def _stats(xs: list[float]) -> tuple[float, float]:
        mean = float(np.mean(xs))
        std = float(np.std(xs, ddof=1)) if len(xs) > 1 else 0.0
        return mean, std

    @property
    def epoch(self) -> tuple[float, float]:
        return self._stats(self.epoch_seconds)

    @property
    def prediction(self) -> tuple[float, float]:
        return self._stats(self.prediction_seconds)

    @property
    def decoder(self) -> tuple[float, float]:
        return self._stats(self.decoder_seconds)

    @property
    def prediction_epoch_ratio(self) -> float:
        return self.prediction[0] / self.epoch[0]

    def table(self) -> str:
        rows = [
            ("Single epoch [s]", *self.epoch),
            ("Prediction [s]", *self.prediction),
            ("Single reconstruction [s]", *self.decoder),
        ]
        lines = [f"{'Quantity':<28}{'mean':>12}{'std':>12}"]
        for name, mean, std in rows:
            lines.append(f"{name:<28}{mean:>12.4f}{std:>12.4f}")
        lines.append(f"prediction / epoch ratio: {self.prediction_epoch_ratio:.3f}")
        return "\n".join(lines)


def run_benchmark(
    spec: SweepSpec,
    train_ds: Dataset,
    eval_ds: Dataset,
    repeats: int = 10,
    sigma_w_sq: float = 1.76,
    sigma_b_sq: float = 0.05,
) -> BenchmarkReport:
    """Time one DNN training epoch, one full prediction, one decoder epoch.

    Prediction = cascade training + entropy curve + cutoff, run serially.
    The single-decoder time is for the first cascade layer. Means and sample
    standard deviations over `repeats` repetitions.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    widths = spec.resolved_widths(train_ds.n_pixels)
    inputs = eval_batch(spec, eval_ds)
    n_classes = int(train_ds.labels.max()) + 1
    epoch_s, pred_s, dec_s = [], [], []
    for rep in range(repeats):
        net = init_random(
            NetworkConfig(
                depth=spec.depth,
                widths=widths,
                sigma_w_sq=sigma_w_sq,
                sigma_b_sq=sigma_b_sq,
                activation="tanh",
                seed=_cell_seed(spec.base_seed, _STREAM_NET, 0, 0, rep),
            )
        )
        cfg = DecoderTrainConfig(
            learning_rate=spec.decoder_lr,
            batch_size=spec.batch_size,
            seed=_cell_seed(spec.base_seed, _STREAM_CASCADE, 0, 0, rep),
            max_images=spec.train_images,
        )

        t0 = time.perf_counter()
        decoders = train_all_decoders(net, train_ds, cfg)
        if spec.entropy_kind == "relative":
            curve = relative_entropy_curve(net, decoders, inputs)
        else:
            curve = differential_entropy_curve(net, decoders, inputs)
        detect_cutoff(curve, spec.resolved_eta())
        pred_s.append(time.perf_counter() - t0)

        t0 = time.perf_counter()
        train_decoder(net, 1, train_ds, cfg)
        dec_s.append(time.perf_counter() - t0)

        trainee = init_random(net.config)
        t0 = time.perf_counter()
        train_classifier(
            trainee,
            train_ds.images[: spec.train_images],
            train_ds.labels[: spec.train_images],
            eval_ds.images[:1],
            eval_ds.labels[:1],
            epochs=1,
            learning_rate=spec.validation_lr,
            batch_size=spec.batch_size,
            seed=spec.base_seed,
            n_classes=n_classes,
        )
        epoch_s.append(time.perf_counter() - t0)
    return BenchmarkReport(epoch_s, pred_s, dec_s)


def export_csv(grid: PhaseGrid, path) -> None:
    """One row per (cell, seed, layer); full-precision reprs round-trip."""
    spec = grid.spec
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for row in grid.cells:
            for cell in row:
                acc = "" if cell.accuracy is None else repr(cell.accuracy)
                for k, curve in enumerate(cell.curves):
                    cutoff = cell.cutoffs[k]
                    for ell in range(1, curve.depth + 1):
                        writer.writerow(
                            [
                                repr(cell.sigma_w_sq),
                                repr(cell.sigma_b_sq),
                                k,
                                ell,
                                repr(float(curve.values[ell - 1])),
                                cutoff,
                                acc,
                                repr(cell.wall_time_s),
                            ]
                        )


def read_csv(path) -> list[dict]:
    """Parse an exported sweep CSV back into typed row dicts."""
    rows = []
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {reader.fieldnames}")
        for rec in reader:
            rows.append(
                {
                    "sigma_w_sq": float(rec["sigma_w_sq"]),
                    "sigma_b_sq": float(rec["sigma_b_sq"]),
                    "seed": int(rec["seed"]),
                    "layer": int(rec["layer"]),
                    "entropy": float(rec["entropy"]),
                    "cutoff": int(rec["cutoff"]),
                    "accuracy": (
                        float(rec["accuracy"]) if rec["accuracy"] else None
                    ),
                    "wall_time_s": float(rec["wall_time_s"]),
                }
            )
    return rows


def export_heatmap(grid: PhaseGrid, path, kind: str = "cutoff") -> None:
    """Render the grid as a P5 graymap with the value mapping in the header.

    kind="cutoff": one pixel per cell (rows: sigma_b axis, cols: sigma_w).
    kind="entropy": one pixel per (cell, layer); column per cell in w-major
    order, row per layer. Differential values are clipped at -10 for
    contrast before mapping.
    """
    from .pgm import write_value_pgm

    spec = grid.spec
    if kind == "cutoff":
        values = np.array(
            [[cell.mean_cutoff for cell in row] for row in grid.cells]
        ).T  # rows: b axis
        extra = "cutoff map: rows=sigma_b_sq axis, cols=sigma_w_sq axis"
    elif kind == "entropy":
        columns = [cell.mean_curve() for row in grid.cells for cell in row]
        values = np.stack(columns, axis=1)  # (L, n_cells)
        if spec.entropy_kind == "differential":
            values = np.maximum(values, DISPLAY_CLIP)
            extra = f"entropy map: values clipped at {DISPLAY_CLIP}; "
        else:
            extra = "entropy map: "
        extra += "rows=layer 1..L, cols=cells in sigma_w-major order"
    else:
        raise ValueError(f"unknown heatmap kind {kind!r}")
    write_value_pgm(path, values, extra_comment=extra)
