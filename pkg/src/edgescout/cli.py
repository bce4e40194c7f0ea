"""Command-line interface binding all pipeline stages.

Subcommands: predict (single phase point), sweep (phase-space grid),
validate (sweep + actual training on selected cells), bench (timing
comparison), meanfield (infinite-width baseline curves), reconstruct
(per-layer reconstruction images and class archetypes).

Exit codes: 0 success, 2 bad arguments, 3 data error, 4 numerical failure.
A plain `key = value` config file (one section per subcommand, configparser
syntax) can pre-set any flag; explicit flags win.
"""

from __future__ import annotations

import argparse
import configparser
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import checkpoint
from .cascade import (
    CascadeTrainingError,
    DecoderTrainConfig,
    reconstruct,
    reconstruct_from_output,
    train_all_decoders,
)
from .cutoff import DEFAULT_ETA_RELATIVE, detect_cutoff
from .data import DataFormatError, Dataset, load_cifar10, load_mnist_idx, white_noise
from .entropy import differential_entropy_curve, relative_entropy_curve
from .meanfield import (
    MeanFieldConvergenceError,
    critical_sigma_w,
    export_meanfield_csv,
    meanfield_point,
)
from .nn import DivergenceError, NetworkConfig, forward_record, init_random, train_classifier
from .pgm import write_image_pgm
from .sweep import (
    PhaseGrid,
    SweepSpec,
    eval_batch,
    export_csv,
    export_heatmap,
    run_benchmark,
    run_sweep,
    run_validation,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

DATA_DIR_ENV = "EDGESCOUT_DATA_DIR"

MNIST_FILES = (
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
)
CIFAR_TRAIN = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
CIFAR_TEST = ("test_batch.bin",)

NOISE_TRAIN_COUNT = 10_000
NOISE_TEST_COUNT = 2_000


class DataResolutionError(FileNotFoundError):
    pass


def _find(data_dir: Path, name: str) -> Path:
    for candidate in (data_dir / name, data_dir / (name + ".gz")):
        if candidate.exists():
            return candidate
    raise DataResolutionError(f"missing dataset file {data_dir / name}")


def load_datasets(args) -> tuple[Dataset, Dataset]:
    """Resolve --data into (train split, test split)."""
    if args.data == "noise":
        train = white_noise(NOISE_TRAIN_COUNT, args.noise_pixels, seed=args.seed)
        test = white_noise(NOISE_TEST_COUNT, args.noise_pixels, seed=args.seed + 1)
        return train, test
    data_dir = args.data_dir or os.environ.get(DATA_DIR_ENV)
    if not data_dir:
        raise DataResolutionError(
            f"--data {args.data} needs --data-dir or ${DATA_DIR_ENV}"
        )
    data_dir = Path(data_dir)
    if args.data == "mnist":
        files = [_find(data_dir, name) for name in MNIST_FILES]
        return (
            load_mnist_idx(files[0], files[1]),
            load_mnist_idx(files[2], files[3]),
        )
    if args.data == "cifar10":
        train = load_cifar10([_find(data_dir, n) for n in CIFAR_TRAIN])
        test = load_cifar10([_find(data_dir, n) for n in CIFAR_TEST])
        return train, test
    raise DataResolutionError(f"unknown dataset {args.data!r}")


def _parse_range(text: str) -> tuple[float, ...]:
    """START:STOP:STEP (inclusive stop, within half a step) or a csv list."""
    if ":" in text:
        start, stop, step = (float(x) for x in text.split(":"))
        if step <= 0:
            raise ValueError("range step must be positive")
        count = int(math.floor((stop - start) / step + 0.5)) + 1
        return tuple(round(start + i * step, 12) for i in range(count))
    return tuple(float(x) for x in text.split(","))


def _parse_widths(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(","))


def _parse_cells(text: str) -> tuple[tuple[float, float], ...]:
    cells = []
    for part in text.split(";"):
        w2, b2 = part.split(",")
        cells.append((float(w2), float(b2)))
    return tuple(cells)


def _parse_indices(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(","))


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", choices=("mnist", "cifar10", "noise"), default="noise",
                   help="dataset to load")
    p.add_argument("--data-dir", default=None,
                   help=f"dataset directory (fallback: ${DATA_DIR_ENV})")
    p.add_argument("--noise-pixels", type=int, default=784,
                   help="pixels per white-noise image")
    p.add_argument("--depth", type=int, default=50, help="network depth L")
    p.add_argument("--widths", type=_parse_widths, default=None,
                   help="comma-separated widths N_0..N_L (default: input-width "
                        "hidden layers, 400 on top)")
    p.add_argument("--seed", type=int, default=0, help="base seed")
    p.add_argument("--workers", type=int, default=1, help="worker threads")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--train-images", type=int, default=10_000,
                   help="training rows used for cascade training")
    p.add_argument("--batch-size", type=int, default=64, help="minibatch size")
    p.add_argument("--sample-size", type=int, default=100,
                   help="held-out images per entropy evaluation")
    p.add_argument("--entropy", choices=("relative", "differential"),
                   default="relative", help="entropy estimator")
    p.add_argument("--eta", type=float, default=None,
                   help="cutoff threshold (default 0.005 relative / 0.5 differential)")
    p.add_argument("--lr", type=float, default=1e-3,
                   help="decoder learning rate (Adam)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edgescout",
        description="Predict deep-network trainability without training it: "
        "train per-layer cascade decoders against the frozen network and "
        "detect where the reconstruction entropy saturates.",
    )
    parser.add_argument("--config", default=None,
                        help="key = value config file; one section per subcommand")
    sub = parser.add_subparsers(dest="command", required=True)
    parser._edgescout_subparsers = sub  # for config-file default injection
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("predict", formatter_class=fmt,
                       help="trainability verdict for one phase point")
    _add_common(p)
    p.add_argument("--sigma-w2", type=float, default=1.76, help="weight variance")
    p.add_argument("--sigma-b2", type=float, default=0.05, help="bias variance")

    p = sub.add_parser("sweep", formatter_class=fmt,
                       help="cutoff map over a phase-space grid")
    _add_common(p)
    p.add_argument("--w2-range", type=_parse_range, default=(0.1, 4.0, 0.1),
                   metavar="START:STOP:STEP",
                   help="sigma_w^2 axis (or comma list)")
    p.add_argument("--slice-b2", type=_parse_range, default=(0.05,),
                   metavar="VALUES", help="sigma_b^2 axis (comma list or range)")
    p.add_argument("--seeds-per-cell", type=int, default=3,
                   help="network draws averaged per cell")

    p = sub.add_parser("validate", formatter_class=fmt,
                       help="sweep plus actual training on selected cells")
    _add_common(p)
    p.add_argument("--w2-range", type=_parse_range, default=(0.2, 0.8, 1.76, 3.0, 4.0),
                   metavar="START:STOP:STEP", help="sigma_w^2 axis")
    p.add_argument("--slice-b2", type=_parse_range, default=(0.05,),
                   metavar="VALUES", help="sigma_b^2 axis")
    p.add_argument("--seeds-per-cell", type=int, default=3,
                   help="network draws averaged per cell")
    p.add_argument("--epochs", type=int, default=20, help="training epochs")
    p.add_argument("--train-lr", type=float, default=1e-3,
                   help="classifier SGD learning rate")
    p.add_argument("--cells", type=_parse_cells, default=None,
                   metavar="W2,B2;W2,B2", help="cells to train (default: all)")

    p = sub.add_parser("bench", formatter_class=fmt,
                       help="timing: DNN epoch vs cascade prediction")
    _add_common(p)
    p.add_argument("--sigma-w2", type=float, default=1.76, help="weight variance")
    p.add_argument("--sigma-b2", type=float, default=0.05, help="bias variance")
    p.add_argument("--repeats", type=int, default=10, help="benchmark repetitions")

    p = sub.add_parser("meanfield", formatter_class=fmt,
                       help="infinite-width baseline curves")
    p.add_argument("--w2-range", type=_parse_range, default=(0.1, 4.0, 0.1),
                   metavar="START:STOP:STEP", help="sigma_w^2 axis")
    p.add_argument("--slice-b2", type=_parse_range, default=(0.05,),
                   metavar="VALUES", help="sigma_b^2 axis")
    p.add_argument("--scale", type=float, default=1.0,
                   help="multiplier applied to the correlation depth")
    p.add_argument("--out", default="out", help="output directory")

    p = sub.add_parser("reconstruct", formatter_class=fmt,
                       help="per-layer reconstruction images")
    _add_common(p)
    p.add_argument("--sigma-w2", type=float, default=1.76, help="weight variance")
    p.add_argument("--sigma-b2", type=float, default=0.05, help="bias variance")
    p.add_argument("--indices", type=_parse_indices, default=(0,),
                   metavar="I,J,...", help="test-image indices to reconstruct")
    p.add_argument("--checkpoint", default=None,
                   help="trained-classifier checkpoint to reconstruct from")
    p.add_argument("--train-epochs", type=int, default=0,
                   help="train the classifier first for this many epochs")
    p.add_argument("--train-lr", type=float, default=1e-3,
                   help="classifier SGD learning rate")
    p.add_argument("--save-checkpoint", default=None,
                   help="write the (trained) classifier checkpoint here")
    p.add_argument("--archetypes", action="store_true",
                   help="also write per-class archetype images")
    return parser


def _spec_from_args(args, w2_values, b2_values) -> SweepSpec:
    return SweepSpec(
        sigma_w_sq_values=tuple(w2_values),
        sigma_b_sq_values=tuple(b2_values),
        depth=args.depth,
        widths=args.widths,
        entropy_kind=args.entropy,
        eta=args.eta,
        sample_size=args.sample_size,
        seeds_per_cell=getattr(args, "seeds_per_cell", 1),
        base_seed=args.seed,
        train_images=args.train_images,
        batch_size=args.batch_size,
        decoder_lr=args.lr,
        validation_epochs=getattr(args, "epochs", 20),
        validation_lr=getattr(args, "train_lr", 1e-3),
        validation_cells=getattr(args, "cells", None),
    )


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_predict(args) -> int:
    train_ds, test_ds = load_datasets(args)
    spec = _spec_from_args(args, (args.sigma_w2,), (args.sigma_b2,))
    grid = run_sweep(spec, train_ds, test_ds, workers=1)
    cell = grid.cells[0][0]
    if cell.error:
        print(f"prediction failed: {cell.error}", file=sys.stderr)
        return EXIT_NUMERIC
    out = _outdir(args)
    export_csv(grid, out / "curve.csv")
    cutoff = cell.cutoffs[0]
    verdict = (
        "TRAINABLE"
        if cutoff >= spec.depth
        else f"UNTRAINABLE (cutoff={cutoff})"
    )
    (out / "verdict.txt").write_text(
        f"{verdict}\n"
        f"sigma_w_sq={args.sigma_w2} sigma_b_sq={args.sigma_b2} "
        f"depth={spec.depth} entropy={spec.entropy_kind} "
        f"eta={spec.resolved_eta()} cutoff={cutoff}\n"
    )
    print(verdict)
    return EXIT_OK


def cmd_sweep(args) -> int:
    train_ds, test_ds = load_datasets(args)
    spec = _spec_from_args(args, args.w2_range, args.slice_b2)
    grid = run_sweep(spec, train_ds, test_ds, workers=args.workers)
    out = _outdir(args)
    export_csv(grid, out / "sweep.csv")
    export_heatmap(grid, out / "cutoff.pgm", kind="cutoff")
    export_heatmap(grid, out / "entropy.pgm", kind="entropy")
    for row in grid.cells:
        for cell in row:
            tag = f"l*={cell.mean_cutoff:.1f}" if cell.cutoffs else cell.error
            print(f"w2={cell.sigma_w_sq:<6g} b2={cell.sigma_b_sq:<6g} {tag}")
    return EXIT_OK


def cmd_validate(args) -> int:
    train_ds, test_ds = load_datasets(args)
    spec = _spec_from_args(args, args.w2_range, args.slice_b2)
    grid = run_sweep(spec, train_ds, test_ds, workers=args.workers)
    run_validation(grid, train_ds, test_ds)
    out = _outdir(args)
    export_csv(grid, out / "sweep.csv")
    for row in grid.cells:
        for cell in row:
            acc = "-" if cell.accuracy is None else f"{cell.accuracy:.3f}"
            print(
                f"w2={cell.sigma_w_sq:<6g} b2={cell.sigma_b_sq:<6g} "
                f"l*={cell.mean_cutoff:.1f} accuracy={acc}"
            )
    return EXIT_OK


def cmd_bench(args) -> int:
    train_ds, test_ds = load_datasets(args)
    spec = _spec_from_args(args, (args.sigma_w2,), (args.sigma_b2,))
    report = run_benchmark(
        spec,
        train_ds,
        test_ds,
        repeats=args.repeats,
        sigma_w_sq=args.sigma_w2,
        sigma_b_sq=args.sigma_b2,
    )
    out = _outdir(args)
    table = report.table()
    print(table)
    (out / "bench.txt").write_text(table + "\n")
    with (out / "bench.csv").open("w") as fh:
        fh.write("quantity,mean_s,std_s\n")
        for name, (mean, std) in (
            ("single_epoch", report.epoch),
            ("prediction", report.prediction),
            ("single_reconstruction", report.decoder),
        ):
            fh.write(f"{name},{mean!r},{std!r}\n")
    return EXIT_OK


def cmd_meanfield(args) -> int:
    points = [
        meanfield_point(w2, b2)
        for b2 in args.slice_b2
        for w2 in args.w2_range
    ]
    out = _outdir(args)
    export_meanfield_csv(points, out / "meanfield.csv", scale=args.scale)
    for b2 in args.slice_b2:
        try:
            crit = critical_sigma_w(b2)
            print(f"sigma_b_sq={b2}: chi=1 at sigma_w_sq={crit:.4f}")
        except ValueError:
            print(f"sigma_b_sq={b2}: no chi=1 crossing on the scanned range")
    return EXIT_OK


def _archetype_templates(clf, images, labels) -> np.ndarray:
    """Class templates at the top layer: centroid of z^L over each class."""
    trace = forward_record(clf.mlp, images)
    top = trace.activations[-1]
    n_classes = clf.readout.n_out
    return np.stack(
        [top[labels == k].mean(axis=0) for k in range(n_classes)]
    )


def cmd_reconstruct(args) -> int:
    train_ds, test_ds = load_datasets(args)
    out = _outdir(args)
    if args.checkpoint:
        clf = checkpoint.load_classifier(args.checkpoint)
        net = clf.mlp
    else:
        widths = args.widths or tuple(
            [train_ds.n_pixels] * args.depth + [min(400, train_ds.n_pixels)]
        )
        net = init_random(
            NetworkConfig(
                depth=args.depth,
                widths=widths,
                sigma_w_sq=args.sigma_w2,
                sigma_b_sq=args.sigma_b2,
                activation="tanh",
                seed=args.seed,
            )
        )
        clf = None
        if args.train_epochs > 0:
            clf = train_classifier(
                net,
                train_ds.images[: args.train_images],
                train_ds.labels[: args.train_images],
                test_ds.images,
                test_ds.labels,
                epochs=args.train_epochs,
                learning_rate=args.train_lr,
                batch_size=args.batch_size,
                seed=args.seed,
            )
            print(f"classifier accuracy: {clf.accuracies[-1]:.3f}")
    if clf is not None and args.save_checkpoint:
        checkpoint.save_classifier(args.save_checkpoint, clf)

    cfg = DecoderTrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch_size,
        seed=args.seed,
        max_images=args.train_images,
    )
    decoders = train_all_decoders(net, train_ds, cfg, workers=args.workers)
    shape = (test_ds.image_shape[0], test_ds.image_shape[1] * test_ds.image_shape[2])

    picks = np.asarray(args.indices, dtype=int)
    batch = test_ds.images[picks]
    trace = forward_record(net, batch)
    for pos, idx in enumerate(picks):
        write_image_pgm(out / f"input_i{idx}.pgm", batch[pos], shape)
        for ell in range(1, net.depth + 1):
            recon = reconstruct(decoders, ell, trace.activations[ell][pos : pos + 1])
            write_image_pgm(out / f"recon_l{ell:03d}_i{idx}.pgm", recon[0], shape)
    print(f"wrote {len(picks)} x {net.depth} reconstructions to {out}")

    if args.archetypes:
        if clf is None:
            print(
                "archetypes need a trained classifier "
                "(--checkpoint or --train-epochs)",
                file=sys.stderr,
            )
            return EXIT_USAGE
        templates = _archetype_templates(clf, test_ds.images, test_ds.labels)
        images = reconstruct_from_output(decoders, templates)
        for k in range(templates.shape[0]):
            write_image_pgm(out / f"archetype_{k}.pgm", images[k], shape)
        print(f"wrote {templates.shape[0]} archetypes to {out}")
    return EXIT_OK


_COMMANDS = {
    "predict": cmd_predict,
    "sweep": cmd_sweep,
    "validate": cmd_validate,
    "bench": cmd_bench,
    "meanfield": cmd_meanfield,
    "reconstruct": cmd_reconstruct,
}


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Fold config-file values in as defaults; explicit flags still win."""
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config", default=None)
    known, rest = probe.parse_known_args(argv)
    if not known.config:
        return argv
    cp = configparser.ConfigParser()
    read = cp.read(known.config)
    if not read:
        raise DataResolutionError(f"config file not found: {known.config}")
    command = next((a for a in rest if not a.startswith("-")), None)
    if command and cp.has_section(command):
        sub = parser._edgescout_subparsers.choices.get(command)
        if sub is None:
            raise ValueError(f"config section [{command}] matches no subcommand")
        defaults = {}
        for key, value in cp.items(command):
            dest = key.replace("-", "_")
            action = next(
                (a for a in sub._actions if a.dest == dest), None
            )
            if action is None:
                raise ValueError(f"unknown config key {key!r} in [{command}]")
            if isinstance(action, argparse._StoreTrueAction):
                defaults[dest] = cp.getboolean(command, key)
            elif action.type is not None:
                defaults[dest] = action.type(value)
            else:
                defaults[dest] = value
        sub.set_defaults(**defaults)
    return argv


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config(parser, argv)
        args = parser.parse_args(argv)
    except (ValueError, DataResolutionError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except (DataFormatError, DataResolutionError, FileNotFoundError) as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except (
        DivergenceError,
        CascadeTrainingError,
        MeanFieldConvergenceError,
        FloatingPointError,
    ) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
