"""Binary portable graymap (P5) output for heatmaps and reconstructions.

The value-to-gray mapping is affine and recorded in a header comment so any
exported image can be decoded back to physical values bit-reproducibly.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


def write_pgm(path, gray: np.ndarray, comment: str | None = None) -> None:
    """Write an 8-bit grayscale matrix as binary P5."""
    gray = np.asarray(gray)
    if gray.ndim != 2:
        raise ValueError("graymap must be 2-d")
    if gray.dtype != np.uint8:
        raise ValueError("graymap must be uint8; map values first")
    height, width = gray.shape
    header = ["P5"]
    if comment:
        header.extend(f"# {line}" for line in comment.splitlines())
    header.append(f"{width} {height}")
    header.append("255")
    Path(path).write_bytes(("\n".join(header) + "\n").encode("ascii") + gray.tobytes())


def read_pgm(path) -> tuple[np.ndarray, list[str]]:
    """Read a binary P5 file back into (uint8 matrix, comment lines)."""
    raw = Path(path).read_bytes()
    if not raw.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary PGM file")
    comments: list[str] = []
    fields: list[int] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            end = raw.index(b"\n", pos)
            comments.append(raw[pos + 1 : end].decode("ascii").strip())
            pos = end + 1
            continue
        end = pos
        while end < len(raw) and not raw[end : end + 1].isspace():
            end += 1
        fields.append(int(raw[pos:end]))
        pos = end
    pos += 1  # single whitespace after maxval
    width, height, maxval = fields
    if maxval != 255:
        raise ValueError(f"{path}: expected maxval 255, got {maxval}")
    gray = np.frombuffer(raw, dtype=np.uint8, count=width * height, offset=pos)
    return gray.reshape(height, width).copy(), comments


def gray_map(
    values: np.ndarray,
    vmin: float | None = None,
    vmax: float | None = None,
) -> tuple[np.ndarray, float, float]:
    """Affine-map values onto [0, 255]; returns (gray, vmin, vmax) used."""
    values = np.asarray(values, dtype=np.float64)
    vmin = float(values.min()) if vmin is None else float(vmin)
    vmax = float(values.max()) if vmax is None else float(vmax)
    if vmax > vmin:
        scaled = (np.clip(values, vmin, vmax) - vmin) / (vmax - vmin)
    else:
        scaled = np.zeros_like(values)
    return np.round(scaled * 255.0).astype(np.uint8), vmin, vmax


def write_value_pgm(
    path,
    values: np.ndarray,
    vmin: float | None = None,
    vmax: float | None = None,
    extra_comment: str | None = None,
) -> None:
    """Write real-valued matrix as P5 with the affine mapping in the header."""
    gray, lo, hi = gray_map(values, vmin, vmax)
    comment = f"edgescout value map: vmin={lo!r} vmax={hi!r}"
    if extra_comment:
        comment += "\n" + extra_comment
    write_pgm(path, gray, comment)


def write_image_pgm(path, pixels: np.ndarray, shape: tuple[int, int]) -> None:
    """Write one reconstruction/input vector as an image, clipped to [0, 1]."""
    img = np.clip(np.asarray(pixels, dtype=np.float64), 0.0, 1.0)
    gray = np.round(img.reshape(shape) * 255.0).astype(np.uint8)
    write_pgm(path, gray, "edgescout image: values clipped to [0,1]")
