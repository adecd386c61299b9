"""Dataset ingestion: numeric CSV and the big-endian IDX image format."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # (N, d) float64
    labels: np.ndarray    # (N,) float64 or int64

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def feature_width(self) -> int:
        return self.features.shape[1]


def load_csv_dataset(path, label_column: str) -> Dataset:
    """Rectangular numeric CSV with a header; one column becomes the label."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        if label_column not in header:
            raise DatasetError(
                f"{path}: label column {label_column!r} not in header {header}"
            )
        label_idx = header.index(label_column)
        rows = []
        for row_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DatasetError(
                    f"{path}: row {row_no} has {len(row)} cells, expected {len(header)}"
                )
            try:
                rows.append([float(cell) for cell in row])
            except ValueError as exc:
                raise DatasetError(f"{path}: row {row_no}: {exc}") from None
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    mat = np.asarray(rows, dtype=np.float64)
    labels = mat[:, label_idx]
    features = np.delete(mat, label_idx, axis=1)
    return Dataset(features=features, labels=labels)


def _read_exact(fh, n: int, path, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise DatasetError(
            f"{path}: truncated while reading {what} at offset {fh.tell() - len(data)}"
        )
    return data


def load_idx_dataset(images_path, labels_path, limit: int | None = None,
                     normalize: str = "none") -> Dataset:
    """IDX image/label pair: big-endian magics 0x803 (3-dim u8) / 0x801 (1-dim u8).

    Pixels are scaled to [0, 1]; ``normalize='unit_l2'`` additionally divides
    each flattened example by its L2 norm. ``limit`` truncates from the front.
    """
    if normalize not in ("none", "unit_l2"):
        raise DatasetError(f"normalize must be 'none' or 'unit_l2', got {normalize!r}")
    images_path, labels_path = Path(images_path), Path(labels_path)
    with open(images_path, "rb") as fh:
        magic, = struct.unpack(">I", _read_exact(fh, 4, images_path, "magic"))
        if magic != IDX_IMAGES_MAGIC:
            raise DatasetError(
                f"{images_path}: bad magic 0x{magic:08x} at offset 0, "
                f"expected 0x{IDX_IMAGES_MAGIC:08x}"
            )
        count, rows, cols = struct.unpack(
            ">III", _read_exact(fh, 12, images_path, "dimensions")
        )
        pixels = _read_exact(fh, count * rows * cols, images_path, "pixel data")
    with open(labels_path, "rb") as fh:
        magic, = struct.unpack(">I", _read_exact(fh, 4, labels_path, "magic"))
        if magic != IDX_LABELS_MAGIC:
            raise DatasetError(
                f"{labels_path}: bad magic 0x{magic:08x} at offset 0, "
                f"expected 0x{IDX_LABELS_MAGIC:08x}"
            )
        label_count, = struct.unpack(">I", _read_exact(fh, 4, labels_path, "count"))
        if label_count != count:
            raise DatasetError(
                f"label count {label_count} != image count {count} "
                f"({images_path} vs {labels_path})"
            )
        label_bytes = _read_exact(fh, label_count, labels_path, "label data")
    features = np.frombuffer(pixels, dtype=np.uint8).reshape(count, rows * cols)
    features = features.astype(np.float64) / 255.0
    labels = np.frombuffer(label_bytes, dtype=np.uint8).astype(np.int64)
    if limit is not None:
        features = features[:limit]
        labels = labels[:limit]
    if normalize == "unit_l2":
        norms = np.sqrt((features * features).sum(axis=1, keepdims=True))
        norms[norms == 0.0] = 1.0
        features = features / norms
    return Dataset(features=features, labels=labels)
