"""Reader (and a small writer) for the big-endian IDX image/label format."""
from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


class IDXFormatError(ValueError):
    pass


def _read_bytes(path):
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _parse(raw, magic, n_dims, what):
    header_len = 4 + 4 * n_dims
    if len(raw) < header_len:
        raise IDXFormatError(f"truncated {what} file: header needs {header_len} bytes, got {len(raw)}")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise IDXFormatError(f"bad magic 0x{found:08x} in {what} file (expected 0x{magic:08x})")
    dims = struct.unpack(f">{n_dims}I", raw[4:header_len])
    n_bytes = int(np.prod(dims))
    body = raw[header_len:]
    if len(body) < n_bytes:
        raise IDXFormatError(f"truncated {what} file: expected {n_bytes} data bytes, got {len(body)}")
    return dims, np.frombuffer(body, dtype=np.uint8, count=n_bytes)


def read_idx_images(path):
    """Images as an ``n x (rows * cols)`` float64 matrix scaled to ``[0, 1]``."""
    (count, rows, cols), data = _parse(_read_bytes(path), IMAGES_MAGIC, 3, "images")
    return data.reshape(count, rows * cols).astype(np.float64) / 255.0


def read_idx_labels(path):
    (count,), data = _parse(_read_bytes(path), LABELS_MAGIC, 1, "labels")
    return data.astype(np.int64)


def load_idx(images_path, labels_path):
    """Load a matching pair of IDX image and label files."""
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise IDXFormatError(
            f"count mismatch: {images.shape[0]} images but {labels.shape[0]} labels"
        )
    return images, labels


def write_idx_images(path, images):
    images = np.asarray(images, dtype=np.uint8)
    count, rows, cols = images.shape
    Path(path).write_bytes(struct.pack(">IIII", IMAGES_MAGIC, count, rows, cols) + images.tobytes())


def write_idx_labels(path, labels):
    labels = np.asarray(labels, dtype=np.uint8)
    Path(path).write_bytes(struct.pack(">II", LABELS_MAGIC, labels.shape[0]) + labels.tobytes())
