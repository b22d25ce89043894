"""IDX parsing for MNIST files and density-ratio ranking of test images."""

from __future__ import annotations

import csv
import gzip
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .diffusion_basis import build_basis
from .errors import ConfigurationError, IdxParseError, UsageError
from .kernel_space import KernelConfig, as_dataset
from .null_models import bootstrap_sample, stream
from .smooth_test import DensityRatio, estimate_coefficients

UBYTE = 0x08
DEFAULT_CUTOFF = 10
DEFAULT_BANDWIDTH = 6392915.0
DEFAULT_BASIS_SIZE = 2000


@dataclass(frozen=True)
class IdxTensor:
    dtype: int
    dims: tuple[int, ...]
    payload: bytes

    def __post_init__(self):
        expected = math.prod(self.dims)
        if len(self.payload) != expected:
            raise ConfigurationError(f"payload has {len(self.payload)} bytes, dims {self.dims} need {expected}")

    def to_array(self) -> np.ndarray:
        return np.frombuffer(self.payload, dtype=np.uint8).reshape(self.dims)

    @classmethod
    def from_array(cls, arr) -> "IdxTensor":
        arr = np.asarray(arr)
        if arr.dtype != np.uint8:
            raise ConfigurationError(f"only unsigned-byte tensors are supported, got {arr.dtype}")
        return cls(UBYTE, tuple(int(s) for s in arr.shape), arr.tobytes(order="C"))


def parse_idx(data: bytes) -> IdxTensor:
    """Decode IDX bytes: ``00 00 <dtype> <ndims>``, big-endian u32 dims, row-major payload."""
    data = bytes(data)
    if len(data) < 4:
        raise IdxParseError(f"header needs 4 bytes, got {len(data)}", 0)
    if data[0] != 0 or data[1] != 0:
        raise IdxParseError("bad magic: first two bytes must be zero", 0 if data[0] else 1)
    if data[2] != UBYTE:
        raise IdxParseError(f"unsupported dtype byte 0x{data[2]:02x}, expected 0x08", 2)
    ndims = data[3]
    end_dims = 4 + 4 * ndims
    if len(data) < end_dims:
        raise IdxParseError(f"truncated dimension table for {ndims} dims", len(data))
    dims = struct.unpack(f">{ndims}I", data[4:end_dims])
    size = math.prod(dims)
    available = len(data) - end_dims
    if available < size:
        raise IdxParseError(f"truncated payload: need {size} bytes, have {available}", len(data))
    if available > size:
        raise IdxParseError(f"{available - size} trailing bytes after payload", end_dims + size)
    return IdxTensor(UBYTE, tuple(dims), data[end_dims:])


def serialize_idx(tensor: IdxTensor) -> bytes:
    header = bytes([0, 0, tensor.dtype, len(tensor.dims)])
    return header + struct.pack(f">{len(tensor.dims)}I", *tensor.dims) + tensor.payload


def read_idx_file(path) -> IdxTensor:
    """Read an IDX file; gzip-compressed files are detected by their magic bytes."""
    path = Path(path)
    if not path.exists():
        raise UsageError(f"no such file: {path}")
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return parse_idx(raw)


def write_idx_file(path, arr, compress: bool | None = None) -> Path:
    path = Path(path)
    raw = serialize_idx(IdxTensor.from_array(arr))
    if compress if compress is not None else path.suffix == ".gz":
        raw = gzip.compress(raw, mtime=0)
    path.write_bytes(raw)
    return path


@dataclass(frozen=True)
class LabeledImages:
    images: np.ndarray  # (N, rows*cols)
    labels: np.ndarray  # (N,)
    raw_pixels: bool
    shape: tuple[int, int] = (28, 28)


def load_labeled(images_file, labels_file, raw_pixels: bool = False) -> LabeledImages:
    """Images flattened to points (scaled to [0, 1] unless ``raw_pixels``) with their digit labels."""
    img = read_idx_file(images_file)
    lab = read_idx_file(labels_file)
    if len(lab.dims) != 1:
        raise UsageError(f"label file must be 1-D, got dims {lab.dims}")
    if not img.dims or img.dims[0] != lab.dims[0]:
        raise UsageError(f"image count {img.dims[:1]} does not match label count {lab.dims[0]}")
    arr = img.to_array()
    images = arr.reshape(arr.shape[0], -1).astype(np.float64)
    if not raw_pixels:
        images /= 255.0
    shape = tuple(img.dims[1:3]) if len(img.dims) == 3 else (images.shape[1], 1)
    return LabeledImages(images, lab.to_array().astype(np.int64), raw_pixels, shape)


def filter_digit(data: LabeledImages, d: int) -> np.ndarray:
    if int(d) != d or not 0 <= d <= 9:
        raise UsageError(f"digit must be in 0..9, got {d!r}")
    return data.images[data.labels == d]


def rank_by_density_ratio(
    train,
    test,
    cutoff: int = DEFAULT_CUTOFF,
    bandwidth: float = DEFAULT_BANDWIDTH,
    m: int = DEFAULT_BASIS_SIZE,
    seed: int = 0,
) -> list[tuple[int, float]]:
    """Test-image indices sorted ascending by the estimated density ratio test/train.

    The basis is built on a bootstrap sample of size ``m`` from ``train``;
    coefficients are estimated on ``test``. Values above 1 mark images more
    typical of the test set.
    """
    train = as_dataset(train, "train")
    test = as_dataset(test, "test")
    if train.shape[0] == 0 or test.shape[0] == 0:
        raise UsageError("train and test must both be nonempty")
    if train.shape[1] != test.shape[1]:
        raise ConfigurationError(f"train has d={train.shape[1]}, test has d={test.shape[1]}")
    ratio = fit_density_ratio(train, test, cutoff, bandwidth, m, seed)
    h = ratio(test)
    order = np.argsort(h, kind="stable")
    return [(int(i), float(h[i])) for i in order]


def fit_density_ratio(train, test, cutoff, bandwidth, m, seed) -> DensityRatio:
    Y = bootstrap_sample(train, m, stream(seed, 0))
    basis = build_basis(Y, KernelConfig(bandwidth), cutoff)
    theta = estimate_coefficients(basis, test, cutoff).theta
    return DensityRatio(basis, theta)


def write_ranking_csv(path, ranking, labels=None) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "label", "h"])
        for idx, h in ranking:
            w.writerow([idx, "" if labels is None else int(labels[idx]), repr(h)])
    return path


def contact_sheet(images, ranking, path, per_row: int = 10, shape=(28, 28), raw_pixels: bool = True) -> Path:
    """Binary PGM with three rows: smallest ratios, closest to 1, largest ratios."""
    images = np.asarray(images, dtype=np.float64)
    order = [i for i, _ in ranking]
    values = np.array([h for _, h in ranking])
    k = min(per_row, len(order))
    near = np.argsort(np.abs(values - 1.0), kind="stable")[:k]
    rows = [order[:k], [order[j] for j in sorted(near)], order[len(order) - k :]]
    h, w = shape
    sheet = np.zeros((3 * h, k * w), dtype=np.uint8)
    scale = 1.0 if raw_pixels else 255.0
    for r, idxs in enumerate(rows):
        for c, i in enumerate(idxs):
            tile = np.clip(images[i].reshape(h, w) * scale, 0, 255).astype(np.uint8)
            sheet[r * h : (r + 1) * h, c * w : (c + 1) * w] = tile
    path = Path(path)
    path.write_bytes(f"P5\n{sheet.shape[1]} {sheet.shape[0]}\n255\n".encode("ascii") + sheet.tobytes())
    return path
