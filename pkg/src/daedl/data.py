"""Datasets: synthetic generators, corruption, stratified splits and file I/O."""
import csv
import gzip
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError, FormatError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CORRUPTIONS = ("gaussian_noise", "rotation", "pixel_dropout")


@dataclass
class LabeledDataset:
    X: np.ndarray
    y: np.ndarray
    n_classes: int
    name: str = "dataset"
    is_ood: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2 or self.y.shape != (self.X.shape[0],):
            raise DomainError("X must be (N, D) with one label per row")
        if not np.all(np.isfinite(self.X)):
            raise DomainError(f"{self.name}: features contain NaN or Inf")
        if len(self.y) and (self.y.min() < 0 or self.y.max() >= self.n_classes):
            raise DomainError(f"{self.name}: labels outside [0, {self.n_classes})")

    def __len__(self):
        return len(self.y)

    @property
    def dim(self):
        return self.X.shape[1]

    def subset(self, idx, name=None):
        return replace(self, X=self.X[idx], y=self.y[idx], name=name or self.name)


@dataclass(frozen=True)
class CorruptionSpec:
    kind: str
    severity: int

    def __post_init__(self):
        if self.kind not in CORRUPTIONS:
            raise DomainError(f"unknown corruption {self.kind!r}; expected one of {CORRUPTIONS}")
        if not 1 <= self.severity <= 5:
            raise DomainError("severity must be an integer in 1..5")


def two_moons(n, noise_std=0.1, seed=0):
    """Two interleaved half circles, ``n // 2`` points per class."""
    if n < 2 or n % 2:
        raise DomainError("two_moons needs an even n >= 2")
    if noise_std < 0:
        raise DomainError("noise_std must be non-negative")
    rng = np.random.default_rng(seed)
    half = n // 2
    t = np.linspace(0.0, np.pi, half)
    upper = np.column_stack([np.cos(t), np.sin(t)])
    lower = np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)])
    X = np.vstack([upper, lower])
    y = np.repeat([0, 1], half)
    if noise_std > 0:
        X = X + rng.normal(scale=noise_std, size=X.shape)
    order = rng.permutation(n)
    return LabeledDataset(X[order], y[order], 2, name="two_moons")


def gaussian_blobs(n_per_class, centers, std=0.5, seed=0):
    """Isotropic Gaussian clusters, one class per center."""
    centers = np.asarray(centers, dtype=np.float64)
    rng = np.random.default_rng(seed)
    X = np.vstack([c + std * rng.normal(size=(n_per_class, centers.shape[1])) for c in centers])
    y = np.repeat(np.arange(len(centers)), n_per_class)
    order = rng.permutation(len(y))
    return LabeledDataset(X[order], y[order], len(centers), name="blobs")


def uniform_ood(n, bounds, seed=0, n_classes=2):
    bounds = np.asarray(bounds, dtype=np.float64)
    if bounds.ndim != 2 or bounds.shape[1] != 2 or np.any(bounds[:, 0] >= bounds[:, 1]):
        raise DomainError("bounds must be a list of [lo, hi] pairs with lo < hi")
    if n < 1:
        raise DomainError("n must be positive")
    rng = np.random.default_rng(seed)
    X = rng.uniform(bounds[:, 0], bounds[:, 1], size=(n, len(bounds)))
    return LabeledDataset(X, np.zeros(n, dtype=np.int64), n_classes, name="uniform_ood", is_ood=True)


def corrupt(ds, spec, seed=0):
    """Apply a severity-scaled corruption; labels are never touched.

    gaussian_noise: additive noise with std 0.04 * severity * per-feature std.
    rotation: 2-D rotation by 6 * severity degrees about the centroid.
    pixel_dropout: zero a 0.05 * severity fraction of all coordinates.
    """
    rng = np.random.default_rng(seed)
    X = ds.X.copy()
    if spec.kind == "gaussian_noise":
        X += rng.normal(size=X.shape) * (0.04 * spec.severity * X.std(axis=0))
    elif spec.kind == "rotation":
        if ds.dim != 2:
            raise DomainError("rotation corruption is defined for 2-D inputs only")
        theta = np.deg2rad(6.0 * spec.severity)
        rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
        centroid = X.mean(axis=0)
        X = (X - centroid) @ rot.T + centroid
    else:
        k = int(0.05 * spec.severity * X.size)
        flat = X.reshape(-1)
        flat[rng.choice(X.size, size=k, replace=False)] = 0.0
    return replace(ds, X=X, name=f"{ds.name}:{spec.kind}:{spec.severity}", is_ood=True)


def split(ds, ratio, seed=0):
    """Stratified shuffle split into ``(first, second)`` with ``ratio`` in the first."""
    if not 0.0 < ratio < 1.0:
        raise DomainError("ratio must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    first, second = [], []
    for c in np.unique(ds.y):
        idx = rng.permutation(np.flatnonzero(ds.y == c))
        k = int(round(ratio * len(idx)))
        first.append(idx[:k])
        second.append(idx[k:])
    first = rng.permutation(np.concatenate(first))
    second = rng.permutation(np.concatenate(second))
    if len(first) == 0 or len(second) == 0:
        raise DomainError(f"ratio {ratio} leaves one side of the split empty")
    return ds.subset(first), ds.subset(second)


def _open(path):
    path = str(path)
    return gzip.open(path, "rb") if path.endswith(".gz") else open(path, "rb")


def _read_idx(path, expected_magic):
    with _open(path) as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise FormatError(f"{path}: truncated IDX header", offset=len(raw))
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise FormatError(f"{path}: magic 0x{magic:08x}, expected 0x{expected_magic:08x}", offset=0)
    ndim = magic & 0xFF
    header_end = 4 + 4 * ndim
    if len(raw) < header_end:
        raise FormatError(f"{path}: truncated dimension header", offset=len(raw))
    dims = struct.unpack(f">{ndim}I", raw[4:header_end])
    count = int(np.prod(dims))
    if len(raw) - header_end < count:
        raise FormatError(f"{path}: expected {count} data bytes, found {len(raw) - header_end}",
                          offset=len(raw))
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=header_end).reshape(dims)


def load_idx(images_path, labels_path, name="idx", n_classes=None):
    """Read an IDX image/label pair (``.gz`` accepted), pixels scaled to [0, 1]."""
    images = _read_idx(images_path, IDX_IMAGES_MAGIC)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC)
    if len(images) != len(labels):
        raise FormatError(f"{labels_path}: {len(labels)} labels for {len(images)} images", offset=4)
    X = images.reshape(len(images), -1).astype(np.float64) / 255.0
    y = labels.astype(np.int64)
    return LabeledDataset(X, y, n_classes or int(y.max()) + 1, name=name)


def write_idx(path, array, magic):
    """Write a uint8 array as IDX; mainly for fixtures."""
    array = np.asarray(array, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">I", magic))
        fh.write(struct.pack(f">{array.ndim}I", *array.shape))
        fh.write(array.tobytes())


def read_csv(path, name=None, n_classes=None):
    """Load ``x0,...,x{D-1},label`` rows."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file", offset=0) from None
        expected = [f"x{i}" for i in range(len(header) - 1)] + ["label"]
        if header != expected:
            raise FormatError(f"{path}: header must be {','.join(expected)}", offset=0)
        rows = [r for r in reader if r]
    if not rows:
        raise FormatError(f"{path}: no data rows")
    try:
        data = np.array(rows, dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    y = data[:, -1]
    if np.any(y != np.round(y)):
        raise FormatError(f"{path}: labels must be integers")
    y = y.astype(np.int64)
    return LabeledDataset(data[:, :-1], y, n_classes or int(y.max()) + 1, name=name or str(path))


def write_csv(path, ds):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i}" for i in range(ds.dim)] + ["label"])
        for row, label in zip(ds.X, ds.y):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])
