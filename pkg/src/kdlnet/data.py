"""Datasets: the synthetic regression target, CSV and IDX ingestion, splits,
normalization and error metrics."""

import csv
import gzip
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, ParameterError, ParseError, ShapeError

__all__ = [
    "Dataset",
    "SplitDataset",
    "NormStats",
    "synthetic_target",
    "gen_synthetic",
    "load_csv",
    "save_csv",
    "load_idx",
    "write_idx",
    "split",
    "normalize",
    "metrics",
]


@dataclass
class Dataset:
    X: np.ndarray
    Y: np.ndarray
    names: list = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.Y = np.asarray(self.Y, dtype=np.float64)
        if self.X.ndim == 1:
            self.X = self.X[:, None]
        if self.Y.ndim == 1:
            self.Y = self.Y[:, None]
        if self.X.shape[0] != self.Y.shape[0]:
            raise ShapeError(f"{self.X.shape[0]} input rows but {self.Y.shape[0]} target rows")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.Y))):
            raise ParameterError("dataset contains non-finite entries")

    def __len__(self):
        return self.X.shape[0]

    @property
    def n_in(self):
        return self.X.shape[1]

    @property
    def n_out(self):
        return self.Y.shape[1]

    def subset(self, idx):
        return Dataset(self.X[idx], self.Y[idx], self.names)


@dataclass
class SplitDataset:
    train: Dataset
    test: Dataset = None
    val: Dataset = None
    indices: dict = field(default_factory=dict)


def synthetic_target(X):
    """``(prod_{k<=h} (1 + 4^k x_k^2) / prod_{k>h} (100 + 5 x_k))^(1/n1)``, ``h = ceil(n1/2)``."""
    X = np.asarray(X, dtype=np.float64)
    n1 = X.shape[1]
    h = math.ceil(n1 / 2)
    powers = 4.0 ** np.arange(1, h + 1)
    num = np.prod(1.0 + powers * X[:, :h] ** 2, axis=1)
    den = np.prod(100.0 + 5.0 * X[:, h:], axis=1)
    return (num / den) ** (1.0 / n1)


def gen_synthetic(n1, M, seed=0):
    """``M`` samples with inputs uniform on (-1, 1) and the synthetic target."""
    if n1 < 2:
        raise ParameterError(f"synthetic data needs n1 >= 2, got {n1}")
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.0, 1.0, size=(M, n1))
    names = [f"x{k}" for k in range(1, n1 + 1)] + ["f"]
    return Dataset(X, synthetic_target(X)[:, None], names)


# ---------------------------------------------------------------------------
# CSV


def save_csv(ds, path, header=True):
    """Inputs then targets, 17 significant digits, optional header line."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if header:
            names = ds.names or (
                [f"x{i}" for i in range(1, ds.n_in + 1)] + [f"y{i}" for i in range(1, ds.n_out + 1)]
            )
            w.writerow(names)
        for x, y in zip(ds.X, ds.Y):
            w.writerow([f"{v:.17g}" for v in x] + [f"{v:.17g}" for v in y])


def _resolve_cols(target_cols, ncols, header):
    out = []
    for c in target_cols:
        if isinstance(c, str) and not c.lstrip("-").isdigit():
            if header is None or c not in header:
                raise ParameterError(f"target column {c!r} not found in header")
            out.append(header.index(c))
            continue
        i = int(c)
        if not -ncols <= i < ncols:
            raise ParameterError(f"target column {i} out of range for {ncols} columns")
        out.append(i % ncols)
    return out


def load_csv(path, target_cols=(-1,), skip_header=None):
    """Read a numeric CSV; ``target_cols`` (indices or header names) become ``Y``.

    ``skip_header=None`` treats the first line as a header when any of its
    cells is non-numeric.
    """
    rows = []
    header = None
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if lineno == 1 and skip_header is None:
                skip_header = not all(_is_float(c) for c in row)
            if lineno == 1 and skip_header:
                header = [h.strip() for h in row]
                continue
            if not row or all(not c.strip() for c in row):
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ParseError(f"{path}: line {lineno} has {len(row)} fields, expected {width}")
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                bad = next(c for c in row if not _is_float(c))
                raise ParseError(f"{path}: line {lineno}: non-numeric cell {bad!r}") from None
    if not rows:
        raise ParseError(f"{path}: no data rows")
    data = np.array(rows)
    tcols = _resolve_cols(target_cols, data.shape[1], header)
    icols = [i for i in range(data.shape[1]) if i not in tcols]
    names = None
    if header is not None:
        names = [header[i] for i in icols] + [header[i] for i in tcols]
    return Dataset(data[:, icols], data[:, tcols], names)


def _is_float(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


# ---------------------------------------------------------------------------
# IDX (MNIST layout)

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


def _read_bytes(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def load_idx(images_path, labels_path, n_classes=10, limit=None):
    """Images scaled to [0, 1] and flattened row-major; labels one-hot."""
    raw = _read_bytes(images_path)
    if len(raw) < 16:
        raise FormatError(f"{images_path}: truncated header at offset {len(raw)}")
    magic, n, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IMAGES_MAGIC:
        raise FormatError(f"{images_path}: bad magic 0x{magic:08x} at offset 0, expected 0x{IMAGES_MAGIC:08x}")
    if len(raw) != 16 + n * rows * cols:
        raise FormatError(f"{images_path}: expected {16 + n * rows * cols} bytes, file ends at offset {len(raw)}")
    lab = _read_bytes(labels_path)
    if len(lab) < 8:
        raise FormatError(f"{labels_path}: truncated header at offset {len(lab)}")
    lmagic, ln = struct.unpack(">II", lab[:8])
    if lmagic != LABELS_MAGIC:
        raise FormatError(f"{labels_path}: bad magic 0x{lmagic:08x} at offset 0, expected 0x{LABELS_MAGIC:08x}")
    if ln != n:
        raise FormatError(f"{labels_path}: {ln} labels at offset 4 but {n} images")
    if len(lab) != 8 + n:
        raise FormatError(f"{labels_path}: expected {8 + n} bytes, file ends at offset {len(lab)}")
    if limit is not None:
        n = min(n, int(limit))
    pixels = np.frombuffer(raw, dtype=np.uint8, count=n * rows * cols, offset=16)
    X = pixels.reshape(n, rows * cols).astype(np.float64) / 255.0
    labels = np.frombuffer(lab, dtype=np.uint8, count=n, offset=8)
    if labels.size and labels.max() >= n_classes:
        off = 8 + int(np.argmax(labels >= n_classes))
        raise FormatError(f"{labels_path}: label {labels.max()} >= {n_classes} at offset {off}")
    Y = np.zeros((n, n_classes))
    Y[np.arange(n), labels] = 1.0
    return Dataset(X, Y)


def write_idx(images_path, labels_path, images, labels):
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IMAGES_MAGIC, n, rows, cols))
        fh.write(images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", LABELS_MAGIC, n))
        fh.write(labels.tobytes())


# ---------------------------------------------------------------------------
# splits and normalization


def split(ds, test_fraction=0.0, val_fraction=0.0, seed=0):
    """Random disjoint train/test/val partition, deterministic in ``seed``."""
    for name, f in (("test_fraction", test_fraction), ("val_fraction", val_fraction)):
        if not 0.0 <= f < 1.0:
            raise ParameterError(f"{name} must lie in [0, 1), got {f}")
    if test_fraction + val_fraction >= 1.0:
        raise ParameterError("test_fraction + val_fraction must be < 1")
    n = len(ds)
    perm = np.random.default_rng(seed).permutation(n)
    n_test = int(round(test_fraction * n))
    n_val = int(round(val_fraction * n))
    n_train = n - n_test - n_val
    if n_train < 1 or (test_fraction > 0 and n_test < 1) or (val_fraction > 0 and n_val < 1):
        raise ParameterError(f"split of {n} rows leaves an empty partition")
    idx_train = perm[:n_train]
    idx_test = perm[n_train : n_train + n_test]
    idx_val = perm[n_train + n_test :]
    return SplitDataset(
        train=ds.subset(idx_train),
        test=ds.subset(idx_test) if n_test else None,
        val=ds.subset(idx_val) if n_val else None,
        indices={"train": idx_train, "test": idx_test, "val": idx_val},
    )


@dataclass
class NormStats:
    method: str
    shift: np.ndarray
    scale: np.ndarray

    def apply(self, ds):
        return Dataset((ds.X - self.shift) / self.scale, ds.Y, ds.names)

    def inverse(self, ds):
        return Dataset(ds.X * self.scale + self.shift, ds.Y, ds.names)


def normalize(ds, method="zscore", stats=None):
    """Normalize inputs column-wise; stats come from ``ds`` unless given.

    Constant columns get unit scale.  Returns ``(normalized, stats)``.
    """
    method = (method or "none").lower()
    if stats is None:
        n_in = ds.n_in
        if method == "none":
            shift, scale = np.zeros(n_in), np.ones(n_in)
        elif method == "minmax":
            lo, hi = ds.X.min(axis=0), ds.X.max(axis=0)
            shift, scale = lo, hi - lo
        elif method == "zscore":
            shift, scale = ds.X.mean(axis=0), ds.X.std(axis=0)
        else:
            raise ParameterError(f"unknown normalization {method!r}")
        scale = np.where(scale > 0, scale, 1.0)
        stats = NormStats(method, shift, scale)
    return stats.apply(ds), stats


def normalize_split(sd, method="zscore"):
    train, stats = normalize(sd.train, method)
    test = stats.apply(sd.test) if sd.test is not None else None
    val = stats.apply(sd.val) if sd.val is not None else None
    return SplitDataset(train, test, val, sd.indices), stats


# ---------------------------------------------------------------------------
# metrics


def metrics(predictions, targets):
    """``mse`` (mean squared l2 error per sample), ``rel_l2_pct`` and ``class_err_pct``."""
    P = np.asarray(predictions, dtype=np.float64)
    T = np.asarray(targets, dtype=np.float64)
    P = P.reshape(P.shape[0], -1)
    T = T.reshape(T.shape[0], -1)
    if P.shape != T.shape:
        raise ShapeError(f"predictions {P.shape} vs targets {T.shape}")
    R = P - T
    mse = float(np.sum(R * R) / max(1, P.shape[0]))
    tn = np.linalg.norm(T)
    rel = float(100.0 * np.linalg.norm(R) / tn) if tn > 0 else float("nan")
    # argmax returns the first maximum, i.e. ties go to the lowest index
    cls = float(100.0 * np.mean(np.argmax(P, axis=1) != np.argmax(T, axis=1))) if P.shape[0] else 0.0
    return {"mse": mse, "rel_l2_pct": rel, "class_err_pct": cls}
