"""Synthetic benchmark generators, MNIST ingestion, and dataset files.

Every generator is a pure function of its parameters and seed. Labels are
in {-1, +1}. ``Dataset`` carries the full input matrix, a stratified
train/test split and the generating configuration.
"""

from __future__ import annotations

import gzip
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classical import StandardScaler, pca_fit

TEST_TRAIN_RATIO = 0.2
MARGIN_ATTEMPT_CAP = 1000
OVERSAMPLE_CAP = 100


class DataError(ValueError):
    pass


@dataclass
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    train_idx: np.ndarray
    test_idx: np.ndarray
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.labels = np.asarray(self.labels, dtype=int).ravel()
        if set(np.unique(self.labels)) - {-1, 1}:
            raise DataError("labels must be -1 or +1")
        if not np.all(np.isfinite(self.inputs)):
            raise DataError("inputs contain NaN or Inf")

    @property
    def X_train(self):
        return self.inputs[self.train_idx]

    @property
    def y_train(self):
        return self.labels[self.train_idx]

    @property
    def X_test(self):
        return self.inputs[self.test_idx]

    @property
    def y_test(self):
        return self.labels[self.test_idx]

    @property
    def n_features(self) -> int:
        return self.inputs.shape[1]

    @property
    def name(self) -> str:
        return dataset_name(self.config)


def stratified_split(labels, ratio: float = TEST_TRAIN_RATIO, seed=0):
    """Seeded split with ``|test| / |train| = ratio`` and class proportions kept."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    frac = ratio / (1 + ratio)
    test = []
    for c in (-1, 1):
        idx = np.flatnonzero(labels == c)
        rng.shuffle(idx)
        test.extend(idx[: int(round(len(idx) * frac))])
    test = np.sort(np.array(test, dtype=int))
    train = np.setdiff1d(np.arange(len(labels)), test)
    return train, test


def _finish(X, y, config, seed, ratio=TEST_TRAIN_RATIO) -> Dataset:
    train, test = stratified_split(y, ratio, seed)
    return Dataset(X, y, train, test, config)


def median_labels(values) -> np.ndarray:
    """+1 where the value exceeds the median, else -1."""
    values = np.asarray(values, dtype=float)
    return np.where(values - np.median(values) > 0, 1, -1)


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------


def gen_linearly_separable(d: int, N: int = 300, seed: int = 0) -> Dataset:
    """Uniform points in ``[-1, 1]^d`` outside the margin ``|w.x| <= 0.02 d``, ``w = 1``."""
    if d < 2:
        raise DataError("linearly separable data needs d >= 2")
    rng = np.random.default_rng(seed)
    w = np.ones(d)
    kept, count, drawn = [], 0, 0
    while count < N:
        if drawn > MARGIN_ATTEMPT_CAP * N:
            raise DataError("margin rejection did not produce enough points")
        batch = rng.uniform(-1.0, 1.0, size=(max(N, 64), d))
        drawn += len(batch)
        batch = batch[np.abs(batch @ w) > 0.02 * d]
        kept.append(batch)
        count += len(batch)
    X = np.concatenate(kept)[:N]
    y = median_labels(X @ w)
    return _finish(X, y, {"generator": "linearly_separable", "d": d, "N": N, "seed": seed}, seed)


def gen_bars_and_stripes(width: int, N: int = 1000, noise_std: float = 0.5, seed: int = 0) -> Dataset:
    """Images with constant +-1 columns (label -1) or rows (label +1), plus Gaussian noise."""
    if noise_std < 0:
        raise DataError("noise standard deviation must be non-negative")
    rng = np.random.default_rng(seed)
    y = rng.choice([-1, 1], size=N)
    X = np.empty((N, width, width))
    for i, label in enumerate(y):
        v = rng.choice([-1.0, 1.0], size=width)
        X[i] = np.tile(v, (width, 1)) if label == -1 else np.tile(v[:, None], (1, width))
    X += rng.normal(0.0, noise_std, size=X.shape) if noise_std > 0 else 0.0
    config = {"generator": "bars_and_stripes", "width": width, "N": N, "noise_std": noise_std, "seed": seed}
    return _finish(X.reshape(N, -1), y, config, seed)


def gen_hidden_manifold(d: int, N: int = 300, m: int = 6, seed: int = 0) -> Dataset:
    """``x = tanh(F c / sqrt(m) - b)``, labels from ``v^T tanh(W c / sqrt(m))`` split at the median."""
    if m < 1:
        raise DataError("manifold dimension must be >= 1")
    rng = np.random.default_rng(seed)
    c = rng.normal(size=(N, m))
    F = rng.normal(size=(d, m))
    b = rng.normal(size=d)
    W = rng.normal(size=(m, m))
    v = rng.normal(size=m)
    X = np.tanh(c @ F.T / np.sqrt(m) - b)
    y = median_labels(np.tanh(c @ W.T / np.sqrt(m)) @ v)
    return _finish(X, y, {"generator": "hidden_manifold", "d": d, "N": N, "m": m, "seed": seed}, seed)


def gen_two_curves(d: int, N: int = 300, degree: int = 5, offset: float = 0.1, noise: float = 0.01,
                   seed: int = 0) -> Dataset:
    """Two copies of one random Fourier curve in ``R^d``; class -1 is shifted by ``offset``.

    ``x_i(t) = sum_{n=0}^{D} a_n^i cos(n t) + b_n^i sin(n t)`` with
    coefficients ``U[0, 1]``, ``t ~ U[0, 1]`` and noise ``N(0, noise**2)``.
    """
    if degree < 1:
        raise DataError("Fourier degree must be >= 1")
    rng = np.random.default_rng(seed)
    t = rng.uniform(0.0, 1.0, size=N)
    alpha = rng.uniform(0.0, 1.0, size=(degree + 1, d))
    beta = rng.uniform(0.0, 1.0, size=(degree + 1, d))
    n = np.arange(degree + 1)
    X = np.cos(np.outer(t, n)) @ alpha + np.sin(np.outer(t, n)) @ beta
    X += rng.normal(0.0, noise, size=X.shape) if noise > 0 else 0.0
    y = np.ones(N, dtype=int)
    y[N // 2:] = -1
    X[y == -1] += offset
    config = {"generator": "two_curves", "d": d, "N": N, "degree": degree, "offset": offset,
              "noise": noise, "seed": seed}
    return _finish(X, y, config, seed)


def two_curves_diff_offset(degree: int) -> float:
    return 1.0 / (2 * degree)


def gen_two_curves_diff(degree: int, d: int = 10, N: int = 300, noise: float = 0.01, seed: int = 0) -> Dataset:
    ds = gen_two_curves(d, N, degree, two_curves_diff_offset(degree), noise, seed)
    ds.config["benchmark"] = "two_curves_diff"
    return ds


def parity_labels(C, w, b) -> np.ndarray:
    """+1 when an even number of the ``k`` perceptrons ``w_j . c + b_j`` vote +1."""
    votes = (np.asarray(C) @ np.asarray(w).T + np.asarray(b)) > 0
    return np.where(votes.sum(axis=1) % 2 == 0, 1, -1)


def gen_hyperplanes_parity(d: int = 10, N: int = 1000, k: int = 2, m: int = 3, seed: int = 0) -> Dataset:
    """Parity of ``k`` random hyperplanes in ``R^m``, embedded by ``x = M c``; exactly balanced."""
    if m > d:
        raise DataError("hidden dimension m must not exceed d")
    rng = np.random.default_rng(seed)
    M = rng.uniform(0.0, 1.0, size=(d, m))
    w = rng.uniform(-1.0, 1.0, size=(k, m))
    b = rng.uniform(-1.0, 1.0, size=k)
    n_pos, n_neg = N - N // 2, N // 2
    pool = 2 * N
    while True:
        C = rng.normal(size=(pool, m))
        y = parity_labels(C, w, b)
        pos, neg = np.flatnonzero(y == 1), np.flatnonzero(y == -1)
        if len(pos) >= n_pos and len(neg) >= n_neg:
            break
        if pool >= OVERSAMPLE_CAP * N:
            raise DataError("could not balance the classes within the oversampling cap")
        pool = min(2 * pool, OVERSAMPLE_CAP * N)
    keep = np.sort(np.concatenate([pos[:n_pos], neg[:n_neg]]))
    X = StandardScaler().fit_transform(C[keep] @ M.T)
    config = {"generator": "hyperplanes_parity", "d": d, "N": N, "k": k, "m": m, "seed": seed}
    return _finish(X, y[keep], config, seed)


# ---------------------------------------------------------------------------
# MNIST
# ---------------------------------------------------------------------------

IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801
MNIST_TEST_TRAIN_RATIO = 0.17


def _open(path):
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing MNIST file {path}")
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def read_idx_images(path) -> np.ndarray:
    with _open(path) as fh:
        head = fh.read(16)
        if len(head) < 16:
            raise DataError(f"{path}: truncated IDX header")
        magic, count, rows, cols = struct.unpack(">IIII", head)
        if magic != IDX_IMAGES:
            raise DataError(f"{path}: bad image magic {magic:#010x}")
        data = np.frombuffer(fh.read(count * rows * cols), dtype=np.uint8)
    if data.size != count * rows * cols:
        raise DataError(f"{path}: truncated image data")
    return data.reshape(count, rows, cols)


def read_idx_labels(path) -> np.ndarray:
    with _open(path) as fh:
        head = fh.read(8)
        if len(head) < 8:
            raise DataError(f"{path}: truncated IDX header")
        magic, count = struct.unpack(">II", head)
        if magic != IDX_LABELS:
            raise DataError(f"{path}: bad label magic {magic:#010x}")
        data = np.frombuffer(fh.read(count), dtype=np.uint8)
    if data.size != count:
        raise DataError(f"{path}: truncated label data")
    return data


def write_idx(path, array: np.ndarray, labels: bool = False):
    """Write an IDX file (used for fixtures)."""
    array = np.asarray(array, dtype=np.uint8)
    with open(path, "wb") as fh:
        if labels:
            fh.write(struct.pack(">II", IDX_LABELS, len(array)))
        else:
            fh.write(struct.pack(">IIII", IDX_IMAGES, *array.shape))
        fh.write(array.tobytes())


MNIST_FILES = {
    "train_images": ("train-images-idx3-ubyte", "train-images.idx3-ubyte"),
    "train_labels": ("train-labels-idx1-ubyte", "train-labels.idx1-ubyte"),
    "test_images": ("t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte"),
    "test_labels": ("t10k-labels-idx1-ubyte", "t10k-labels.idx1-ubyte"),
}


def _find(directory: Path, names) -> Path:
    for name in names:
        for suffix in ("", ".gz"):
            p = directory / (name + suffix)
            if p.exists():
                return p
    raise DataError(f"no MNIST file named {names[0]} in {directory}")


def load_mnist_35(directory):
    """Digits 3 and 5 from the raw IDX files: ``(X_train, y_train, X_test, y_test)``, 3 -> -1, 5 -> +1."""
    directory = Path(directory)
    out = []
    for split in ("train", "test"):
        imgs = read_idx_images(_find(directory, MNIST_FILES[f"{split}_images"]))
        labs = read_idx_labels(_find(directory, MNIST_FILES[f"{split}_labels"]))
        keep = (labs == 3) | (labs == 5)
        out += [imgs[keep].astype(float), np.where(labs[keep] == 5, 1, -1)]
    return tuple(out)


def _from_splits(X_tr, y_tr, X_te, y_te, config) -> Dataset:
    X = np.concatenate([X_tr, X_te])
    y = np.concatenate([y_tr, y_te])
    return Dataset(X, y, np.arange(len(y_tr)), np.arange(len(y_tr), len(y)), config)


def gen_mnist_pca(raw, d: int, subsample: int | None = None, seed: int = 0) -> Dataset:
    """Standardise with training statistics, project onto the top ``d`` training components.

    ``raw`` is a directory of IDX files or a tuple from :func:`load_mnist_35`.
    """
    X_tr, y_tr, X_te, y_te = load_mnist_35(raw) if not isinstance(raw, tuple) else raw
    X_tr, X_te = X_tr.reshape(len(X_tr), -1), X_te.reshape(len(X_te), -1)
    scaler = StandardScaler().fit(X_tr)
    Z_tr, Z_te = scaler.transform(X_tr), scaler.transform(X_te)
    proj = pca_fit(Z_tr, d)
    P_tr, P_te = proj.transform(Z_tr), proj.transform(Z_te)
    if subsample is not None:
        rng = np.random.default_rng(seed)
        a = rng.choice(len(P_tr), subsample, replace=False)
        b = rng.choice(len(P_te), subsample, replace=False)
        P_tr, y_tr, P_te, y_te = P_tr[a], y_tr[a], P_te[b], y_te[b]
    config = {"generator": "mnist_pca" if subsample is None else "mnist_pca_minus", "d": d,
              "subsample": subsample, "seed": seed}
    return _from_splits(P_tr, y_tr, P_te, y_te, config)


def bilinear_resize(image: np.ndarray, height: int, width: int | None = None) -> np.ndarray:
    """Bilinear interpolation with half-pixel centres and clamped edges."""
    width = height if width is None else width
    image = np.asarray(image, dtype=float)
    H, W = image.shape

    def axis(n_in, n_out):
        pos = (np.arange(n_out) + 0.5) * n_in / n_out - 0.5
        pos = np.clip(pos, 0, n_in - 1)
        lo = np.floor(pos).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, pos - lo

    r0, r1, fr = axis(H, height)
    c0, c1, fc = axis(W, width)
    top = image[r0][:, c0] * (1 - fc) + image[r0][:, c1] * fc
    bottom = image[r1][:, c0] * (1 - fc) + image[r1][:, c1] * fc
    return top * (1 - fr)[:, None] + bottom * fr[:, None]


def gen_mnist_cg(raw, H: int) -> Dataset:
    """Resize to ``H x H`` bilinearly, flatten, standardise with training statistics."""
    X_tr, y_tr, X_te, y_te = load_mnist_35(raw) if not isinstance(raw, tuple) else raw
    R_tr = np.array([bilinear_resize(im, H).ravel() for im in X_tr])
    R_te = np.array([bilinear_resize(im, H).ravel() for im in X_te])
    scaler = StandardScaler().fit(R_tr)
    return _from_splits(scaler.transform(R_tr), y_tr, scaler.transform(R_te), y_te,
                        {"generator": "mnist_cg", "H": H})


# ---------------------------------------------------------------------------
# Benchmarks
# ---------------------------------------------------------------------------

BENCHMARKS = ("linearly_separable", "bars_and_stripes", "hidden_manifold", "hidden_manifold_diff",
              "two_curves", "two_curves_diff", "hyperplanes_diff", "mnist_pca", "mnist_pca_minus", "mnist_cg")
SYNTHETIC = BENCHMARKS[:7]


def benchmark_datasets(name: str, seed: int = 0, values=None, mnist_dir=None) -> list[Dataset]:
    """The datasets of one benchmark sweep; ``values`` restricts the swept variable."""
    sweep = {"bars_and_stripes": [4, 8, 16, 32], "mnist_cg": [4, 8, 16, 32]}.get(name, list(range(2, 21)))
    values = sweep if values is None else list(values)
    if name == "linearly_separable":
        return [gen_linearly_separable(d, 300, seed) for d in values]
    if name == "bars_and_stripes":
        return [gen_bars_and_stripes(w, 1000, 0.5, seed) for w in values]
    if name == "hidden_manifold":
        return [gen_hidden_manifold(d, 300, 6, seed) for d in values]
    if name == "hidden_manifold_diff":
        return [_tag(gen_hidden_manifold(10, 300, m, seed), name) for m in values]
    if name == "two_curves":
        return [gen_two_curves(d, 300, 5, 0.1, 0.01, seed) for d in values]
    if name == "two_curves_diff":
        return [gen_two_curves_diff(D, 10, 300, 0.01, seed) for D in values]
    if name == "hyperplanes_diff":
        return [_tag(gen_hyperplanes_parity(10, 1000, k, 3, seed), name) for k in values]
    if name in ("mnist_pca", "mnist_pca_minus", "mnist_cg"):
        if mnist_dir is None:
            raise DataError(f"{name} needs the raw MNIST files (pass mnist_dir)")
        raw = load_mnist_35(mnist_dir)
        if name == "mnist_cg":
            return [gen_mnist_cg(raw, H) for H in values]
        sub = 250 if name == "mnist_pca_minus" else None
        return [gen_mnist_pca(raw, d, sub, seed) for d in values]
    raise DataError(f"unknown benchmark {name!r}")


def _tag(ds: Dataset, benchmark: str) -> Dataset:
    ds.config["benchmark"] = benchmark
    return ds


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------

_SKIP = {"generator", "benchmark", "seed"}


def dataset_name(config: dict) -> str:
    base = config.get("benchmark", config.get("generator", "dataset"))
    parts = [f"{k}{v}" for k, v in config.items() if k not in _SKIP and v is not None]
    return "_".join([base, *parts, f"seed{config.get('seed', 0)}"])


def _csv(X, y) -> str:
    d = X.shape[1]
    lines = [",".join([f"x{i}" for i in range(d)] + ["y"])]
    for row, label in zip(X, y):
        lines.append(",".join([format(float(v), ".17g") for v in row] + [str(int(label))]))
    return "\n".join(lines) + "\n"


def write_dataset(ds: Dataset, out_dir) -> dict[str, Path]:
    """Write ``<name>_train.csv``, ``<name>_test.csv`` and ``<name>.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    name = ds.name
    paths = {"train": out / f"{name}_train.csv", "test": out / f"{name}_test.csv", "config": out / f"{name}.json"}
    paths["train"].write_text(_csv(ds.X_train, ds.y_train))
    paths["test"].write_text(_csv(ds.X_test, ds.y_test))
    paths["config"].write_text(json.dumps(ds.config, indent=2, sort_keys=True) + "\n")
    return paths


def read_csv(path) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, :-1], data[:, -1].astype(int)


def read_dataset(train_csv) -> Dataset:
    """Load a dataset from its ``*_train.csv`` (sibling test CSV and JSON are picked up)."""
    train_csv = Path(train_csv)
    stem = train_csv.name[: -len("_train.csv")]
    X_tr, y_tr = read_csv(train_csv)
    X_te, y_te = read_csv(train_csv.with_name(f"{stem}_test.csv"))
    cfg_path = train_csv.with_name(f"{stem}.json")
    config = json.loads(cfg_path.read_text()) if cfg_path.exists() else {}
    return _from_splits(X_tr, y_tr, X_te, y_te, config)
