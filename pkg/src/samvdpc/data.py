"""Multi-view dataset loading, normalization, splitting, and synthesis.

A dataset is V feature matrices over the same N samples plus integer labels
in [0, K). On disk it is described by a JSON manifest pointing at one
delimited text matrix per view and a label file with one 0-based integer
per line.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .numerics import ConfigError, Rng


class DataError(ValueError):
    """A file or value violates the dataset contract."""


@dataclass
class MultiViewDataset:
    name: str
    views: list[np.ndarray]        # each N x M^v, float64
    labels: np.ndarray             # N ints in [0, K)
    n_classes: int
    normalized: bool = False

    @property
    def n_views(self):
        return len(self.views)

    @property
    def n_samples(self):
        return len(self.labels)

    @property
    def view_dims(self):
        return [x.shape[1] for x in self.views]

    def validate(self):
        if self.n_views < 2:
            raise DataError(f"need at least 2 views, got {self.n_views}")
        for v, x in enumerate(self.views):
            if x.shape[0] != self.n_samples:
                raise DataError(f"view {v} has {x.shape[0]} rows but there are "
                                f"{self.n_samples} labels")
            if not np.isfinite(x).all():
                raise DataError(f"view {v} contains non-finite values")
        if self.labels.min() < 0 or self.labels.max() >= self.n_classes:
            raise DataError(f"labels must lie in [0, {self.n_classes}), "
                            f"got range {self.labels.min()}..{self.labels.max()}")
        present = np.unique(self.labels)
        if len(present) != self.n_classes:
            missing = sorted(set(range(self.n_classes)) - set(present.tolist()))
            raise DataError(f"classes {missing} have no samples")
        return self


@dataclass
class SplitIndices:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


@dataclass
class NormStats:
    """Per-view train-split feature means and stds."""
    means: list[np.ndarray]
    stds: list[np.ndarray]


@dataclass
class SyntheticSpec:
    scheme: str = "xor2"
    n_samples: int = 2000
    n_views: int = 2
    n_classes: int = 2
    view_dim: int = 10
    noise: float = 0.1
    seed: int = 0


MANIFEST_KEYS = {"name", "classes", "labels", "views"}
VIEW_KEYS = {"name", "path", "dim"}


def _read_matrix(path):
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: file not found")
    rows = []
    lines = path.read_text().splitlines()
    start = 0
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        delim = "," if "," in line else None
        fields = [f for f in line.split(delim) if f.strip()]
        try:
            rows.append([float(f) for f in fields])
        except ValueError as exc:
            if lineno == 1:  # single non-numeric header row is allowed
                continue
            raise DataError(f"{path}:{lineno}: non-numeric cell ({exc})") from None
        if len(rows) > 1 and len(rows[-1]) != len(rows[0]):
            raise DataError(f"{path}:{lineno}: expected {len(rows[0])} columns, "
                            f"got {len(rows[-1])}")
    if not rows:
        raise DataError(f"{path}: no data rows")
    return np.asarray(rows, dtype=np.float64)


def _read_labels(path, n_classes):
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: file not found")
    labels = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            value = int(line.strip())
        except ValueError:
            raise DataError(f"{path}:{lineno}: label is not an integer: {line.strip()!r}") from None
        if not 0 <= value < n_classes:
            raise DataError(f"{path}:{lineno}: label {value} outside [0, {n_classes})")
        labels.append(value)
    return np.asarray(labels, dtype=np.int64)


def load_dataset(manifest_path):
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise DataError(f"{manifest_path}: manifest not found")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{manifest_path}: invalid JSON ({exc})") from None
    unknown = set(manifest) - MANIFEST_KEYS
    if unknown:
        raise DataError(f"{manifest_path}: unknown manifest keys {sorted(unknown)}")
    missing = MANIFEST_KEYS - set(manifest)
    if missing:
        raise DataError(f"{manifest_path}: missing manifest keys {sorted(missing)}")
    base = manifest_path.parent
    views = []
    for i, spec in enumerate(manifest["views"]):
        unknown = set(spec) - VIEW_KEYS
        if unknown:
            raise DataError(f"{manifest_path}: view {i} has unknown keys {sorted(unknown)}")
        x = _read_matrix(base / spec["path"])
        if x.shape[1] != spec["dim"]:
            raise DataError(f"{base / spec['path']}: manifest says dim {spec['dim']}, "
                            f"file has {x.shape[1]} columns")
        views.append(x)
    labels = _read_labels(base / manifest["labels"], manifest["classes"])
    return MultiViewDataset(manifest["name"], views, labels, manifest["classes"]).validate()


def normalize(dataset, train_idx):
    """Z-score all views with train-split statistics; returns (dataset, stats)."""
    if dataset.normalized:
        raise DataError(f"dataset {dataset.name!r} is already normalized")
    train_idx = np.asarray(train_idx)
    if train_idx.size == 0:
        raise DataError("train indices must be nonempty")
    means, stds, views = [], [], []
    for x in dataset.views:
        mu = x[train_idx].mean(axis=0)
        sigma = x[train_idx].std(axis=0)
        safe = np.where(sigma < 1e-12, 1.0, sigma)
        scaled = (x - mu) / safe
        scaled[:, sigma < 1e-12] = 0.0
        views.append(scaled)
        means.append(mu)
        stds.append(sigma)
    out = MultiViewDataset(dataset.name, views, dataset.labels.copy(),
                           dataset.n_classes, normalized=True)
    return out, NormStats(means, stds)


def apply_normalization(views, stats):
    """Transform raw view matrices with previously stored train statistics."""
    out = []
    for x, mu, sigma in zip(views, stats.means, stats.stds):
        safe = np.where(sigma < 1e-12, 1.0, sigma)
        scaled = (x - mu) / safe
        scaled[:, sigma < 1e-12] = 0.0
        out.append(scaled)
    return out


def split(dataset, seed):
    """Stratified 0.6/0.2/0.2 split; per-class remainders go train-first."""
    rng = Rng(seed)
    train, val, test = [], [], []
    for cls in range(dataset.n_classes):
        members = np.flatnonzero(dataset.labels == cls)
        members = members[rng.permutation(len(members))]
        n = len(members)
        if n < 3:
            warnings.warn(f"class {cls} has only {n} samples; assigning all to train")
            train.extend(members.tolist())
            continue
        n_train, n_val = int(n * 0.6), int(n * 0.2)
        n_test = int(n * 0.2)
        leftover = n - n_train - n_val - n_test
        for bucket in ("train", "val", "test"):
            if leftover == 0:
                break
            leftover -= 1
            if bucket == "train":
                n_train += 1
            elif bucket == "val":
                n_val += 1
            else:
                n_test += 1
        train.extend(members[:n_train].tolist())
        val.extend(members[n_train:n_train + n_val].tolist())
        test.extend(members[n_train + n_val:].tolist())
    return SplitIndices(np.asarray(sorted(train)), np.asarray(sorted(val)),
                        np.asarray(sorted(test)))


def minibatches(indices, batch_size, rng):
    """Shuffle indices and chunk; the final partial batch is kept."""
    if batch_size < 1:
        raise ConfigError(f"batch size must be >= 1, got {batch_size}")
    indices = np.asarray(indices)
    if batch_size > indices.size:
        warnings.warn(f"batch size {batch_size} exceeds split size {indices.size}; "
                      f"using one full batch")
        batch_size = indices.size
    shuffled = indices[rng.permutation(indices.size)]
    return [shuffled[i:i + batch_size] for i in range(0, indices.size, batch_size)]


def _xor2(spec, rng):
    if spec.n_views != 2 or spec.n_classes != 2:
        raise ConfigError("xor2 requires exactly 2 views and 2 classes")
    bits = rng.integers(0, 2, (spec.n_samples, 2))
    labels = np.bitwise_xor(bits[:, 0], bits[:, 1]).astype(np.int64)
    views = []
    for v in range(2):
        direction = rng.normal(1.0, (spec.view_dim,))
        direction /= np.linalg.norm(direction)
        signal = np.outer(2.0 * bits[:, v] - 1.0, direction)
        noise = rng.normal(spec.noise, (spec.n_samples, spec.view_dim)) if spec.noise > 0 \
            else np.zeros((spec.n_samples, spec.view_dim))
        views.append(signal + noise)
    return views, labels


def _shared_specific(spec, rng):
    latent_dim = max(4, spec.n_classes)
    class_means = rng.normal(2.0, (spec.n_classes, latent_dim))
    labels = rng.integers(0, spec.n_classes, spec.n_samples).astype(np.int64)
    shared = class_means[labels] + rng.normal(0.5, (spec.n_samples, latent_dim))
    views = []
    for v in range(spec.n_views):
        projection = rng.normal(1.0, (latent_dim, spec.view_dim)) / np.sqrt(latent_dim)
        specific = rng.normal(1.0, (spec.n_samples, spec.view_dim))
        noise = rng.normal(spec.noise, (spec.n_samples, spec.view_dim)) if spec.noise > 0 \
            else np.zeros((spec.n_samples, spec.view_dim))
        views.append(shared @ projection + specific + noise)
    return views, labels


SCHEMES = {"xor2": _xor2, "shared+specific": _shared_specific}


def generate_synthetic(spec):
    if spec.noise < 0 or spec.view_dim < 1 or spec.n_samples < 1:
        raise ConfigError(f"invalid synthetic spec: {spec}")
    if spec.scheme not in SCHEMES:
        raise ConfigError(f"unknown scheme {spec.scheme!r}; choose one of {sorted(SCHEMES)}")
    rng = Rng(spec.seed)
    views, labels = SCHEMES[spec.scheme](spec, rng)
    name = f"synthetic-{spec.scheme}"
    return MultiViewDataset(name, views, labels, spec.n_classes).validate()


def write_dataset(dataset, out_dir):
    """Write a dataset in manifest format; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    view_specs = []
    for v, x in enumerate(dataset.views):
        path = f"view{v}.csv"
        np.savetxt(out_dir / path, x, delimiter=",", fmt="%.17g")
        view_specs.append({"name": f"view{v}", "path": path, "dim": int(x.shape[1])})
    label_path = out_dir / "labels.txt"
    label_path.write_text("\n".join(str(int(y)) for y in dataset.labels) + "\n")
    manifest = {"name": dataset.name, "classes": int(dataset.n_classes),
                "labels": "labels.txt", "views": view_specs}
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest_path
