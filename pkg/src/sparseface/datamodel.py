"""Core containers and dataset plumbing.

Feature matrices follow a samples-as-columns convention throughout the
package: a dataset with d features and N samples is a (d, N) float64
array, and every per-sample operation slices columns. Instances are
treated as immutable after construction and are safe to share across
threads.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from . import smx
from .errors import DataError

# PIL modes we decode natively, with the divisor that maps the integer
# range onto [0, 1].
_BIT_DEPTH_MAX = {"L": 255.0, "I;16": 65535.0, "1": 1.0}

FEATURES_FILE = "features.smx"
LABELS_FILE = "labels.csv"
DATASET_META_FILE = "meta.json"


def _check_features(features: np.ndarray) -> np.ndarray:
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 2:
        raise DataError(f"feature matrix must be 2-D, got ndim={f.ndim}")
    if f.shape[0] < 1:
        raise DataError("feature dimension must be >= 1")
    if not np.all(np.isfinite(f)):
        raise DataError("feature matrix contains non-finite values")
    return f


@dataclass(frozen=True)
class LabeledDataset:
    """Feature matrix plus per-column class labels and optional subject
    identity tags.

    An empty dataset (zero columns) is permitted only as the output of a
    degenerate split; ingestion always produces at least one sample.
    """

    features: np.ndarray
    labels: np.ndarray
    class_names: tuple[str, ...]
    identities: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "features", _check_features(self.features))
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "labels", labels)
        if labels.ndim != 1 or labels.shape[0] != self.features.shape[1]:
            raise DataError(
                f"labels length {labels.shape} does not match "
                f"{self.features.shape[1]} samples"
            )
        if not self.class_names:
            raise DataError("class_names must be nonempty")
        if labels.size and (labels.min() < 0 or labels.max() >= len(self.class_names)):
            raise DataError("label index outside class_names range")
        if self.identities is not None and len(self.identities) != labels.shape[0]:
            raise DataError("identities length does not match sample count")

    @property
    def n_features(self) -> int:
        return self.features.shape[0]

    @property
    def n_samples(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    def take(self, indices) -> "LabeledDataset":
        """New dataset restricted to the given column indices, in order."""
        idx = np.asarray(indices, dtype=np.int64)
        ids = None
        if self.identities is not None:
            ids = tuple(self.identities[i] for i in idx)
        return LabeledDataset(
            features=self.features[:, idx],
            labels=self.labels[idx],
            class_names=self.class_names,
            identities=ids,
        )

    def with_features(self, features: np.ndarray) -> "LabeledDataset":
        """Same labels/identities over a transformed feature matrix."""
        return LabeledDataset(
            features=features,
            labels=self.labels,
            class_names=self.class_names,
            identities=self.identities,
        )


@dataclass(frozen=True)
class SplitSpec:
    """Per-class train/test sample counts and shuffling behaviour."""

    per_class_train: int
    per_class_test: int
    identity_disjoint: bool = False
    shuffle_seed: int = 0

    def __post_init__(self):
        if self.per_class_train < 0 or self.per_class_test < 0:
            raise DataError("per-class counts must be non-negative")
        if self.per_class_train + self.per_class_test < 1:
            raise DataError("split must request at least one sample")


@dataclass(frozen=True)
class ConfusionMatrix:
    """Square count matrix indexed [true][predicted]."""

    counts: np.ndarray
    class_names: tuple[str, ...]

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        object.__setattr__(self, "counts", c)
        k = len(self.class_names)
        if c.shape != (k, k):
            raise DataError(f"confusion counts shape {c.shape} != ({k}, {k})")


def load_manifest(path, resize: tuple[int, int] | None = None) -> LabeledDataset:
    """Load a CSV manifest of grayscale images into a LabeledDataset.

    The manifest has a header ``path,label`` or ``path,label,identity``;
    image paths are resolved relative to the manifest's directory. Each
    image is flattened column-wise into one feature column, with pixel
    values divided by the bit-depth maximum so features lie in [0, 1].
    Columns appear in manifest row order. `resize` forces every image to
    (height, width) before flattening, for combining corpora of
    different resolutions.
    """
    base = os.path.dirname(os.path.abspath(path))
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open manifest {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty manifest") from None
        header = [h.strip() for h in header]
        if header not in (["path", "label"], ["path", "label", "identity"]):
            raise DataError(
                f"{path}: manifest header must be 'path,label[,identity]', "
                f"got {','.join(header)}"
            )
        has_identity = len(header) == 3
        columns: list[np.ndarray] = []
        label_names: list[str] = []
        identities: list[str] = []
        shape = None
        for rownum, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path} row {rownum}: expected {len(header)} fields, got {len(row)}"
                )
            img_path = os.path.join(base, row[0].strip())
            label = row[1].strip()
            if not label:
                raise DataError(f"{path} row {rownum}: empty label")
            try:
                with Image.open(img_path) as img:
                    if img.mode not in _BIT_DEPTH_MAX:
                        img = img.convert("L")
                    if resize is not None:
                        img = img.resize(
                            (resize[1], resize[0]), resample=Image.BILINEAR
                        )
                    divisor = _BIT_DEPTH_MAX[img.mode]
                    arr = np.asarray(img, dtype=np.float64) / divisor
            except FileNotFoundError:
                raise DataError(f"{path} row {rownum}: image file not found: {img_path}") from None
            except OSError as exc:
                raise DataError(f"{path} row {rownum}: unreadable image {img_path}: {exc}") from exc
            if arr.ndim != 2:
                raise DataError(f"{path} row {rownum}: {img_path} did not decode to a 2-D grayscale image")
            if shape is None:
                shape = arr.shape
            elif arr.shape != shape:
                raise DataError(
                    f"{path} row {rownum}: image size {arr.shape[0]}x{arr.shape[1]} "
                    f"differs from {shape[0]}x{shape[1]} seen earlier"
                )
            columns.append(arr.flatten(order="F"))
            label_names.append(label)
            if has_identity:
                identities.append(row[2].strip())
        if not columns:
            raise DataError(f"{path}: manifest has no data rows")

    class_names: list[str] = []
    index = {}
    for name in label_names:
        if name not in index:
            index[name] = len(class_names)
            class_names.append(name)
    labels = np.array([index[name] for name in label_names], dtype=np.int64)
    return LabeledDataset(
        features=np.column_stack(columns),
        labels=labels,
        class_names=tuple(class_names),
        identities=tuple(identities) if has_identity else None,
    )


def _identity_cut(ds: LabeledDataset, spec: SplitSpec, rng) -> tuple[set, set]:
    """Partition identities so each class keeps enough samples on both
    sides. Randomized search with a bounded number of attempts; raises
    when no examined cut is feasible."""
    ids = sorted(set(ds.identities))
    n_classes = ds.n_classes
    id_index = {ident: k for k, ident in enumerate(ids)}
    # per-identity class histogram
    hist = np.zeros((len(ids), n_classes), dtype=np.int64)
    for ident, lab in zip(ds.identities, ds.labels):
        hist[id_index[ident], lab] += 1
    totals = hist.sum(axis=0)
    for _ in range(200):
        perm = rng.permutation(len(ids))
        running = np.zeros(n_classes, dtype=np.int64)
        for cut in range(1, len(ids)):
            running += hist[perm[cut - 1]]
            if np.all(running >= spec.per_class_train) and np.all(
                totals - running >= spec.per_class_test
            ):
                train_ids = {ids[k] for k in perm[:cut]}
                test_ids = {ids[k] for k in perm[cut:]}
                return train_ids, test_ids
    raise DataError(
        "identity-disjoint split infeasible for the requested per-class counts"
    )


def split(ds: LabeledDataset, spec: SplitSpec) -> tuple[LabeledDataset, LabeledDataset]:
    """Partition a dataset into train/test with exact per-class counts.

    Deterministic given spec.shuffle_seed. With identity_disjoint set,
    no identity tag appears on both sides of the split.
    """
    counts = ds.class_counts()
    need = spec.per_class_train + spec.per_class_test
    for c, n in enumerate(counts):
        if n < need:
            raise DataError(
                f"class '{ds.class_names[c]}' has {n} samples, "
                f"need {need} for the requested split"
            )
    rng = np.random.default_rng(spec.shuffle_seed)

    if spec.identity_disjoint:
        if ds.identities is None:
            raise DataError("identity-disjoint split requires identity tags")
        train_ids, _ = _identity_cut(ds, spec, rng)
        in_train_pool = np.array(
            [ident in train_ids for ident in ds.identities], dtype=bool
        )
    else:
        in_train_pool = None

    train_idx: list[int] = []
    test_idx: list[int] = []
    for c in range(ds.n_classes):
        members = np.flatnonzero(ds.labels == c)
        if in_train_pool is None:
            members = members[rng.permutation(members.size)]
            train_idx.extend(members[: spec.per_class_train])
            test_idx.extend(members[spec.per_class_train : need])
        else:
            pool_t = members[in_train_pool[members]]
            pool_e = members[~in_train_pool[members]]
            pool_t = pool_t[rng.permutation(pool_t.size)]
            pool_e = pool_e[rng.permutation(pool_e.size)]
            if pool_t.size < spec.per_class_train or pool_e.size < spec.per_class_test:
                raise DataError(
                    f"identity-disjoint split infeasible for class "
                    f"'{ds.class_names[c]}'"
                )
            train_idx.extend(pool_t[: spec.per_class_train])
            test_idx.extend(pool_e[: spec.per_class_test])

    train_idx = np.asarray(train_idx, dtype=np.int64)
    test_idx = np.asarray(test_idx, dtype=np.int64)
    train_idx = train_idx[rng.permutation(train_idx.size)]
    test_idx = test_idx[rng.permutation(test_idx.size)]
    return ds.take(train_idx), ds.take(test_idx)


def confusion_and_rates(
    true_labels, predicted_labels, class_names
) -> tuple[ConfusionMatrix, np.ndarray, float]:
    """Confusion counts plus per-class and average recognition rates.

    The average is the unweighted mean of per-class rates over classes
    that actually appear in `true_labels`; classes with no test samples
    get a NaN rate and are excluded from the average.
    """
    t = np.asarray(true_labels, dtype=np.int64)
    p = np.asarray(predicted_labels, dtype=np.int64)
    if t.shape != p.shape or t.ndim != 1:
        raise DataError("true/predicted label sequences must be equal-length 1-D")
    if t.size == 0:
        raise DataError("cannot compute a confusion matrix from zero samples")
    k = len(class_names)
    for arr, name in ((t, "true"), (p, "predicted")):
        if arr.min() < 0 or arr.max() >= k:
            raise DataError(f"{name} labels outside [0, {k})")
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    row_sums = counts.sum(axis=1)
    rates = np.full(k, np.nan)
    present = row_sums > 0
    rates[present] = counts.diagonal()[present] / row_sums[present]
    average = float(np.mean(rates[present]))
    return ConfusionMatrix(counts, tuple(class_names)), rates, average


def concat_datasets(datasets) -> LabeledDataset:
    """Concatenate datasets sample-wise; class name lists are merged in
    first-appearance order. Feature dimensions must already agree."""
    datasets = list(datasets)
    if not datasets:
        raise DataError("no datasets to concatenate")
    dim = datasets[0].n_features
    for ds in datasets[1:]:
        if ds.n_features != dim:
            raise DataError(
                f"feature dimension mismatch: {ds.n_features} != {dim}; "
                "use a common resize when combining corpora"
            )
    class_names: list[str] = []
    index: dict[str, int] = {}
    for ds in datasets:
        for name in ds.class_names:
            if name not in index:
                index[name] = len(class_names)
                class_names.append(name)
    feats = np.concatenate([ds.features for ds in datasets], axis=1)
    labels = np.concatenate(
        [np.array([index[ds.class_names[l]] for l in ds.labels]) for ds in datasets]
    )
    have_ids = all(ds.identities is not None for ds in datasets)
    ids = None
    if have_ids:
        ids = tuple(i for ds in datasets for i in ds.identities)
    return LabeledDataset(feats, labels, tuple(class_names), ids)


def save_dataset(ds: LabeledDataset, dirpath) -> None:
    """Persist a dataset as features.smx + labels.csv + meta.json."""
    os.makedirs(dirpath, exist_ok=True)
    smx.save_matrix(ds.features, os.path.join(dirpath, FEATURES_FILE))
    with open(os.path.join(dirpath, LABELS_FILE), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "identity"])
        for i, lab in enumerate(ds.labels):
            ident = ds.identities[i] if ds.identities is not None else ""
            writer.writerow([ds.class_names[lab], ident])
    meta = {
        "class_names": list(ds.class_names),
        "has_identities": ds.identities is not None,
    }
    with open(os.path.join(dirpath, DATASET_META_FILE), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(dirpath) -> LabeledDataset:
    meta_path = os.path.join(dirpath, DATASET_META_FILE)
    if not os.path.isfile(meta_path):
        raise DataError(f"{dirpath}: not a dataset directory ({DATASET_META_FILE} missing)")
    with open(meta_path, encoding="utf-8") as fh:
        meta = json.load(fh)
    class_names = tuple(meta["class_names"])
    index = {name: i for i, name in enumerate(class_names)}
    features = smx.load_matrix(os.path.join(dirpath, FEATURES_FILE))
    labels = []
    identities = []
    with open(os.path.join(dirpath, LABELS_FILE), newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)  # header
        for row in reader:
            if row[0] not in index:
                raise DataError(f"{dirpath}: label '{row[0]}' not in meta class_names")
            labels.append(index[row[0]])
            identities.append(row[1])
    ids = tuple(identities) if meta.get("has_identities") else None
    return LabeledDataset(features, np.array(labels), class_names, ids)
