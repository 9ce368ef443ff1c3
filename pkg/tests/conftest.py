import csv
import os

import numpy as np
import pytest
from PIL import Image


def write_manifest(dirpath, rows, header=("path", "label")):
    """Write a manifest CSV under dirpath; rows are tuples matching the
    header. Returns the manifest path."""
    path = os.path.join(dirpath, "manifest.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def write_image(dirpath, name, pixels):
    """Save a uint8 grayscale PNG and return its relative name."""
    arr = np.asarray(pixels, dtype=np.uint8)
    Image.fromarray(arr, mode="L").save(os.path.join(dirpath, name))
    return name


def make_image_corpus(dirpath, per_class, class_specs, shape=(4, 5), seed=0,
                      identities=None):
    """Build a tiny corpus of constant-ish grayscale images.

    class_specs: {label: base_gray_level}. identities, when given, is a
    list of identity names cycled over samples within each class.
    Returns the manifest path.
    """
    rng = np.random.default_rng(seed)
    rows = []
    has_ids = identities is not None
    for label, level in class_specs.items():
        for i in range(per_class):
            noise = rng.integers(-10, 11, size=shape)
            pixels = np.clip(level + noise, 0, 255).astype(np.uint8)
            name = write_image(dirpath, f"{label}_{i:03d}.png", pixels)
            if has_ids:
                ident = identities[i % len(identities)]
                rows.append((name, label, ident))
            else:
                rows.append((name, label))
    header = ("path", "label", "identity") if has_ids else ("path", "label")
    return write_manifest(dirpath, rows, header)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_unit_dictionary(rng, dim, n_atoms):
    atoms = rng.standard_normal((dim, n_atoms))
    return atoms / np.linalg.norm(atoms, axis=0)


def gaussian_blob_dataset(rng, n_classes=3, dim=12, per_class=30, spread=6.0):
    """Well-separated labeled Gaussian blobs as a LabeledDataset."""
    from sparseface.datamodel import LabeledDataset

    means = rng.normal(0.0, spread, size=(n_classes, dim))
    cols, labels = [], []
    for c in range(n_classes):
        cols.append(means[c][:, None] + rng.standard_normal((dim, per_class)))
        labels.extend([c] * per_class)
    return LabeledDataset(
        features=np.concatenate(cols, axis=1),
        labels=np.array(labels),
        class_names=tuple(f"class{c}" for c in range(n_classes)),
    )
