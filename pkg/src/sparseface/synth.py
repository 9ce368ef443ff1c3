"""Synthetic data generators backing the test oracles.

Planted sparse-coding instances (known dictionary + known codes), a
tiny separable image corpus for end-to-end pipeline checks, and a
low-coherence dictionary designer for exact-recovery experiments.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import DataError


@dataclass(frozen=True)
class SynthSpec:
    """Planted sparse-coding instance: `n_signals` signals of dimension
    `dim`, each an exact `sparsity`-sparse combination of `n_atoms`
    random unit atoms, plus optional Gaussian noise."""

    dim: int
    n_atoms: int
    sparsity: int
    n_signals: int
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1 or self.n_atoms < 1 or self.n_signals < 1:
            raise DataError("dim, n_atoms and n_signals must all be >= 1")
        if not 1 <= self.sparsity <= self.n_atoms:
            raise DataError(f"sparsity {self.sparsity} outside [1, {self.n_atoms}]")
        if self.noise_sigma < 0:
            raise DataError("noise_sigma must be >= 0")


def synth_generate(spec: SynthSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Generate (true_dictionary, true_codes, signals).

    Supports are uniform without replacement; coefficients are uniform
    in +-[0.5, 1.5]; signals are D @ X plus N(0, sigma^2) noise.
    Deterministic given spec.seed.
    """
    rng = np.random.default_rng(spec.seed)
    atoms = rng.standard_normal((spec.dim, spec.n_atoms))
    atoms /= np.linalg.norm(atoms, axis=0)
    codes = np.zeros((spec.n_atoms, spec.n_signals))
    for i in range(spec.n_signals):
        support = rng.choice(spec.n_atoms, size=spec.sparsity, replace=False)
        magnitudes = rng.uniform(0.5, 1.5, size=spec.sparsity)
        signs = rng.choice([-1.0, 1.0], size=spec.sparsity)
        codes[support, i] = magnitudes * signs
    signals = atoms @ codes
    if spec.noise_sigma > 0:
        signals = signals + rng.normal(0.0, spec.noise_sigma, size=signals.shape)
    return atoms, codes, signals


def mutual_coherence(atoms: np.ndarray) -> float:
    """Maximum absolute inner product between distinct atoms."""
    a = np.asarray(atoms, dtype=np.float64)
    gram = np.abs(a.T @ a)
    np.fill_diagonal(gram, 0.0)
    return float(gram.max())


def design_incoherent_dictionary(
    dim: int,
    n_atoms: int,
    target_coherence: float,
    seed: int = 0,
    max_rounds: int = 40,
    iters_per_round: int = 400,
) -> np.ndarray:
    """Search for a unit-norm dictionary with mutual coherence below
    `target_coherence`.

    Alternating projections on the Gram matrix (clip off-diagonal
    magnitudes, project back to rank `dim`, renormalize), restarted from
    fresh random draws until the target is met. Deterministic given
    `seed`. Raises NumericalError-free: returns the best found even if
    above target, so callers should check mutual_coherence when the
    bound matters.
    """
    rng = np.random.default_rng(seed)
    best = None
    best_mu = np.inf
    clip = max(target_coherence * 0.9, 0.0)
    for _ in range(max_rounds):
        atoms = rng.standard_normal((dim, n_atoms))
        atoms /= np.linalg.norm(atoms, axis=0)
        for _ in range(iters_per_round):
            gram = atoms.T @ atoms
            off = gram - np.diag(np.diag(gram))
            gram = np.clip(off, -clip, clip) + np.eye(n_atoms)
            eigvals, eigvecs = np.linalg.eigh(gram)
            eigvals = np.clip(eigvals[-dim:], 0.0, None)
            atoms = (eigvecs[:, -dim:] * np.sqrt(eigvals)).T
            norms = np.linalg.norm(atoms, axis=0)
            norms[norms == 0.0] = 1.0
            atoms = atoms / norms
        mu = mutual_coherence(atoms)
        if mu < best_mu:
            best_mu, best = mu, atoms.copy()
        if best_mu < target_coherence:
            break
    return best


def make_blob_corpus(
    out_dir,
    n_classes: int = 3,
    image_shape: tuple[int, int] = (6, 10),
    per_class: int = 80,
    sigma: float = 10.0,
    min_mean_distance_factor: float = 10.0,
    seed: int = 0,
) -> str:
    """Write a tiny grayscale image corpus of well-separated Gaussian
    blobs plus its manifest; returns the manifest path.

    Class means are redrawn until every pair is at least
    min_mean_distance_factor * sigma apart in pixel l2 distance, so the
    classes are separable by construction.
    """
    dim = image_shape[0] * image_shape[1]
    rng = np.random.default_rng(seed)
    for _ in range(1000):
        means = rng.uniform(70.0, 190.0, size=(n_classes, dim))
        dists = np.linalg.norm(means[:, None, :] - means[None, :, :], axis=2)
        np.fill_diagonal(dists, np.inf)
        if dists.min() >= min_mean_distance_factor * sigma:
            break
    else:
        raise DataError("could not place class means far enough apart")

    os.makedirs(out_dir, exist_ok=True)
    manifest_path = os.path.join(out_dir, "manifest.csv")
    with open(manifest_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "label"])
        for c in range(n_classes):
            for i in range(per_class):
                pixels = rng.normal(means[c], sigma)
                pixels = np.clip(np.rint(pixels), 0, 255).astype(np.uint8)
                name = f"class{c}_{i:03d}.png"
                img = Image.fromarray(pixels.reshape(image_shape), mode="L")
                img.save(os.path.join(out_dir, name))
                writer.writerow([name, f"class{c}"])
    return manifest_path
