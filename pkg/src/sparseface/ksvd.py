"""K-SVD dictionary refinement.

Alternates batch OMP sparse coding with per-atom rank-1 updates: for
each atom in ascending index order, gather the signals that use it,
form the residual with that atom's contribution removed, and replace
atom + coefficient row with the best rank-1 approximation of that
restricted residual. Coefficient rows are rewritten in place during the
sweep, so the fit objective never increases within a sweep.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import omp
from .errors import DataError

ATOM_UNIT_TOL = 1e-10

REPLACE_WORST = "replace-with-worst-signal"
KEEP_UNUSED = "keep"


@dataclass(frozen=True)
class IterationStats:
    """One refinement iteration: objective right after sparse coding,
    objective after the atom-update sweep, and replaced-atom count."""

    iteration: int
    objective_after_coding: float
    objective: float
    atoms_replaced: int


@dataclass(frozen=True)
class Dictionary:
    """Unit-norm-atom dictionary plus training metadata."""

    atoms: np.ndarray
    sparsity: int | None = None
    class_names: tuple[str, ...] | None = None
    training_log: tuple[IterationStats, ...] = ()

    def __post_init__(self):
        a = np.asarray(self.atoms, dtype=np.float64)
        object.__setattr__(self, "atoms", a)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise DataError(f"dictionary must be a nonempty 2-D matrix, got {a.shape}")
        norms = np.linalg.norm(a, axis=0)
        bad = np.flatnonzero(np.abs(norms - 1.0) > ATOM_UNIT_TOL)
        if bad.size:
            raise DataError(
                f"atom {bad[0]} has norm {norms[bad[0]]:.12g}, expected 1"
            )

    @property
    def n_features(self) -> int:
        return self.atoms.shape[0]

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[1]


@dataclass(frozen=True)
class KsvdConfig:
    max_iters: int = 50
    rel_tol: float = 1e-4
    unused_atom_policy: str = REPLACE_WORST
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise DataError("max_iters must be >= 1")
        if self.rel_tol < 0:
            raise DataError("rel_tol must be >= 0")
        if self.unused_atom_policy not in (REPLACE_WORST, KEEP_UNUSED):
            raise DataError(
                f"unknown unused_atom_policy '{self.unused_atom_policy}'"
            )


def init_dictionary(train_projected: np.ndarray) -> Dictionary:
    """Build the starting dictionary from the projected training set:
    one atom per training column, scaled to unit norm."""
    y = np.asarray(train_projected, dtype=np.float64)
    if y.ndim != 2 or y.shape[0] < 1 or y.shape[1] < 1:
        raise DataError(f"training matrix must be nonempty 2-D, got {y.shape}")
    norms = np.linalg.norm(y, axis=0)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise DataError(f"training column {zero[0]} is all-zero; cannot normalize")
    return Dictionary(atoms=y / norms)


def objective(atoms, signals, codes) -> float:
    """Squared Frobenius norm of the reconstruction residual."""
    d = np.asarray(atoms, dtype=np.float64)
    y = np.asarray(signals, dtype=np.float64)
    x = np.asarray(codes, dtype=np.float64)
    if d.ndim != 2 or y.ndim != 2 or x.ndim != 2 or y.shape[0] != d.shape[0] \
            or x.shape != (d.shape[1], y.shape[1]):
        raise DataError(f"shapes not conformable: D{d.shape}, Y{y.shape}, X{x.shape}")
    return float(np.linalg.norm(y - d @ x) ** 2)


def _top_rank1(restricted, start):
    """Dominant left singular vector of `restricted` by power iteration,
    deterministically started from `start` (the atom being replaced).
    Returns (u, restricted.T @ u); u is None when the matrix is zero.

    Any intermediate iterate still yields a non-increasing objective,
    because the returned coefficient row is the least-squares row for
    that u and the Rayleigh quotient only grows along the iteration.
    """
    u = start
    if np.linalg.norm(restricted.T @ u) == 0.0:
        col_norms = np.linalg.norm(restricted, axis=0)
        k = int(np.argmax(col_norms))
        if col_norms[k] == 0.0:
            return None, None
        u = restricted[:, k] / col_norms[k]
    for _ in range(500):
        v = restricted.T @ u
        nv = np.linalg.norm(v)
        if nv == 0.0:
            return None, None
        v /= nv
        u_next = restricted @ v
        nu = np.linalg.norm(u_next)
        if nu == 0.0:
            return None, None
        u_next /= nu
        if np.linalg.norm(u_next - u) < 1e-10:
            u = u_next
            break
        u = u_next
    return u, restricted.T @ u


def ksvd_refine(
    dictionary: Dictionary,
    signals: np.ndarray,
    sparsity: int,
    cfg: KsvdConfig = KsvdConfig(),
) -> tuple[Dictionary, np.ndarray]:
    """Refine a dictionary against training signals; returns the refined
    dictionary (with a per-iteration training log) and the final code
    matrix.

    Stops after cfg.max_iters iterations or when the relative decrease
    of the post-sweep objective falls below cfg.rel_tol. Atoms that no
    signal selects are handled per cfg.unused_atom_policy; the default
    replaces them with the currently worst-reconstructed signal.
    """
    atoms = dictionary.atoms.copy()
    y = np.asarray(signals, dtype=np.float64)
    if y.ndim != 2 or y.shape[0] != atoms.shape[0]:
        raise DataError(
            f"signals shape {y.shape} does not match dictionary rows {atoms.shape[0]}"
        )
    n_atoms = atoms.shape[1]
    log: list[IterationStats] = []
    prev_objective = None
    codes = np.zeros((n_atoms, y.shape[1]))

    for it in range(1, cfg.max_iters + 1):
        codes = omp.batch_encode(atoms, y, sparsity)
        after_coding = float(np.linalg.norm(y - atoms @ codes) ** 2)
        replaced = 0
        taken_replacements: set[int] = set()
        for j in range(n_atoms):
            users = np.flatnonzero(codes[j])
            if users.size == 0:
                if cfg.unused_atom_policy == REPLACE_WORST:
                    errs = np.linalg.norm(y - atoms @ codes, axis=0)
                    if taken_replacements:
                        errs[list(taken_replacements)] = -1.0
                    k = int(np.argmax(errs))
                    if errs[k] > 0.0:
                        atoms[:, j] = y[:, k] / np.linalg.norm(y[:, k])
                        taken_replacements.add(k)
                        replaced += 1
                continue
            restricted = (
                y[:, users]
                - atoms @ codes[:, users]
                + np.outer(atoms[:, j], codes[j, users])
            )
            u, coeff_row = _top_rank1(restricted, atoms[:, j])
            if u is None:
                # atom contributes nothing recoverable; zero its row
                codes[j, users] = 0.0
                continue
            if u @ atoms[:, j] < 0.0:
                u = -u
                coeff_row = -coeff_row
            atoms[:, j] = u
            codes[j, users] = coeff_row
        after_sweep = float(np.linalg.norm(y - atoms @ codes) ** 2)
        log.append(IterationStats(it, after_coding, after_sweep, replaced))
        if after_sweep == 0.0:
            break
        if prev_objective is not None and prev_objective > 0.0:
            if (prev_objective - after_sweep) / prev_objective < cfg.rel_tol:
                break
        prev_objective = after_sweep

    refined = Dictionary(
        atoms=atoms,
        sparsity=sparsity,
        class_names=dictionary.class_names,
        training_log=tuple(log),
    )
    return refined, codes


def write_training_log_csv(log, path) -> None:
    """training_log.csv: iteration, objective, atoms_replaced."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "objective", "atoms_replaced"])
        for entry in log:
            writer.writerow([entry.iteration, entry.objective, entry.atoms_replaced])
