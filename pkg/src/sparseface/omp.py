"""Orthogonal Matching Pursuit over a fixed unit-norm dictionary.

Greedy per-signal sparse coding: pick the atom best correlated with the
residual, refit all selected coefficients by least squares, repeat until
the sparsity budget or residual tolerance is hit. The least-squares
refit runs on an incrementally updated QR factorization, so each
iteration after the first costs O(n * support).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DataError

ATOM_NORM_TOL = 1e-6
_RANK_TOL = 1e-12


@dataclass(frozen=True)
class SparseCode:
    """One signal's code: strictly increasing atom indices and their
    coefficients, at most the solve-time sparsity budget of them."""

    support: np.ndarray
    coeffs: np.ndarray
    dict_size: int

    def __post_init__(self):
        s = np.asarray(self.support, dtype=np.int64)
        c = np.asarray(self.coeffs, dtype=np.float64)
        object.__setattr__(self, "support", s)
        object.__setattr__(self, "coeffs", c)
        if s.shape != c.shape or s.ndim != 1:
            raise DataError("support and coeffs must be equal-length 1-D")
        if s.size:
            if np.any(np.diff(s) <= 0):
                raise DataError("support indices must be strictly increasing")
            if s[0] < 0 or s[-1] >= self.dict_size:
                raise DataError("support index outside dictionary")
        if not np.all(np.isfinite(c)):
            raise DataError("coefficients must be finite")

    def densify(self) -> np.ndarray:
        x = np.zeros(self.dict_size)
        x[self.support] = self.coeffs
        return x


def check_dictionary(dictionary: np.ndarray) -> np.ndarray:
    """Validate a (n, K) dictionary with unit-norm atoms."""
    d = np.asarray(dictionary, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] < 1 or d.shape[1] < 1:
        raise DataError(f"dictionary must be a nonempty 2-D matrix, got shape {d.shape}")
    norms = np.linalg.norm(d, axis=0)
    bad = np.flatnonzero(np.abs(norms - 1.0) > ATOM_NORM_TOL)
    if bad.size:
        raise DataError(
            f"dictionary atoms are not unit-norm (first offender: atom {bad[0]}, "
            f"norm {norms[bad[0]]:.6g})"
        )
    return d


def _check_sparsity(dictionary: np.ndarray, sparsity: int) -> None:
    n, k = dictionary.shape
    if not 1 <= sparsity <= min(n, k):
        raise DataError(
            f"sparsity {sparsity} outside [1, min(n={n}, K={k})]"
        )


def _omp_single(dictionary, dict_t, signal, sparsity, residual_tol):
    """Core greedy loop; assumes the dictionary is already validated."""
    n, n_atoms = dictionary.shape
    residual = signal.copy()
    selected: list[int] = []
    q = np.empty((n, sparsity))
    r_fac = np.zeros((sparsity, sparsity))
    q_dot_y = np.empty(sparsity)
    deficient = False
    coeffs = np.zeros(0)

    while len(selected) < sparsity and np.linalg.norm(residual) > residual_tol:
        corr = np.abs(dict_t @ residual)
        if selected:
            corr[selected] = -1.0
        j = int(np.argmax(corr))
        if corr[j] <= 0.0:
            break
        selected.append(j)
        t = len(selected) - 1
        if not deficient:
            atom = dictionary[:, j]
            if t:
                proj = q[:, :t].T @ atom
                ortho = atom - q[:, :t] @ proj
            else:
                proj = np.zeros(0)
                ortho = atom.copy()
            rho = np.linalg.norm(ortho)
            if rho <= _RANK_TOL:
                deficient = True
                warnings.warn(
                    f"rank-deficient support at atom {j}; "
                    "falling back to minimum-norm least squares",
                    RuntimeWarning,
                    stacklevel=3,
                )
            else:
                q[:, t] = ortho / rho
                r_fac[:t, t] = proj
                r_fac[t, t] = rho
                q_dot_y[t] = q[:, t] @ signal
                residual = signal - q[:, : t + 1] @ q_dot_y[: t + 1]
                continue
        # minimum-norm path (rare): refit on the raw support each step
        sub = dictionary[:, selected]
        coeffs, *_ = np.linalg.lstsq(sub, signal, rcond=None)
        residual = signal - sub @ coeffs

    if not selected:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    t = len(selected)
    if not deficient:
        coeffs = np.linalg.solve(r_fac[:t, :t], q_dot_y[:t])
    order = np.argsort(selected)
    support = np.asarray(selected, dtype=np.int64)[order]
    return support, np.asarray(coeffs)[order]


def omp_encode(dictionary, signal, sparsity: int, residual_tol: float = 0.0) -> SparseCode:
    """Sparse-code one signal against a unit-norm dictionary.

    Stops when `sparsity` atoms are selected or the residual l2 norm
    drops to `residual_tol`. Correlation ties select the lowest atom
    index. A rank-deficient support system (possible only through
    numerical near-dependence) is solved by minimum-norm least squares
    and flagged with a RuntimeWarning.
    """
    d = check_dictionary(dictionary)
    _check_sparsity(d, sparsity)
    if residual_tol < 0:
        raise DataError("residual_tol must be >= 0")
    y = np.asarray(signal, dtype=np.float64).ravel()
    if y.shape[0] != d.shape[0]:
        raise DataError(f"signal length {y.shape[0]} != dictionary rows {d.shape[0]}")
    support, coeffs = _omp_single(d, np.ascontiguousarray(d.T), y, sparsity, residual_tol)
    return SparseCode(support, coeffs, dict_size=d.shape[1])


def batch_encode(dictionary, signals, sparsity: int, residual_tol: float = 0.0) -> np.ndarray:
    """Encode every column of `signals`; returns the dense (K, N) code
    matrix whose column i is omp_encode of column i."""
    d = check_dictionary(dictionary)
    _check_sparsity(d, sparsity)
    if residual_tol < 0:
        raise DataError("residual_tol must be >= 0")
    y = np.asarray(signals, dtype=np.float64)
    if y.ndim != 2 or y.shape[0] != d.shape[0]:
        raise DataError(
            f"signals must be ({d.shape[0]}, N), got shape {y.shape}"
        )
    dict_t = np.ascontiguousarray(d.T)
    codes = np.zeros((d.shape[1], y.shape[1]))
    for i in range(y.shape[1]):
        try:
            support, coeffs = _omp_single(d, dict_t, y[:, i], sparsity, residual_tol)
        except Exception as exc:
            raise DataError(f"encoding failed on column {i}: {exc}") from exc
        codes[support, i] = coeffs
    return codes


def reconstruction_errors(dictionary, signals, codes) -> tuple[np.ndarray, float]:
    """Per-sample l2 reconstruction errors and the total Frobenius error.

    Returns (errors, total) with errors[i] = ||y_i - D x_i||_2 and
    total = ||Y - D X||_F.
    """
    d = np.asarray(dictionary, dtype=np.float64)
    y = np.asarray(signals, dtype=np.float64)
    x = np.asarray(codes, dtype=np.float64)
    if d.ndim != 2 or y.ndim != 2 or x.ndim != 2:
        raise DataError("all inputs must be 2-D matrices")
    if y.shape[0] != d.shape[0] or x.shape[0] != d.shape[1] or x.shape[1] != y.shape[1]:
        raise DataError(
            f"shapes not conformable: D{d.shape}, Y{y.shape}, X{x.shape}"
        )
    resid = y - d @ x
    errors = np.linalg.norm(resid, axis=0)
    return errors, float(np.linalg.norm(resid))
