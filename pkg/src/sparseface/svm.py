"""One-vs-rest linear SVM on sparse-code features.

Each binary subproblem minimizes 0.5*||w||^2 + C * sum hinge(s*(w.x+b))
with an unregularized bias. The solver is deterministic pairwise dual
coordinate descent: the dual of the biased problem carries the equality
constraint sum(s*alpha)=0, so coordinates move in maximal-violating
pairs, LIBSVM style. No randomness anywhere, so retraining on the same
inputs is bit-for-bit reproducible.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericalError

DEFAULT_C_GRID = (0.01, 0.1, 1.0, 10.0, 100.0)
_GAP_TOL = 1e-4
_MAX_ITER = 10_000


@dataclass(frozen=True)
class LinearSvmModel:
    """One weight row and bias per class; prediction is the argmax of
    per-class decision values."""

    weights: np.ndarray
    bias: np.ndarray
    class_names: tuple[str, ...]
    C: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)
        if w.ndim != 2 or b.shape != (w.shape[0],):
            raise DataError(f"weights {w.shape} / bias {b.shape} mismatch")
        if len(self.class_names) != w.shape[0]:
            raise DataError("one weight row per class required")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise NumericalError("non-finite SVM parameters")


@dataclass(frozen=True)
class GridPoint:
    C: float
    mean_accuracy: float
    std_accuracy: float


def _solve_binary(features, signs, C, gap_tol=_GAP_TOL, max_iter=_MAX_ITER):
    """Solve one binary subproblem; features (d, n), signs in {-1, +1}.

    Returns (w, b). Stops when the duality gap drops below
    gap_tol * max(1, primal), which bounds the relative suboptimality of
    the primal objective by roughly gap_tol.
    """
    d, n = features.shape
    if np.all(signs > 0):
        return np.zeros(d), 1.0
    if np.all(signs < 0):
        return np.zeros(d), -1.0
    gram = features.T @ features
    gram_diag = np.diag(gram).copy()
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of the dual objective at alpha = 0
    bias = 0.0
    for it in range(max_iter):
        up = ((alpha < C) & (signs > 0)) | ((alpha > 0) & (signs < 0))
        low = ((alpha < C) & (signs < 0)) | ((alpha > 0) & (signs > 0))
        viol_up = np.where(up, -signs * grad, -np.inf)
        viol_low = np.where(low, -signs * grad, np.inf)
        i = int(np.argmax(viol_up))
        j = int(np.argmin(viol_low))
        hi, lo = viol_up[i], viol_low[j]
        if hi - lo < 1e-12:
            break
        if (it & 31) == 0:
            mid = (hi + lo) / 2.0
            scores = gram @ (signs * alpha)
            margins = 1.0 - signs * (scores + mid)
            primal = 0.5 * np.dot(signs * alpha, scores) + C * np.sum(
                margins[margins > 0.0]
            )
            dual = np.sum(alpha) - 0.5 * np.dot(signs * alpha, scores)
            if primal - dual <= gap_tol * max(1.0, abs(primal)):
                bias = mid
                break
        quad = max(gram_diag[i] + gram_diag[j] - 2.0 * gram[i, j], 1e-12)
        step = (hi - lo) / quad
        step = min(step, C - alpha[i] if signs[i] > 0 else alpha[i])
        step = min(step, alpha[j] if signs[j] > 0 else C - alpha[j])
        if step <= 0.0:
            break
        alpha[i] += signs[i] * step
        alpha[j] -= signs[j] * step
        grad += step * signs * (gram[:, i] - gram[:, j])
    up = ((alpha < C) & (signs > 0)) | ((alpha > 0) & (signs < 0))
    low = ((alpha < C) & (signs < 0)) | ((alpha > 0) & (signs > 0))
    viol_up = np.where(up, -signs * grad, -np.inf)
    viol_low = np.where(low, -signs * grad, np.inf)
    hi, lo = np.max(viol_up), np.min(viol_low)
    if np.isfinite(hi) and np.isfinite(lo):
        bias = (hi + lo) / 2.0
    w = features @ (signs * alpha)
    return w, float(bias)


def train(
    features,
    labels,
    C: float,
    class_names=None,
) -> LinearSvmModel:
    """Train one-vs-rest hinge-loss classifiers over (d, N) features.

    `class_names` fixes the class set (useful inside cross-validation
    folds where a class may be absent); by default classes are
    0..max(labels). A class with no positive samples gets the constant
    rejecting classifier w=0, b=-1.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or y.ndim != 1 or y.shape[0] != x.shape[1]:
        raise DataError(f"features {x.shape} / labels {y.shape} mismatch")
    if C <= 0:
        raise DataError(f"C must be positive, got {C}")
    if np.unique(y).size < 2:
        raise DataError("training data contains fewer than 2 classes")
    if class_names is None:
        class_names = tuple(str(c) for c in range(int(y.max()) + 1))
    n_classes = len(class_names)
    if y.max() >= n_classes:
        raise DataError("label index outside class_names range")
    weights = np.zeros((n_classes, x.shape[0]))
    bias = np.zeros(n_classes)
    for c in range(n_classes):
        signs = np.where(y == c, 1.0, -1.0)
        weights[c], bias[c] = _solve_binary(x, signs, C)
    return LinearSvmModel(weights, bias, tuple(class_names), float(C))


def decision_values(model: LinearSvmModel, features) -> np.ndarray:
    """(n_classes, N) matrix of per-class scores w_c . x + b_c."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != model.weights.shape[1]:
        raise DataError(
            f"feature dim {x.shape} does not match model dim {model.weights.shape[1]}"
        )
    return model.weights @ x + model.bias[:, None]


def predict(model: LinearSvmModel, features) -> np.ndarray:
    """Predicted label per column; score ties go to the lower class index."""
    return np.argmax(decision_values(model, features), axis=0)


def primal_objective(features, labels_pm, C, w, b) -> float:
    """Reference primal value for one binary problem (used by tests and
    solver diagnostics)."""
    margins = labels_pm * (w @ np.asarray(features, dtype=np.float64) + b)
    return float(0.5 * np.dot(w, w) + C * np.sum(np.maximum(0.0, 1.0 - margins)))


def _fold_indices(labels, cv, seed):
    """Yield (train_idx, test_idx) pairs. `cv` is "loo" or a fold count;
    k-fold assignment is stratified per class and seeded."""
    n = labels.shape[0]
    if cv == "loo":
        for i in range(n):
            yield np.concatenate([np.arange(i), np.arange(i + 1, n)]), np.array([i])
        return
    k = int(cv)
    if k < 2:
        raise DataError(f"fold count must be >= 2, got {k}")
    if k > n:
        raise DataError(f"{k} folds exceed {n} samples")
    rng = np.random.default_rng(seed)
    assignment = np.empty(n, dtype=np.int64)
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        members = members[rng.permutation(members.size)]
        assignment[members] = np.arange(members.size) % k
    for f in range(k):
        test = np.flatnonzero(assignment == f)
        if test.size == 0:
            continue
        yield np.flatnonzero(assignment != f), test


def cross_val_scores(features, labels, C, cv, seed=0, class_names=None) -> np.ndarray:
    """Per-fold accuracies of a fixed-C model under the given CV scheme."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if class_names is None:
        class_names = tuple(str(c) for c in range(int(y.max()) + 1))
    scores = []
    for train_idx, test_idx in _fold_indices(y, cv, seed):
        model = train(x[:, train_idx], y[train_idx], C, class_names=class_names)
        pred = predict(model, x[:, test_idx])
        scores.append(float(np.mean(pred == y[test_idx])))
    return np.asarray(scores)


def grid_search(
    features,
    labels,
    c_grid=DEFAULT_C_GRID,
    cv="loo",
    seed: int = 0,
    class_names=None,
) -> tuple[float, list[GridPoint]]:
    """Mean CV accuracy for every C in the grid; returns (best_C, report).

    The winner is the highest mean accuracy, ties resolved toward the
    smaller C. Fold assignment is deterministic given `seed`.
    """
    c_grid = list(c_grid)
    if not c_grid:
        raise DataError("C grid is empty")
    if any(c <= 0 for c in c_grid):
        raise DataError("C values must be positive")
    report = []
    for c in sorted(c_grid):
        scores = cross_val_scores(features, labels, c, cv, seed, class_names)
        report.append(GridPoint(float(c), float(np.mean(scores)), float(np.std(scores))))
    best = max(report, key=lambda p: (p.mean_accuracy, -p.C))
    return best.C, report


def write_grid_report_csv(report, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["C", "mean_accuracy", "std_accuracy"])
        for point in report:
            writer.writerow([point.C, point.mean_accuracy, point.std_accuracy])
