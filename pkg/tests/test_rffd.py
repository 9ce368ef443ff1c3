import numpy as np
import pytest

from sparseface import rffd
from sparseface.datamodel import LabeledDataset
from sparseface.errors import DataError
from sparseface.rffd import ProjectionCandidate, RffdConfig

from conftest import gaussian_blob_dataset


# ------------------------------------------------------ candidate generation

def test_generate_candidate_row_norms():
    cand = rffd.generate_candidate(d=500, m=40, seed=7)
    norms = np.linalg.norm(cand.matrix, axis=1)
    assert cand.matrix.shape == (40, 500)
    assert np.max(np.abs(norms - 1.0)) <= 1e-12


def test_generate_candidate_full_scale_row_norms():
    # verify the unit-row property at the realistic 700 x 17664 size
    cand = rffd.generate_candidate(d=17664, m=700, seed=123)
    norms = np.linalg.norm(cand.matrix, axis=1)
    assert cand.matrix.shape == (700, 17664)
    assert np.max(np.abs(norms - 1.0)) <= 1e-12


def test_generate_candidate_determinism():
    a = rffd.generate_candidate(60, 10, seed=42)
    b = rffd.generate_candidate(60, 10, seed=42)
    c = rffd.generate_candidate(60, 10, seed=43)
    assert a.matrix.tobytes() == b.matrix.tobytes()
    assert np.linalg.norm(a.matrix - c.matrix) > 0


def test_generate_candidate_m_exceeds_d():
    with pytest.raises(DataError):
        rffd.generate_candidate(5, 6, seed=0)


def test_candidate_accuracy_requires_quality():
    with pytest.raises(DataError):
        ProjectionCandidate(np.eye(2), m=2, seed=0, quality_ok=False,
                            cv_accuracy=0.5)


# ------------------------------------------------------------------- project

def test_project_coordinate_selection():
    out = rffd.project(np.array([[1.0, 0.0]]), np.array([[3.0], [4.0]]))
    assert out.shape == (1, 1)
    assert out[0, 0] == 3.0


def test_project_zero_data():
    proj = rffd.generate_candidate(10, 4, seed=0).matrix
    assert np.all(rffd.project(proj, np.zeros((10, 6))) == 0.0)


def test_project_dim_mismatch():
    with pytest.raises(DataError):
        rffd.project(np.ones((2, 3)), np.ones((4, 5)))


def test_project_orthonormal_rows_preserve_scaled_distances():
    # oracle: direct pairwise distances before/after projecting with a
    # random orthonormal-row matrix; JL bound at eps = 0.5
    rng = np.random.default_rng(11)
    d, m, eps = 200, 80, 0.5
    raw = rng.standard_normal((m, d))
    ortho, _ = np.linalg.qr(raw.T)
    proj = ortho.T  # (m, d) with orthonormal rows
    points = rng.standard_normal((d, 120))
    projected = rffd.project(proj, points)
    checked = 0
    within = 0
    for _ in range(150):
        i, j = rng.integers(0, points.shape[1], 2)
        if i == j:
            continue
        orig = np.sum((points[:, i] - points[:, j]) ** 2)
        low = (1 - eps) * (m / d) * orig
        high = (1 + eps) * (m / d) * orig
        got = np.sum((projected[:, i] - projected[:, j]) ** 2)
        checked += 1
        within += int(low <= got <= high)
    assert checked >= 100
    assert within / checked >= 0.95


# ------------------------------------------------------------- quality check

def test_quality_check_zero_row():
    a = np.ones((4, 5))
    a[2] = 0.0
    assert not rffd.quality_check(a, 1e-8)


def test_quality_check_identity():
    assert rffd.quality_check(np.eye(3), 0.5)


def test_quality_check_zero_threshold_detects_exact_zero_rows():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((6, 10))
    assert rffd.quality_check(a, 0.0)
    a[4] = 0.0
    assert not rffd.quality_check(a, 0.0)


def test_quality_check_matches_row_norm_oracle():
    rng = np.random.default_rng(4)
    data = rng.standard_normal((40, 30)) + 1.0
    cand = rffd.generate_candidate(40, 12, seed=9)
    projected = rffd.project(cand.matrix, data)
    threshold = rffd.default_quality_threshold(data, 12)
    oracle = bool(np.all(
        np.sqrt(np.sum(projected ** 2, axis=1)) > threshold
    ))
    assert rffd.quality_check(projected, threshold) is oracle
    assert oracle  # full-rank Gaussian on non-degenerate data passes


# -------------------------------------------------------------------- search

def small_config(**kw):
    defaults = dict(dims=(4, 6), candidates_per_dim=3, cv_folds=3,
                    master_seed=77)
    defaults.update(kw)
    return RffdConfig(**defaults)


def test_search_structure_and_winner_dominance(rng):
    ds = gaussian_blob_dataset(rng)
    best, projected, report = rffd.search(ds, small_config())
    assert len(report) == 6
    for m in (4, 6):
        rows = [r for r in report if r.m == m]
        assert sum(r.winner_for_m for r in rows) == 1
    assert sum(r.global_winner for r in report) == 1
    winner = next(r for r in report if r.global_winner)
    assert winner.winner_for_m
    survivors = [r.cv_accuracy for r in report if r.cv_accuracy is not None]
    assert best.cv_accuracy == max(survivors)
    assert projected.n_features == best.m
    assert projected.n_samples == ds.n_samples


def test_search_deterministic(rng):
    ds = gaussian_blob_dataset(rng)
    best1, proj1, report1 = rffd.search(ds, small_config())
    best2, proj2, report2 = rffd.search(ds, small_config())
    assert best1.seed == best2.seed and best1.m == best2.m
    assert proj1.features.tobytes() == proj2.features.tobytes()
    assert report1 == report2


def test_search_identity_stub(rng):
    ds = gaussian_blob_dataset(rng, dim=8)

    def stub(d, m, seed):
        return ProjectionCandidate(np.eye(d), m=m, seed=seed)

    cfg = small_config(dims=(8,), candidates_per_dim=1)
    best, projected, report = rffd.search(ds, cfg, generate=stub)
    assert best.m == 8
    assert np.array_equal(projected.features, ds.features)
    assert report[0].global_winner


def test_search_all_candidates_fail_quality(rng):
    ds = gaussian_blob_dataset(rng)
    cfg = small_config(quality_threshold=1e9)
    with pytest.raises(DataError, match="quality"):
        rffd.search(ds, cfg)


def test_search_reports_empty_dimension(rng):
    ds = gaussian_blob_dataset(rng, dim=12)

    def stub(d, m, seed):
        if m == 5:
            # zero matrix projects everything to zero -> quality failure
            return ProjectionCandidate(np.zeros((m, d)), m=m, seed=seed)
        return rffd.generate_candidate(d, m, seed)

    cfg = small_config(dims=(5, 6), candidates_per_dim=2)
    best, _, report = rffd.search(ds, cfg, generate=stub)
    dim5 = [r for r in report if r.m == 5]
    assert all(not r.quality_ok for r in dim5)
    assert all(not r.winner_for_m for r in dim5)
    assert best.m == 6


def test_search_single_class_rejected(rng):
    ds = gaussian_blob_dataset(rng, n_classes=1)
    with pytest.raises(DataError, match="class"):
        rffd.search(ds, small_config())


def test_search_dim_exceeding_data(rng):
    ds = gaussian_blob_dataset(rng, dim=6)
    with pytest.raises(DataError, match="exceeds"):
        rffd.search(ds, small_config(dims=(7,)))


def test_report_csv(tmp_path, rng):
    ds = gaussian_blob_dataset(rng)
    _, _, report = rffd.search(ds, small_config())
    path = tmp_path / "report.csv"
    rffd.write_report_csv(report, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "m,candidate_index,seed,quality_ok,cv_accuracy,winner_for_m,global_winner"
    assert len(lines) == 1 + len(report)


# ----------------------------------------------------------------------- pca

def test_pca_rank1_data_exact():
    rng = np.random.default_rng(5)
    direction = np.array([1.0, -2.0, 0.5])
    t = rng.standard_normal(40)
    data = np.outer(direction, t) + np.array([[3.0], [1.0], [-2.0]])
    ds = LabeledDataset(data, np.zeros(40, dtype=int), ("only",))
    out = rffd.pca_project(ds, 1)
    # rank-1 data: the single component preserves all pairwise distances
    scores = out.features[0]
    for i, j in [(0, 1), (3, 9), (11, 30), (5, 39)]:
        orig = np.linalg.norm(data[:, i] - data[:, j])
        assert abs(abs(scores[i] - scores[j]) - orig) < 1e-9
    # and all centered variance is retained
    total = np.var(data, axis=1, ddof=1).sum()
    assert abs(np.var(scores, ddof=1) - total) < 1e-9


def test_pca_full_rank_keeps_all_variance():
    rng = np.random.default_rng(6)
    data = rng.standard_normal((5, 30))
    ds = LabeledDataset(data, np.zeros(30, dtype=int), ("only",))
    out = rffd.pca_project(ds, 5)
    total = np.var(data, axis=1, ddof=1).sum()
    kept = np.var(out.features, axis=1, ddof=1).sum()
    assert abs(kept - total) < 1e-9


def test_pca_retained_variance_matches_eigenvalue_oracle():
    # oracle: dense eigendecomposition of the sample covariance
    rng = np.random.default_rng(7)
    scales = np.array([9.0, 5.0, 3.0, 1.5, 1.0, 0.8, 0.5, 0.3, 0.2, 0.1])
    data = (rng.standard_normal((10, 400)).T * scales).T
    mix = rng.standard_normal((10, 10))
    data = mix @ data
    ds = LabeledDataset(data, np.zeros(400, dtype=int), ("only",))
    out = rffd.pca_project(ds, 3)
    eigvals = np.linalg.eigvalsh(np.cov(data))
    expected = np.sort(eigvals)[-3:].sum()
    kept = np.var(out.features, axis=1, ddof=1).sum()
    assert abs(kept - expected) / expected < 1e-9


def test_pca_m_out_of_range():
    rng = np.random.default_rng(8)
    ds = LabeledDataset(rng.standard_normal((4, 10)), np.zeros(10, dtype=int),
                        ("only",))
    with pytest.raises(DataError):
        rffd.pca_project(ds, 0)
    with pytest.raises(DataError):
        rffd.pca_project(ds, 5)


# ------------------------------------------------------------- JL invariant

def test_jl_distance_preservation_generated_matrix():
    eps = 0.5
    d, m = 400, 150
    cand = rffd.generate_candidate(d, m, seed=2024)
    rng = np.random.default_rng(2024)
    points = rng.standard_normal((d, 100))
    projected = rffd.project(cand.matrix, points)
    pairs = rng.integers(0, 100, size=(300, 2))
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    diffs = points[:, pairs[:, 0]] - points[:, pairs[:, 1]]
    pdiffs = projected[:, pairs[:, 0]] - projected[:, pairs[:, 1]]
    orig = np.sum(diffs ** 2, axis=0)
    got = np.sum(pdiffs ** 2, axis=0)
    scale = m / d
    ok = ((1 - eps) * scale * orig <= got) & (got <= (1 + eps) * scale * orig)
    assert np.mean(ok) >= 0.95
