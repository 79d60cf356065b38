"""Validity indices against independent brute-force oracles."""

import numpy as np
import pytest

from hsseg.errors import DegeneracyError
from hsseg.hslic import LabelMap
from hsseg.validity import (ValidityReport, davies_bouldin, dunn_index,
                            evaluate_runs, silhouette)

from synth import quadrant_cube, quadrant_truth


# --- brute-force oracles (no shared code with the implementations)


def dunn_oracle(X, labels):
    ids = np.unique(labels)
    inter = np.inf
    diam = 0.0
    for i, a in enumerate(ids):
        A = X[labels == a]
        for p in range(len(A)):
            for q in range(len(A)):
                diam = max(diam, np.linalg.norm(A[p] - A[q]))
        for b in ids[i + 1:]:
            B = X[labels == b]
            for p in range(len(A)):
                for q in range(len(B)):
                    inter = min(inter, np.linalg.norm(A[p] - B[q]))
    return inter / diam


def db_oracle(X, labels):
    ids = np.unique(labels)
    cents = [X[labels == v].mean(axis=0) for v in ids]
    s = [np.mean([np.linalg.norm(x - cents[i]) for x in X[labels == v]])
         for i, v in enumerate(ids)]
    total = 0.0
    for i in range(len(ids)):
        worst = 0.0
        for j in range(len(ids)):
            if i == j:
                continue
            worst = max(worst, (s[i] + s[j]) / np.linalg.norm(cents[i] - cents[j]))
        total += worst
    return total / len(ids)


def silhouette_oracle(X, labels):
    ids = np.unique(labels)
    widths = []
    for i, x in enumerate(X):
        own = labels[i]
        same = [j for j in range(len(X)) if labels[j] == own and j != i]
        if not same:
            widths.append(0.0)
            continue
        a = np.mean([np.linalg.norm(x - X[j]) for j in same])
        b = min(
            np.mean([np.linalg.norm(x - X[j]) for j in range(len(X)) if labels[j] == v])
            for v in ids if v != own)
        denom = max(a, b)
        widths.append(0.0 if denom == 0 else (b - a) / denom)
    return float(np.mean(widths))


def _random_instance(rng, n_max=60):
    n = int(rng.integers(10, n_max))
    b = int(rng.integers(1, 6))
    k = int(rng.integers(2, 6))
    X = rng.random((n, b)) * 10
    labels = rng.integers(0, k, n)
    for v in range(k):          # every cluster non-empty, none singleton
        labels[2 * v] = v
        labels[2 * v + 1] = v
    return X, labels


# --- hand examples


def test_dunn_hand_example():
    X = np.array([[0.0], [1.0], [10.0], [11.0]])
    labels = np.array([0, 0, 1, 1])
    assert dunn_index(X, labels) == 9.0


def test_dunn_scaling_invariance():
    rng = np.random.default_rng(1)
    X, labels = _random_instance(rng)
    assert abs(dunn_index(X, labels) - dunn_index(X * 3.7, labels)) <= 1e-9


def test_dunn_undefined_for_zero_diameter():
    X = np.array([[0.0], [0.0], [5.0], [5.0]])
    # each cluster holds identical points: max diameter 0
    with pytest.raises(DegeneracyError):
        dunn_index(X, np.array([0, 0, 1, 1]))


def test_db_hand_example():
    X = np.array([[0.0], [2.0], [10.0], [12.0]])
    labels = np.array([0, 0, 1, 1])
    assert abs(davies_bouldin(X, labels) - 0.2) < 1e-12


def test_db_mirror_symmetry():
    X = np.array([[-3.0], [-1.0], [1.0], [3.0]])
    labels = np.array([0, 0, 1, 1])
    # mirror-image clusters contribute identical ratios: DB equals either one
    s = 1.0  # scatter of each cluster
    gap = 4.0
    assert abs(davies_bouldin(X, labels) - (s + s) / gap) < 1e-12


def test_db_coincident_centroids_rejected():
    X = np.array([[0.0], [2.0], [0.0], [2.0]])
    with pytest.raises(DegeneracyError):
        davies_bouldin(X, np.array([0, 0, 1, 1]))


def test_silhouette_hand_example():
    X = np.array([[0.0], [1.0], [10.0], [11.0]])
    labels = np.array([0, 0, 1, 1])
    expected = (8.5 / 9.5 + 9.5 / 10.5) * 2 / 4
    assert abs(silhouette(X, labels) - expected) < 1e-12
    assert abs(expected - 0.89975) < 1e-4


def test_silhouette_identical_points_score_zero():
    X = np.zeros((6, 2))
    labels = np.array([0, 0, 0, 1, 1, 1])
    assert silhouette(X, labels) == 0.0


def test_silhouette_subsample_equals_exact_when_large_enough():
    rng = np.random.default_rng(8)
    X, labels = _random_instance(rng)
    assert silhouette(X, labels, subsample=10 ** 6) == silhouette(X, labels, subsample=len(X))


def test_silhouette_matches_sample_population_contract():
    # subsampled mean still uses full-population distances
    rng = np.random.default_rng(9)
    X, labels = _random_instance(rng, n_max=40)
    sub = silhouette(X, labels, subsample=len(X) - 5, seed=3)
    rows = np.sort(np.random.default_rng(3).choice(len(X), len(X) - 5, replace=False))
    per_point = []
    ids = np.unique(labels)
    for i in rows:
        own = labels[i]
        same = [j for j in range(len(X)) if labels[j] == own and j != i]
        a = np.mean([np.linalg.norm(X[i] - X[j]) for j in same])
        b = min(np.mean([np.linalg.norm(X[i] - X[j]) for j in range(len(X))
                         if labels[j] == v]) for v in ids if v != own)
        per_point.append((b - a) / max(a, b))
    assert abs(sub - np.mean(per_point)) <= 1e-12


# --- oracle equivalence


def test_indices_match_oracles_randomized():
    rng = np.random.default_rng(123)
    for trial in range(15):
        X, labels = _random_instance(rng, n_max=40)
        assert abs(dunn_index(X, labels) - dunn_oracle(X, labels)) <= 1e-9
        assert abs(davies_bouldin(X, labels) - db_oracle(X, labels)) <= 1e-9
        assert abs(silhouette(X, labels) - silhouette_oracle(X, labels)) <= 1e-9


def test_all_indices_scale_invariant():
    rng = np.random.default_rng(321)
    X, labels = _random_instance(rng)
    for index in (dunn_index, davies_bouldin, silhouette):
        assert abs(index(X, labels) - index(X * 3.7, labels)) <= 1e-9


def test_ground_truth_beats_random_labeling():
    cube = quadrant_cube(size=16, noise=0.05, seed=2)
    X = cube.spectra()
    truth = quadrant_truth(16).ravel()
    rng = np.random.default_rng(0)
    rand = rng.integers(0, 4, X.shape[0])
    rand[:4] = np.arange(4)
    assert dunn_index(X, truth) > dunn_index(X, rand)
    assert silhouette(X, truth) > silhouette(X, rand)
    assert davies_bouldin(X, truth) < davies_bouldin(X, rand)


# --- aggregation


def test_single_run_flag_and_zero_std():
    report = ValidityReport([0.5], [2.0], [0.1], runs=1, subsample=100, seed=0)
    assert report.single_run
    assert report.dunn_std == report.db_std == report.silhouette_std == 0.0


def test_unbiased_std():
    report = ValidityReport([1.0, 2.0, 3.0], [1, 1, 1], [0, 0, 0],
                            runs=3, subsample=100, seed=0)
    assert abs(report.dunn_mean - 2.0) < 1e-12
    assert abs(report.dunn_std - 1.0) < 1e-12  # ddof=1 on {1,2,3}


def test_evaluate_runs_deterministic_pipeline_zero_std():
    cube = quadrant_cube(size=12, noise=0.05, seed=5)
    fixed = LabelMap(quadrant_truth(12))
    report = evaluate_runs(lambda s: fixed, cube.spectra(), runs=3, seeds=[0, 0, 0])
    assert report.dunn_std == 0.0 and report.db_std == 0.0
    assert report.silhouette_std == 0.0
    assert not report.single_run


def test_report_round_trip_files(tmp_path):
    report = ValidityReport([0.5, 0.7], [2.0, 2.4], [0.1, 0.2],
                            runs=2, subsample=100, seed=1)
    report.to_json(tmp_path / "v.json")
    report.to_csv(tmp_path / "v.csv")
    import csv
    import json
    loaded = json.loads((tmp_path / "v.json").read_text())
    assert loaded["runs"] == 2 and loaded["dunn"] == [0.5, 0.7]
    with open(tmp_path / "v.csv") as f:
        rows = list(csv.DictReader(f))
    assert [r["metric"] for r in rows] == ["dunn", "db", "silhouette"]
    assert float(rows[0]["mean"]) == report.dunn_mean
