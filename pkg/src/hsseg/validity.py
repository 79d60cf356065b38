"""Cluster validity indices over spectral signatures.

Each superpixel is treated as a cluster of its member spectra; Dunn (higher
better), Davies-Bouldin (lower better) and Silhouette (higher better) are
computed with plain Euclidean distances, optionally on a seeded subsample
when the pixel count makes the quadratic indices impractical. Repeated
pipeline runs aggregate to mean +/- sample standard deviation.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DegeneracyError, InputError

_CHUNK = 2048  # rows per pairwise-distance block


def _as_points(features: np.ndarray, labels) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise InputError(f"features must be (N, B), got {X.shape}")
    lab = np.asarray(getattr(labels, "labels", labels)).ravel()
    if lab.size != X.shape[0]:
        raise InputError(f"{lab.size} labels for {X.shape[0]} feature rows")
    return X, lab


def dunn_index(features: np.ndarray, labels) -> float:
    """Min single-linkage inter-cluster distance over max intra-cluster diameter."""
    X, lab = _as_points(features, labels)
    ids = np.unique(lab)
    K = ids.size
    if K < 2:
        raise DegeneracyError("Dunn index needs at least 2 clusters")
    idx = {v: i for i, v in enumerate(ids)}
    pos = np.array([idx[v] for v in lab])
    min_inter = np.full((K, K), np.inf)
    max_diam = np.zeros(K)
    for start in range(0, X.shape[0], _CHUNK):
        rows = slice(start, min(start + _CHUNK, X.shape[0]))
        d = cdist(X[rows], X)
        prow = pos[rows]
        for j in range(K):
            block = d[:, pos == j]
            np.minimum.at(min_inter[:, j], prow, block.min(axis=1))
            own = prow == j
            if own.any():
                max_diam[j] = max(max_diam[j], block[own].max())
    diameter = max_diam.max()
    if diameter == 0.0:
        raise DegeneracyError("all clusters have zero diameter; Dunn index undefined")
    off = ~np.eye(K, dtype=bool)
    return float(min_inter[off].min() / diameter)


def davies_bouldin(features: np.ndarray, labels) -> float:
    """Mean over clusters of the worst (s_i + s_j) / centroid-gap ratio."""
    X, lab = _as_points(features, labels)
    ids = np.unique(lab)
    K = ids.size
    if K < 2:
        raise DegeneracyError("Davies-Bouldin index needs at least 2 clusters")
    centroids = np.stack([X[lab == v].mean(axis=0) for v in ids])
    scatter = np.array([
        np.sqrt(((X[lab == v] - centroids[i]) ** 2).sum(axis=1)).mean()
        for i, v in enumerate(ids)
    ])
    gaps = cdist(centroids, centroids)
    off = ~np.eye(K, dtype=bool)
    if (gaps[off] == 0.0).any():
        raise DegeneracyError("coincident cluster centroids; Davies-Bouldin undefined")
    ratio = (scatter[:, None] + scatter[None, :]) / np.where(off, gaps, np.inf)
    return float(ratio.max(axis=1).mean())


def silhouette(features: np.ndarray, labels, subsample: int = 20000,
               seed: int = 0) -> float:
    """Mean silhouette width (b - a) / max(a, b) over evaluated points.

    Exact when N <= subsample; otherwise the mean runs over a seeded uniform
    sample of points, with a and b still computed against the full population.
    Singleton-cluster points and all-zero-distance points score 0.
    """
    X, lab = _as_points(features, labels)
    ids = np.unique(lab)
    K = ids.size
    if K < 2:
        raise DegeneracyError("silhouette needs at least 2 clusters")
    idx = {v: i for i, v in enumerate(ids)}
    pos = np.array([idx[v] for v in lab])
    counts = np.bincount(pos, minlength=K).astype(np.float64)
    onehot = np.zeros((X.shape[0], K))
    onehot[np.arange(X.shape[0]), pos] = 1.0

    n = X.shape[0]
    if n <= subsample:
        eval_rows = np.arange(n)
    else:
        eval_rows = np.sort(np.random.default_rng(seed).choice(n, subsample, replace=False))

    scores = np.empty(eval_rows.size)
    for start in range(0, eval_rows.size, _CHUNK):
        rows = eval_rows[start:start + _CHUNK]
        d = cdist(X[rows], X)
        sums = d @ onehot                       # (chunk, K) summed distance per cluster
        own = pos[rows]
        own_count = counts[own]
        a = np.where(own_count > 1,
                     sums[np.arange(rows.size), own] / np.maximum(own_count - 1, 1),
                     0.0)
        means = sums / counts[None, :]
        means[np.arange(rows.size), own] = np.inf
        b = means.min(axis=1)
        width = np.zeros(rows.size)
        denom = np.maximum(a, b)
        ok = (own_count > 1) & (denom > 0)
        width[ok] = (b[ok] - a[ok]) / denom[ok]
        scores[start:start + rows.size] = width
    return float(scores.mean())


@dataclass
class ValidityReport:
    """Per-run index values with mean +/- sample standard deviation."""

    dunn: list
    db: list
    silhouette: list
    runs: int
    subsample: int
    seed: int
    single_run: bool = False
    dunn_mean: float = 0.0
    dunn_std: float = 0.0
    db_mean: float = 0.0
    db_std: float = 0.0
    silhouette_mean: float = 0.0
    silhouette_std: float = 0.0

    def __post_init__(self):
        self.single_run = self.runs == 1
        for name in ("dunn", "db", "silhouette"):
            vals = np.asarray(getattr(self, name), dtype=np.float64)
            setattr(self, f"{name}_mean", float(vals.mean()))
            # unbiased (n-1) denominator; a single run reports 0 by convention
            setattr(self, f"{name}_std",
                    float(vals.std(ddof=1)) if vals.size > 1 else 0.0)

    def to_json(self, path):
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["metric", "mean", "std", "runs", "subsample", "seed"])
            for name in ("dunn", "db", "silhouette"):
                writer.writerow([
                    name,
                    repr(getattr(self, f"{name}_mean")),
                    repr(getattr(self, f"{name}_std")),
                    self.runs, self.subsample, self.seed,
                ])


def score_label_map(features: np.ndarray, labels, subsample: int = 20000,
                    seed: int = 0) -> tuple[float, float, float]:
    """All three indices for one labeling: (dunn, davies-bouldin, silhouette)."""
    return (
        dunn_index(features, labels),
        davies_bouldin(features, labels),
        silhouette(features, labels, subsample=subsample, seed=seed),
    )


def evaluate_runs(pipeline, features: np.ndarray, runs: int,
                  seeds=None, subsample: int = 20000, seed: int = 0) -> ValidityReport:
    """Run `pipeline(seed) -> label map` repeatedly and aggregate the indices.

    `seeds` defaults to seed, seed+1, ... seed+runs-1. The subsample (and its
    seed) is shared across runs so per-run values stay comparable.
    """
    if runs < 1:
        raise InputError("runs must be >= 1")
    if seeds is None:
        seeds = [seed + i for i in range(runs)]
    if len(seeds) != runs:
        raise InputError(f"{len(seeds)} seeds supplied for {runs} runs")
    dunns, dbs, sils = [], [], []
    for s in seeds:
        label_map = pipeline(s)
        d, b, sil = score_label_map(features, label_map, subsample=subsample, seed=seed)
        dunns.append(d)
        dbs.append(b)
        sils.append(sil)
    return ValidityReport(dunns, dbs, sils, runs=runs, subsample=subsample, seed=seed)
