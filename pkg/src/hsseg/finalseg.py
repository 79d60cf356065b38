"""Final segmentation from proportion vectors.

K-means over per-pixel proportions, connected-components relabeling of the
spatial clusters, and a cleanup pass folding undersized segments into their
largest neighbor.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import InputError
from .hslic import LabelMap


@dataclass
class KmeansResult:
    assignments: np.ndarray        # (N,) cluster index per point
    centroids: np.ndarray          # (k, dim)
    objective: float               # summed squared distance
    objective_history: list = field(default_factory=list)


def _plusplus_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: distance-squared weighted draws."""
    n = X.shape[0]
    centroids = np.empty((k, X.shape[1]))
    centroids[0] = X[rng.integers(n)]
    d2 = ((X - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centroids[j] = X[rng.integers(n)]
            continue
        centroids[j] = X[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, ((X - centroids[j]) ** 2).sum(axis=1))
    return centroids


def lloyd(X: np.ndarray, k: int, rng: np.random.Generator,
          max_iters: int = 100) -> KmeansResult:
    """One seeded k-means run; objective recorded after every assignment.

    Empty clusters are re-seeded from the point farthest from its assigned
    centroid, which strictly lowers the objective.
    """
    X = np.asarray(X, dtype=np.float64)
    centroids = _plusplus_init(X, k, rng)
    history = []
    assign = None
    for _ in range(max_iters):
        d2 = cdist(X, centroids, "sqeuclidean")
        new_assign = d2.argmin(axis=1)
        point_cost = d2[np.arange(X.shape[0]), new_assign]
        for j in range(k):
            if (new_assign == j).any():
                continue
            far = int(point_cost.argmax())
            centroids[j] = X[far]
            d2[:, j] = ((X - centroids[j]) ** 2).sum(axis=1)
            new_assign = d2.argmin(axis=1)
            point_cost = d2[np.arange(X.shape[0]), new_assign]
        history.append(float(point_cost.sum()))
        if assign is not None and np.array_equal(assign, new_assign):
            break
        assign = new_assign
        for j in range(k):
            members = X[assign == j]
            if len(members):
                centroids[j] = members.mean(axis=0)
    return KmeansResult(assign, centroids, history[-1], history)


def kmeans(proportions, K_final: int, seed: int = 0, restarts: int = 10) -> KmeansResult:
    """Best-of-restarts k-means over the proportion vectors of a map."""
    X = np.asarray(proportions.data, dtype=np.float64).reshape(-1, proportions.data.shape[-1])
    if K_final < 1:
        raise InputError("K_final must be >= 1")
    distinct = np.unique(X, axis=0).shape[0]
    if K_final > distinct:
        raise InputError(
            f"K_final={K_final} exceeds the {distinct} distinct proportion vectors")
    best = None
    for r in range(restarts):
        result = lloyd(X, K_final, np.random.default_rng([seed, r]))
        if best is None or result.objective < best.objective:
            best = result
    return best


def connected_components(assignments: np.ndarray, height: int, width: int,
                         connectivity: int = 4) -> LabelMap:
    """Relabel equal-assignment regions as components, row-major first-encounter order."""
    if connectivity not in (4, 8):
        raise InputError("connectivity must be 4 or 8")
    grid = np.asarray(assignments).reshape(height, width)
    steps = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    if connectivity == 8:
        steps += [(-1, -1), (-1, 1), (1, -1), (1, 1)]
    out = np.full((height, width), -1, dtype=np.int64)
    nxt = 0
    for r0 in range(height):
        for c0 in range(width):
            if out[r0, c0] >= 0:
                continue
            value = grid[r0, c0]
            queue = deque([(r0, c0)])
            out[r0, c0] = nxt
            while queue:
                r, c = queue.popleft()
                for dr, dc in steps:
                    rn, cn = r + dr, c + dc
                    if 0 <= rn < height and 0 <= cn < width and out[rn, cn] < 0 \
                            and grid[rn, cn] == value:
                        out[rn, cn] = nxt
                        queue.append((rn, cn))
            nxt += 1
    return LabelMap(out).validate()


def cleanup(labels: LabelMap, min_segment: int) -> LabelMap:
    """Fold undersized segments into their largest 4-adjacent neighbor.

    Repeatedly takes the smallest segment under the threshold (lowest label
    on ties) and merges it into its largest neighbor (again lowest label on
    ties) until every segment reaches the threshold or one segment remains.
    """
    labels.validate()
    lab = labels.labels.copy()
    H, W = lab.shape
    n = labels.n_labels
    sizes = np.bincount(lab.ravel(), minlength=n)
    pixels = {k: list(zip(*np.nonzero(lab == k))) for k in range(n)}

    while True:
        alive = np.nonzero(sizes > 0)[0]
        if alive.size <= 1:
            break
        small = alive[(sizes[alive] < min_segment)]
        if small.size == 0:
            break
        victim = int(small[np.argmin(sizes[small])])
        neigh = set()
        for r, c in pixels[victim]:
            for rn, cn in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
                if 0 <= rn < H and 0 <= cn < W and lab[rn, cn] != victim:
                    neigh.add(int(lab[rn, cn]))
        if not neigh:
            break
        neigh = np.array(sorted(neigh))
        target = int(neigh[np.argmax(sizes[neigh])])
        for r, c in pixels[victim]:
            lab[r, c] = target
        pixels[target].extend(pixels[victim])
        pixels[victim] = []
        sizes[target] += sizes[victim]
        sizes[victim] = 0

    kept = np.unique(lab)
    lut = np.zeros(int(kept.max()) + 1, dtype=np.int64)
    lut[kept] = np.arange(kept.size)
    return LabelMap(lut[lab]).validate()
