"""Superpixel clustering of hyperspectral cubes.

Local windowed k-means over the full spectrum plus pixel coordinates:
centers start on a regular grid, are nudged off high-gradient pixels, and
then alternate windowed assignment / mean update until the summed center
displacement drops below tolerance. No dimensionality reduction; every
band enters the spectral distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .hsio import HsiCube


@dataclass
class ClusterCenter:
    spectrum: np.ndarray   # (B,) mean spectrum
    a: float               # row coordinate
    b: float               # col coordinate
    member_count: int = 0


@dataclass
class LabelMap:
    """Per-pixel integer assignment; compacted maps use exactly {0..K'-1}."""

    labels: np.ndarray     # (height, width) non-negative ints

    def __post_init__(self):
        self.labels = np.asarray(self.labels)
        if self.labels.ndim != 2:
            raise InputError(f"label map must be 2-D, got shape {self.labels.shape}")
        if self.labels.size and self.labels.min() < 0:
            raise InputError("label map holds negative labels")

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def n_labels(self) -> int:
        return int(self.labels.max()) + 1

    def is_compact(self) -> bool:
        present = np.unique(self.labels)
        return present.size == self.n_labels and present[0] == 0

    def validate(self):
        if not self.is_compact():
            raise InputError("label map is not compacted to {0..K'-1}")
        return self


@dataclass
class HslicParams:
    K: int
    m: float
    S: int                    # grid interval, derived from K and image size
    n: int = 3                # perturbation window side
    max_iters: int = 10
    residual_tol: float = 1.0
    normalize_bands: bool = False
    enforce_connectivity: bool = True

    def validate(self):
        if self.K < 1:
            raise InputError("K must be >= 1")
        if self.S < 1:
            raise InputError("S must be >= 1")
        if self.n < 1 or self.n % 2 == 0:
            raise InputError("perturbation window n must be odd and >= 1")
        if self.max_iters < 1:
            raise InputError("max_iters must be >= 1")
        return self

    @classmethod
    def for_image(cls, height: int, width: int, K: int, m: float, **kw) -> "HslicParams":
        return cls(K=K, m=m, S=grid_interval(height, width, K), **kw).validate()


def grid_interval(height: int, width: int, K: int) -> int:
    """Grid step S = round(sqrt(pixels / K)), at least 1."""
    if K < 1:
        raise InputError("K must be >= 1")
    return max(1, round(math.sqrt(height * width / K)))


def _grid_positions(extent: int, S: int) -> list[int]:
    # offset S/2, stepped by S, clamped into the image
    count = math.ceil(extent / S)
    return [min(S // 2 + i * S, extent - 1) for i in range(count)]


def init_centers(cube: HsiCube, params: HslicParams) -> list[ClusterCenter]:
    """Seed centers on a regular grid with spacing S and offset S/2."""
    if params.K > cube.n_pixels:
        raise InputError(f"K={params.K} exceeds pixel count {cube.n_pixels}")
    rows = _grid_positions(cube.height, params.S)
    cols = _grid_positions(cube.width, params.S)
    centers = []
    for r in rows:
        for c in cols:
            centers.append(ClusterCenter(cube.data[r, c].copy(), float(r), float(c)))
    return centers


def _gradient_field(data: np.ndarray) -> np.ndarray:
    """Central-difference gradient magnitude summed over bands; borders +inf."""
    H, W = data.shape[:2]
    G = np.full((H, W), np.inf)
    if H > 2 and W > 2:
        dx = data[1:-1, 2:, :] - data[1:-1, :-2, :]
        dy = data[2:, 1:-1, :] - data[:-2, 1:-1, :]
        G[1:-1, 1:-1] = (dx ** 2).sum(axis=2) + (dy ** 2).sum(axis=2)
    return G


def perturb_centers(cube: HsiCube, centers: list[ClusterCenter], n: int) -> list[ClusterCenter]:
    """Move each center to the lowest-gradient pixel in its n x n window.

    Border pixels are not candidates. Ties keep the original position,
    then fall back to row-major order inside the window.
    """
    if n < 1 or n % 2 == 0:
        raise InputError("perturbation window n must be odd and >= 1")
    G = _gradient_field(cube.data)
    half = n // 2
    out = []
    for center in centers:
        r0 = max(0, int(round(center.a)) - half)
        r1 = min(cube.height, int(round(center.a)) + half + 1)
        c0 = max(0, int(round(center.b)) - half)
        c1 = min(cube.width, int(round(center.b)) + half + 1)
        window = G[r0:r1, c0:c1]
        gmin = window.min() if window.size else np.inf
        if not np.isfinite(gmin):
            out.append(ClusterCenter(center.spectrum.copy(), center.a, center.b))
            continue
        orig = (int(round(center.a)), int(round(center.b)))
        if r0 <= orig[0] < r1 and c0 <= orig[1] < c1 and G[orig] == gmin:
            r, c = orig
        else:
            dr, dc = np.argwhere(window == gmin)[0]
            r, c = r0 + int(dr), c0 + int(dc)
        out.append(ClusterCenter(cube.data[r, c].copy(), float(r), float(c)))
    return out


def spectral_distance(x: np.ndarray, c: np.ndarray) -> float:
    """Sum of squared per-band differences."""
    x = np.asarray(x, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    if x.shape != c.shape:
        raise InputError(f"spectra have different lengths: {x.shape} vs {c.shape}")
    return float(((x - c) ** 2).sum())


def spatial_distance(p, q) -> float:
    """Euclidean distance between two (row, col) positions."""
    return math.hypot(p[0] - q[0], p[1] - q[1])


def combined_distance(d_spec: float, d_spat: float, m: float, S: int) -> float:
    return d_spec + (m / S) * d_spat


def run_hslic(cube: HsiCube, params: HslicParams, seed: int = 0,
              diagnostics: dict | None = None):
    """Cluster a cube into superpixels; returns (LabelMap, centers).

    Each iteration evaluates the combined distance inside a 2S x 2S window
    around every center; a pixel takes the minimal-distance center among
    windows covering it (lowest center index on ties). Pixels covered by no
    window fall back to a full search. Iteration stops when the summed
    spatial center displacement falls below residual_tol or after max_iters.

    The algorithm is deterministic; `seed` is accepted for interface
    uniformity with the stochastic stages. When `diagnostics` is given it is
    filled with per-iteration "objective" and "displacement" lists.
    """
    params.validate()
    if params.K > cube.n_pixels:
        raise InputError(f"K={params.K} exceeds pixel count {cube.n_pixels}")
    H, W, B = cube.height, cube.width, cube.bands
    data = cube.data
    if params.normalize_bands:
        std = data.reshape(-1, B).std(axis=0)
        std[std == 0] = 1.0
        data = data / std

    centers = perturb_centers(cube, init_centers(cube, params), params.n)
    if params.normalize_bands:
        for center in centers:
            r, c = int(round(center.a)), int(round(center.b))
            center.spectrum = data[r, c].copy()
    C = np.stack([c.spectrum for c in centers])          # (K, B)
    P = np.array([[c.a, c.b] for c in centers])          # (K, 2)
    K = len(centers)
    S, w_spat = params.S, params.m / params.S

    labels = np.zeros((H, W), dtype=np.int64)
    if diagnostics is not None:
        diagnostics.setdefault("objective", [])
        diagnostics.setdefault("displacement", [])

    for _ in range(params.max_iters):
        dist = np.full((H, W), np.inf)
        labels.fill(-1)
        for k in range(K):
            r0 = max(0, math.ceil(P[k, 0] - S))
            r1 = min(H, math.floor(P[k, 0] + S) + 1)
            c0 = max(0, math.ceil(P[k, 1] - S))
            c1 = min(W, math.floor(P[k, 1] + S) + 1)
            if r0 >= r1 or c0 >= c1:
                continue
            win = data[r0:r1, c0:c1]
            d_spec = ((win - C[k]) ** 2).sum(axis=2)
            rr, cc = np.ogrid[r0:r1, c0:c1]
            d_spat = np.sqrt((rr - P[k, 0]) ** 2 + (cc - P[k, 1]) ** 2)
            d = d_spec + w_spat * d_spat
            sub = dist[r0:r1, c0:c1]
            better = d < sub
            sub[better] = d[better]
            labels[r0:r1, c0:c1][better] = k

        uncovered = labels < 0
        if uncovered.any():
            rows, cols = np.nonzero(uncovered)
            X = data[rows, cols]
            best = np.full(rows.size, np.inf)
            pick = np.zeros(rows.size, dtype=np.int64)
            for k in range(K):
                d = ((X - C[k]) ** 2).sum(axis=1) + w_spat * np.sqrt(
                    (rows - P[k, 0]) ** 2 + (cols - P[k, 1]) ** 2)
                better = d < best
                best[better] = d[better]
                pick[better] = k
            labels[rows, cols] = pick
            dist[rows, cols] = best

        if diagnostics is not None:
            diagnostics["objective"].append(float(dist.sum()))

        flat = labels.ravel()
        counts = np.bincount(flat, minlength=K).astype(np.float64)
        sum_spec = np.zeros((K, B))
        np.add.at(sum_spec, flat, data.reshape(-1, B))
        rr, cc = np.indices((H, W))
        sum_pos = np.zeros((K, 2))
        np.add.at(sum_pos, flat, np.stack([rr.ravel(), cc.ravel()], axis=1).astype(np.float64))

        newC, newP = C.copy(), P.copy()
        alive = counts > 0
        newC[alive] = sum_spec[alive] / counts[alive, None]
        newP[alive] = sum_pos[alive] / counts[alive, None]
        displacement = float(np.sqrt(((newP - P) ** 2).sum(axis=1)).sum())
        C, P = newC, newP
        if diagnostics is not None:
            diagnostics["displacement"].append(displacement)
        if displacement < params.residual_tol:
            break

    if params.enforce_connectivity:
        labels = _enforce_connectivity(labels)

    labels, kept = _compact(labels)
    out_centers = _centers_from_labels(cube.data, labels, len(kept))
    return LabelMap(labels).validate(), out_centers


def _compact(labels: np.ndarray):
    """Relabel to {0..K'-1} preserving ascending original label order."""
    kept = np.unique(labels)
    lut = np.zeros(int(kept.max()) + 1, dtype=np.int64)
    lut[kept] = np.arange(kept.size)
    return lut[labels], kept


def _centers_from_labels(data: np.ndarray, labels: np.ndarray, K: int) -> list[ClusterCenter]:
    flat = labels.ravel()
    counts = np.bincount(flat, minlength=K).astype(np.float64)
    sum_spec = np.zeros((K, data.shape[2]))
    np.add.at(sum_spec, flat, data.reshape(-1, data.shape[2]))
    rr, cc = np.indices(labels.shape)
    sum_r = np.bincount(flat, weights=rr.ravel(), minlength=K)
    sum_c = np.bincount(flat, weights=cc.ravel(), minlength=K)
    return [
        ClusterCenter(sum_spec[k] / counts[k], sum_r[k] / counts[k],
                      sum_c[k] / counts[k], int(counts[k]))
        for k in range(K)
    ]


def _label_components(labels: np.ndarray):
    """4-connected components of equal-label regions, row-major discovery order.

    Returns (component index per pixel, component sizes, component labels).
    """
    from collections import deque

    H, W = labels.shape
    comp = np.full((H, W), -1, dtype=np.int64)
    sizes, owners = [], []
    nxt = 0
    for r0 in range(H):
        for c0 in range(W):
            if comp[r0, c0] >= 0:
                continue
            value = labels[r0, c0]
            queue = deque([(r0, c0)])
            comp[r0, c0] = nxt
            size = 0
            while queue:
                r, c = queue.popleft()
                size += 1
                for rn, cn in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
                    if 0 <= rn < H and 0 <= cn < W and comp[rn, cn] < 0 \
                            and labels[rn, cn] == value:
                        comp[rn, cn] = nxt
                        queue.append((rn, cn))
            sizes.append(size)
            owners.append(int(value))
            nxt += 1
    return comp, np.array(sizes), np.array(owners)


def _enforce_connectivity(labels: np.ndarray) -> np.ndarray:
    """Re-label every disconnected fragment to its largest adjacent superpixel."""
    labels = labels.copy()
    H, W = labels.shape
    while True:
        comp, sizes, owners = _label_components(labels)
        n_owner_comps = np.bincount(owners)
        if (n_owner_comps <= 1).all():
            return labels
        label_sizes = np.bincount(labels.ravel())
        changed = False
        for owner in np.nonzero(n_owner_comps > 1)[0]:
            comps = np.nonzero(owners == owner)[0]
            # keep the largest fragment (first in discovery order on ties)
            keep = comps[np.argmax(sizes[comps])]
            for cid in comps:
                if cid == keep:
                    continue
                mask = comp == cid
                neigh = _adjacent_labels(labels, mask, owner)
                if neigh.size == 0:
                    continue
                target = neigh[np.argmax(label_sizes[neigh])]
                labels[mask] = target
                changed = True
        if not changed:
            return labels


def _adjacent_labels(labels: np.ndarray, mask: np.ndarray, own: int) -> np.ndarray:
    """Labels 4-adjacent to the masked region, own label excluded, ascending."""
    H, W = labels.shape
    found = set()
    rows, cols = np.nonzero(mask)
    for r, c in zip(rows, cols):
        for rn, cn in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if 0 <= rn < H and 0 <= cn < W:
                v = int(labels[rn, cn])
                if v != own:
                    found.add(v)
    return np.array(sorted(found), dtype=np.int64)
