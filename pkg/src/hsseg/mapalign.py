"""Map-to-image alignment and polygon-guided superpixel merging.

Fits the map->pixel affine transform from manually picked control points,
burns polygons into the pixel grid with the even-odd fill rule, and merges
superpixels that overlap a common polygon (transitively, union-find style).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneracyError, InputError
from .hsio import ControlPoints, PolygonSet
from .hslic import LabelMap


@dataclass
class AffineTransform:
    """2x3 matrix taking (map_x, map_y, 1) to (pixel_col, pixel_row)."""

    matrix: np.ndarray
    residual_rms: float = 0.0

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.shape != (2, 3):
            raise InputError(f"affine matrix must be 2x3, got {self.matrix.shape}")
        if not np.isfinite(self.matrix).all():
            raise InputError("affine matrix has non-finite coefficients")
        if abs(np.linalg.det(self.matrix[:, :2])) <= 1e-12:
            raise DegeneracyError("affine transform has a singular linear part")

    def apply(self, xy: np.ndarray) -> np.ndarray:
        """Map (n, 2) map coordinates to (n, 2) pixel (col, row) coordinates."""
        xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
        ones = np.ones((xy.shape[0], 1))
        return np.hstack([xy, ones]) @ self.matrix.T

    @classmethod
    def identity(cls) -> "AffineTransform":
        return cls(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))


@dataclass
class PolygonMask:
    """Per-pixel polygon id (-1 where uncovered) with per-polygon class tags."""

    ids: np.ndarray            # (height, width) int
    tags: dict = field(default_factory=dict)

    @property
    def height(self) -> int:
        return self.ids.shape[0]

    @property
    def width(self) -> int:
        return self.ids.shape[1]


def fit_affine(points: ControlPoints) -> AffineTransform:
    """Least-squares affine fit of pixel positions from map positions.

    Needs at least 3 non-collinear pairs; exact correspondences are
    recovered to machine precision.
    """
    n = len(points)
    if n < 3:
        raise InputError(f"affine fit needs >= 3 control points, got {n}")
    design = np.hstack([points.map_xy, np.ones((n, 1))])
    if np.linalg.matrix_rank(design) < 3:
        raise DegeneracyError("control points are collinear; affine fit is singular")
    coef, _, _, _ = np.linalg.lstsq(design, points.pixel_xy, rcond=None)
    matrix = coef.T
    residual = design @ coef - points.pixel_xy
    rms = float(np.sqrt((residual ** 2).sum(axis=1).mean()))
    return AffineTransform(matrix, residual_rms=rms)


def _even_odd_inside(px: np.ndarray, py: np.ndarray, rings) -> np.ndarray:
    """Even-odd (crossing parity) point-in-polygon over all rings."""
    inside = np.zeros(px.shape, dtype=bool)
    for ring in rings:
        nv = len(ring)
        for j in range(nv):
            x1, y1 = ring[j]
            x2, y2 = ring[(j + 1) % nv]
            if y1 == y2:
                continue
            crosses = (y1 > py) != (y2 > py)
            if not crosses.any():
                continue
            xint = (x2 - x1) * (py - y1) / (y2 - y1) + x1
            inside ^= crosses & (px < xint)
    return inside


def rasterize(polygons: PolygonSet, transform: AffineTransform,
              height: int, width: int) -> PolygonMask:
    """Burn polygons into the pixel grid.

    A pixel belongs to a polygon iff its center (integer col, row) falls
    inside by the even-odd rule after the map->pixel transform. Pixels inside
    several polygons take the lowest polygon id.
    """
    ids = np.full((height, width), -1, dtype=np.int64)
    tags = {}
    for poly in sorted(polygons, key=lambda p: p.pid):
        tags[poly.pid] = poly.tag
        rings = [transform.apply(ring) for ring in poly.rings]
        allv = np.vstack(rings)
        c0 = max(0, int(np.floor(allv[:, 0].min())))
        c1 = min(width - 1, int(np.ceil(allv[:, 0].max())))
        r0 = max(0, int(np.floor(allv[:, 1].min())))
        r1 = min(height - 1, int(np.ceil(allv[:, 1].max())))
        if c0 > c1 or r0 > r1:
            continue
        rr, cc = np.mgrid[r0:r1 + 1, c0:c1 + 1]
        inside = _even_odd_inside(cc.astype(np.float64), rr.astype(np.float64), rings)
        free = ids[r0:r1 + 1, c0:c1 + 1] < 0
        write = inside & free
        ids[r0:r1 + 1, c0:c1 + 1][write] = poly.pid
    return PolygonMask(ids, tags)


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, x: int, y: int):
        rx, ry = self.find(x), self.find(y)
        if rx != ry:
            # lower root wins, keeps merge order-independent
            if rx > ry:
                rx, ry = ry, rx
            self.parent[ry] = rx


def merge_by_polygon(labels: LabelMap, mask: PolygonMask, min_overlap: float = 0.0):
    """Merge superpixels that overlap a common polygon.

    Overlap is |superpixel ∩ polygon| / |superpixel|; any shared pixel merges
    at the default min_overlap=0. Chains through shared superpixels merge
    transitively. Returns (compacted LabelMap, {merged label: class tag});
    a group touched by several polygons takes the tag of the lowest polygon id.
    """
    if (labels.height, labels.width) != (mask.height, mask.width):
        raise InputError(
            f"label map {labels.height}x{labels.width} does not match "
            f"mask {mask.height}x{mask.width}")
    lab = labels.labels
    n = labels.n_labels
    sizes = np.bincount(lab.ravel(), minlength=n)
    uf = _UnionFind(n)
    tag_pid = {}  # union-find member label -> lowest polygon id tagging it

    for pid in sorted(np.unique(mask.ids[mask.ids >= 0])):
        overlap = np.bincount(lab[mask.ids == pid].ravel(), minlength=n)
        frac = overlap / np.maximum(sizes, 1)
        hit = np.nonzero((overlap > 0) & (frac >= min_overlap))[0]
        if hit.size == 0:
            continue
        for s in hit[1:]:
            uf.union(int(hit[0]), int(s))
        for s in hit:
            tag_pid[int(s)] = min(tag_pid.get(int(s), pid), int(pid))

    # compact: new ids ordered by each group's lowest original label
    new_id = {}
    lut = np.zeros(n, dtype=np.int64)
    for old in range(n):
        root = uf.find(old)
        if root not in new_id:
            new_id[root] = len(new_id)
        lut[old] = new_id[root]

    group_pid = {}
    for member, pid in tag_pid.items():
        g = lut[member]
        group_pid[g] = min(group_pid.get(g, pid), pid)
    tags = {int(g): mask.tags[pid] for g, pid in group_pid.items()}

    merged = LabelMap(lut[lab])
    merged.validate()
    return merged, tags
