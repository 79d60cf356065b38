"""File ingestion and serialization for the segmentation pipeline.

Formats:
  - spectral cubes: plain-text ENVI-style header (samples/lines/bands/
    interleave/data type) next to a flat binary file; BSQ, BIL and BIP
    interleaves canonicalized to (row, col, band) on read
  - map polygons: GeoJSON FeatureCollection, class tag in properties["class"]
  - control points: CSV with columns map_x, map_y, pixel_col, pixel_row
  - label maps: raw little-endian uint32 (row-major) plus a PNG render
  - proportion maps: planar float32 binary plus a small text header

Readers reject non-finite values so downstream distance math stays total.
A loaded cube is immutable in spirit: nothing in the pipeline writes to it.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import InputError

# ENVI numeric data-type codes for the subset of element types we accept.
_ENVI_DTYPES = {
    1: np.uint8,
    2: np.int16,
    3: np.int32,
    4: np.float32,
    5: np.float64,
    12: np.uint16,
    13: np.uint32,
}
_ENVI_CODES = {np.dtype(v): k for k, v in _ENVI_DTYPES.items()}

_INTERLEAVES = ("bsq", "bil", "bip")


@dataclass
class HsiCube:
    """Hyperspectral cube with canonical (row, col, band) addressing."""

    data: np.ndarray                     # (height, width, bands) float64
    wavelengths: np.ndarray | None = None  # per-band wavelength in nm

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3:
            raise InputError(f"cube data must be 3-D (row, col, band), got shape {self.data.shape}")
        h, w, b = self.data.shape
        if h < 1 or w < 1 or b < 1:
            raise InputError(f"cube dimensions must all be >= 1, got {h}x{w}x{b}")
        bad = ~np.isfinite(self.data)
        if bad.any():
            r, c, lam = np.argwhere(bad)[0]
            raise InputError(f"non-finite value at (row={r}, col={c}, band={lam})")
        if self.wavelengths is not None:
            self.wavelengths = np.asarray(self.wavelengths, dtype=np.float64)
            if self.wavelengths.shape != (b,):
                raise InputError(
                    f"wavelength list has {self.wavelengths.size} entries for {b} bands")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def bands(self) -> int:
        return self.data.shape[2]

    @property
    def n_pixels(self) -> int:
        return self.height * self.width

    def spectra(self) -> np.ndarray:
        """Pixels as an (N, B) matrix, row-major pixel order."""
        return self.data.reshape(-1, self.bands)


@dataclass
class MapPolygon:
    """One map polygon: outer ring plus optional hole rings, map coordinates."""

    rings: list          # list of (n_i, 2) float arrays, closing vertex dropped
    tag: str
    pid: int

    def all_vertices(self) -> np.ndarray:
        return np.vstack(self.rings)


@dataclass
class PolygonSet:
    polygons: list = field(default_factory=list)

    def __len__(self):
        return len(self.polygons)

    def __iter__(self):
        return iter(self.polygons)

    def __post_init__(self):
        pids = [p.pid for p in self.polygons]
        if len(set(pids)) != len(pids):
            raise InputError("polygon ids are not unique")


@dataclass
class ControlPoints:
    """Manual map<->image correspondences for affine fitting."""

    map_xy: np.ndarray    # (n, 2) map coordinates
    pixel_xy: np.ndarray  # (n, 2) pixel coordinates, (col, row)

    def __post_init__(self):
        self.map_xy = np.asarray(self.map_xy, dtype=np.float64).reshape(-1, 2)
        self.pixel_xy = np.asarray(self.pixel_xy, dtype=np.float64).reshape(-1, 2)
        if self.map_xy.shape != self.pixel_xy.shape:
            raise InputError("control point lists have mismatched lengths")

    def __len__(self):
        return self.map_xy.shape[0]


@dataclass
class PipelineConfig:
    """All pipeline knobs in one place; JSON-loadable with CLI overrides."""

    K: int = 500              # requested superpixel count
    m: float = 20.0           # spatial scaling factor
    n: int = 3                # center-perturbation window side (odd)
    M: int = 6                # endmember count
    alpha: float = 0.3        # document-level Dirichlet concentration
    lambda_pm: float = 1.0    # pixel-membership concentration
    epsilon: float = 0.05     # allowed proportion mass outside a partial label
    T: int = 200              # sampler iterations
    K_final: int = 6          # K-means cluster count on proportions
    min_segment: int = 25     # cleanup size threshold (pixels)
    runs: int = 1             # pipeline repetitions for the validity report
    seed: int = 0

    # secondary knobs
    max_iters: int = 10
    residual_tol: float = 1.0
    min_overlap: float = 0.0
    restarts: int = 10
    burn_in: int | None = None     # defaults to T // 2
    subsample: int = 20000
    exact_metrics: bool = False
    normalize_bands: bool = False
    enforce_connectivity: bool = True

    def validate(self):
        if self.K < 1:
            raise InputError("K must be >= 1")
        if self.m <= 0:
            raise InputError("m must be > 0")
        if self.n < 1 or self.n % 2 == 0:
            raise InputError("n must be odd and >= 1")
        if self.M < 1:
            raise InputError("M must be >= 1")
        if self.alpha <= 0:
            raise InputError("alpha must be > 0")
        if self.lambda_pm <= 0:
            raise InputError("lambda_pm must be > 0")
        if not 0.0 <= self.epsilon <= 1.0:
            raise InputError("epsilon must lie in [0, 1]")
        if self.T < 1:
            raise InputError("T must be >= 1")
        if self.K_final < 1:
            raise InputError("K_final must be >= 1")
        if self.min_segment < 0:
            raise InputError("min_segment must be >= 0")
        if self.runs < 1:
            raise InputError("runs must be >= 1")
        if self.burn_in is not None and not 0 <= self.burn_in < self.T:
            raise InputError("burn_in must satisfy 0 <= burn_in < T")
        return self

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise InputError(f"config {path} is not valid JSON: {e}") from e
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise InputError(f"config {path} has unknown keys: {sorted(unknown)}")
        return cls(**raw).validate()

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# spectral cubes


def _parse_envi_header(path) -> dict:
    text = Path(path).read_text()
    fields = {}
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        line = lines[i].strip()
        i += 1
        if not line or line.upper() == "ENVI" or line.startswith(";"):
            continue
        if "=" not in line:
            raise InputError(f"malformed header line in {path!s}: {line!r}")
        key, _, value = line.partition("=")
        key = key.strip().lower()
        value = value.strip()
        if value.startswith("{"):
            # brace-delimited list, possibly spanning multiple lines
            while "}" not in value and i < len(lines):
                value += " " + lines[i].strip()
                i += 1
            if "}" not in value:
                raise InputError(f"unterminated brace value for {key!r} in {path!s}")
            value = value.strip("{} ").strip()
        fields[key] = value
    return fields


def _header_int(fields: dict, key: str, path) -> int:
    if key not in fields:
        raise InputError(f"header {path!s} missing required key {key!r}")
    try:
        return int(fields[key])
    except ValueError:
        raise InputError(f"header key {key!r} is not an integer: {fields[key]!r}")


def read_cube(header_path, data_path) -> HsiCube:
    """Load a cube from a header/binary pair, canonicalizing the interleave.

    The header must declare samples, lines, bands, interleave and data type;
    the binary file length must match exactly. Values are promoted to float64
    and rejected if non-finite.
    """
    fields = _parse_envi_header(header_path)
    width = _header_int(fields, "samples", header_path)
    height = _header_int(fields, "lines", header_path)
    bands = _header_int(fields, "bands", header_path)
    code = _header_int(fields, "data type", header_path)
    if code not in _ENVI_DTYPES:
        raise InputError(f"unsupported data type code {code} in {header_path!s}")
    interleave = fields.get("interleave", "").lower()
    if interleave not in _INTERLEAVES:
        raise InputError(f"unsupported interleave {interleave!r} in {header_path!s}")
    dtype = np.dtype(_ENVI_DTYPES[code])
    if fields.get("byte order", "0").strip() == "1":
        dtype = dtype.newbyteorder(">")

    raw = np.fromfile(data_path, dtype=dtype)
    expected = height * width * bands
    if raw.size != expected:
        raise InputError(
            f"data file {data_path!s} holds {raw.size} values, header expects {expected}")

    if interleave == "bsq":
        cube = raw.reshape(bands, height, width).transpose(1, 2, 0)
    elif interleave == "bil":
        cube = raw.reshape(height, bands, width).transpose(0, 2, 1)
    else:  # bip
        cube = raw.reshape(height, width, bands)

    wavelengths = None
    if "wavelength" in fields:
        try:
            wavelengths = np.array(
                [float(tok) for tok in fields["wavelength"].split(",") if tok.strip()])
        except ValueError:
            raise InputError(f"wavelength list in {header_path!s} is not numeric")
    return HsiCube(cube.astype(np.float64), wavelengths=wavelengths)


def write_cube(cube: HsiCube, header_path, data_path, interleave: str = "bsq",
               dtype=np.float64):
    """Write a cube as a header/binary pair. float64 output round-trips exactly."""
    interleave = interleave.lower()
    if interleave not in _INTERLEAVES:
        raise InputError(f"unsupported interleave {interleave!r}")
    dt = np.dtype(dtype)
    if dt not in _ENVI_CODES:
        raise InputError(f"unsupported element type {dt}")
    data = cube.data.astype(dt)
    if interleave == "bsq":
        flat = data.transpose(2, 0, 1)
    elif interleave == "bil":
        flat = data.transpose(0, 2, 1)
    else:
        flat = data
    lines = [
        "ENVI",
        f"samples = {cube.width}",
        f"lines = {cube.height}",
        f"bands = {cube.bands}",
        f"data type = {_ENVI_CODES[dt]}",
        f"interleave = {interleave}",
        "byte order = 0",
    ]
    if cube.wavelengths is not None:
        wl = ", ".join(repr(float(v)) for v in cube.wavelengths)
        lines.append("wavelength = { " + wl + " }")
    Path(header_path).write_text("\n".join(lines) + "\n")
    flat.astype(dt.newbyteorder("<")).tofile(data_path)


# ---------------------------------------------------------------------------
# map polygons


def _clean_ring(coords, feature_idx: int) -> np.ndarray:
    ring = np.asarray(coords, dtype=np.float64)
    if ring.ndim != 2 or ring.shape[1] < 2:
        raise InputError(f"feature {feature_idx}: ring is not a coordinate list")
    ring = ring[:, :2]
    if len(ring) >= 2 and np.array_equal(ring[0], ring[-1]):
        ring = ring[:-1]
    if len(ring) < 3:
        raise InputError(f"feature {feature_idx}: ring has fewer than 3 vertices")
    return ring


def read_polygons(path) -> PolygonSet:
    """Read a GeoJSON FeatureCollection of class-tagged polygons.

    Polygon and MultiPolygon geometries are accepted (each MultiPolygon part
    becomes its own polygon record); anything else is rejected. The class tag
    is taken verbatim from properties["class"]. Ingestion is non-interpreting:
    overlaps and alignment are left to the rasterization stage.
    """
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise InputError(f"{path!s} is not valid JSON: {e}") from e
    if doc.get("type") != "FeatureCollection":
        raise InputError(f"{path!s} is not a GeoJSON FeatureCollection")

    polygons = []
    next_id = 0
    for idx, feature in enumerate(doc.get("features", [])):
        props = feature.get("properties") or {}
        if "class" not in props:
            raise InputError(f"feature {idx}: missing class tag in properties")
        tag = str(props["class"])
        geom = feature.get("geometry") or {}
        gtype = geom.get("type")
        if gtype == "Polygon":
            parts = [geom.get("coordinates", [])]
        elif gtype == "MultiPolygon":
            parts = geom.get("coordinates", [])
        else:
            raise InputError(
                f"feature {idx}: geometry type {gtype!r} is not a polygon")
        for part in parts:
            if not part:
                raise InputError(f"feature {idx}: polygon with no rings")
            rings = [_clean_ring(ring, idx) for ring in part]
            polygons.append(MapPolygon(rings=rings, tag=tag, pid=next_id))
            next_id += 1
    return PolygonSet(polygons)


def read_control_points(path) -> ControlPoints:
    """Read map<->pixel correspondences from CSV (map_x, map_y, pixel_col, pixel_row)."""
    required = ("map_x", "map_y", "pixel_col", "pixel_row")
    map_xy, pixel_xy = [], []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise InputError(f"{path!s} missing columns: {missing}")
        for row_idx, row in enumerate(reader):
            try:
                map_xy.append((float(row["map_x"]), float(row["map_y"])))
                pixel_xy.append((float(row["pixel_col"]), float(row["pixel_row"])))
            except (TypeError, ValueError):
                raise InputError(f"{path!s} row {row_idx}: non-numeric coordinate")
    if not map_xy:
        raise InputError(f"{path!s} holds no control points")
    return ControlPoints(np.array(map_xy), np.array(pixel_xy))


# ---------------------------------------------------------------------------
# label maps


def label_colors(n_labels: int, seed: int = 0) -> np.ndarray:
    """Deterministic seed-derived color table, one RGB triple per label."""
    rng = np.random.default_rng(seed)
    return rng.integers(32, 256, size=(max(n_labels, 1), 3), dtype=np.uint8)


def write_label_map(labels, raw_path, render_path=None, seed: int = 0):
    """Write a label map as raw little-endian uint32 plus an optional PNG render.

    The raw file is width*height values, row-major. The render colors each
    label with a seed-derived color, so equal (labels, seed) pairs produce
    byte-identical files.
    """
    arr = np.asarray(labels.labels)
    arr.astype("<u4").tofile(raw_path)
    if render_path is not None:
        colors = label_colors(int(arr.max()) + 1, seed=seed)
        Image.fromarray(colors[arr]).save(render_path, format="PNG")


def read_label_map(path, height: int, width: int):
    """Read a raw uint32 label map written by write_label_map."""
    from .hslic import LabelMap

    raw = np.fromfile(path, dtype="<u4")
    if raw.size != height * width:
        raise InputError(
            f"label file {path!s} holds {raw.size} values, expected {height * width}")
    return LabelMap(raw.reshape(height, width).astype(np.int64))


# ---------------------------------------------------------------------------
# proportion maps and endmembers


def write_proportions(proportions, header_path, data_path):
    """Write per-pixel proportions as planar float32 with a small text header."""
    data = np.asarray(proportions.data, dtype=np.float32)
    h, w, m = data.shape
    Path(header_path).write_text(
        f"height = {h}\nwidth = {w}\nplanes = {m}\ndtype = float32\n")
    # planar: each endmember plane contiguous, row-major within the plane
    data.transpose(2, 0, 1).astype("<f4").tofile(data_path)


def read_proportions(header_path, data_path):
    """Read a proportion map written by write_proportions."""
    from .spmlda import ProportionMap

    fields = {}
    for line in Path(header_path).read_text().splitlines():
        if "=" in line:
            key, _, value = line.partition("=")
            fields[key.strip()] = value.strip()
    try:
        h, w, m = int(fields["height"]), int(fields["width"]), int(fields["planes"])
    except (KeyError, ValueError):
        raise InputError(f"malformed proportion header {header_path!s}")
    raw = np.fromfile(data_path, dtype="<f4")
    if raw.size != h * w * m:
        raise InputError(
            f"proportion file {data_path!s} holds {raw.size} values, expected {h * w * m}")
    return ProportionMap(raw.reshape(m, h, w).transpose(1, 2, 0).astype(np.float64))


def write_endmembers(endmembers, path):
    """Write endmembers as CSV: tag, mean per band, variance per band."""
    if not endmembers:
        raise InputError("no endmembers to write")
    bands = endmembers[0].mu.size
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["tag"]
                        + [f"mu_{b}" for b in range(bands)]
                        + [f"sigma2_{b}" for b in range(bands)])
        for em in endmembers:
            writer.writerow([em.tag or ""]
                            + [repr(float(v)) for v in em.mu]
                            + [repr(float(v)) for v in em.sigma2])
