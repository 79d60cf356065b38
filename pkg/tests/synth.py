"""Synthetic scene builders shared across the test suite."""

import json

import numpy as np

from hsseg.hsio import ControlPoints, HsiCube, MapPolygon, PolygonSet

QUADRANT_SPECTRA = np.array([
    [0.0, 0.0, 0.0],
    [10.0, 0.0, 0.0],
    [0.0, 10.0, 0.0],
    [0.0, 0.0, 10.0],
])


def quadrant_cube(size=24, noise=0.01, seed=42, bands=3):
    """Four constant quadrants with distinct spectra plus Gaussian noise."""
    spectra = QUADRANT_SPECTRA[:, :bands]
    half = size // 2
    data = np.zeros((size, size, bands))
    data[:half, :half] = spectra[0]
    data[:half, half:] = spectra[1]
    data[half:, :half] = spectra[2]
    data[half:, half:] = spectra[3]
    if noise:
        data += np.random.default_rng(seed).normal(0, noise, data.shape)
    return HsiCube(data)


def quadrant_truth(size=24):
    """Ground-truth quadrant labeling for quadrant_cube."""
    half = size // 2
    labels = np.zeros((size, size), dtype=np.int64)
    labels[:half, half:] = 1
    labels[half:, :half] = 2
    labels[half:, half:] = 3
    return labels


def two_region_cube(size=8, gap=1.0, noise=0.0, seed=0, bands=2):
    """Left/right constant halves `gap` apart, with an aligned superpixel map."""
    from hsseg.hslic import LabelMap

    data = np.zeros((size, size, bands))
    data[:, size // 2:, :] = gap
    if noise:
        data += np.random.default_rng(seed).normal(0, noise, data.shape)
    labels = np.zeros((size, size), dtype=np.int64)
    labels[:, size // 2:] = 1
    return HsiCube(data), LabelMap(labels)


def edge_polygon_set():
    """One 'building' rectangle straddling the upper quadrant boundary of a
    24x24 scene (map coordinates equal pixel coordinates)."""
    ring = np.array([[9.6, 1.6], [14.4, 1.6], [14.4, 4.4], [9.6, 4.4]])
    return PolygonSet([MapPolygon([ring], "building", 0)])


def identity_control_points(size=24):
    corners = np.array([[0.0, 0.0], [size - 1, 0.0], [0.0, size - 1],
                        [size - 1, size - 1]])
    return ControlPoints(corners, corners)


def write_scene(tmp_path, size=24, noise=0.01, seed=42, with_map=True):
    """Write a quadrant scene (cube + polygons + control points) for CLI runs."""
    from hsseg.hsio import write_cube

    cube = quadrant_cube(size=size, noise=noise, seed=seed)
    header = tmp_path / "scene.hdr"
    data = tmp_path / "scene"
    write_cube(cube, header, data)
    paths = {"header": header, "data": data}
    if with_map:
        geojson = {
            "type": "FeatureCollection",
            "features": [{
                "type": "Feature",
                "properties": {"class": "building"},
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [[[9.6, 1.6], [14.4, 1.6], [14.4, 4.4],
                                     [9.6, 4.4], [9.6, 1.6]]],
                },
            }],
        }
        polygons = tmp_path / "map.geojson"
        polygons.write_text(json.dumps(geojson))
        points = tmp_path / "points.csv"
        lines = ["map_x,map_y,pixel_col,pixel_row"]
        for x, y in [(0, 0), (size - 1, 0), (0, size - 1), (size - 1, size - 1)]:
            lines.append(f"{x},{y},{x},{y}")
        points.write_text("\n".join(lines) + "\n")
        paths["polygons"] = polygons
        paths["points"] = points
    return cube, paths
