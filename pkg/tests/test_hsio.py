"""Cube, polygon, control-point and label-map round trips."""

import numpy as np
import pytest

from hsseg.errors import InputError
from hsseg.hsio import (HsiCube, PipelineConfig, label_colors,
                        read_control_points, read_cube, read_label_map,
                        read_polygons, read_proportions, write_cube,
                        write_label_map, write_proportions)
from hsseg.hslic import LabelMap
from hsseg.spmlda import ProportionMap


def _write_pair(tmp_path, values, lines, samples, bands, interleave, dtype_code):
    header = tmp_path / "cube.hdr"
    data = tmp_path / "cube.dat"
    header.write_text(
        "ENVI\n"
        f"samples = {samples}\nlines = {lines}\nbands = {bands}\n"
        f"data type = {dtype_code}\ninterleave = {interleave}\nbyte order = 0\n")
    np.asarray(values, dtype={4: "<f4", 5: "<f8"}[dtype_code]).tofile(data)
    return header, data


def test_bsq_identity_layout(tmp_path):
    header, data = _write_pair(tmp_path, [1, 2, 3, 4], 2, 2, 1, "bsq", 5)
    cube = read_cube(header, data)
    assert cube.data[0, 0, 0] == 1
    assert cube.data[0, 1, 0] == 2
    assert cube.data[1, 0, 0] == 3
    assert cube.data[1, 1, 0] == 4


def test_bip_degenerate_single_band_matches_bsq(tmp_path):
    h1, d1 = _write_pair(tmp_path, [1, 2, 3, 4], 2, 2, 1, "bsq", 5)
    bsq = read_cube(h1, d1)
    h2, d2 = _write_pair(tmp_path, [1, 2, 3, 4], 2, 2, 1, "bip", 5)
    bip = read_cube(h2, d2)
    assert np.array_equal(bsq.data, bip.data)


def test_bil_layout_hand_computed(tmp_path):
    # 2 rows x 1 col x 2 bands: row-interleaved puts both bands of a row together
    header, data = _write_pair(tmp_path, [10, 20, 30, 40], 2, 1, 2, "bil", 5)
    cube = read_cube(header, data)
    assert cube.data[0, 0, 0] == 10
    assert cube.data[0, 0, 1] == 20
    assert cube.data[1, 0, 0] == 30
    assert cube.data[1, 0, 1] == 40


def test_interleave_canonicalization_equal(tmp_path):
    rng = np.random.default_rng(5)
    cube = HsiCube(rng.random((4, 5, 3)))
    loaded = []
    for interleave in ("bsq", "bil", "bip"):
        header = tmp_path / f"{interleave}.hdr"
        data = tmp_path / f"{interleave}.bin"
        write_cube(cube, header, data, interleave=interleave)
        loaded.append(read_cube(header, data).data)
    assert np.array_equal(loaded[0], loaded[1])
    assert np.array_equal(loaded[0], loaded[2])


def test_cube_round_trip_exact(tmp_path):
    rng = np.random.default_rng(11)
    cube = HsiCube(rng.standard_normal((6, 7, 4)), wavelengths=np.arange(4) + 400.0)
    write_cube(cube, tmp_path / "c.hdr", tmp_path / "c.bin", interleave="bil")
    back = read_cube(tmp_path / "c.hdr", tmp_path / "c.bin")
    assert np.array_equal(back.data, cube.data)
    assert np.array_equal(back.wavelengths, cube.wavelengths)


def test_size_mismatch_rejected(tmp_path):
    header, data = _write_pair(tmp_path, [1, 2, 3], 2, 2, 1, "bsq", 5)
    with pytest.raises(InputError, match="holds 3"):
        read_cube(header, data)


def test_non_finite_named_by_index(tmp_path):
    values = np.ones((2, 2, 1))
    values[1, 0, 0] = np.nan
    header, data = _write_pair(tmp_path, values.transpose(2, 0, 1).ravel(), 2, 2, 1, "bsq", 5)
    with pytest.raises(InputError, match=r"row=1, col=0, band=0"):
        read_cube(header, data)


def test_missing_header_key(tmp_path):
    header = tmp_path / "bad.hdr"
    header.write_text("ENVI\nsamples = 2\nbands = 1\ninterleave = bsq\ndata type = 5\n")
    with pytest.raises(InputError, match="lines"):
        read_cube(header, tmp_path / "none.bin")


# --- polygons


def _geojson(tmp_path, features):
    path = tmp_path / "polys.geojson"
    path.write_text('{"type": "FeatureCollection", "features": ' +
                    __import__("json").dumps(features) + "}")
    return path


def _square_feature(tag="building", x0=0, y0=0, side=2):
    return {
        "type": "Feature",
        "properties": {"class": tag},
        "geometry": {"type": "Polygon", "coordinates": [[
            [x0, y0], [x0 + side, y0], [x0 + side, y0 + side], [x0, y0 + side],
            [x0, y0],
        ]]},
    }


def test_square_building_polygon(tmp_path):
    ps = read_polygons(_geojson(tmp_path, [_square_feature()]))
    assert len(ps) == 1
    poly = ps.polygons[0]
    assert poly.tag == "building"
    assert len(poly.rings[0]) == 4  # closing vertex dropped


def test_empty_collection_is_valid(tmp_path):
    ps = read_polygons(_geojson(tmp_path, []))
    assert len(ps) == 0


def test_overlapping_polygons_both_retained(tmp_path):
    ps = read_polygons(_geojson(tmp_path, [
        _square_feature("building", 0, 0, 3),
        _square_feature("road", 1, 1, 3),
    ]))
    assert len(ps) == 2
    assert [p.pid for p in ps] == [0, 1]


def test_short_ring_rejected_with_index(tmp_path):
    bad = _square_feature()
    bad["geometry"]["coordinates"] = [[[0, 0], [1, 1], [0, 0]]]
    with pytest.raises(InputError, match="feature 1"):
        read_polygons(_geojson(tmp_path, [_square_feature(), bad]))


def test_missing_class_tag_rejected(tmp_path):
    bad = _square_feature()
    del bad["properties"]["class"]
    with pytest.raises(InputError, match="feature 0"):
        read_polygons(_geojson(tmp_path, [bad]))


def test_line_feature_rejected(tmp_path):
    line = {
        "type": "Feature",
        "properties": {"class": "road"},
        "geometry": {"type": "LineString", "coordinates": [[0, 0], [5, 5]]},
    }
    with pytest.raises(InputError, match="LineString"):
        read_polygons(_geojson(tmp_path, [line]))


def test_multipolygon_split_into_parts(tmp_path):
    multi = {
        "type": "Feature",
        "properties": {"class": "building"},
        "geometry": {"type": "MultiPolygon", "coordinates": [
            [[[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]]],
            [[[5, 5], [6, 5], [6, 6], [5, 6], [5, 5]]],
        ]},
    }
    ps = read_polygons(_geojson(tmp_path, [multi]))
    assert len(ps) == 2
    assert {p.tag for p in ps} == {"building"}
    assert [p.pid for p in ps] == [0, 1]


# --- control points


def test_control_points_csv(tmp_path):
    path = tmp_path / "pts.csv"
    path.write_text("map_x,map_y,pixel_col,pixel_row\n1.5,2.5,10,20\n3,4,30,40\n0,0,0,0\n")
    pts = read_control_points(path)
    assert len(pts) == 3
    assert pts.map_xy[0, 0] == 1.5
    assert pts.pixel_xy[1, 1] == 40


def test_control_points_missing_column(tmp_path):
    path = tmp_path / "pts.csv"
    path.write_text("map_x,map_y,pixel_col\n1,2,3\n")
    with pytest.raises(InputError, match="pixel_row"):
        read_control_points(path)


# --- label maps


def test_label_map_single_pixel_bytes(tmp_path):
    write_label_map(LabelMap(np.zeros((1, 1), dtype=np.int64)), tmp_path / "l.u32")
    assert (tmp_path / "l.u32").read_bytes() == b"\x00\x00\x00\x00"


def test_label_map_row_major_bytes(tmp_path):
    write_label_map(LabelMap(np.array([[0, 0], [1, 1]])), tmp_path / "l.u32")
    raw = np.frombuffer((tmp_path / "l.u32").read_bytes(), dtype="<u4")
    assert list(raw) == [0, 0, 1, 1]


def test_render_deterministic(tmp_path):
    labels = LabelMap(np.arange(12).reshape(3, 4) % 5)
    write_label_map(labels, tmp_path / "a.u32", tmp_path / "a.png", seed=9)
    write_label_map(labels, tmp_path / "b.u32", tmp_path / "b.png", seed=9)
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()
    assert np.array_equal(label_colors(5, seed=9), label_colors(5, seed=9))


def test_label_map_round_trip(tmp_path):
    labels = LabelMap(np.random.default_rng(3).integers(0, 7, (5, 6)))
    write_label_map(labels, tmp_path / "l.u32")
    back = read_label_map(tmp_path / "l.u32", 5, 6)
    assert np.array_equal(back.labels, labels.labels)


# --- proportions


def test_proportions_round_trip(tmp_path):
    rng = np.random.default_rng(8)
    raw = rng.random((4, 5, 3)).astype(np.float32)
    raw /= raw.sum(axis=2, keepdims=True)
    prop = ProportionMap(raw.astype(np.float64))
    write_proportions(prop, tmp_path / "p.hdr", tmp_path / "p.bin")
    back = read_proportions(tmp_path / "p.hdr", tmp_path / "p.bin")
    assert back.data.shape == (4, 5, 3)
    assert np.abs(back.data - prop.data).max() < 1e-7  # float32 storage


# --- config


def test_config_validation():
    with pytest.raises(InputError):
        PipelineConfig(K=0).validate()
    with pytest.raises(InputError):
        PipelineConfig(epsilon=1.5).validate()
    with pytest.raises(InputError):
        PipelineConfig(T=10, burn_in=10).validate()
    assert PipelineConfig().validate() is not None


def test_config_from_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text('{"K": 16, "m": 1.0, "M": 4, "T": 25, "seed": 3}')
    cfg = PipelineConfig.from_file(path)
    assert cfg.K == 16 and cfg.T == 25 and cfg.seed == 3
    path.write_text('{"K": 16, "bogus": 1}')
    with pytest.raises(InputError, match="bogus"):
        PipelineConfig.from_file(path)
