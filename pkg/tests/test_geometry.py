"""Equirectangular projection and polygon area/perimeter."""

from __future__ import annotations

import math

import pytest
from hypothesis import given, strategies as st

from homesynth import geometry
from homesynth.errors import InputError


def test_square_footprint_area_and_perimeter():
    ring = geometry.square_footprint(-75.30, 40.69, side_m=10.0)
    assert len(ring) == 4
    # small-footprint projection keeps the metric shape to ~0.1%
    assert geometry.polygon_area_m2(ring) == pytest.approx(100.0, rel=1e-3)
    assert geometry.polygon_perimeter_m(ring) == pytest.approx(40.0, rel=1e-3)


def test_perimeter_includes_closing_edge():
    # right triangle, legs 30 m and 40 m: closing hypotenuse is 50 m
    a = geometry.square_footprint(-75.30, 40.69, side_m=60.0)
    origin = a[0]
    dlon = a[1][0] - origin[0]  # 60 m of longitude at this latitude
    dlat = a[2][1] - a[1][1]  # 60 m of latitude
    tri = (
        origin,
        (origin[0] + dlon / 2.0, origin[1]),
        (origin[0], origin[1] + dlat * (40.0 / 60.0)),
    )
    assert geometry.polygon_perimeter_m(tri) == pytest.approx(120.0, rel=1e-3)
    assert geometry.polygon_area_m2(tri) == pytest.approx(600.0, rel=1e-3)


def test_vertex_order_does_not_change_area():
    ring = geometry.square_footprint(-75.30, 40.69, side_m=12.0)
    reversed_ring = tuple(reversed(ring))
    assert geometry.polygon_area_m2(reversed_ring) == pytest.approx(
        geometry.polygon_area_m2(ring), rel=1e-12
    )


def test_local_xy_is_centered():
    ring = geometry.square_footprint(-75.30, 40.69, side_m=10.0)
    xy = geometry.local_xy(ring)
    cx = sum(p[0] for p in xy) / len(xy)
    cy = sum(p[1] for p in xy) / len(xy)
    assert abs(cx) < 1e-9 and abs(cy) < 1e-9


def test_degenerate_ring_rejected():
    with pytest.raises(InputError):
        geometry.polygon_area_m2(((0.0, 0.0), (1.0, 1.0)))


@given(
    lon=st.floats(-179.0, 179.0),
    lat=st.floats(-60.0, 60.0),
    side=st.floats(1.0, 200.0),
)
def test_square_scales_quadratically(lon, lat, side):
    area = geometry.polygon_area_m2(geometry.square_footprint(lon, lat, side_m=side))
    assert math.isfinite(area)
    assert area == pytest.approx(side * side, rel=5e-3)
