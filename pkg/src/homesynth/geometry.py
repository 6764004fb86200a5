"""Planar geometry for building footprints given as (lon, lat) rings.

Footprints are a few tens of meters across, so an equirectangular
projection about the ring centroid is accurate to well below the
tolerances used anywhere in the pipeline.
"""

from __future__ import annotations

import math
from typing import Sequence

from .errors import InputError

EARTH_RADIUS_M = 6_371_000.0

Ring = Sequence[tuple[float, float]]


def local_xy(footprint: Ring) -> list[tuple[float, float]]:
    """Project (lon, lat) vertices to meters about the ring centroid."""
    if len(footprint) < 3:
        raise InputError("footprint needs at least 3 vertices")
    lon0 = sum(p[0] for p in footprint) / len(footprint)
    lat0 = sum(p[1] for p in footprint) / len(footprint)
    coslat = math.cos(math.radians(lat0))
    return [
        (
            EARTH_RADIUS_M * math.radians(lon - lon0) * coslat,
            EARTH_RADIUS_M * math.radians(lat - lat0),
        )
        for lon, lat in footprint
    ]


def polygon_area_m2(footprint: Ring) -> float:
    """Shoelace area of the projected footprint, in square meters."""
    xy = local_xy(footprint)
    acc = 0.0
    for (x1, y1), (x2, y2) in zip(xy, xy[1:] + xy[:1]):
        acc += x1 * y2 - x2 * y1
    return abs(acc) / 2.0


def polygon_perimeter_m(footprint: Ring) -> float:
    """Perimeter of the projected footprint, closing edge included."""
    xy = local_xy(footprint)
    return sum(
        math.hypot(x2 - x1, y2 - y1)
        for (x1, y1), (x2, y2) in zip(xy, xy[1:] + xy[:1])
    )


def square_footprint(
    center_lon: float, center_lat: float, side_m: float
) -> tuple[tuple[float, float], ...]:
    """Axis-aligned square of the given side length, centered on (lon, lat).

    Inverse of :func:`local_xy` for a square, handy for fixtures and the
    built-in experiment building.
    """
    if side_m <= 0:
        raise InputError("side_m must be positive")
    dlat = math.degrees(side_m / EARTH_RADIUS_M) / 2.0
    dlon = math.degrees(
        side_m / (EARTH_RADIUS_M * math.cos(math.radians(center_lat)))
    ) / 2.0
    return (
        (center_lon - dlon, center_lat - dlat),
        (center_lon + dlon, center_lat - dlat),
        (center_lon + dlon, center_lat + dlat),
        (center_lon - dlon, center_lat + dlat),
    )
