"""Shared fixtures: synthetic images, a 5-home dataset, and test backends."""

from __future__ import annotations

import io
import json
from pathlib import Path

import pytest
from PIL import Image

from homesynth import geometry
from homesynth.backends import TextBackend, VisionBackend, _CallCounter
from homesynth.domain import BuildingFeature, PerformanceParams


def png_bytes(color=(180, 60, 60), size=(64, 48), mode: str = "RGB") -> bytes:
    """Deterministic PNG bytes for a solid-color image."""
    buf = io.BytesIO()
    Image.new(mode, size, color).save(buf, format="PNG")
    return buf.getvalue()


def make_feature(
    side_m: float = 10.0,
    floor_area: float = 1076.0,
    note: str = "Roof and insulation look serviceable.",
    params: PerformanceParams | None = None,
    center: tuple[float, float] = (-75.30, 40.69),
    name: str = "Test Home",
) -> BuildingFeature:
    """Square-footprint feature centered on a fixed suburban coordinate."""
    return BuildingFeature(
        name=name,
        floor_area=floor_area,
        building_type="Single family",
        inspection_note=note,
        footprint=geometry.square_footprint(*center, side_m=side_m),
        params=params,
    )


# the 5-home dataset exercised by ingestion and pipeline tests: one home
# lacks its floor plan, one has no images at all
FIXTURE_HOMES = {
    "H1": {
        "street_address": "12 Main St",
        "year_built": 1940,
        "total_square_feet_living_area": 2576,
        "number_of_stories": 2,
        "total_rooms": 8,
        "bedrooms": 4,
        "full_baths": 2,
        "heating_fuel_type": "Gas",
        "heating_system_type": "Forced air",
        "exterior_wall_material": "Vinyl siding",
        "physical_condition": "Average",
        "sketch_data": {"First Floor": 1288, "Second Floor": 1288},
        "_photo": (180, 60, 60),
        "_floorplan": (240, 240, 240),
    },
    "H2": {
        "street_address": "14 Main St",
        "year_built": 1972,
        "total_square_feet_living_area": 1450,
        "number_of_stories": 1,
        "bedrooms": 3,
        "heating_fuel_type": "Oil",
        "physical_condition": "Fair",
        "_photo": (70, 110, 170),
    },
    "H3": {
        # metadata only: no images were available for this parcel
        "street_address": "16 Main St",
        "year_built": 1988,
        "total_square_feet_living_area": 1800,
        "number_of_stories": 2,
        "grade": "B",
        "basement": "Full",
    },
    "H4": {
        "street_address": "18 Main St",
        "year_built": 2004,
        "remodeled_year": 2019,
        "total_square_feet_living_area": 2100,
        "number_of_stories": 2,
        "cdu": "Good",
        "heat_air_cond": "Central",
        "_photo": (90, 160, 90),
        "_floorplan": (250, 250, 245),
    },
    "H5": {
        "street_address": "20 Main St",
        "year_built": 1955,
        "total_square_feet_living_area": 980,
        "number_of_stories": 1,
        "attic_code": "Unfinished",
        "fireplace_openings": 1,
        "_photo": (150, 120, 80),
        "_floorplan": (235, 235, 235),
    },
}


def build_fixture_dataset(root: Path) -> Path:
    """Materialize the 5-home dataset under ``root``; returns the directory."""
    root.mkdir(parents=True, exist_ok=True)
    for home_id, fields in FIXTURE_HOMES.items():
        doc = {"id": home_id}
        for key, value in fields.items():
            if key.startswith("_"):
                continue
            doc[key] = value
        if "_photo" in fields:
            (root / f"{home_id}_photo.png").write_bytes(png_bytes(fields["_photo"]))
            doc["photo"] = f"{home_id}_photo.png"
        if "_floorplan" in fields:
            (root / f"{home_id}_floorplan.png").write_bytes(png_bytes(fields["_floorplan"]))
            doc["floorplan"] = f"{home_id}_floorplan.png"
        (root / f"{home_id}.json").write_text(json.dumps(doc, indent=2), encoding="utf-8")
    return root


@pytest.fixture
def dataset_dir(tmp_path) -> Path:
    return build_fixture_dataset(tmp_path / "dataset")


class ConstantVisionBackend(_CallCounter, VisionBackend):
    """Ignores the image entirely; every call returns the same text."""

    def __init__(self, text: str = "a house"):
        super().__init__()
        self.model_id = "constant-vision"
        self.max_retries = 3
        self.retry_delay = 0.0
        self.text = text

    def describe(self, image: bytes, prompt: str) -> str:
        self._count_call()
        return self.text


class NoteKeyedTextBackend(_CallCounter, TextBackend):
    """Returns a fixed score per note substring; for labeler experiments.

    ``scores`` maps a note fragment to the decimal the backend should
    answer with whenever the prompt contains that fragment.
    """

    def __init__(self, scores: dict[str, float], default: float = 0.5):
        super().__init__()
        self.model_id = "note-keyed"
        self.max_retries = 3
        self.retry_delay = 0.0
        self.scores = dict(scores)
        self.default = default

    def generate(self, prompt: str, temperature: float = 0.2, max_tokens: int = 1200) -> str:
        self._count_call()
        for fragment, score in self.scores.items():
            if fragment in prompt:
                return f"{score}"
        return f"{self.default}"
