"""Prompt assembly, feature validation, and the generate-validate-re-prompt loop."""

from __future__ import annotations

import json

import pytest

from homesynth import geometry
from homesynth.backends import ScriptedTextBackend
from homesynth.domain import BuildingFeature, HomeRecord, ImageDescription, PerformanceParams
from homesynth.errors import GenerationError, InputError
from homesynth.genjson import (
    REPROMPT_PREFIX,
    build_generation_prompt,
    generate_feature,
    validate_feature,
)


def triangle_ring(side_m: float = 16.0) -> list[list[float]]:
    """Closed triangular ring (half of a square footprint), as raw JSON lists."""
    square = geometry.square_footprint(-75.30, 40.69, side_m=side_m)
    tri = [list(square[0]), list(square[1]), list(square[2]), list(square[0])]
    return tri


def reference_feature_doc() -> dict:
    """A well-formed Feature with the documented nine properties."""
    return {
        "type": "Feature",
        "properties": {
            "name": "Generated Home",
            "floor_area": 2576,
            "building_type": "Single family",
            "inspection_note": "The roof is in good condition. Insulation appears original.",
            "hvac_heating_cop": 0.85,
            "hvac_cooling_cop": 3.0,
            "wall_r_value": 13,
            "roof_r_value": 30,
            "air_change_rate": 0.35,
        },
        "geometry": {"type": "Polygon", "coordinates": [triangle_ring()]},
    }


H1_RECORD = HomeRecord(
    id="H1",
    street_address="12 Main St",
    attributes={
        "year_built": 1940,
        "total_square_feet_living_area": 2576,
        "number_of_stories": 2.0,
        "heating_fuel_type": "Gas",
        "sketch_data": {"First Floor": 1288, "Second Floor": 1288},
    },
)


class TestBuildGenerationPrompt:
    def test_known_attributes_rendered(self):
        prompt = build_generation_prompt(H1_RECORD, None)
        assert "street_address: 12 Main St" in prompt
        assert "total_square_feet_living_area: 2576" in prompt
        assert "year_built: 1940" in prompt
        # integral floats print as integers
        assert "number_of_stories: 2\n" in prompt

    def test_absent_attributes_say_unknown(self):
        prompt = build_generation_prompt(H1_RECORD, None)
        assert "attic_code: unknown" in prompt
        assert "condo_level: unknown" in prompt

    def test_sketch_data_rendered_inline(self):
        prompt = build_generation_prompt(H1_RECORD, None)
        assert '"First Floor": 1288' in prompt

    def test_descriptions_included_verbatim(self):
        desc = ImageDescription(facade_text="Brick facade, new shingles.", floorplan_text="Two floors.")
        prompt = build_generation_prompt(H1_RECORD, desc)
        assert "FACADE DESCRIPTION:\nBrick facade, new shingles." in prompt
        assert "FLOOR PLAN DESCRIPTION:\nTwo floors." in prompt

    def test_missing_descriptions_marked_none(self):
        prompt = build_generation_prompt(H1_RECORD, None)
        assert "FACADE DESCRIPTION: (none)" in prompt
        assert "FLOOR PLAN DESCRIPTION: (none)" in prompt
        partial = build_generation_prompt(H1_RECORD, ImageDescription(facade_text="Facade."))
        assert "FLOOR PLAN DESCRIPTION: (none)" in partial

    def test_instructions_cover_output_contract(self):
        prompt = build_generation_prompt(H1_RECORD, None)
        assert "GeoJSON" in prompt
        for key in BuildingFeature.PROPERTY_KEYS:
            assert key in prompt
        assert "insulation" in prompt
        assert "inspection_note" in prompt


class TestValidateFeature:
    def test_reference_document_validates(self):
        result = validate_feature(json.dumps(reference_feature_doc()), stories=2.0)
        assert result.ok
        assert result.violations == ()
        feature = result.feature
        assert feature.name == "Generated Home"
        assert feature.floor_area == 2576.0
        assert feature.building_type == "Single family"
        assert feature.params == PerformanceParams(0.85, 3.0, 13.0, 30.0, 0.35)
        # stored footprint is the open ring
        assert len(feature.footprint) == 3

    def test_code_fence_tolerated(self):
        raw = "```json\n" + json.dumps(reference_feature_doc()) + "\n```"
        assert validate_feature(raw, stories=2.0).ok

    def test_unparseable_json(self):
        result = validate_feature("{")
        assert not result.ok
        assert result.violations[0].startswith("unparseable JSON")

    def test_non_object_top_level(self):
        result = validate_feature("[1, 2]")
        assert result.violations == ("top-level value must be a JSON object",)

    def test_missing_geometry_reported(self):
        doc = reference_feature_doc()
        del doc["geometry"]
        result = validate_feature(json.dumps(doc))
        assert 'missing member "geometry" (must be an object)' in result.violations

    def test_missing_property_reported_by_name(self):
        doc = reference_feature_doc()
        del doc["properties"]["air_change_rate"]
        result = validate_feature(json.dumps(doc))
        assert 'missing property "air_change_rate"' in result.violations

    def test_wrong_type_member(self):
        doc = reference_feature_doc()
        doc["type"] = "FeatureCollection"
        result = validate_feature(json.dumps(doc))
        assert 'top-level "type" must be "Feature"' in result.violations

    def test_unclosed_ring_rejected(self):
        doc = reference_feature_doc()
        doc["geometry"]["coordinates"][0] = doc["geometry"]["coordinates"][0][:-1] + [[0.0, 1.0]]
        result = validate_feature(json.dumps(doc))
        assert any("closed" in v for v in result.violations)

    def test_out_of_range_params_clamped_with_warning(self):
        doc = reference_feature_doc()
        doc["properties"]["hvac_heating_cop"] = 2.0
        result = validate_feature(json.dumps(doc), stories=2.0)
        assert result.ok
        assert result.feature.params.hvac_heating_cop == 1.2
        assert any(w.startswith("clamped: hvac_heating_cop") for w in result.warnings)

    def test_zero_area_ring_rejected(self):
        doc = reference_feature_doc()
        doc["geometry"]["coordinates"] = [
            [[-75.30, 40.69], [-75.2999, 40.69], [-75.2998, 40.69], [-75.30, 40.69]]
        ]
        result = validate_feature(json.dumps(doc))
        assert "footprint polygon has zero area" in result.violations

    def test_implausible_footprint_warns_but_passes(self):
        doc = reference_feature_doc()
        doc["geometry"]["coordinates"] = [triangle_ring(side_m=1.0)]  # ~0.5 m2
        result = validate_feature(json.dumps(doc), stories=2.0)
        assert result.ok
        assert any("implausible" in w for w in result.warnings)

    def test_validation_is_deterministic(self):
        raw = json.dumps(reference_feature_doc())
        a = validate_feature(raw, stories=2.0)
        b = validate_feature(raw, stories=2.0)
        assert a == b


class TestGenerateFeature:
    def test_first_valid_attempt_passes_prompt_unchanged(self):
        backend = ScriptedTextBackend([json.dumps(reference_feature_doc())])
        outcome = generate_feature(backend, "PROMPT", stories=2.0)
        assert outcome.attempts == 1
        assert backend.received_prompts == ["PROMPT"]

    def test_reprompt_carries_violations_verbatim(self):
        bad = reference_feature_doc()
        del bad["properties"]["wall_r_value"]
        backend = ScriptedTextBackend([json.dumps(bad), json.dumps(reference_feature_doc())])
        outcome = generate_feature(backend, "PROMPT", stories=2.0)
        assert outcome.attempts == 2
        assert backend.calls == 2
        retry_prompt = backend.received_prompts[1]
        assert retry_prompt.startswith("PROMPT\n\n" + REPROMPT_PREFIX)
        assert '- missing property "wall_r_value"' in retry_prompt

    def test_exhaustion_raises_with_violations_and_attempts(self):
        backend = ScriptedTextBackend(["not json at all"])
        with pytest.raises(GenerationError) as err:
            generate_feature(backend, "PROMPT", max_retries=3)
        assert err.value.attempts == 3
        assert backend.calls == 3
        assert err.value.violations
        assert err.value.violations[0].startswith("unparseable JSON")

    def test_warnings_surface_on_outcome(self):
        doc = reference_feature_doc()
        doc["properties"]["air_change_rate"] = 9.0
        backend = ScriptedTextBackend([json.dumps(doc)])
        outcome = generate_feature(backend, "PROMPT", stories=2.0)
        assert outcome.feature.params.air_change_rate == 5.0
        assert any(w.startswith("clamped:") for w in outcome.warnings)

    def test_zero_retries_rejected(self):
        backend = ScriptedTextBackend(["x"])
        with pytest.raises(InputError):
            generate_feature(backend, "PROMPT", max_retries=0)
