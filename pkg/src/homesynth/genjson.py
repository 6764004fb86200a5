"""Structured generation: county metadata + image text -> GeoJSON Feature.

The text backend is asked for a single GeoJSON Feature carrying the
home's geometry, five performance parameters, and a short energy-focused
inspection note. Model output is never trusted: ``validate_feature``
checks structure and ranges, and ``generate_feature`` re-prompts with
the full violation list until the output validates or retries run out.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Mapping

from . import geometry
from .backends import TextBackend
from .domain import ATTRIBUTE_ORDER, BuildingFeature, HomeRecord, ImageDescription, PerformanceParams
from .errors import GenerationError, InputError

FT2_TO_M2 = 0.09290304

PROMPT_HEADER = (
    "You are an expert building-energy analyst. Using the property records "
    "and image descriptions below, describe this home as a GeoJSON Feature."
)

PROMPT_INSTRUCTIONS = """Respond with a single GeoJSON Feature object and nothing else. The feature
must have "type": "Feature", a "geometry" of type "Polygon" whose single
ring lists [longitude, latitude] vertices and repeats the first vertex at
the end, and a "properties" object containing exactly these keys:
name, floor_area, building_type, inspection_note, hvac_heating_cop,
hvac_cooling_cop, wall_r_value, roof_r_value, air_change_rate.

"floor_area" is the living area in square feet. Estimate the five
performance parameters from the evidence: hvac_heating_cop (fractional
heating efficiency, 0.5 to 1.2), hvac_cooling_cop (1.0 to 6.0),
wall_r_value and roof_r_value (imperial R-values), and air_change_rate
(air changes per hour). Also write a short inspection note focused on
energy-related observations such as insulation, HVAC type/age, visible
windows, and any inferred upgrades, and place it in the
"inspection_note" property."""

REPROMPT_PREFIX = "Your previous output was invalid because:"


def _render_value(value: Any) -> str:
    if isinstance(value, float) and value.is_integer():
        return str(int(value))
    if isinstance(value, Mapping):
        return json.dumps(value, sort_keys=True)
    return str(value)


def build_generation_prompt(record: HomeRecord, desc: ImageDescription | None) -> str:
    """Assemble the full generation prompt for one home.

    Every county attribute appears in portal order, absent ones rendered
    as "key: unknown" so the model never has to guess what was asked.
    ``desc`` may be None for a metadata-only home; empty description
    sections render as "(none)".
    """
    lines = [PROMPT_HEADER, "", "PROPERTY RECORDS:"]
    if record.street_address:
        lines.append(f"street_address: {record.street_address}")
    for key in ATTRIBUTE_ORDER:
        if key in record.attributes:
            lines.append(f"{key}: {_render_value(record.attributes[key])}")
        else:
            lines.append(f"{key}: unknown")
    lines.append("")
    facade = desc.facade_text.strip() if desc else ""
    floorplan = desc.floorplan_text.strip() if desc else ""
    if facade:
        lines.append("FACADE DESCRIPTION:")
        lines.append(facade)
    else:
        lines.append("FACADE DESCRIPTION: (none)")
    lines.append("")
    if floorplan:
        lines.append("FLOOR PLAN DESCRIPTION:")
        lines.append(floorplan)
    else:
        lines.append("FLOOR PLAN DESCRIPTION: (none)")
    lines.append("")
    lines.append(PROMPT_INSTRUCTIONS)
    return "\n".join(lines)


@dataclass(frozen=True)
class ValidationResult:
    """Outcome of validating raw model output.

    Exactly one of ``feature``/``violations`` is meaningful: a feature
    with zero violations, or no feature with at least one. Warnings
    (clamps, implausible geometry) accompany either outcome.
    """

    feature: BuildingFeature | None
    violations: tuple[str, ...] = ()
    warnings: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return self.feature is not None


def _strip_fence(text: str) -> str:
    # tolerate one ```/```json fence pair around the object
    stripped = text.strip()
    if not stripped.startswith("```"):
        return stripped
    lines = stripped.splitlines()
    lines = lines[1:]
    if lines and lines[-1].strip() == "```":
        lines = lines[:-1]
    return "\n".join(lines).strip()


def validate_feature(raw: str, stories: float = 1.0) -> ValidationResult:
    """Validate raw model text as a building Feature; never raises on bad input.

    Out-of-range performance parameters are clamped into bounds and
    reported as warnings; structural problems are violations. A footprint
    whose projected area is not within a factor of 5 of the per-story
    floor area draws a plausibility warning.
    """
    violations: list[str] = []
    warnings: list[str] = []
    try:
        doc = json.loads(_strip_fence(raw))
    except (json.JSONDecodeError, TypeError) as exc:
        return ValidationResult(None, (f"unparseable JSON: {exc}",))
    if not isinstance(doc, Mapping):
        return ValidationResult(None, ("top-level value must be a JSON object",))

    if doc.get("type") != "Feature":
        violations.append('top-level "type" must be "Feature"')
    props = doc.get("properties")
    if not isinstance(props, Mapping):
        violations.append('missing member "properties" (must be an object)')
        props = {}
    geom = doc.get("geometry")
    ring: list[tuple[float, float]] = []
    if not isinstance(geom, Mapping):
        violations.append('missing member "geometry" (must be an object)')
    else:
        ring, geom_violations = _check_polygon(geom)
        violations.extend(geom_violations)

    for key in BuildingFeature.PROPERTY_KEYS:
        if key not in props:
            violations.append(f'missing property "{key}"')

    floor_area = props.get("floor_area")
    if "floor_area" in props:
        if not isinstance(floor_area, (int, float)) or isinstance(floor_area, bool) or not floor_area > 0:
            violations.append('property "floor_area" must be a number > 0')
    note = props.get("inspection_note")
    if "inspection_note" in props and (not isinstance(note, str) or not note.strip()):
        violations.append('property "inspection_note" must be a nonempty string')

    params = None
    param_values = {}
    for name in PerformanceParams.FIELDS:
        if name not in props:
            continue  # already reported as missing
        value = props[name]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            violations.append(f'property "{name}" must be a finite number')
        else:
            param_values[name] = float(value)
    if len(param_values) == len(PerformanceParams.FIELDS) and not violations:
        try:
            params = PerformanceParams(**param_values)
        except InputError as exc:
            violations.append(str(exc))
        else:
            for message in params.violations():
                warnings.append(f"clamped: {message}")
            params = params.clamped()

    if violations:
        return ValidationResult(None, tuple(violations), tuple(warnings))

    try:
        feature = BuildingFeature(
            name=str(props["name"]),
            floor_area=float(floor_area),
            building_type=str(props["building_type"]),
            inspection_note=str(note),
            footprint=tuple(ring),
            params=params,
        )
    except InputError as exc:
        return ValidationResult(None, (str(exc),), tuple(warnings))

    area_m2 = geometry.polygon_area_m2(feature.footprint)
    if area_m2 <= 0.0:
        return ValidationResult(None, ("footprint polygon has zero area",), tuple(warnings))
    per_story_m2 = feature.floor_area * FT2_TO_M2 / max(float(stories), 1.0)
    if not (per_story_m2 / 5.0 <= area_m2 <= per_story_m2 * 5.0):
        warnings.append(
            f"footprint area {area_m2:.1f} m2 is implausible for floor_area "
            f"{feature.floor_area:.0f} ft2 over {max(float(stories), 1.0):g} stories"
        )
    return ValidationResult(feature, (), tuple(warnings))


def _check_polygon(geom: Mapping[str, Any]) -> tuple[list[tuple[float, float]], list[str]]:
    violations: list[str] = []
    if geom.get("type") != "Polygon":
        violations.append('geometry "type" must be "Polygon"')
        return [], violations
    coords = geom.get("coordinates")
    if not isinstance(coords, list) or not coords or not isinstance(coords[0], list):
        violations.append('geometry "coordinates" must be a list containing one ring')
        return [], violations
    raw_ring = coords[0]
    ring: list[tuple[float, float]] = []
    for point in raw_ring:
        if (
            not isinstance(point, (list, tuple))
            or len(point) < 2
            or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in point[:2])
        ):
            violations.append("ring vertices must be [longitude, latitude] number pairs")
            return [], violations
        ring.append((float(point[0]), float(point[1])))
    if len(ring) < 4:
        violations.append("Polygon ring must have at least 4 points (closed)")
        return [], violations
    if ring[0] != ring[-1]:
        violations.append("Polygon ring must be closed (first point equals last)")
    if len(set(ring[:-1] if ring[0] == ring[-1] else ring)) < 3:
        violations.append("Polygon ring must have at least 3 distinct vertices")
    return ring, violations


@dataclass(frozen=True)
class GenerationOutcome:
    """A validated feature plus how hard it was to get."""

    feature: BuildingFeature
    attempts: int
    warnings: tuple[str, ...] = ()


def generate_feature(
    backend: TextBackend,
    prompt: str,
    max_retries: int = 3,
    stories: float = 1.0,
    temperature: float = 0.2,
    max_tokens: int = 1200,
) -> GenerationOutcome:
    """Generate until valid, re-prompting with the violation list.

    Each retry appends every violation string verbatim to the original
    prompt under a fixed "invalid because" banner, so the model sees
    exactly what to fix. Exhausting retries raises GenerationError with
    the final violation list and the attempt count.
    """
    if max_retries < 1:
        raise InputError("max_retries must be >= 1")
    violations: tuple[str, ...] = ()
    for attempt in range(1, max_retries + 1):
        if violations:
            feedback = "\n".join(f"- {v}" for v in violations)
            full_prompt = f"{prompt}\n\n{REPROMPT_PREFIX}\n{feedback}"
        else:
            full_prompt = prompt
        raw = backend.generate(full_prompt, temperature=temperature, max_tokens=max_tokens)
        result = validate_feature(raw, stories=stories)
        if result.ok:
            return GenerationOutcome(result.feature, attempt, result.warnings)
        violations = result.violations
    raise GenerationError(
        f"no valid feature after {max_retries} attempts",
        violations=violations,
        attempts=max_retries,
    )
