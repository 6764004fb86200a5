"""Shared data model for the pipeline.

Every stage communicates through the frozen dataclasses defined here.
All values are immutable after construction and safe to share across
threads without locking.

Unit conventions: floor and segment areas are ft² as delivered by the
county assessor; R-values are imperial (ft²·°F·hr/Btu); footprints are
(longitude, latitude) in degrees. SI conversions happen inside the
simulator, never in the data model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .errors import InputError

# County assessor attribute keys, in portal display order. Snake-case
# forms double as the on-disk JSON keys.
NUMERIC_ATTRIBUTES = (
    "year_built",
    "remodeled_year",
    "total_square_feet_living_area",
    "number_of_stories",
    "total_rooms",
    "bedrooms",
    "full_baths",
    "half_baths",
    "additional_fixtures",
    "total_fixtures",
    "unfinished_area",
    "rec_room_area",
    "finished_basement_area",
    "fireplace_openings",
    "fireplace_stacks",
    "prefab_fireplaces",
    "basement_garage_cars",
    "condo_level",
)

STRING_ATTRIBUTES = (
    "land_use_code",
    "grade",
    "cdu",
    "building_style",
    "heat_air_cond",
    "heating_fuel_type",
    "heating_system_type",
    "attic_code",
    "condo_townhouse_type",
    "basement",
    "exterior_wall_material",
    "physical_condition",
)

DICT_ATTRIBUTES = ("sketch_data",)

# Full portal ordering, used verbatim when rendering prompts
ATTRIBUTE_ORDER = (
    "year_built",
    "remodeled_year",
    "land_use_code",
    "total_square_feet_living_area",
    "number_of_stories",
    "grade",
    "cdu",
    "building_style",
    "total_rooms",
    "bedrooms",
    "full_baths",
    "half_baths",
    "additional_fixtures",
    "total_fixtures",
    "heat_air_cond",
    "heating_fuel_type",
    "heating_system_type",
    "attic_code",
    "unfinished_area",
    "rec_room_area",
    "finished_basement_area",
    "fireplace_openings",
    "fireplace_stacks",
    "prefab_fireplaces",
    "basement_garage_cars",
    "condo_level",
    "condo_townhouse_type",
    "basement",
    "exterior_wall_material",
    "physical_condition",
    "sketch_data",
)

KNOWN_ATTRIBUTES = frozenset(ATTRIBUTE_ORDER)

assert KNOWN_ATTRIBUTES == set(NUMERIC_ATTRIBUTES) | set(STRING_ATTRIBUTES) | set(DICT_ATTRIBUTES)


def _validate_attributes(attributes: Mapping[str, Any], context: str) -> dict[str, Any]:
    """Check types and ranges; absent keys stay absent, never defaulted."""
    clean: dict[str, Any] = {}
    for key, value in attributes.items():
        if key not in KNOWN_ATTRIBUTES:
            raise InputError(f"{context}: unknown attribute {key!r}")
        if value is None:
            continue  # null means absent on disk
        if key in NUMERIC_ATTRIBUTES:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise InputError(f"{context}: attribute {key!r} must be numeric, got {value!r}")
            if not math.isfinite(value) or value < 0:
                raise InputError(f"{context}: attribute {key!r} must be finite and >= 0, got {value!r}")
        elif key in STRING_ATTRIBUTES:
            if not isinstance(value, str):
                raise InputError(f"{context}: attribute {key!r} must be a string, got {value!r}")
        else:  # sketch_data
            if not isinstance(value, Mapping):
                raise InputError(f"{context}: attribute {key!r} must be an object, got {value!r}")
            for seg, area in value.items():
                if not isinstance(seg, str):
                    raise InputError(f"{context}: sketch_data segment names must be strings")
                if isinstance(area, bool) or not isinstance(area, (int, float)):
                    raise InputError(f"{context}: sketch_data area for {seg!r} must be numeric")
                if not math.isfinite(area) or area < 0:
                    raise InputError(f"{context}: sketch_data area for {seg!r} must be finite and >= 0")
            value = dict(value)
        clean[key] = value
    return clean


@dataclass(frozen=True)
class HomeRecord:
    """One home's county assessor data plus optional image files.

    ``attributes`` holds only the keys the source actually provided;
    a missing attribute means the portal had no value, which is distinct
    from zero.
    """

    id: str
    street_address: str
    attributes: Mapping[str, Any] = field(default_factory=dict)
    photo_path: Path | None = None
    floorplan_path: Path | None = None

    def __post_init__(self):
        if not self.id or not self.id.strip():
            raise InputError("HomeRecord.id must be nonempty")
        object.__setattr__(self, "attributes", _validate_attributes(self.attributes, f"home {self.id}"))
        for name in ("photo_path", "floorplan_path"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, Path(value))

    def attribute(self, key: str, default: Any = None) -> Any:
        if key not in KNOWN_ATTRIBUTES:
            raise InputError(f"unknown attribute {key!r}")
        return self.attributes.get(key, default)

    def to_dict(self, base_dir: Path | None = None) -> dict[str, Any]:
        """On-disk JSON form: id, street_address, flat attribute keys, image paths.

        Image paths are written relative to ``base_dir`` when given so a
        dataset directory can be relocated wholesale.
        """

        def path_str(p: Path | None) -> str | None:
            if p is None:
                return None
            if base_dir is not None:
                try:
                    return str(p.relative_to(base_dir))
                except ValueError:
                    return str(p)
            return str(p)

        doc: dict[str, Any] = {"id": self.id, "street_address": self.street_address}
        for key in ATTRIBUTE_ORDER:
            if key in self.attributes:
                doc[key] = self.attributes[key]
        if self.photo_path is not None:
            doc["photo"] = path_str(self.photo_path)
        if self.floorplan_path is not None:
            doc["floorplan"] = path_str(self.floorplan_path)
        return doc

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any], base_dir: Path | None = None, fallback_id: str | None = None) -> HomeRecord:
        if not isinstance(doc, Mapping):
            raise InputError("home record document must be a JSON object")
        doc = dict(doc)
        raw_id = doc.pop("id", None)
        if raw_id is None:
            raw_id = fallback_id
        elif fallback_id is not None and raw_id != fallback_id:
            raise InputError(f"record id {raw_id!r} does not match file name {fallback_id!r}")
        if not isinstance(raw_id, str) or not raw_id.strip():
            raise InputError("home record has no usable id")
        street = doc.pop("street_address", "")
        if not isinstance(street, str):
            raise InputError(f"home {raw_id}: street_address must be a string")

        def resolve(key: str) -> Path | None:
            raw = doc.pop(key, None)
            if raw is None:
                return None
            if not isinstance(raw, str) or not raw:
                raise InputError(f"home {raw_id}: {key} must be a nonempty path string")
            p = Path(raw)
            if base_dir is not None and not p.is_absolute():
                p = base_dir / p
            return p

        photo = resolve("photo")
        floorplan = resolve("floorplan")
        return cls(
            id=raw_id,
            street_address=street,
            attributes=doc,
            photo_path=photo,
            floorplan_path=floorplan,
        )


@dataclass(frozen=True)
class ImageDescription:
    """Vision-model text for a home's facade photo and floor plan.

    A home with only one image carries an empty string for the other
    slot; a home with neither image never gets an ImageDescription at
    all (downstream stages accept its absence).
    """

    facade_text: str = ""
    floorplan_text: str = ""
    backend_id: str = ""

    def __post_init__(self):
        if not self.facade_text.strip() and not self.floorplan_text.strip():
            raise InputError("ImageDescription needs at least one nonempty text")

    def to_dict(self) -> dict[str, str]:
        return {
            "facade_text": self.facade_text,
            "floorplan_text": self.floorplan_text,
            "backend_id": self.backend_id,
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> ImageDescription:
        return cls(
            facade_text=str(doc.get("facade_text", "")),
            floorplan_text=str(doc.get("floorplan_text", "")),
            backend_id=str(doc.get("backend_id", "")),
        )


@dataclass(frozen=True)
class PerformanceParams:
    """The five estimated performance parameters for one home.

    Heating efficiency is a fractional COP (a gas furnace tops out near
    1); cooling COP is the usual vapor-compression range. R-values stay
    imperial. ``air_change_rate`` is ACH.

    Construction only enforces presence and finiteness; range policy is
    applied where values enter the system (``violations`` for reporting,
    ``clamped`` for repair) so that deliberately out-of-range study
    configurations remain expressible.
    """

    hvac_heating_cop: float
    hvac_cooling_cop: float
    wall_r_value: float
    roof_r_value: float
    air_change_rate: float

    FIELDS = ("hvac_heating_cop", "hvac_cooling_cop", "wall_r_value", "roof_r_value", "air_change_rate")

    # closed plausibility intervals bracketing observed assessor stock
    BOUNDS = {
        "hvac_heating_cop": (0.5, 1.2),
        "hvac_cooling_cop": (1.0, 6.0),
        "wall_r_value": (1.0, 60.0),
        "roof_r_value": (1.0, 80.0),
        "air_change_rate": (0.05, 5.0),
    }

    def __post_init__(self):
        for name in self.FIELDS:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise InputError(f"PerformanceParams.{name} must be numeric, got {value!r}")
            if not math.isfinite(value):
                raise InputError(f"PerformanceParams.{name} must be finite, got {value!r}")
            object.__setattr__(self, name, float(value))

    def violations(self) -> list[str]:
        """Human-readable range violations, empty when all in bounds."""
        out = []
        for name in self.FIELDS:
            low, high = self.BOUNDS[name]
            value = getattr(self, name)
            if not (low <= value <= high):
                out.append(f"{name}={value!r} outside [{low}, {high}]")
        return out

    def clamped(self) -> PerformanceParams:
        """Copy with every field clipped into its bound interval."""
        values = {}
        for name in self.FIELDS:
            low, high = self.BOUNDS[name]
            values[name] = min(max(getattr(self, name), low), high)
        return PerformanceParams(**values)

    def to_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in self.FIELDS}

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> PerformanceParams:
        missing = [name for name in cls.FIELDS if name not in doc]
        if missing:
            raise InputError(f"PerformanceParams missing fields: {', '.join(missing)}")
        return cls(**{name: doc[name] for name in cls.FIELDS})


@dataclass(frozen=True)
class BuildingFeature:
    """A generated building: geometry, metadata, performance parameters.

    ``footprint`` is stored as an open ring of >= 3 distinct (lon, lat)
    vertices; GeoJSON serialization closes the ring, parsing reopens it.
    ``params`` may be None mid-validation but a feature entering the
    simulator must carry one.
    """

    name: str
    floor_area: float
    building_type: str
    inspection_note: str
    footprint: tuple[tuple[float, float], ...]
    params: PerformanceParams | None = None

    PROPERTY_KEYS = (
        "name",
        "floor_area",
        "building_type",
        "inspection_note",
        "hvac_heating_cop",
        "hvac_cooling_cop",
        "wall_r_value",
        "roof_r_value",
        "air_change_rate",
    )

    def __post_init__(self):
        if not isinstance(self.floor_area, (int, float)) or not math.isfinite(self.floor_area) or self.floor_area <= 0:
            raise InputError(f"floor_area must be finite and > 0, got {self.floor_area!r}")
        object.__setattr__(self, "floor_area", float(self.floor_area))
        if not self.inspection_note.strip():
            raise InputError("inspection_note must be nonempty")
        ring = [(float(lon), float(lat)) for lon, lat in self.footprint]
        if len(ring) >= 2 and ring[0] == ring[-1]:
            ring = ring[:-1]  # tolerate a closed ring on input
        if len(set(ring)) < 3:
            raise InputError("footprint needs >= 3 distinct vertices")
        for lon, lat in ring:
            if not (math.isfinite(lon) and math.isfinite(lat)):
                raise InputError("footprint vertices must be finite")
        object.__setattr__(self, "footprint", tuple(ring))

    def closed_ring(self) -> list[list[float]]:
        ring = [[lon, lat] for lon, lat in self.footprint]
        ring.append(list(ring[0]))
        return ring

    def to_geojson(self) -> dict[str, Any]:
        """GeoJSON Feature with a flat properties block and closed Polygon ring."""
        if self.params is None:
            raise InputError("cannot serialize a feature without params")
        properties: dict[str, Any] = {
            "name": self.name,
            "floor_area": self.floor_area,
            "building_type": self.building_type,
            "inspection_note": self.inspection_note,
        }
        properties.update(self.params.to_dict())
        return {
            "type": "Feature",
            "properties": properties,
            "geometry": {"type": "Polygon", "coordinates": [self.closed_ring()]},
        }

    @classmethod
    def from_geojson(cls, doc: Mapping[str, Any]) -> BuildingFeature:
        if doc.get("type") != "Feature":
            raise InputError("not a GeoJSON Feature")
        props = doc.get("properties")
        geom = doc.get("geometry")
        if not isinstance(props, Mapping) or not isinstance(geom, Mapping):
            raise InputError("Feature must have object 'properties' and 'geometry'")
        if geom.get("type") != "Polygon":
            raise InputError("geometry must be a Polygon")
        coords = geom.get("coordinates")
        if not isinstance(coords, list) or not coords or not isinstance(coords[0], list):
            raise InputError("Polygon must have a coordinate ring")
        ring = [(float(p[0]), float(p[1])) for p in coords[0]]
        missing = [k for k in cls.PROPERTY_KEYS if k not in props]
        if missing:
            raise InputError(f"Feature properties missing keys: {', '.join(missing)}")
        params = PerformanceParams.from_dict(props)
        return cls(
            name=str(props["name"]),
            floor_area=float(props["floor_area"]),
            building_type=str(props["building_type"]),
            inspection_note=str(props["inspection_note"]),
            footprint=tuple(ring),
            params=params,
        )


SIMULATION_ENGINES = ("external", "surrogate")


@dataclass(frozen=True)
class SimulationResult:
    """Annual energy outcomes for one building.

    ``hvac_energy_kwh`` is delivered heating+cooling energy after
    equipment efficiency; ``envelope_load_kwh`` is the thermal transfer
    through the envelope before efficiency. The first drives the HVAC
    rating, the second the insulation rating.
    """

    hvac_energy_kwh: float
    envelope_load_kwh: float
    engine: str
    raw_outputs: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.engine not in SIMULATION_ENGINES:
            raise InputError(f"engine must be one of {SIMULATION_ENGINES}, got {self.engine!r}")
        for name in ("hvac_energy_kwh", "envelope_load_kwh"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value) or value < 0:
                raise InputError(f"SimulationResult.{name} must be finite and >= 0, got {value!r}")
            object.__setattr__(self, name, float(value))
        object.__setattr__(self, "raw_outputs", dict(self.raw_outputs))

    def to_dict(self) -> dict[str, Any]:
        return {
            "hvac_energy_kwh": self.hvac_energy_kwh,
            "envelope_load_kwh": self.envelope_load_kwh,
            "engine": self.engine,
            "raw_outputs": dict(self.raw_outputs),
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> SimulationResult:
        return cls(
            hvac_energy_kwh=doc["hvac_energy_kwh"],
            envelope_load_kwh=doc["envelope_load_kwh"],
            engine=doc["engine"],
            raw_outputs=doc.get("raw_outputs", {}),
        )


LABEL_CATEGORIES = ("hvac", "insulation")


@dataclass(frozen=True)
class EfficiencyLabel:
    """One category's rating triple for one home.

    ``text_need`` is the language-model need-of-replacement score,
    ``heuristic`` the simulation-derived score, ``combined`` their fixed
    weighted average ``(0.80*heuristic + 0.20*text_need) / 2``, stored
    exactly as computed, so it lives in [0, 0.5]. Wire keys are the
    symbols "lambda", "eta", "mu".
    """

    category: str
    text_need: float
    heuristic: float
    combined: float

    def __post_init__(self):
        if self.category not in LABEL_CATEGORIES:
            raise InputError(f"category must be one of {LABEL_CATEGORIES}, got {self.category!r}")
        for name, high in (("text_need", 1.0), ("heuristic", 1.0), ("combined", 0.5)):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise InputError(f"EfficiencyLabel.{name} must be finite")
            if not (0.0 <= value <= high):
                raise InputError(f"EfficiencyLabel.{name}={value!r} outside [0, {high}]")
            object.__setattr__(self, name, float(value))

    def to_dict(self) -> dict[str, float]:
        return {"lambda": self.text_need, "eta": self.heuristic, "mu": self.combined}

    @classmethod
    def from_dict(cls, category: str, doc: Mapping[str, Any]) -> EfficiencyLabel:
        return cls(
            category=category,
            text_need=doc["lambda"],
            heuristic=doc["eta"],
            combined=doc["mu"],
        )


@dataclass(frozen=True)
class RegionStats:
    """Mean distances inside and outside a region mask."""

    rmd: float
    nrmd: float
    region_cells: int
    non_region_cells: int


@dataclass(frozen=True)
class OcclusionReport:
    """Occlusion sensitivity map for one image under one prompt.

    ``distances`` is row-major over the cell grid: entry r*grid_cols+c
    is the cosine distance between the baseline description embedding
    and the description with cell (r, c) blacked out.
    """

    image_id: str
    baseline_text: str
    grid_rows: int
    grid_cols: int
    distances: tuple[float, ...]
    region_mask: tuple[bool, ...] | None = None
    rmd: float | None = None
    nrmd: float | None = None

    def __post_init__(self):
        if self.grid_rows < 1 or self.grid_cols < 1:
            raise InputError("grid must be at least 1x1")
        distances = tuple(float(d) for d in self.distances)
        if len(distances) != self.grid_rows * self.grid_cols:
            raise InputError(
                f"expected {self.grid_rows * self.grid_cols} distances, got {len(distances)}"
            )
        for d in distances:
            if not math.isfinite(d) or d < 0.0 or d > 2.0:
                raise InputError(f"cosine distance {d!r} outside [0, 2]")
        object.__setattr__(self, "distances", distances)
        if self.region_mask is not None:
            mask = tuple(bool(b) for b in self.region_mask)
            if len(mask) != len(distances):
                raise InputError("region_mask must match the distance grid")
            object.__setattr__(self, "region_mask", mask)
        if (self.rmd is None) != (self.region_mask is None) or (self.nrmd is None) != (self.region_mask is None):
            raise InputError("rmd/nrmd present iff region_mask present")

    def cell(self, row: int, col: int) -> float:
        if not (0 <= row < self.grid_rows and 0 <= col < self.grid_cols):
            raise InputError(f"cell ({row}, {col}) outside grid")
        return self.distances[row * self.grid_cols + col]

    def to_dict(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "image_id": self.image_id,
            "baseline_text": self.baseline_text,
            "grid_rows": self.grid_rows,
            "grid_cols": self.grid_cols,
            "distances": list(self.distances),
        }
        if self.region_mask is not None:
            doc["region_mask"] = list(self.region_mask)
            doc["rmd"] = self.rmd
            doc["nrmd"] = self.nrmd
        return doc

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> OcclusionReport:
        return cls(
            image_id=doc["image_id"],
            baseline_text=doc["baseline_text"],
            grid_rows=doc["grid_rows"],
            grid_cols=doc["grid_cols"],
            distances=tuple(doc["distances"]),
            region_mask=tuple(doc["region_mask"]) if "region_mask" in doc else None,
            rmd=doc.get("rmd"),
            nrmd=doc.get("nrmd"),
        )
