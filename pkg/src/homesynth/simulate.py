"""Energy simulation: engine input rendering, external engine adapter, surrogate.

Two interchangeable paths produce a SimulationResult:

* ``run_external`` renders the building into an IDF text, expands it,
  and runs a whole-building engine as subprocesses, then parses the
  meter CSV for annual totals.
* ``run_surrogate`` is a deterministic closed-form degree-day model.
  It exists because an external engine cannot anchor bit-exact unit
  tests; every numeric contract in the test suite is stated against it.

Both report ``hvac_energy_kwh`` (delivered heating+cooling after
equipment efficiency) and ``envelope_load_kwh`` (thermal transfer before
efficiency).
"""

from __future__ import annotations

import csv
import math
import re
import string
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path

from . import geometry
from .domain import BuildingFeature, PerformanceParams, SimulationResult
from .errors import EngineError, EngineParseError, InputError, TemplateError

# imperial R (ft2.F.hr/Btu) to SI (m2.K/W)
R_IMPERIAL_TO_SI = 0.1761
# sensible heat of air per volume, Wh/(m3.K); UA_inf = ACH * volume * this
AIR_HEAT_CAPACITY_WH_PER_M3K = 0.335
FT2_TO_M2 = 0.09290304
J_PER_KWH = 3.6e6

# stock defaults applied when a feature carries no parameters
DEFAULT_PARAMS = PerformanceParams(
    hvac_heating_cop=0.8,
    hvac_cooling_cop=3.0,
    wall_r_value=13.0,
    roof_r_value=30.0,
    air_change_rate=2.0,
)

TEMPLATE_PLACEHOLDERS = (
    "FLOOR_AREA",
    "WALL_R_VALUE",
    "ROOF_R_VALUE",
    "HVAC_HEATING_COP",
    "HVAC_COOLING_COP",
    "AIR_CHANGE_RATE",
    "VERTICES",
)

_PLACEHOLDER_RE = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


@dataclass(frozen=True)
class IdfTemplate:
    """Engine input text with one substitution slot per parameter.

    Construction verifies that each known placeholder appears exactly
    once and nothing else uses the ``${NAME}`` syntax, so a rendered
    template can never leak an unfilled slot.
    """

    text: str

    def __post_init__(self):
        found = _PLACEHOLDER_RE.findall(self.text)
        for name in found:
            if name not in TEMPLATE_PLACEHOLDERS:
                raise TemplateError(f"unknown placeholder {name}")
        for name in TEMPLATE_PLACEHOLDERS:
            count = found.count(name)
            if count != 1:
                raise TemplateError(f"placeholder {name} must appear exactly once, found {count}")


DEFAULT_IDF_TEMPLATE = IdfTemplate(
    text="""! Auto-generated single-zone residential model.
! Slots marked with template placeholders are filled from the
! generated building feature; everything else is stock.

Version, 23.1;

Building,
  Generated Home,            !- Name
  0.0,                       !- North Axis {deg}
  Suburbs,                   !- Terrain
  0.04, 0.4, FullInteriorAndExterior, 25, 6;

Zone,
  MainZone,                  !- Name
  0.0, 0.0, 0.0, 0.0, 1, 1,
  autocalculate,             !- Ceiling Height {m}
  autocalculate,             !- Volume {m3}
  ${FLOOR_AREA};             !- Floor Area {ft2}

Material:NoMass,
  WallInsulation,            !- Name
  Rough,
  ${WALL_R_VALUE},           !- Wall R-Value {ft2-F-hr/Btu}
  0.9, 0.7, 0.7;

Material:NoMass,
  RoofInsulation,            !- Name
  Rough,
  ${ROOF_R_VALUE},           !- Roof R-Value {ft2-F-hr/Btu}
  0.9, 0.7, 0.7;

WindowMaterial:SimpleGlazingSystem,
  StockWindow,               !- Name
  2.0,                       !- U-Factor {W/m2-K}
  0.6;                       !- Solar Heat Gain Coefficient

HVACTemplate:Zone:Unitary,
  MainZone,
  Gas Furnace,               !- Template Unitary System Name
  ${HVAC_HEATING_COP},       !- Gas Burner Efficiency
  ${HVAC_COOLING_COP};       !- Cooling Coil Rated COP

ZoneInfiltration:DesignFlowRate,
  MainZoneInfiltration,      !- Name
  MainZone,
  AlwaysOn,
  AirChanges/Hour,
  , , ,
  ${AIR_CHANGE_RATE};        !- Air Changes per Hour

BuildingSurface:Detailed,
  Floor, Floor, FloorConstruction, MainZone,
  Ground, , NoSun, NoWind, autocalculate,
${VERTICES}
  ;                          !- End footprint vertices
"""
)


def render_idf(feature: BuildingFeature, template: IdfTemplate = DEFAULT_IDF_TEMPLATE) -> str:
    """Substitute the feature into the template; nothing is left unfilled.

    A feature without params renders the stock defaults. Numeric slots
    receive ``repr`` of the float so the value round-trips exactly when
    parsed back out of the rendered text.
    """
    params = feature.params if feature.params is not None else DEFAULT_PARAMS
    vertices = "\n".join(f"  {lon!r}, {lat!r}, 0.0," for lon, lat in feature.footprint)
    mapping = {
        "FLOOR_AREA": repr(feature.floor_area),
        "WALL_R_VALUE": repr(params.wall_r_value),
        "ROOF_R_VALUE": repr(params.roof_r_value),
        "HVAC_HEATING_COP": repr(params.hvac_heating_cop),
        "HVAC_COOLING_COP": repr(params.hvac_cooling_cop),
        "AIR_CHANGE_RATE": repr(params.air_change_rate),
        "VERTICES": vertices,
    }
    try:
        rendered = string.Template(template.text).substitute(mapping)
    except KeyError as exc:  # unreachable with a validated template
        raise TemplateError(f"unknown placeholder {exc.args[0]}") from exc
    if "${" in rendered:
        raise TemplateError("rendered output still contains a placeholder")
    return rendered


@dataclass(frozen=True)
class Climate:
    """Annual degree-day climate summary (base temperature already applied)."""

    hdd: float
    cdd: float
    story_height_m: float = 3.0

    def __post_init__(self):
        for name in ("hdd", "cdd"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value) or value < 0:
                raise InputError(f"Climate.{name} must be finite and >= 0, got {value!r}")
            object.__setattr__(self, name, float(value))
        if not (0 < self.story_height_m < 10):
            raise InputError(f"implausible story height {self.story_height_m!r}")


def run_surrogate(
    feature: BuildingFeature,
    climate: Climate,
    stories: float | None = None,
) -> SimulationResult:
    """Closed-form degree-day model; deterministic and pure.

    Envelope UA comes from wall and roof conductance over projected
    areas, infiltration UA from air-change volume flow. Heating and
    cooling loads are UA times degree-days; delivered HVAC energy
    divides each load by its equipment COP.

    ``stories`` defaults to the ratio of floor area to footprint area,
    rounded, floored at one, so a two-story home gets twice the wall
    height and volume.
    """
    roof_area_m2 = geometry.polygon_area_m2(feature.footprint)
    if roof_area_m2 <= 0.0:
        raise InputError("footprint polygon has zero area")
    perimeter_m = geometry.polygon_perimeter_m(feature.footprint)
    if stories is None:
        stories = max(1.0, float(round(feature.floor_area * FT2_TO_M2 / roof_area_m2)))
    else:
        stories = float(stories)
        if not math.isfinite(stories) or stories < 1.0:
            raise InputError(f"stories must be >= 1, got {stories!r}")
    params = feature.params if feature.params is not None else DEFAULT_PARAMS

    wall_area_m2 = perimeter_m * stories * climate.story_height_m
    volume_m3 = roof_area_m2 * stories * climate.story_height_m
    u_wall = 1.0 / (params.wall_r_value * R_IMPERIAL_TO_SI)
    u_roof = 1.0 / (params.roof_r_value * R_IMPERIAL_TO_SI)
    ua_envelope = u_wall * wall_area_m2 + u_roof * roof_area_m2
    ua_infiltration = params.air_change_rate * volume_m3 * AIR_HEAT_CAPACITY_WH_PER_M3K
    ua = ua_envelope + ua_infiltration

    heating_load_kwh = ua * climate.hdd * 24.0 / 1000.0
    cooling_load_kwh = ua * climate.cdd * 24.0 / 1000.0
    envelope_load_kwh = ua * (climate.hdd + climate.cdd) * 24.0 / 1000.0
    hvac_energy_kwh = (
        heating_load_kwh / params.hvac_heating_cop + cooling_load_kwh / params.hvac_cooling_cop
    )
    return SimulationResult(
        hvac_energy_kwh=hvac_energy_kwh,
        envelope_load_kwh=envelope_load_kwh,
        engine="surrogate",
        raw_outputs={
            "ua_envelope_w_per_k": ua_envelope,
            "ua_infiltration_w_per_k": ua_infiltration,
            "ua_total_w_per_k": ua,
            "wall_area_m2": wall_area_m2,
            "roof_area_m2": roof_area_m2,
            "volume_m3": volume_m3,
            "stories": stories,
            "heating_load_kwh": heating_load_kwh,
            "cooling_load_kwh": cooling_load_kwh,
        },
    )


# meter names expected in the engine's meter CSV
HEATING_METER = "Heating:EnergyTransfer"
COOLING_METER = "Cooling:EnergyTransfer"
ENVELOPE_METER = "EnergyTransfer:Building"


def run_external(
    idf: str,
    weather: Path | str,
    engine_home: Path | str,
    scratch: Path | str | None = None,
    timeout: float = 600.0,
) -> SimulationResult:
    """Run the external engine on rendered IDF text.

    The expand preprocessor runs first (template objects to concrete
    ones), then the engine itself, each in a private scratch directory.
    Annual totals are read from the meter CSV afterwards.
    """
    if "${" in idf:
        raise InputError("IDF text contains an unsubstituted placeholder")
    weather = Path(weather)
    if not weather.is_file():
        raise InputError(f"weather file not found: {weather}")
    engine_home = Path(engine_home)
    expand = engine_home / "ExpandObjects"
    engine = engine_home / "energyplus"
    for binary in (expand, engine):
        if not binary.is_file():
            raise EngineError(f"binary not found: {binary}")
    scratch = Path(scratch) if scratch is not None else Path(tempfile.mkdtemp(prefix="enginerun-"))
    scratch.mkdir(parents=True, exist_ok=True)
    (scratch / "in.idf").write_text(idf, encoding="utf-8")

    for argv in (
        [str(expand)],
        [str(engine), "-w", str(weather), "-d", str(scratch), str(scratch / "expanded.idf")],
    ):
        proc = subprocess.run(
            argv,
            cwd=scratch,
            capture_output=True,
            text=True,
            timeout=timeout,
        )
        if proc.returncode != 0:
            tail = (proc.stderr or proc.stdout or "").strip()[-500:]
            raise EngineError(f"{Path(argv[0]).name} exited {proc.returncode}: {tail}")
    return parse_engine_output(scratch)


def parse_engine_output(output_dir: Path | str) -> SimulationResult:
    """Extract annual totals from an engine output directory.

    Reads the run-period row of ``eplusmtr.csv``: heating plus cooling
    energy transfer becomes ``hvac_energy_kwh``, building envelope
    transfer becomes ``envelope_load_kwh``, and every meter is passed
    through in kWh via ``raw_outputs``.
    """
    output_dir = Path(output_dir)
    meter_csv = output_dir / "eplusmtr.csv"
    if not meter_csv.is_file():
        raise EngineParseError(f"meter output not found: {meter_csv}")
    with open(meter_csv, newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if len(rows) < 2:
        raise EngineParseError(f"meter output has no data rows: {meter_csv}")
    header, last = rows[0], rows[-1]
    if len(last) != len(header):
        raise EngineParseError("meter output final row does not match header")

    totals: dict[str, float] = {}
    for column, cell in zip(header[1:], last[1:]):
        name = column.split(" [")[0].strip()
        try:
            value = float(cell)
        except ValueError as exc:
            raise EngineParseError(f"meter {name} has non-numeric total {cell!r}") from exc
        if "[J]" in column:
            value /= J_PER_KWH
        totals[name] = value

    missing = [m for m in (HEATING_METER, COOLING_METER, ENVELOPE_METER) if m not in totals]
    if missing:
        raise EngineParseError(f"meter output missing: {', '.join(missing)}")
    return SimulationResult(
        hvac_energy_kwh=totals[HEATING_METER] + totals[COOLING_METER],
        envelope_load_kwh=totals[ENVELOPE_METER],
        engine="external",
        raw_outputs=totals,
    )
