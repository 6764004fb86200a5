"""Evaluation harnesses: occlusion focus testing and labeler ablation testing.

Occlusion: tile an image into a k x k grid, black out one cell at a
time, re-describe, and measure how far each masked description's
embedding drifts from the baseline. Large distances mark cells the
vision model actually attends to. Region masks (e.g. the roof) reduce
the map to two numbers: mean distance inside and outside the region.

Ablation: hold either the inspection note or the simulated building
fixed, sweep the other through five levels, and tabulate the mean and
spread of the combined ratings over repeated trials. Combined variation
crosses two note levels with two simulation levels to show how the
weighted fusion trades the signals off.

Both harnesses are deterministic given deterministic backends; all
trial-to-trial spread comes from the backends themselves.
"""

from __future__ import annotations

import dataclasses
import csv
import hashlib
import io
import math
import statistics
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from . import geometry
from .backends import EmbedBackend, TextBackend, VisionBackend
from .domain import BuildingFeature, LABEL_CATEGORIES, OcclusionReport, RegionStats, SimulationResult
from .errors import BackendError, DegenerateDatasetWarning, InputError, LabelingError
from .label import ALPHA_FIELDS, LabelerConfig, combine, heuristic_score, text_score
from .simulate import DEFAULT_PARAMS, Climate, run_surrogate
from .vision import describe_image

# ---------------------------------------------------------------------------
# Occlusion


@dataclass(frozen=True)
class Cell:
    """One grid rectangle in pixel coordinates; box is PIL-style LTRB."""

    x: int
    y: int
    width: int
    height: int

    @property
    def box(self) -> tuple[int, int, int, int]:
        return (self.x, self.y, self.x + self.width, self.y + self.height)


def grid_cells(width: int, height: int, n: int) -> list[Cell]:
    """Tile a width x height image into n = k*k cells, row-major.

    Base cell size is floor(width/k) x floor(height/k); the last column
    and last row absorb the remainder pixels, so the cells partition the
    image exactly.
    """
    if n < 1:
        raise InputError("n must be >= 1")
    k = math.isqrt(n)
    if k * k != n:
        raise InputError(f"n must be a perfect square, got {n}")
    if width < k or height < k:
        raise InputError(f"image {width}x{height} too small for a {k}x{k} grid")
    base_w = width // k
    base_h = height // k
    cells = []
    for row in range(k):
        cell_h = base_h if row < k - 1 else height - base_h * (k - 1)
        for col in range(k):
            cell_w = base_w if col < k - 1 else width - base_w * (k - 1)
            cells.append(Cell(x=col * base_w, y=row * base_h, width=cell_w, height=cell_h))
    return cells


_BLACK = {"L": 0, "LA": (0, 255), "RGB": (0, 0, 0), "RGBA": (0, 0, 0, 255)}


def mask_cell(image: Image.Image, cell: Cell) -> Image.Image:
    """Copy of the image with one cell's pixels set to opaque black."""
    if image.mode not in _BLACK:
        raise InputError(f"unsupported image mode {image.mode!r}; convert to RGB first")
    if cell.x < 0 or cell.y < 0 or cell.x + cell.width > image.width or cell.y + cell.height > image.height:
        raise InputError(f"cell {cell} outside {image.width}x{image.height} image")
    masked = image.copy()
    masked.paste(_BLACK[image.mode], cell.box)
    return masked


def cosine_distance(u: np.ndarray, v: np.ndarray) -> float:
    """1 - cos(u, v), in [0, 2]; 0 for identical direction, 2 for opposite.

    Exact identity and exact antipodality short-circuit to 0.0 and 2.0
    so equal texts compare as exactly zero despite rounding in the norm.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape or u.ndim != 1 or u.size == 0:
        raise InputError(f"vectors must share a nonzero 1-D shape, got {u.shape} and {v.shape}")
    norm_u = float(np.linalg.norm(u))
    norm_v = float(np.linalg.norm(v))
    if norm_u == 0.0 or norm_v == 0.0:
        raise InputError("cosine distance undefined for a zero vector")
    if np.array_equal(u, v):
        return 0.0
    if np.array_equal(u, -v):
        return 2.0
    distance = 1.0 - float(np.dot(u, v)) / (norm_u * norm_v)
    return min(max(distance, 0.0), 2.0)


def occlusion_run(
    image: bytes,
    prompt: str,
    vision_backend: VisionBackend,
    embed_backend: EmbedBackend,
    n: int = 100,
    image_id: str | None = None,
) -> OcclusionReport:
    """Full occlusion sweep over one image.

    The baseline description is embedded once and reused; masked
    descriptions are embedded through a per-text cache, so a cell whose
    masking does not change the text scores exactly 0. Any backend
    failure (after its own retries) aborts the run; no partial report
    is returned.
    """
    try:
        with Image.open(io.BytesIO(image)) as img:
            canvas = img.convert("RGB")
    except (OSError, ValueError) as exc:
        raise InputError(f"image bytes do not decode: {exc}") from exc
    cells = grid_cells(canvas.width, canvas.height, n)
    k = math.isqrt(n)

    def encode(img: Image.Image) -> bytes:
        buf = io.BytesIO()
        img.save(buf, format="PNG")
        return buf.getvalue()

    # the baseline goes through the same decode/encode path as the
    # masked variants so byte-level differences reflect masking only
    baseline_text = describe_image(vision_backend, encode(canvas), prompt)
    embeddings: dict[str, np.ndarray] = {baseline_text: embed_backend.embed(baseline_text)}
    baseline_vec = embeddings[baseline_text]

    distances = []
    for cell in cells:
        masked_text = describe_image(vision_backend, encode(mask_cell(canvas, cell)), prompt)
        if masked_text not in embeddings:
            embeddings[masked_text] = embed_backend.embed(masked_text)
        distances.append(cosine_distance(baseline_vec, embeddings[masked_text]))
    return OcclusionReport(
        image_id=image_id or hashlib.sha256(image).hexdigest()[:12],
        baseline_text=baseline_text,
        grid_rows=k,
        grid_cols=k,
        distances=tuple(distances),
    )


def _normalize_mask(mask: Sequence, rows: int, cols: int) -> np.ndarray:
    arr = np.asarray(mask, dtype=bool)
    if arr.ndim == 2:
        if arr.shape != (rows, cols):
            raise InputError(f"mask shape {arr.shape} does not match grid {rows}x{cols}")
        arr = arr.reshape(-1)
    elif arr.ndim == 1:
        if arr.size != rows * cols:
            raise InputError(f"mask length {arr.size} does not match grid {rows}x{cols}")
    else:
        raise InputError("mask must be a flat or 2-D boolean grid")
    return arr


def region_stats(report: OcclusionReport, mask: Sequence) -> RegionStats:
    """Mean distance inside the masked region and outside it."""
    arr = _normalize_mask(mask, report.grid_rows, report.grid_cols)
    distances = np.asarray(report.distances, dtype=float)
    inside = distances[arr]
    outside = distances[~arr]
    if inside.size == 0 or outside.size == 0:
        raise InputError("region mask must leave both partitions nonempty")
    return RegionStats(
        rmd=statistics.fmean(inside.tolist()),
        nrmd=statistics.fmean(outside.tolist()),
        region_cells=int(inside.size),
        non_region_cells=int(outside.size),
    )


def apply_region_mask(report: OcclusionReport, mask: Sequence) -> OcclusionReport:
    """Report with region statistics attached."""
    arr = _normalize_mask(mask, report.grid_rows, report.grid_cols)
    stats = region_stats(report, arr)
    return dataclasses.replace(
        report,
        region_mask=tuple(bool(b) for b in arr),
        rmd=stats.rmd,
        nrmd=stats.nrmd,
    )


def load_region_mask(path: Path | str, rows: int, cols: int) -> tuple[bool, ...]:
    """Read a sidecar 0/1 CSV mask (one row per grid row)."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"mask file not found: {path}")
    grid: list[list[bool]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        for line in csv.reader(fh):
            if not line or all(not c.strip() for c in line):
                continue
            row = []
            for cell in line:
                cell = cell.strip()
                if cell not in ("0", "1"):
                    raise InputError(f"mask values must be 0 or 1, got {cell!r}")
                row.append(cell == "1")
            grid.append(row)
    if len(grid) != rows or any(len(row) != cols for row in grid):
        raise InputError(f"mask in {path.name} is not {rows}x{cols}")
    return tuple(b for row in grid for b in row)


def write_distance_csv(report: OcclusionReport, path: Path | str) -> None:
    """Distance grid as RFC-4180 CSV: header c1..ck, 6-decimal cells."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"c{i + 1}" for i in range(report.grid_cols)])
        for row in range(report.grid_rows):
            writer.writerow(
                [f"{report.cell(row, col):.6f}" for col in range(report.grid_cols)]
            )


def read_distance_csv(path: Path | str) -> list[list[float]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return [[float(cell) for cell in row] for row in rows[1:]]


def render_heatmap(
    report: OcclusionReport,
    image_path: Path | str,
    csv_path: Path | str,
    cell_px: int = 24,
) -> None:
    """Write the distance grid as a CSV and a white-to-red heatmap PNG.

    Color ramp is linear in distance normalized by the report's maximum:
    white at 0, pure red at the max. An all-zero grid renders uniform
    white rather than dividing by zero.
    """
    if cell_px < 1:
        raise InputError("cell_px must be >= 1")
    write_distance_csv(report, csv_path)
    peak = max(report.distances)
    pixels = np.full(
        (report.grid_rows * cell_px, report.grid_cols * cell_px, 3), 255, dtype=np.uint8
    )
    for row in range(report.grid_rows):
        for col in range(report.grid_cols):
            t = report.cell(row, col) / peak if peak > 0 else 0.0
            shade = round(255 * (1.0 - t))
            pixels[row * cell_px : (row + 1) * cell_px, col * cell_px : (col + 1) * cell_px, 1] = shade
            pixels[row * cell_px : (row + 1) * cell_px, col * cell_px : (col + 1) * cell_px, 2] = shade
    Image.fromarray(pixels, "RGB").save(Path(image_path), format="PNG")


# ---------------------------------------------------------------------------
# Ablation

NEUTRAL_NOTE = (
    "The home has two stories with vinyl siding and a shingled roof. Windows "
    "appear to be single-hung with no visible damage. The HVAC system is "
    "located on the first floor near the utility room. Insulation levels in "
    "the attic are unknown. Doors are wood-core with standard weather "
    "stripping."
)

HVAC_NOTES = (
    ("HVAC1", "There is an older HVAC unit installed, with signs of rust on the exterior."),
    (
        "HVAC2",
        "The HVAC system appears to be in working condition but is an older standard-efficiency model.",
    ),
    ("HVAC3", "The home uses window AC units rather than a central HVAC system."),
    (
        "HVAC4",
        "The HVAC system was recently replaced with a standard high-efficiency model and is "
        "expected to operate efficiently.",
    ),
    (
        "HVAC5",
        "A state-of-the-art HVAC system with smart thermostats and variable-speed compressors "
        "was recently installed, maximizing energy efficiency.",
    ),
)

INSULATION_NOTES = (
    (
        "INS1",
        "Attic insulation is minimal, with exposed joists visible throughout, causing "
        "significant heat loss.",
    ),
    (
        "INS2",
        "No signs of added insulation were observed in the basement ceiling, suggesting "
        "potential energy inefficiency.",
    ),
    (
        "INS3",
        "Walls appear to be adequately insulated based on construction year, though no "
        "upgrades were observed.",
    ),
    (
        "INS4",
        "Blown-in insulation is present in the attic to a depth of approximately 10 inches, "
        "providing good thermal resistance.",
    ),
    (
        "INS5",
        "High-performance spray foam insulation was installed throughout the walls, attic, "
        "and basement, providing maximum energy efficiency.",
    ),
)

DEFAULT_ABLATION_NOTES = HVAC_NOTES + INSULATION_NOTES

# note index 1 is the least efficient wording, 5 the most efficient
EFFICIENCY_LEVELS = ("Very Inefficient", "Inefficient", "Moderate", "Efficient", "Very Efficient")

# five-level sweeps for the simulation-side ablation, index 1..5
ABLATION_GRID = {
    "WALLR": (4.0, 7.0, 13.0, 20.0, 30.0),
    "ROOFR": (10.0, 20.0, 30.0, 40.0, 50.0),
    "HVACH": (0.7, 0.8, 0.9, 0.95, 1.0),
    "HVACC": (1.0, 2.0, 3.0, 3.5, 4.0),
}

ABLATION_VARIABLE_FIELDS = {
    "WALLR": "wall_r_value",
    "ROOFR": "roof_r_value",
    "HVACH": "hvac_heating_cop",
    "HVACC": "hvac_cooling_cop",
}

DEFAULT_EXPERIMENT_CLIMATE = Climate(hdd=3000.0, cdd=1000.0)

_EXPERIMENT_CENTER = (-75.30, 40.69)


def experiment_feature(params=DEFAULT_PARAMS, note: str = NEUTRAL_NOTE) -> BuildingFeature:
    """The fixed two-story 10 m x 10 m building all ablations run against."""
    ring = geometry.square_footprint(*_EXPERIMENT_CENTER, side_m=10.0)
    return BuildingFeature(
        name="Ablation Fixture",
        floor_area=2153.0,  # ~200 m2 over two 100 m2 stories
        building_type="Single family",
        inspection_note=note,
        footprint=ring,
        params=params,
    )


@dataclass(frozen=True)
class ExperimentRow:
    """One experimental condition's rating statistics.

    Mean/SD fields are None when every trial for the condition failed;
    ``detail`` then carries the reason. SD is the population SD over the
    trials, 0 by convention for a single trial.
    """

    label: str
    note: str
    hvac_mu_mean: float | None
    hvac_mu_sd: float | None
    insulation_mu_mean: float | None
    insulation_mu_sd: float | None
    trials: int
    detail: str = ""

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _mu_once(
    labeler: LabelerConfig,
    note: str,
    sim: SimulationResult,
    extremes: dict[str, tuple[float, float]],
) -> dict[str, float]:
    """One trial's combined rating per category; degeneracy warnings silenced.

    Single-condition experiments intentionally score against degenerate
    extremes (the heuristic term is constant by design there).
    """
    out = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateDatasetWarning)
        for category in LABEL_CATEGORIES:
            beta, gamma = extremes[category]
            eta = heuristic_score(getattr(sim, ALPHA_FIELDS[category]), beta, gamma)
            lam = text_score(labeler.backend, note, category, labeler.prompt_template)
            mu = combine(eta, lam, labeler.eta_weight, labeler.lambda_weight)
            if labeler.normalized_mu:
                mu *= 2.0
            out[category] = mu
    return out


def _stats_row(
    label: str,
    note: str,
    labeler: LabelerConfig,
    sim: SimulationResult,
    extremes: dict[str, tuple[float, float]],
    trials: int,
    detail: str = "",
) -> ExperimentRow:
    samples: dict[str, list[float]] = {c: [] for c in LABEL_CATEGORIES}
    try:
        for _ in range(trials):
            mu = _mu_once(labeler, note, sim, extremes)
            for category in LABEL_CATEGORIES:
                samples[category].append(mu[category])
    except (LabelingError, BackendError, InputError) as exc:
        return ExperimentRow(
            label=label,
            note=note,
            hvac_mu_mean=None,
            hvac_mu_sd=None,
            insulation_mu_mean=None,
            insulation_mu_sd=None,
            trials=trials,
            detail=f"failed: {exc}",
        )
    return ExperimentRow(
        label=label,
        note=note,
        hvac_mu_mean=statistics.fmean(samples["hvac"]),
        hvac_mu_sd=statistics.pstdev(samples["hvac"]),
        insulation_mu_mean=statistics.fmean(samples["insulation"]),
        insulation_mu_sd=statistics.pstdev(samples["insulation"]),
        trials=trials,
        detail=detail,
    )


def _default_fixed_sim() -> SimulationResult:
    return run_surrogate(experiment_feature(), DEFAULT_EXPERIMENT_CLIMATE)


def ablation_text(
    labeler: LabelerConfig,
    notes: Sequence[tuple[str, str]] | None = None,
    fixed_sim: SimulationResult | None = None,
    trials: int = 5,
) -> list[ExperimentRow]:
    """Sweep inspection-note wording against one fixed simulation.

    With a single fixed simulation the heuristic term is constant (its
    extremes coincide), so all variation across rows comes from the
    text-derived score. One row per note, in input order.
    """
    if trials < 1:
        raise InputError("trials must be >= 1")
    notes = tuple(notes) if notes is not None else DEFAULT_ABLATION_NOTES
    if not notes:
        raise InputError("notes must be nonempty")
    sim = fixed_sim if fixed_sim is not None else _default_fixed_sim()
    extremes = {
        category: (getattr(sim, ALPHA_FIELDS[category]), getattr(sim, ALPHA_FIELDS[category]))
        for category in LABEL_CATEGORIES
    }
    return [
        _stats_row(
            note_id,
            text,
            labeler,
            sim,
            extremes,
            trials,
            detail="heuristic constant (single fixed simulation)",
        )
        for note_id, text in notes
    ]


def ablation_sim(
    labeler: LabelerConfig,
    fixed_note: str = NEUTRAL_NOTE,
    variable: str = "HVACC",
    trials: int = 5,
    climate: Climate = DEFAULT_EXPERIMENT_CLIMATE,
) -> list[ExperimentRow]:
    """Sweep one simulation parameter through its five levels.

    Heuristic extremes are taken over the five swept simulations, so the
    varied category's score spans [0, 1] across the sweep while the
    fixed note keeps the text-derived score constant. One row per level,
    index order 1..5.
    """
    if trials < 1:
        raise InputError("trials must be >= 1")
    if variable not in ABLATION_GRID:
        raise InputError(f"variable must be one of {sorted(ABLATION_GRID)}, got {variable!r}")
    field_name = ABLATION_VARIABLE_FIELDS[variable]
    sims = [
        run_surrogate(
            experiment_feature(dataclasses.replace(DEFAULT_PARAMS, **{field_name: value})),
            climate,
        )
        for value in ABLATION_GRID[variable]
    ]
    extremes = {
        category: (
            min(getattr(s, ALPHA_FIELDS[category]) for s in sims),
            max(getattr(s, ALPHA_FIELDS[category]) for s in sims),
        )
        for category in LABEL_CATEGORIES
    }
    return [
        _stats_row(
            f"{variable}{index}",
            fixed_note,
            labeler,
            sim,
            extremes,
            trials,
            detail=f"{field_name}={value:g}",
        )
        for index, (value, sim) in enumerate(zip(ABLATION_GRID[variable], sims), start=1)
    ]


def combined_variation(
    labeler: LabelerConfig,
    notes: tuple[tuple[str, str], tuple[str, str]],
    sims: tuple[SimulationResult, SimulationResult],
    trials: int = 5,
) -> list[ExperimentRow]:
    """Cross two note levels with two simulation levels: 4 rows.

    ``notes`` and ``sims`` are (efficient, inefficient) pairs. Heuristic
    extremes come from the two supplied simulations. Row order is
    note-major: (eff, eff), (eff, ineff), (ineff, eff), (ineff, ineff).
    """
    if trials < 1:
        raise InputError("trials must be >= 1")
    if len(notes) != 2 or len(sims) != 2:
        raise InputError("combined variation needs exactly 2 notes and 2 sims")
    extremes = {
        category: (
            min(getattr(s, ALPHA_FIELDS[category]) for s in sims),
            max(getattr(s, ALPHA_FIELDS[category]) for s in sims),
        )
        for category in LABEL_CATEGORIES
    }
    sim_levels = ("efficient-sim", "inefficient-sim")
    rows = []
    for note_id, note_text in notes:
        for sim_label, sim in zip(sim_levels, sims):
            rows.append(
                _stats_row(
                    f"{note_id}/{sim_label}",
                    note_text,
                    labeler,
                    sim,
                    extremes,
                    trials,
                )
            )
    return rows


def combined_variation_for_variable(
    labeler: LabelerConfig,
    variable: str,
    trials: int = 5,
    climate: Climate = DEFAULT_EXPERIMENT_CLIMATE,
) -> list[ExperimentRow]:
    """Combined variation using a variable's grid extremes and the matching notes.

    The efficient level is the variable's index-5 value with the
    index-5 note; the inefficient level is index 1 of each. Insulation
    variables pair with the insulation notes, HVAC variables with the
    HVAC notes.
    """
    if variable not in ABLATION_GRID:
        raise InputError(f"variable must be one of {sorted(ABLATION_GRID)}, got {variable!r}")
    field_name = ABLATION_VARIABLE_FIELDS[variable]
    note_table = INSULATION_NOTES if variable in ("WALLR", "ROOFR") else HVAC_NOTES
    efficient_value = ABLATION_GRID[variable][4]
    inefficient_value = ABLATION_GRID[variable][0]
    sims = tuple(
        run_surrogate(
            experiment_feature(dataclasses.replace(DEFAULT_PARAMS, **{field_name: value})),
            climate,
        )
        for value in (efficient_value, inefficient_value)
    )
    return combined_variation(labeler, (note_table[4], note_table[0]), sims, trials)


def write_ablation_csv(rows: Sequence[ExperimentRow], path: Path | str) -> None:
    """Experiment table as RFC-4180 CSV with 6-decimal statistics."""

    def fmt(value: float | None) -> str:
        return "" if value is None else f"{value:.6f}"

    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["label", "hvac_mu_mean", "hvac_mu_sd", "insulation_mu_mean", "insulation_mu_sd", "trials", "detail"]
        )
        for row in rows:
            writer.writerow(
                [
                    row.label,
                    fmt(row.hvac_mu_mean),
                    fmt(row.hvac_mu_sd),
                    fmt(row.insulation_mu_mean),
                    fmt(row.insulation_mu_sd),
                    str(row.trials),
                    row.detail,
                ]
            )
