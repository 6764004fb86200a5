"""Labeling: per-category ratings and the labeled JSONL dataset.

Each home gets, for each of the two categories (hvac, insulation):

* a heuristic score from its simulated energy relative to the dataset's
  best and worst homes,
* a text-derived need-of-replacement score from its inspection note,
* their fixed weighted average as the combined rating.

The heuristic is relative by construction: adding a home outside the
current extremes shifts every score, so the extremes used are recorded
alongside every run.
"""

from __future__ import annotations

import json
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .backends import TextBackend
from .domain import LABEL_CATEGORIES, EfficiencyLabel, SimulationResult
from .errors import BackendError, DegenerateDatasetWarning, InputError, LabelingError

# which simulated quantity drives each category's heuristic: equipment
# ratings respond to delivered energy, insulation ratings to envelope load
ALPHA_FIELDS = {"hvac": "hvac_energy_kwh", "insulation": "envelope_load_kwh"}

ETA_WEIGHT = 0.80
LAMBDA_WEIGHT = 0.20

CATEGORY_SUBJECTS = {"hvac": "the HVAC system", "insulation": "the insulation"}

DEFAULT_LAMBDA_PROMPT = (
    "You are rating a home from an inspection note. Rate the need of "
    "replacing or improving {SUBJECT}, where 0.0 means no need at all and "
    "1.0 means urgent need. Respond with only a single decimal number "
    "between 0 and 1.\n\nINSPECTION NOTE:\n{NOTE}"
)

_DECIMAL_RE = re.compile(r"[-+]?(?:\d+\.\d*|\.\d+|\d+)")


def heuristic_score(alpha: float, beta: float, gamma: float) -> float:
    """Position of one home's energy within the dataset extremes.

    Returns (alpha - beta) / (gamma - beta): 0 at the most efficient
    home, 1 at the least. A dataset whose extremes coincide has no
    spread to score against; that degenerates to 0 with a warning.
    """
    if gamma < beta:
        raise InputError(f"gamma {gamma!r} < beta {beta!r}")
    if not (beta <= alpha <= gamma):
        raise InputError(
            f"alpha {alpha!r} outside [beta, gamma] = [{beta!r}, {gamma!r}]; "
            "extremes must come from the same dataset"
        )
    if gamma == beta:
        warnings.warn(
            "dataset extremes coincide; heuristic score degenerates to 0",
            DegenerateDatasetWarning,
            stacklevel=2,
        )
        return 0.0
    return (alpha - beta) / (gamma - beta)


def dataset_extremes(results: Iterable[SimulationResult], category: str) -> tuple[float, float]:
    """(best, worst) of the category's energy across the dataset."""
    if category not in ALPHA_FIELDS:
        raise InputError(f"unknown category {category!r}")
    values = [getattr(r, ALPHA_FIELDS[category]) for r in results]
    if not values:
        raise InputError("cannot take extremes of an empty dataset")
    return min(values), max(values)


def text_score(
    backend: TextBackend,
    note: str,
    category: str,
    prompt_template: str = DEFAULT_LAMBDA_PROMPT,
) -> float:
    """Need-of-replacement score for one category, parsed from model text.

    The first decimal token in the response is the score, clamped into
    [0, 1]. One retry is allowed for unparseable output; a second
    failure is a labeling error.
    """
    if category not in CATEGORY_SUBJECTS:
        raise InputError(f"unknown category {category!r}")
    if not note or not note.strip():
        raise InputError("inspection note must be nonempty")
    prompt = prompt_template.replace("{SUBJECT}", CATEGORY_SUBJECTS[category]).replace("{NOTE}", note)
    last_reply = ""
    for _ in range(2):
        last_reply = backend.generate(prompt)
        match = _DECIMAL_RE.search(last_reply)
        if match:
            return min(max(float(match.group()), 0.0), 1.0)
    raise LabelingError(
        f"no decimal score in backend reply after retry: {last_reply[:120]!r}"
    )


def combine(
    eta: float,
    lam: float,
    eta_weight: float = ETA_WEIGHT,
    lambda_weight: float = LAMBDA_WEIGHT,
) -> float:
    """Combined rating: (0.80*eta + 0.20*lambda) / 2, computed exactly as written.

    The trailing halving is part of the published formula, so the result
    lives in [0, 0.5]; consumers wanting [0, 1] rescale at output time.
    """
    for name, value in (("eta", eta), ("lambda", lam)):
        if not (0.0 <= value <= 1.0):
            raise InputError(f"{name}={value!r} outside [0, 1]")
    return (eta_weight * eta + lambda_weight * lam) / 2.0


@dataclass(frozen=True)
class LabelerConfig:
    """Everything labeling needs beyond the homes themselves."""

    backend: TextBackend
    eta_weight: float = ETA_WEIGHT
    lambda_weight: float = LAMBDA_WEIGHT
    prompt_template: str = DEFAULT_LAMBDA_PROMPT
    normalized_mu: bool = False  # rescale combined ratings x2 into [0, 1] on output


@dataclass(frozen=True)
class LabelRun:
    """Labeling output: JSONL rows, per-home failures, the extremes used."""

    rows: tuple[dict, ...]
    errors: tuple[dict, ...] = ()
    extremes: Mapping[str, Mapping[str, float]] = field(default_factory=dict)


def label_dataset(
    homes: Sequence[tuple[str, str, SimulationResult]],
    labeler: LabelerConfig,
) -> LabelRun:
    """Label every home; failures divert to the error sidecar, never abort.

    ``homes`` is (id, inspection_note, simulation) triples. Extremes are
    computed over the full input in a first pass, so every home is
    scored against the same scale regardless of later failures. Row
    order equals input order.
    """
    if not homes:
        raise InputError("cannot label an empty dataset")
    extremes = {
        category: dict(zip(("beta", "gamma"), dataset_extremes([sim for _, _, sim in homes], category)))
        for category in LABEL_CATEGORIES
    }
    rows: list[dict] = []
    errors: list[dict] = []
    for home_id, note, sim in homes:
        try:
            labels: dict[str, dict[str, float]] = {}
            for category in LABEL_CATEGORIES:
                alpha = getattr(sim, ALPHA_FIELDS[category])
                eta = heuristic_score(alpha, extremes[category]["beta"], extremes[category]["gamma"])
                lam = text_score(labeler.backend, note, category, labeler.prompt_template)
                label = EfficiencyLabel(
                    category=category,
                    text_need=lam,
                    heuristic=eta,
                    combined=combine(eta, lam, labeler.eta_weight, labeler.lambda_weight),
                )
                wire = label.to_dict()
                if labeler.normalized_mu:
                    wire["mu"] = wire["mu"] * 2.0
                labels[category] = wire
        except (InputError, LabelingError, BackendError) as exc:
            errors.append({"id": home_id, "error": str(exc)})
            continue
        rows.append(
            {
                "id": home_id,
                "inspection_note": note,
                "simulation": {
                    "hvac_energy_kwh": sim.hvac_energy_kwh,
                    "envelope_load_kwh": sim.envelope_load_kwh,
                    "engine": sim.engine,
                },
                "labels": labels,
            }
        )
    return LabelRun(rows=tuple(rows), errors=tuple(errors), extremes=extremes)


def write_jsonl(rows: Iterable[Mapping[str, Any]], path: Path | str) -> None:
    """One canonical JSON object per line; byte-stable across runs."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True, separators=(",", ":")))
            fh.write("\n")


def errors_sidecar_path(path: Path | str) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".errors" + path.suffix)
