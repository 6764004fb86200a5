"""Dataset ingestion: disk fixtures plus the scrape-backend interface.

Live collection from a county portal is deliberately out of scope (DOM
volatility, region locks); instead the pipeline reads a directory of
per-home JSON documents and image files:

    <dataset>/<id>.json
    <dataset>/<id>_photo.(jpg|png)
    <dataset>/<id>_floorplan.(jpg|png)

``ScrapeBackend`` defines the interface a real collector would
implement, and ``FixtureScrapeBackend`` serves canned responses so the
full fetch path stays testable offline.
"""

from __future__ import annotations

import json
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

from .domain import HomeRecord
from .errors import InputError, TransportError


@dataclass(frozen=True)
class IngestIssue:
    """One skipped or degraded input, with the reason."""

    source: str
    message: str


def load_home_records(directory: Path | str) -> tuple[list[HomeRecord], list[IngestIssue]]:
    """Read every ``*.json`` home document under ``directory``.

    Malformed documents are skipped and reported, never fatal; a missing
    image file degrades the record to metadata-only with an issue entry.
    The returned list is sorted by id, so output order is independent of
    filesystem enumeration order.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise InputError(f"dataset directory not found: {directory}")
    records: list[HomeRecord] = []
    issues: list[IngestIssue] = []
    for path in sorted(directory.glob("*.json")):
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            issues.append(IngestIssue(path.name, f"unreadable JSON: {exc}"))
            continue
        try:
            record = HomeRecord.from_dict(doc, base_dir=directory, fallback_id=path.stem)
        except InputError as exc:
            issues.append(IngestIssue(path.name, str(exc)))
            continue
        # referenced but absent image files degrade, not fail
        replacements: dict[str, None] = {}
        for attr in ("photo_path", "floorplan_path"):
            p = getattr(record, attr)
            if p is not None and not p.is_file():
                issues.append(IngestIssue(path.name, f"{attr.removesuffix('_path')} file missing: {p.name}"))
                replacements[attr] = None
        if replacements:
            record = HomeRecord(
                id=record.id,
                street_address=record.street_address,
                attributes=record.attributes,
                photo_path=replacements.get("photo_path", record.photo_path),
                floorplan_path=replacements.get("floorplan_path", record.floorplan_path),
            )
        records.append(record)
    records.sort(key=lambda r: r.id)
    return records, issues


@dataclass(frozen=True)
class ScrapedHome:
    """Raw scrape result: the JSON-able document plus image bytes."""

    document: Mapping[str, Any]
    photo: bytes | None = None
    floorplan: bytes | None = None


class ScrapeBackend(ABC):
    """Interface a live county-portal collector would implement.

    ``fetch`` returns every home on a street; transient failures raise
    TransportError so the caller can retry.
    """

    max_retries: int = 3
    retry_delay: float = 0.5

    @abstractmethod
    def fetch(self, street: str) -> list[ScrapedHome]: ...


@dataclass
class FixtureScrapeBackend(ScrapeBackend):
    """Canned scrape responses keyed by street name; supports fault injection.

    ``fail_times`` makes the first N fetches raise TransportError;
    ``calls`` counts every fetch attempt.
    """

    responses: Mapping[str, Sequence[ScrapedHome]]
    fail_times: int = 0
    max_retries: int = 3
    retry_delay: float = 0.0
    calls: int = field(default=0, init=False)

    def fetch(self, street: str) -> list[ScrapedHome]:
        self.calls += 1
        if self.calls <= self.fail_times:
            raise TransportError(f"fixture failure {self.calls}/{self.fail_times}")
        return list(self.responses.get(street, []))


def _image_suffix(data: bytes) -> str:
    if data[:2] == b"\xff\xd8":
        return ".jpg"
    return ".png"


def fetch_street(
    backend: ScrapeBackend,
    street: str,
    dest: Path | str,
    sleep: Callable[[float], None] = time.sleep,
) -> tuple[list[HomeRecord], list[IngestIssue]]:
    """Fetch one street through ``backend`` and materialize it as a dataset.

    Image bytes land as ``<id>_photo.*`` / ``<id>_floorplan.*`` and each
    document is written to ``<id>.json`` in the on-disk record form, so
    the destination composes directly with ``load_home_records``.
    Transient backend failures are retried with exponential backoff;
    per-home validation failures are skipped and reported.
    """
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    last: TransportError | None = None
    for attempt in range(max(1, backend.max_retries)):
        try:
            scraped = backend.fetch(street)
            break
        except TransportError as exc:
            last = exc
            if attempt + 1 >= backend.max_retries:
                raise
            if backend.retry_delay > 0:
                sleep(backend.retry_delay * (2**attempt))
    else:  # pragma: no cover - loop always breaks or raises
        raise last or TransportError("fetch failed")

    records: list[HomeRecord] = []
    issues: list[IngestIssue] = []
    seen: set[str] = set()
    for item in scraped:
        doc = dict(item.document)
        home_id = doc.get("id")
        if not isinstance(home_id, str) or not home_id.strip():
            issues.append(IngestIssue(street, f"scraped document without id: {doc!r:.80}"))
            continue
        if home_id in seen:
            issues.append(IngestIssue(street, f"duplicate id {home_id!r} skipped"))
            continue
        photo_path = floorplan_path = None
        if item.photo is not None:
            photo_path = dest / f"{home_id}_photo{_image_suffix(item.photo)}"
        if item.floorplan is not None:
            floorplan_path = dest / f"{home_id}_floorplan{_image_suffix(item.floorplan)}"
        try:
            record = HomeRecord(
                id=home_id,
                street_address=str(doc.get("street_address", street)),
                attributes={k: v for k, v in doc.items() if k not in ("id", "street_address")},
                photo_path=photo_path,
                floorplan_path=floorplan_path,
            )
        except InputError as exc:
            issues.append(IngestIssue(street, f"home {home_id}: {exc}"))
            continue
        if photo_path is not None:
            photo_path.write_bytes(item.photo)
        if floorplan_path is not None:
            floorplan_path.write_bytes(item.floorplan)
        with open(dest / f"{home_id}.json", "w", encoding="utf-8") as fh:
            json.dump(record.to_dict(base_dir=dest), fh, indent=2, sort_keys=True)
            fh.write("\n")
        seen.add(home_id)
        records.append(record)
    records.sort(key=lambda r: r.id)
    return records, issues
