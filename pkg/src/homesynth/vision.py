"""Image-to-text stage: describe facade photos and floor plans.

The backend is pluggable (``backends.VisionBackend``); this module owns
prompt defaults, input validation, and the retry policy around a
backend's transient failures.
"""

from __future__ import annotations

import io
import time
from pathlib import Path
from typing import Callable

from PIL import Image, UnidentifiedImageError

from .backends import VisionBackend
from .domain import HomeRecord, ImageDescription
from .errors import BackendError, InputError, TransportError

DEFAULT_FACADE_PROMPT = (
    "You are a certified home inspector. Describe the status roof. "
    "Is it in good condition? Why or why not?"
)

DEFAULT_FLOORPLAN_PROMPT = (
    "You are a certified home inspector. Describe the layout, rooms, and "
    "approximate geometry shown in this floor plan."
)


def describe_image(
    backend: VisionBackend,
    image: bytes,
    prompt: str,
    sleep: Callable[[float], None] = time.sleep,
) -> str:
    """One described image: validated input, retried transport, nonempty output.

    Transport failures are retried with exponential backoff for up to
    ``backend.max_retries`` total attempts; a success is returned
    immediately and never re-requested.
    """
    if not prompt or not prompt.strip():
        raise InputError("prompt must be nonempty")
    try:
        with Image.open(io.BytesIO(image)) as img:
            img.verify()
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise InputError(f"image bytes do not decode: {exc}") from exc

    attempts = max(1, backend.max_retries)
    last: TransportError | None = None
    for attempt in range(attempts):
        try:
            text = backend.describe(image, prompt)
        except TransportError as exc:
            last = exc
            if attempt + 1 < attempts and backend.retry_delay > 0:
                sleep(backend.retry_delay * (2**attempt))
            continue
        if not text or not text.strip():
            raise BackendError(f"vision backend {backend.model_id} returned empty text")
        return text
    raise BackendError(f"vision backend failed after {attempts} attempts: {last}") from last


def describe_home(
    backend: VisionBackend,
    record: HomeRecord,
    facade_prompt: str = DEFAULT_FACADE_PROMPT,
    floorplan_prompt: str = DEFAULT_FLOORPLAN_PROMPT,
) -> ImageDescription:
    """Describe whichever of the two images a home has.

    Raises InputError when the record has neither image; the pipeline
    catches that and falls back to metadata-only generation.
    """
    if record.photo_path is None and record.floorplan_path is None:
        raise InputError(f"home {record.id} has no images to describe")
    facade_text = ""
    floorplan_text = ""
    if record.photo_path is not None:
        facade_text = describe_image(backend, _read_image(record.photo_path), facade_prompt)
    if record.floorplan_path is not None:
        floorplan_text = describe_image(backend, _read_image(record.floorplan_path), floorplan_prompt)
    return ImageDescription(
        facade_text=facade_text,
        floorplan_text=floorplan_text,
        backend_id=backend.model_id,
    )


def _read_image(path: Path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read image {path}: {exc}") from exc
