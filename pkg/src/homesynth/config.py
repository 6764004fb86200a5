"""Run configuration: one JSON document describing a reproducible run.

The file names the three model backends (mock or HTTP), the simulation
engine, the climate, and the labeler settings. Secrets never live in
the file; HTTP backends read bearer tokens from the environment
(VISION_API_KEY, GEN_API_KEY). ``config_hash`` fingerprints the parsed
document so run manifests can assert which configuration produced them.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .backends import (
    EmbedBackend,
    HashEmbedBackend,
    HttpEmbedBackend,
    HttpTextBackend,
    HttpVisionBackend,
    MockTextBackend,
    MockVisionBackend,
    TextBackend,
    VisionBackend,
)
from .errors import ConfigError
from .label import DEFAULT_LAMBDA_PROMPT, ETA_WEIGHT, LAMBDA_WEIGHT, LabelerConfig

BACKEND_KINDS = ("mock", "http")
ENGINE_KINDS = ("surrogate", "external")


def _check_keys(doc: Mapping[str, Any], allowed: tuple[str, ...], context: str) -> None:
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise ConfigError(f"{context}: unknown keys {', '.join(unknown)}")


@dataclass(frozen=True)
class BackendConfig:
    """One backend slot: which implementation and how to reach it."""

    kind: str = "mock"
    endpoint: str | None = None
    model_id: str | None = None
    timeout: float = 60.0
    max_retries: int = 3
    retry_delay: float = 0.5
    prompt_template: str = "{PROMPT}"
    temperature: float = 0.2
    max_tokens: int = 1200

    def __post_init__(self):
        if self.kind not in BACKEND_KINDS:
            raise ConfigError(f"backend kind must be one of {BACKEND_KINDS}, got {self.kind!r}")
        if self.max_retries < 1:
            raise ConfigError("max_retries must be >= 1")
        if self.timeout <= 0:
            raise ConfigError("timeout must be positive")

    KEYS = (
        "kind",
        "endpoint",
        "model_id",
        "timeout",
        "max_retries",
        "retry_delay",
        "prompt_template",
        "temperature",
        "max_tokens",
    )

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any], context: str) -> BackendConfig:
        if not isinstance(doc, Mapping):
            raise ConfigError(f"{context} must be an object")
        _check_keys(doc, cls.KEYS, context)
        return cls(**doc)

    def to_dict(self) -> dict[str, Any]:
        return {k: getattr(self, k) for k in self.KEYS}


@dataclass(frozen=True)
class ClimateConfig:
    """Annual degree-days driving the surrogate."""

    hdd: float = 3000.0
    cdd: float = 1000.0

    def __post_init__(self):
        for name in ("hdd", "cdd"):
            if getattr(self, name) < 0:
                raise ConfigError(f"climate.{name} must be >= 0")

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> ClimateConfig:
        if not isinstance(doc, Mapping):
            raise ConfigError("climate must be an object")
        _check_keys(doc, ("hdd", "cdd"), "climate")
        return cls(**doc)

    def to_dict(self) -> dict[str, float]:
        return {"hdd": self.hdd, "cdd": self.cdd}


@dataclass(frozen=True)
class LabelerSettings:
    """File-form labeler settings; the backend handle is bound at build time."""

    eta_weight: float = ETA_WEIGHT
    lambda_weight: float = LAMBDA_WEIGHT
    prompt_template: str = DEFAULT_LAMBDA_PROMPT
    normalized_mu: bool = False

    def __post_init__(self):
        for name in ("eta_weight", "lambda_weight"):
            value = getattr(self, name)
            if not (0.0 <= value <= 1.0):
                raise ConfigError(f"labeler.{name} must be in [0, 1]")
        total = self.eta_weight + self.lambda_weight
        if total <= 0.0 or total > 1.0:
            raise ConfigError("labeler weights must sum into (0, 1]")

    KEYS = ("eta_weight", "lambda_weight", "prompt_template", "normalized_mu")

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> LabelerSettings:
        if not isinstance(doc, Mapping):
            raise ConfigError("labeler must be an object")
        _check_keys(doc, cls.KEYS, "labeler")
        return cls(**doc)

    def to_dict(self) -> dict[str, Any]:
        return {k: getattr(self, k) for k in self.KEYS}


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a full run needs, in one hashable document."""

    vision: BackendConfig = field(default_factory=BackendConfig)
    text: BackendConfig = field(default_factory=BackendConfig)
    embed: BackendConfig = field(default_factory=BackendConfig)
    engine: str = "surrogate"
    engine_home: str | None = None
    weather: str | None = None
    climate: ClimateConfig = field(default_factory=ClimateConfig)
    labeler: LabelerSettings = field(default_factory=LabelerSettings)
    parallelism: int = 4
    generation_retries: int = 3

    def __post_init__(self):
        if self.engine not in ENGINE_KINDS:
            raise ConfigError(f"engine must be one of {ENGINE_KINDS}, got {self.engine!r}")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        if self.generation_retries < 1:
            raise ConfigError("generation_retries must be >= 1")

    KEYS = (
        "vision",
        "text",
        "embed",
        "engine",
        "engine_home",
        "weather",
        "climate",
        "labeler",
        "parallelism",
        "generation_retries",
    )

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> PipelineConfig:
        if not isinstance(doc, Mapping):
            raise ConfigError("config must be a JSON object")
        _check_keys(doc, cls.KEYS, "config")
        kwargs: dict[str, Any] = {}
        for slot in ("vision", "text", "embed"):
            if slot in doc:
                kwargs[slot] = BackendConfig.from_dict(doc[slot], slot)
        if "climate" in doc:
            kwargs["climate"] = ClimateConfig.from_dict(doc["climate"])
        if "labeler" in doc:
            kwargs["labeler"] = LabelerSettings.from_dict(doc["labeler"])
        for key in ("engine", "engine_home", "weather", "parallelism", "generation_retries"):
            if key in doc:
                kwargs[key] = doc[key]
        return cls(**kwargs)

    def to_dict(self) -> dict[str, Any]:
        return {
            "vision": self.vision.to_dict(),
            "text": self.text.to_dict(),
            "embed": self.embed.to_dict(),
            "engine": self.engine,
            "engine_home": self.engine_home,
            "weather": self.weather,
            "climate": self.climate.to_dict(),
            "labeler": self.labeler.to_dict(),
            "parallelism": self.parallelism,
            "generation_retries": self.generation_retries,
        }


def load_config(path: Path | str | None) -> PipelineConfig:
    """Parse a config file; None means the all-mock default configuration."""
    if path is None:
        return PipelineConfig()
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    try:
        return PipelineConfig.from_dict(doc)
    except TypeError as exc:
        raise ConfigError(f"config has a wrongly-typed field: {exc}") from exc


def config_hash(config: PipelineConfig) -> str:
    """Stable fingerprint of the parsed configuration."""
    canonical = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def build_vision_backend(cfg: BackendConfig) -> VisionBackend:
    if cfg.kind == "mock":
        return MockVisionBackend(model_id=cfg.model_id or "mock-vision", max_retries=cfg.max_retries)
    return HttpVisionBackend(
        endpoint=cfg.endpoint,
        model_id=cfg.model_id or "vision-http",
        timeout=cfg.timeout,
        max_retries=cfg.max_retries,
        retry_delay=cfg.retry_delay,
        prompt_template=cfg.prompt_template,
    )


def build_text_backend(cfg: BackendConfig) -> TextBackend:
    if cfg.kind == "mock":
        return MockTextBackend(model_id=cfg.model_id or "mock-text", max_retries=cfg.max_retries)
    return HttpTextBackend(
        endpoint=cfg.endpoint,
        model_id=cfg.model_id or "text-http",
        timeout=cfg.timeout,
        max_retries=cfg.max_retries,
        retry_delay=cfg.retry_delay,
    )


def build_embed_backend(cfg: BackendConfig) -> EmbedBackend:
    if cfg.kind == "mock":
        return HashEmbedBackend(model_id=cfg.model_id or "mock-embed")
    return HttpEmbedBackend(
        endpoint=cfg.endpoint,
        model_id=cfg.model_id or "embed-http",
        timeout=cfg.timeout,
        max_retries=cfg.max_retries,
        retry_delay=cfg.retry_delay,
    )


def build_labeler(settings: LabelerSettings, backend: TextBackend) -> LabelerConfig:
    return LabelerConfig(
        backend=backend,
        eta_weight=settings.eta_weight,
        lambda_weight=settings.lambda_weight,
        prompt_template=settings.prompt_template,
        normalized_mu=settings.normalized_mu,
    )
