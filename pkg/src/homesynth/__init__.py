"""homesynth: synthetic building-energy datasets from public property records.

A five-stage pipeline (ingest, describe, generate, simulate, label)
turns county assessor records and home images into a labeled JSONL
dataset, plus two evaluation harnesses: occlusion focus testing for the
vision stage and ablation testing for the labeler. All model backends
are pluggable and ship with deterministic mocks.
"""

from .domain import (
    BuildingFeature,
    EfficiencyLabel,
    HomeRecord,
    ImageDescription,
    OcclusionReport,
    PerformanceParams,
    RegionStats,
    SimulationResult,
)
from .errors import (
    BackendError,
    ConfigError,
    DegenerateDatasetWarning,
    EngineError,
    EngineParseError,
    GenerationError,
    InputError,
    LabelingError,
    PipelineError,
    TemplateError,
    TransportError,
)

__version__ = "0.1.0"

__all__ = [
    "BuildingFeature",
    "EfficiencyLabel",
    "HomeRecord",
    "ImageDescription",
    "OcclusionReport",
    "PerformanceParams",
    "RegionStats",
    "SimulationResult",
    "BackendError",
    "ConfigError",
    "DegenerateDatasetWarning",
    "EngineError",
    "EngineParseError",
    "GenerationError",
    "InputError",
    "LabelingError",
    "PipelineError",
    "TemplateError",
    "TransportError",
    "__version__",
]
