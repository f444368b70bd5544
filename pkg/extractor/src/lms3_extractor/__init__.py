"""Turn a transformer checkpoint into an lms3 bundle directory."""

from .extract import (
    TOOL_VERSION,
    ExtractionConfig,
    UnsupportedArchitectureError,
    config_from_provenance,
    extract,
)

__version__ = TOOL_VERSION

__all__ = [
    "ExtractionConfig",
    "UnsupportedArchitectureError",
    "config_from_provenance",
    "extract",
]
