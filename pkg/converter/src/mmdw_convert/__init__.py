"""One-shot converter from public VGG-19 weight files to MMDW containers."""

from .convert import (
    CANONICAL_SHAPES,
    ConversionError,
    ConversionManifest,
    TensorRecord,
    UnrecognizedSourceError,
    convert,
    load_source,
    serialize_mmdw,
)

__version__ = "0.1.0"
