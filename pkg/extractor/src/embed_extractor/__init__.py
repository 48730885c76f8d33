"""Bridge from image corpora to the navigation stack's binary formats."""

from .encoders import EncoderLoadError, get_encoder, list_encoders
from .extract import embed_text, extract
from .formats import (
    DATASET_MAGIC,
    QUERY_MAGIC,
    FormatError,
    read_query_embedding,
    write_dataset,
    write_query_embedding,
)
from .manifest import ManifestError, PoseManifest

__all__ = [
    "DATASET_MAGIC",
    "QUERY_MAGIC",
    "EncoderLoadError",
    "FormatError",
    "ManifestError",
    "PoseManifest",
    "embed_text",
    "extract",
    "get_encoder",
    "list_encoders",
    "read_query_embedding",
    "write_dataset",
    "write_query_embedding",
]
