"""Streaming novelty filter for embedding streams.

Scores incoming feature vectors against an evolving Gaussian model and
keeps only frames that contain something the model has not seen, turning
redundant recordings into compact, more balanced datasets.
"""

from .errors import DegenerateModelError, DriftgateError, FormatError
from .embs import read_embs, read_header, read_sidecar, sidecar_path, write_embs, write_sidecar
from .metrics import BalanceReport, DiversityReport, balance, diversity
from .pipeline import (
    EmbeddingRecord,
    StreamSummary,
    read_embedding_file,
    read_manifest,
    run_filter,
    write_manifest,
)
from .scorer import Decision, decide, score, score_batch
from .stats import FixedAlpha, LedoitWolf, NormalModel, Reservoir, Snapshot, shrink

__version__ = "0.1.0"

__all__ = [
    "BalanceReport",
    "Decision",
    "DegenerateModelError",
    "DiversityReport",
    "DriftgateError",
    "EmbeddingRecord",
    "FixedAlpha",
    "FormatError",
    "LedoitWolf",
    "NormalModel",
    "Reservoir",
    "Snapshot",
    "StreamSummary",
    "balance",
    "decide",
    "diversity",
    "read_embedding_file",
    "read_embs",
    "read_header",
    "read_manifest",
    "read_sidecar",
    "run_filter",
    "score",
    "score_batch",
    "shrink",
    "sidecar_path",
    "write_embs",
    "write_manifest",
    "write_sidecar",
    "__version__",
]
