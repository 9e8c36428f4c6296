"""embex: labeled image patches to EMBS embedding files."""

from .annotations import AnnotationRow, read_annotations
from .extract import ExtractReport, run_annotations, run_synthetic
from .network import EXPECTED_DIM, PATCH_SIZE_DEFAULT, embed, load_trunk, probe_dim
from .patches import Preprocess
from .synthetic import ClassSpec, MixtureSpec, generate, load_spec

__version__ = "0.1.0"

__all__ = [
    "AnnotationRow",
    "ClassSpec",
    "EXPECTED_DIM",
    "ExtractReport",
    "MixtureSpec",
    "PATCH_SIZE_DEFAULT",
    "Preprocess",
    "embed",
    "generate",
    "load_spec",
    "load_trunk",
    "probe_dim",
    "read_annotations",
    "run_annotations",
    "run_synthetic",
]
