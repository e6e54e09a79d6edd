"""Multi-modal interaction graph convolution for temporal sentence localisation in videos."""

from .estimator import MIGCNLocalizer
from .harness import Checkpoint, RunConfig, evaluate, gradcheck, train
from .ingest import generate_synthetic, load_embeddings, load_manifest
from .validation import GroundingSample, samples_from_manifest

__all__ = [
    "Checkpoint",
    "GroundingSample",
    "MIGCNLocalizer",
    "RunConfig",
    "evaluate",
    "generate_synthetic",
    "gradcheck",
    "load_embeddings",
    "load_manifest",
    "samples_from_manifest",
    "train",
]

__version__ = "0.1.0"
