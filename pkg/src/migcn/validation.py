"""Input validation and conversion between datasets and dense arrays."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .ingest import DatasetManifest, QueryInstance, build_query


@dataclass
class GroundingSample:
    """One (video, sentence) pair as the estimator consumes it."""

    features: np.ndarray
    query: QueryInstance
    duration: float
    video_id: str = ""
    query_id: str = ""


@dataclass
class SampleArrays:
    features: np.ndarray      # (n, T, D_v)
    embeddings: np.ndarray    # (n, L_max, E)
    mask: np.ndarray          # (n, L_max)
    edges: list
    duration: np.ndarray      # (n,)
    ids: list

    def __len__(self) -> int:
        return len(self.duration)


def samples_from_manifest(manifest: DatasetManifest, embeddings: dict, max_query_len: int | None = None):
    """Expand a manifest into ``(X, y)``: a list of samples and (n, 2) ground-truth seconds."""
    max_len = max_query_len or manifest.max_query_len
    X, y = [], []
    for record, ann in manifest.pairs():
        X.append(GroundingSample(record.features, build_query(ann, embeddings, max_len),
                                 record.duration_seconds, record.video_id, ann.query_id))
        y.append((ann.tau_s, ann.tau_e))
    return X, np.asarray(y, dtype=float).reshape(-1, 2)


def check_samples(X) -> SampleArrays:
    """Validate a sequence of :class:`GroundingSample` and stack it densely."""
    if isinstance(X, GroundingSample):
        X = [X]
    X = list(X)
    if not X:
        raise InputError("empty dataset")
    for i, s in enumerate(X):
        if not isinstance(s, GroundingSample):
            raise InputError(f"sample {i} is a {type(s).__name__}, expected GroundingSample")
    shape_v, shape_q = X[0].features.shape, X[0].query.embeddings.shape
    for i, s in enumerate(X):
        if s.features.ndim != 2 or s.features.shape != shape_v:
            raise InputError(f"sample {i}: clip features {s.features.shape}, expected {shape_v}")
        if s.query.embeddings.shape != shape_q:
            raise InputError(f"sample {i}: query embeddings {s.query.embeddings.shape}, expected {shape_q}")
        if s.query.length == 0:
            raise InputError(f"sample {i}: query has no tokens")
        if not s.duration > 0:
            raise InputError(f"sample {i}: duration must be positive, got {s.duration}")
    features = np.stack([s.features for s in X]).astype(float)
    embeddings = np.stack([s.query.embeddings for s in X]).astype(float)
    if not (np.isfinite(features).all() and np.isfinite(embeddings).all()):
        raise InputError("non-finite values in features or embeddings")
    return SampleArrays(features, embeddings, np.stack([s.query.mask for s in X]).astype(float),
                        [list(s.query.dependency_edges) for s in X],
                        np.array([s.duration for s in X], dtype=float),
                        [(s.video_id, s.query_id) for s in X])


def check_targets(y, durations: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim != 2 or y.shape != (len(durations), 2):
        raise InputError(f"targets must have shape ({len(durations)}, 2), got {y.shape}")
    bad = ~((0 <= y[:, 0]) & (y[:, 0] < y[:, 1]) & (y[:, 1] <= durations))
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise InputError(f"target {i} needs 0 <= tau_s < tau_e <= duration, got {tuple(y[i])}")
    return y
