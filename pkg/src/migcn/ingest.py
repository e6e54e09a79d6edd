"""Dataset manifests, clip-feature files, embedding tables and synthetic data.

File formats
------------
Manifest
    JSON lines.  Each line: ``video_id``, ``duration_seconds``, ``feature_file``
    (relative to the manifest's directory) and ``annotations``, a list of
    ``{query_id, tokens, dependency_edges, tau_s, tau_e}``.
Feature file
    Little-endian: magic ``b"MMIG"``, ``u32 T``, ``u32 D_v``, then ``T*D_v``
    float32 values, row-major.
Embedding table
    Text, one token per line followed by its whitespace-separated components
    (GloVe text layout).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, InputError, LoadError

FEATURE_MAGIC = b"MMIG"
_HEADER = struct.Struct("<4sII")


@dataclass
class Annotation:
    query_id: str
    tokens: list[str]
    dependency_edges: list[tuple[int, int]]
    tau_s: float
    tau_e: float


@dataclass
class VideoRecord:
    video_id: str
    duration_seconds: float
    features: np.ndarray
    annotations: list[Annotation] = field(default_factory=list)
    feature_file: str | None = None

    @property
    def n_clips(self) -> int:
        return self.features.shape[0]


@dataclass
class DatasetManifest:
    records: list[VideoRecord]
    clip_count_T: int
    max_query_len: int

    def pairs(self):
        """Yield every ``(record, annotation)`` training pair in file order."""
        for record in self.records:
            for ann in record.annotations:
                yield record, ann

    def find(self, video_id: str, query_id: str) -> tuple[VideoRecord, Annotation]:
        for record in self.records:
            if record.video_id != video_id:
                continue
            for ann in record.annotations:
                if ann.query_id == query_id:
                    return record, ann
            raise InputError(f"video {video_id!r} has no query {query_id!r}")
        raise InputError(f"unknown video {video_id!r}")


@dataclass
class QueryInstance:
    embeddings: np.ndarray
    mask: np.ndarray
    dependency_edges: list[tuple[int, int]]

    @property
    def length(self) -> int:
        return int(self.mask.sum())


# ------------------------------------------------------------- feature files


def write_features(path, features: np.ndarray) -> None:
    features = np.asarray(features)
    rows, cols = features.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FEATURE_MAGIC, rows, cols))
        fh.write(features.astype("<f4").tobytes(order="C"))


def read_features(path) -> np.ndarray:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except FileNotFoundError as exc:
        raise LoadError(f"missing feature file {path}") from exc
    if len(blob) < _HEADER.size:
        raise LoadError(f"{path}: truncated header")
    magic, rows, cols = _HEADER.unpack_from(blob)
    if magic != FEATURE_MAGIC:
        raise LoadError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 4 * rows * cols
    if len(blob) != expected:
        raise LoadError(f"{path}: expected {expected} bytes for {rows}x{cols}, found {len(blob)}")
    data = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size)
    return data.reshape(rows, cols).astype(np.float64)


# ------------------------------------------------------------ embedding table


def load_embeddings(path) -> dict[str, np.ndarray]:
    table: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            token, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
            if len(values) != dim or dim == 0:
                raise LoadError(f"{path}:{lineno}: expected {dim} components for {token!r}, found {len(values)}")
            try:
                table[token] = np.array([float(v) for v in values])
            except ValueError as exc:
                raise LoadError(f"{path}:{lineno}: non-numeric component") from exc
    if not table:
        raise LoadError(f"{path}: empty embedding table")
    return table


def write_embeddings(path, table: dict[str, np.ndarray]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for token, vec in table.items():
            fh.write(token + " " + " ".join(repr(float(v)) for v in vec) + "\n")


def embedding_dim(table: dict[str, np.ndarray]) -> int:
    return len(next(iter(table.values())))


# ------------------------------------------------------------------- manifest


def _parse_annotation(raw: dict, duration: float, where: str) -> Annotation:
    qid = str(raw.get("query_id", "?"))
    try:
        tokens = [str(t) for t in raw["tokens"]]
        edges = [(int(i), int(j)) for i, j in raw.get("dependency_edges", [])]
        tau_s, tau_e = float(raw["tau_s"]), float(raw["tau_e"])
    except (KeyError, TypeError, ValueError) as exc:
        raise LoadError(f"{where}: malformed annotation {qid!r}: {exc}") from exc
    if not (0.0 <= tau_s < tau_e <= duration):
        raise LoadError(f"{where}: query {qid!r} needs 0 <= tau_s < tau_e <= {duration}, "
                        f"got tau_s={tau_s}, tau_e={tau_e}")
    for i, j in edges:
        if not (1 <= i <= len(tokens) and 1 <= j <= len(tokens)):
            raise LoadError(f"{where}: query {qid!r} edge ({i},{j}) outside 1..{len(tokens)}")
    return Annotation(qid, tokens, edges, tau_s, tau_e)


def load_manifest(path, clip_count: int | None = None, max_query_len: int | None = None) -> DatasetManifest:
    """Read and validate a JSON-lines manifest, loading every feature file.

    ``clip_count`` fixes the expected number of clips; otherwise the first
    record sets it.  ``max_query_len`` defaults to the longest token list.
    """
    path = Path(path)
    if not path.exists():
        raise LoadError(f"missing manifest {path}")
    records: list[VideoRecord] = []
    n_clips = clip_count
    feat_dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                raw = json.loads(line)
                vid = str(raw["video_id"])
                duration = float(raw["duration_seconds"])
                feature_file = str(raw["feature_file"])
                raw_anns = raw.get("annotations", [])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise LoadError(f"{where}: malformed record: {exc}") from exc
            if duration <= 0:
                raise LoadError(f"{where}: video {vid!r} has non-positive duration {duration}")
            try:
                features = read_features(path.parent / feature_file)
            except LoadError as exc:
                raise LoadError(f"{where}: video {vid!r}: {exc}") from exc
            if n_clips is None:
                n_clips = features.shape[0]
            if features.shape[0] != n_clips:
                raise LoadError(f"{where}: video {vid!r} has {features.shape[0]} clip rows, expected {n_clips}")
            if feat_dim is None:
                feat_dim = features.shape[1]
            if features.shape[1] != feat_dim:
                raise LoadError(f"{where}: video {vid!r} feature width {features.shape[1]}, expected {feat_dim}")
            anns = [_parse_annotation(a, duration, where) for a in raw_anns]
            records.append(VideoRecord(vid, duration, features, anns, feature_file))
    if not records:
        raise LoadError(f"{path}: no records")
    if not n_clips:
        raise LoadError(f"{path}: clip count must be positive")
    if max_query_len is None:
        max_query_len = max((len(a.tokens) for r in records for a in r.annotations), default=1)
    if max_query_len <= 0:
        raise LoadError("max_query_len must be positive")
    return DatasetManifest(records, n_clips, max_query_len)


def write_manifest(path, manifest: DatasetManifest, feature_dir: str = "features") -> None:
    """Write the manifest and one feature file per record under ``feature_dir``."""
    path = Path(path)
    (path.parent / feature_dir).mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in manifest.records:
            rel = rec.feature_file or f"{feature_dir}/{rec.video_id}.mmig"
            rec.feature_file = rel
            write_features(path.parent / rel, rec.features)
            fh.write(json.dumps({
                "video_id": rec.video_id,
                "duration_seconds": rec.duration_seconds,
                "feature_file": rel,
                "annotations": [{
                    "query_id": a.query_id,
                    "tokens": a.tokens,
                    "dependency_edges": [list(e) for e in a.dependency_edges],
                    "tau_s": a.tau_s,
                    "tau_e": a.tau_e,
                } for a in rec.annotations],
            }) + "\n")


# ---------------------------------------------------------------------- query


def build_query(annotation: Annotation, embeddings: dict[str, np.ndarray], max_len: int) -> QueryInstance:
    """Embed, truncate/pad to ``max_len`` and filter dependency edges."""
    if not annotation.tokens:
        raise InputError(f"query {annotation.query_id!r} has no tokens")
    if max_len <= 0:
        raise ConfigError(f"max query length must be positive, got {max_len}")
    dim = embedding_dim(embeddings)
    tokens = annotation.tokens[:max_len]
    emb = np.zeros((max_len, dim))
    for i, tok in enumerate(tokens):
        vec = embeddings.get(tok)
        if vec is not None:
            emb[i] = vec
    mask = np.zeros(max_len)
    mask[:len(tokens)] = 1.0
    n = len(tokens)
    edges = [(i, j) for i, j in annotation.dependency_edges if 1 <= i <= n and 1 <= j <= n]
    return QueryInstance(emb, mask, edges)


# ------------------------------------------------------------------ synthetic


@dataclass
class SyntheticDataset:
    manifest: DatasetManifest
    embeddings: dict[str, np.ndarray]


def generate_synthetic(seed: int, n_videos: int, T: int, D_v: int, vocab_size: int, L_max: int, *,
                       embed_dim: int = 300, min_len: int | None = None, max_len: int | None = None,
                       duration: float | None = None, signature_scale: float = 2.0) -> SyntheticDataset:
    """Videos of uniform noise with one planted, query-described moment each.

    Each video picks a concept; clips inside its planted interval receive the
    concept's signature (entries of magnitude ``signature_scale``).  The
    concept's token embedding is a fixed linear image of that signature, and
    it appears once in the paired query among filler tokens.  Dependency edges
    form a random tree.  One clip lasts ``duration / T`` seconds (1 s by default).
    """
    for name, value in (("n_videos", n_videos), ("T", T), ("D_v", D_v),
                        ("vocab_size", vocab_size), ("L_max", L_max), ("embed_dim", embed_dim)):
        if value <= 0:
            raise ConfigError(f"{name} must be positive, got {value}")
    min_len = max(1, T // 10) if min_len is None else min_len
    max_len = max(min_len, T // 2) if max_len is None else max_len
    if max_len > T or min_len < 1 or min_len > max_len:
        raise ConfigError(f"planted moment length range [{min_len}, {max_len}] does not fit T={T}")
    duration = float(T) if duration is None else float(duration)

    rng = np.random.default_rng(seed)
    n_concepts = max(1, vocab_size // 2)
    vocab = [f"w{i}" for i in range(vocab_size)]
    signatures = signature_scale * rng.choice([-1.0, 1.0], size=(n_concepts, D_v))
    lift = rng.normal(0.0, 1.0 / (signature_scale * np.sqrt(D_v)), size=(D_v, embed_dim))
    table = {}
    for i, tok in enumerate(vocab):
        table[tok] = signatures[i] @ lift if i < n_concepts else rng.normal(0.0, 1.0, embed_dim)
    fillers = vocab[n_concepts:] or vocab

    records = []
    for v in range(n_videos):
        concept = int(rng.integers(n_concepts))
        length = int(rng.integers(min_len, max_len + 1))
        start = int(rng.integers(0, T - length + 1))
        feats = rng.uniform(-1.0, 1.0, size=(T, D_v))
        feats[start:start + length] += signatures[concept]
        # store exactly what a float32 feature file can hold
        feats = feats.astype(np.float32).astype(np.float64)

        n_tok = int(rng.integers(min(2, L_max), L_max + 1))
        tokens = [fillers[int(k)] for k in rng.integers(len(fillers), size=n_tok)]
        tokens[int(rng.integers(n_tok))] = vocab[concept]
        edges = [(int(rng.integers(1, i)), i) for i in range(2, n_tok + 1)]
        ann = Annotation(f"q{v:04d}", tokens, edges,
                         start * duration / T, (start + length) * duration / T)
        records.append(VideoRecord(f"v{v:04d}", duration, feats, [ann], f"features/v{v:04d}.mmig"))
    return SyntheticDataset(DatasetManifest(records, T, L_max), table)


def write_synthetic(dataset: SyntheticDataset, out_dir) -> tuple[Path, Path]:
    """Write ``manifest.jsonl``, ``embeddings.txt`` and ``features/`` under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest_path = out / "manifest.jsonl"
    embed_path = out / "embeddings.txt"
    write_manifest(manifest_path, dataset.manifest)
    write_embeddings(embed_path, dataset.embeddings)
    return manifest_path, embed_path
