"""Run configuration, checkpoints, training/evaluation drivers and gradient checking."""

from __future__ import annotations

import dataclasses
import json
import logging
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import numerics as nx
from .encoder import encode_sentence, encode_video
from .errors import ConfigError, InputError, LoadError
from .estimator import MIGCNLocalizer, TraceEntry
from .graph import build_cross_modal, write_adjacency_csv
from .ingest import generate_synthetic, load_embeddings, load_manifest
from .localize import clip_span, seconds_to_clip_bounds, write_score_map
from .model import VARIANTS
from .objective import interval_iou
from .validation import samples_from_manifest

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"MMCK"


@dataclass
class RunConfig:
    """Everything a training run needs; JSON config files use these keys."""

    seed: int = 0
    d: int = 256
    T: int | None = None
    L_max: int = 10
    window_sizes: list = field(default_factory=lambda: [6, 12, 18, 24, 30, 36])
    stride: int = 3
    theta: float = 0.7
    lam: float = 0.3
    alpha: float = 0.1
    beta: float = 0.001
    learning_rate: float = 1e-3
    weight_decay: float = 1e-5
    dropout_p: float = 0.5
    batch_size: int = 128
    epochs: int = 10
    manifest: str | None = None
    embeddings: str | None = None
    variant: str = "gated"
    gate_bias: bool = False
    normalize_intra: bool = False
    # used when no manifest is given: keyword arguments of generate_synthetic
    synthetic: dict | None = None
    gradcheck_entries: int = 200
    gradcheck_tol: float = 1e-4

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        for name in ("d", "L_max", "stride", "batch_size", "gradcheck_entries"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be non-negative, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.T is not None and self.T <= 0:
            raise ConfigError(f"T must be positive, got {self.T}")

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        cfg = cls.from_dict(raw)
        base = Path(path).parent
        for key in ("manifest", "embeddings"):
            value = getattr(cfg, key)
            if value and not Path(value).is_absolute():
                setattr(cfg, key, str(base / value))
        return cfg

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def make_estimator(cfg: RunConfig) -> MIGCNLocalizer:
    return MIGCNLocalizer(d=cfg.d, window_sizes=tuple(cfg.window_sizes), stride=cfg.stride, theta=cfg.theta,
                          lam=cfg.lam, alpha=cfg.alpha, beta=cfg.beta, learning_rate=cfg.learning_rate,
                          weight_decay=cfg.weight_decay, dropout_p=cfg.dropout_p, batch_size=cfg.batch_size,
                          epochs=cfg.epochs, variant=cfg.variant, gate_bias=cfg.gate_bias,
                          normalize_intra=cfg.normalize_intra, random_state=cfg.seed)


def load_dataset(cfg: RunConfig, manifest: str | None = None, embeddings: str | None = None):
    """Return ``(X, y)`` from the configured manifest, or regenerate the synthetic set."""
    manifest = manifest or cfg.manifest
    if manifest:
        data = load_manifest(manifest, clip_count=cfg.T, max_query_len=cfg.L_max)
        emb_path = embeddings or cfg.embeddings or Path(manifest).parent / "embeddings.txt"
        if not Path(emb_path).exists():
            raise LoadError(f"missing embedding table {emb_path}")
        return samples_from_manifest(data, load_embeddings(emb_path), cfg.L_max)
    if cfg.synthetic is None or cfg.T is None:
        raise ConfigError("config needs either a manifest or a synthetic section plus T")
    extra = dict(cfg.synthetic)
    seed = extra.pop("seed", cfg.seed)
    n_videos = extra.pop("n_videos", 20)
    D_v = extra.pop("D_v", 16)
    vocab_size = extra.pop("vocab_size", 20)
    ds = generate_synthetic(seed, n_videos, cfg.T, D_v, vocab_size, cfg.L_max, **extra)
    return samples_from_manifest(ds.manifest, ds.embeddings, cfg.L_max)


# ------------------------------------------------------------------ checkpoints


@dataclass
class Checkpoint:
    config: dict
    params: list[tuple[str, np.ndarray]]
    step: int = 0
    dims: dict = field(default_factory=dict)

    @classmethod
    def from_estimator(cls, est: MIGCNLocalizer, cfg: RunConfig) -> "Checkpoint":
        dims = {"n_clips": est.n_clips_, "clip_dim": est.clip_dim_, "embed_dim": est.embed_dim_,
                "max_query_len": est.max_query_len_}
        return cls(cfg.to_dict(), [(p.name, p.value.copy()) for p in est.params_.params()], est.n_steps_, dims)

    def run_config(self) -> RunConfig:
        return RunConfig.from_dict(self.config)

    def to_estimator(self) -> MIGCNLocalizer:
        est = make_estimator(self.run_config())
        est.initialize(self.dims["n_clips"], self.dims["clip_dim"], self.dims["embed_dim"],
                       self.dims["max_query_len"])
        named = est.params_.named()
        if set(named) != {name for name, _ in self.params}:
            raise LoadError("checkpoint parameters do not match the configured model")
        for name, value in self.params:
            if named[name].shape != value.shape:
                raise LoadError(f"parameter {name}: shape {value.shape}, model expects {named[name].shape}")
            named[name].value = value.copy()
        est.n_steps_ = self.step
        return est

    def save(self, path) -> None:
        """Write ``MMCK``, the parameter list, then a length-prefixed JSON trailer."""
        chunks = [CHECKPOINT_MAGIC, struct.pack("<I", len(self.params))]
        for name, value in self.params:
            value = np.atleast_2d(np.asarray(value, dtype="<f8"))
            raw = name.encode("utf-8")
            chunks += [struct.pack("<H", len(raw)), raw, struct.pack("<II", *value.shape),
                       value.tobytes(order="C")]
        trailer = json.dumps({"config": self.config, "step": self.step, "dims": self.dims}).encode("utf-8")
        chunks += [struct.pack("<I", len(trailer)), trailer]
        Path(path).write_bytes(b"".join(chunks))

    @classmethod
    def load(cls, path) -> "Checkpoint":
        try:
            blob = Path(path).read_bytes()
        except OSError as exc:
            raise LoadError(f"cannot read checkpoint {path}: {exc}") from exc
        if blob[:4] != CHECKPOINT_MAGIC:
            raise LoadError(f"{path}: not a checkpoint (magic {blob[:4]!r})")
        try:
            (count,) = struct.unpack_from("<I", blob, 4)
            pos, params = 8, []
            for _ in range(count):
                (n,) = struct.unpack_from("<H", blob, pos)
                name = blob[pos + 2:pos + 2 + n].decode("utf-8")
                pos += 2 + n
                rows, cols = struct.unpack_from("<II", blob, pos)
                pos += 8
                values = np.frombuffer(blob, dtype="<f8", count=rows * cols, offset=pos)
                params.append((name, values.reshape(rows, cols).astype(np.float64)))
                pos += 8 * rows * cols
            meta = {}
            if pos < len(blob):
                (n,) = struct.unpack_from("<I", blob, pos)
                meta = json.loads(blob[pos + 4:pos + 4 + n].decode("utf-8"))
        except (struct.error, ValueError, UnicodeDecodeError) as exc:
            raise LoadError(f"{path}: corrupt checkpoint: {exc}") from exc
        return cls(meta.get("config", {}), params, meta.get("step", 0), meta.get("dims", {}))


# ---------------------------------------------------------------------- drivers


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    trace: list[TraceEntry]
    estimator: MIGCNLocalizer
    seconds: float


def train(cfg: RunConfig, X=None, y=None) -> TrainResult:
    """Fit a model per ``cfg`` and package the result as a checkpoint."""
    if X is None:
        X, y = load_dataset(cfg)
    est = make_estimator(cfg)
    start = time.perf_counter()
    est.fit(X, y)
    elapsed = time.perf_counter() - start
    logger.info("trained %d steps in %.2fs", est.n_steps_, elapsed)
    return TrainResult(Checkpoint.from_estimator(est, cfg), est.loss_trace_, est, elapsed)


def recall_at_1(pred: np.ndarray, y: np.ndarray, thresholds) -> dict[float, float]:
    """Percentage of predictions whose IoU with ``y`` is strictly greater than each threshold."""
    pred, y = np.asarray(pred, dtype=float), np.asarray(y, dtype=float)
    if len(y) == 0:
        raise InputError("cannot evaluate an empty dataset")
    ious = interval_iou(pred[:, 0], pred[:, 1], y[:, 0], y[:, 1])
    out = {}
    for n in thresholds:
        if not 0.0 < n < 1.0:
            raise ConfigError(f"IoU thresholds must lie in (0, 1), got {n}")
        out[float(n)] = 100.0 * float(np.count_nonzero(ious > n)) / len(y)
    return out


def evaluate(model, X, y, thresholds=(0.3, 0.5, 0.7)) -> dict[float, float]:
    """R@1 at each IoU threshold, in percent."""
    est = model.to_estimator() if isinstance(model, Checkpoint) else model
    if len(X) == 0:
        raise InputError("cannot evaluate an empty dataset")
    return recall_at_1(est.predict(X), y, thresholds)


def select_sample(X, y, video_id: str, query_id: str):
    for i, s in enumerate(X):
        if s.video_id == video_id and s.query_id == query_id:
            return s, y[i]
    raise InputError(f"no query {query_id!r} for video {video_id!r}")


def export_scores(checkpoint: Checkpoint, video_id: str, query_id: str, out_path,
                  X=None, y=None) -> list:
    """Write the candidate score map for one query, with each candidate's ground-truth IoU."""
    est = checkpoint.to_estimator()
    if X is None:
        X, y = load_dataset(checkpoint.run_config())
    sample, gt = select_sample(X, y, video_id, query_id)
    moments = est.predict_candidates([sample])[0]
    gs, ge = clip_span(*seconds_to_clip_bounds(gt[0], gt[1], sample.duration, est.n_clips_))
    cs, ce = clip_span(np.array([m.t_s for m in moments], float), np.array([m.t_e for m in moments], float))
    ious = interval_iou(cs, ce, gs, ge)
    write_score_map(out_path, moments, ious)
    return moments


def dump_graph(est: MIGCNLocalizer, sample, out_dir) -> None:
    """Write the four adjacency matrices of one example as CSV files."""
    arrays, a_vv, a_ss = est.prepare([sample])
    with nx.no_grad():
        v0 = encode_video(arrays.features[0], est.params_.video)
        s0 = encode_sentence(arrays.embeddings[0], arrays.mask[0], est.params_.query)
        a_sv, a_vs = build_cross_modal(v0, s0, arrays.mask[0])
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, adj in (("a_vv", a_vv[0]), ("a_ss", a_ss[0]), ("a_sv", a_sv), ("a_vs", a_vs)):
        write_adjacency_csv(out / f"{name}.csv", adj)


# -------------------------------------------------------------------- gradcheck


@dataclass
class GradcheckReport:
    errors: dict[str, float]
    entries: int
    seconds: float
    tol: float

    @property
    def worst(self) -> tuple[str, float]:
        name = max(self.errors, key=self.errors.get)
        return name, self.errors[name]

    @property
    def passed(self) -> bool:
        return self.worst[1] < self.tol

    def format(self) -> str:
        lines = [f"{name:28s} {err:.3e}" for name, err in self.errors.items()]
        name, err = self.worst
        lines.append(f"checked {self.entries} entries in {self.seconds:.1f}s; worst {name} {err:.3e} "
                     f"({'PASS' if self.passed else 'FAIL'} at tol {self.tol:g})")
        return "\n".join(lines)


def relative_error(analytic: float, numeric: float, floor: float = 1e-6) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def gradcheck(cfg: RunConfig, X=None, y=None, h: float = 1e-5) -> GradcheckReport:
    """Compare tape gradients of the dropout-free objective with central differences.

    Every entry of a parameter is checked when it has at most
    ``cfg.gradcheck_entries`` entries, otherwise a seeded random subset.
    """
    if X is None:
        X, y = load_dataset(cfg)
    est = make_estimator(cfg)
    rng = np.random.default_rng(cfg.seed)
    start = time.perf_counter()
    arrays = est.prepare(X)[0]
    est.initialize(arrays.features.shape[1], arrays.features.shape[2], arrays.embeddings.shape[2],
                   arrays.embeddings.shape[1], rng)
    arrays, a_vv, a_ss = est.prepare(X)
    gt = est.clip_targets(arrays, y)
    idx = np.arange(len(arrays))

    def objective():
        return nx.mean(est.batch_loss(arrays, a_vv, a_ss, gt, idx).total)

    params = est.params_.params()
    nx.backward(objective(), params)
    analytic = {p.name: p.grad.copy() for p in params}

    def value():
        with nx.no_grad():
            return float(objective().value)

    errors, entries = {}, 0
    for p in params:
        size = p.value.size
        flat = np.arange(size) if size <= cfg.gradcheck_entries else \
            rng.choice(size, cfg.gradcheck_entries, replace=False)
        worst = 0.0
        for k in flat:
            index = np.unravel_index(k, p.shape)
            numeric = nx.finite_difference(value, p.value, index, h)
            worst = max(worst, relative_error(analytic[p.name][index], numeric))
        errors[p.name] = worst
        entries += len(flat)
    return GradcheckReport(errors, entries, time.perf_counter() - start, cfg.gradcheck_tol)
