"""Representation training loop shared by all four algorithms.

Videos are sampled uniformly from the merged demo pool with no embodiment
labels attached (lifs is the exception: its pairing rule wants two
different embodiments, which is part of that baseline's definition).
Every randomness source is one seeded generator, so a (config, videos)
pair reproduces checkpoints byte for byte.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .demos import DemoVideo, FrameSamplerConfig, sample_frames
from .embedding import ALGORITHMS, EncoderModel, embed_sequence, forward_var, make_model
from .losses import goal_classifier_loss, lifs_loss, tcc_loss, tcn_loss
from .alignment import mean_tau
from .nn import Adam, zero_grads

GC_NEGATIVE_GAP = 6  # negatives sit at least this many indices before the end


@dataclass(frozen=True)
class ReprTrainConfig:
    algorithm: str
    iterations: int
    batch_videos: int = 4
    frames_per_video: int = 40
    embedding_dim: int = 32
    normalize: bool | None = None  # None = the algorithm's own default
    learning_rate: float = 1e-4
    beta1: float = 0.99
    beta2: float = 0.999
    weight_decay: float = 1e-5
    lifs_lambda: float = 1.0
    eval_period: int = 250
    seed: int = 0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.frames_per_video < 2:
            raise ValueError("frames_per_video must be >= 2")
        if self.algorithm in ("tcc", "lifs") and self.batch_videos < 2:
            raise ValueError(f"{self.algorithm} needs batch_videos >= 2")


def _pick_videos(videos, count, rng):
    n = len(videos)
    idx = rng.choice(n, size=count, replace=n < count)
    return [videos[int(i)] for i in idx]


def _tcc_batch(model, videos, cfg, rng):
    seqs = []
    sampler = FrameSamplerConfig("uniform", cfg.frames_per_video)
    for v in _pick_videos(videos, cfg.batch_videos, rng):
        idx = sample_frames(len(v), sampler, rng)
        seqs.append(forward_var(model, v.frames_f64(idx)))
    return tcc_loss(seqs)


def _tcn_batch(model, videos, cfg, rng):
    seqs = []
    for v in _pick_videos(videos, cfg.batch_videos, rng):
        n = min(cfg.frames_per_video, len(v))
        idx = sample_frames(len(v), FrameSamplerConfig("contiguous", n), rng)
        seqs.append(forward_var(model, v.frames_f64(idx)))
    return tcn_loss(seqs, ad.exp(model.log_temp))


def _lifs_batch(model, videos, cfg, rng):
    sampler = FrameSamplerConfig("uniform", cfg.frames_per_video)
    total = None
    pairs = max(1, cfg.batch_videos // 2)
    for _ in range(pairs):
        a = videos[int(rng.integers(len(videos)))]
        partners = [v for v in videos if v.embodiment != a.embodiment]
        if not partners:  # single-embodiment pool: any other video
            partners = [v for v in videos if v is not a] or [a]
        b = partners[int(rng.integers(len(partners)))]
        xa = a.frames_f64(sample_frames(len(a), sampler, rng))
        xb = b.frames_f64(sample_frames(len(b), sampler, rng))
        za, zb = forward_var(model, xa), forward_var(model, xb)
        ra, rb = model.decoder(za), model.decoder(zb)
        term = lifs_loss(za, zb, ra, rb, xa, xb, lam=cfg.lifs_lambda)
        total = term if total is None else ad.add(total, term)
    return ad.div(total, float(pairs))


def _gc_batch(model, videos, cfg, rng):
    frames, labels = [], []
    for v in _pick_videos(videos, cfg.batch_videos, rng):
        L = len(v)
        frames.append(v.frames_f64([L - 1]))
        labels.append(1.0)
        eligible = np.arange(max(0, L - GC_NEGATIVE_GAP))
        if eligible.size == 0:
            warnings.warn(
                f"{v.embodiment} demo with {L} frames is too short to give "
                f"negatives; using it for positives only"
            )
            continue
        take = min(cfg.frames_per_video - 1, eligible.size)
        neg_idx = np.sort(rng.choice(eligible, size=take, replace=False))
        frames.append(v.frames_f64(neg_idx))
        labels.extend([0.0] * take)
    x = np.concatenate(frames, axis=0)
    z = forward_var(model, x)
    logits = model.head(z)
    return goal_classifier_loss(logits, np.asarray(labels))


_BATCH_BUILDERS = {
    "tcc": _tcc_batch,
    "tcn": _tcn_batch,
    "lifs": _lifs_batch,
    "goal_classifier": _gc_batch,
}


def _tau_of(model: EncoderModel, vids: list[DemoVideo]) -> float:
    if len(vids) < 2:
        return float("nan")
    seqs = [embed_sequence(model, v.frames_f64(), v.embodiment) for v in vids]
    return mean_tau(seqs)


def train(
    videos: list[DemoVideo],
    cfg: ReprTrainConfig,
    heldout: list[DemoVideo] | None = None,
    on_eval=None,
):
    """Train an encoder; returns (model, eval rows, metadata).

    Eval rows are (iteration, loss, mean_train_tau, mean_heldout_tau),
    emitted every cfg.eval_period iterations and at the end. For lifs the
    returned weights are the snapshot with the best evaluation tau (early
    stopping); other algorithms return the final weights."""
    if not videos:
        raise ValueError("no training videos")
    if cfg.algorithm in ("tcc", "lifs") and len(videos) < 2:
        raise ValueError(f"{cfg.algorithm} needs at least 2 videos")
    grid = videos[0].grids.shape[1]
    rng = np.random.default_rng(cfg.seed)
    model = make_model(cfg.algorithm, grid, cfg.embedding_dim, cfg.seed, cfg.normalize)
    params = model.parameters()
    opt = Adam(
        params,
        lr=cfg.learning_rate,
        beta1=cfg.beta1,
        beta2=cfg.beta2,
        weight_decay=cfg.weight_decay,
    )
    build = _BATCH_BUILDERS[cfg.algorithm]
    eval_train = videos[: min(8, len(videos))]
    eval_held = (heldout or [])[:8]

    rows: list[tuple[int, float, float, float]] = []
    best_tau, best_snap = -np.inf, None
    for it in range(1, cfg.iterations + 1):
        loss = build(model, videos, cfg, rng)
        if not np.isfinite(loss.data):
            raise RuntimeError(
                f"{cfg.algorithm} loss became non-finite at iteration {it}"
            )
        zero_grads(params)
        loss.backward()
        opt.step()
        if it % cfg.eval_period == 0 or it == cfg.iterations:
            tr = _tau_of(model, eval_train)
            ho = _tau_of(model, eval_held) if eval_held else float("nan")
            rows.append((it, float(loss.data), tr, ho))
            if on_eval is not None:
                on_eval(model, rows[-1])
            if cfg.algorithm == "lifs":
                score = ho if eval_held else tr
                if np.isfinite(score) and score > best_tau:
                    best_tau = score
                    best_snap = [p.data.copy() for p in params]
    if cfg.algorithm == "lifs" and best_snap is not None:
        for p, snap in zip(params, best_snap):
            p.data = snap

    meta = {
        "algorithm": cfg.algorithm,
        "iterations": cfg.iterations,
        "batch_videos": cfg.batch_videos,
        "frames_per_video": cfg.frames_per_video,
        "learning_rate": cfg.learning_rate,
        "seed": cfg.seed,
        "embodiments": sorted({v.embodiment for v in videos}),
        "num_videos": len(videos),
    }
    return model, rows, meta
