"""Reward construction from a trained encoder and a demo set.

The reward model is a goal embedding g (mean last-frame embedding over
the demos) and a scale kappa (mean first-frame distance to g), giving
r(s) = -dist(phi(s), g) / kappa. With the default squared distance the
mean first-frame reward over the fitting set is exactly -1. The goal
classifier baseline skips g and kappa entirely and uses its sigmoid
output probability as the reward.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .demos import DemoVideo
from .embedding import (
    EncoderModel,
    classifier_logits_np,
    forward_np,
    load_model,
    save_model,
)

DISTANCE_KINDS = ("squared", "euclidean")
SOURCE_BY_ALGO = {
    "tcc": "xirl",
    "tcn": "tcn",
    "lifs": "lifs",
    "goal_classifier": "goal_classifier",
}


@dataclass(frozen=True)
class RewardModel:
    encoder: EncoderModel
    source: str  # xirl | tcn | lifs | goal_classifier
    goal: np.ndarray | None  # (d,), absent for goal_classifier
    kappa: float | None  # positive, absent for goal_classifier
    distance: str = "squared"
    augment_sparse: bool = False  # add the env's in-zone fraction to r

    def __post_init__(self):
        if self.distance not in DISTANCE_KINDS:
            raise ValueError(f"unknown distance kind {self.distance!r}")
        if self.source == "goal_classifier":
            if self.goal is not None or self.kappa is not None:
                raise ValueError("goal_classifier rewards carry no g or kappa")
        else:
            if self.goal is None or self.kappa is None:
                raise ValueError(f"{self.source} rewards need g and kappa")
            if not np.isfinite(self.goal).all():
                raise ValueError("goal embedding must be finite")
            if not self.kappa > 0:
                raise ValueError("kappa must be positive")


def _flat_frames(encoder: EncoderModel, frames: np.ndarray) -> np.ndarray:
    """Accept (n, G, G, 3), (G, G, 3), (n, G*G*3) or (G*G*3,) observations."""
    x = np.asarray(frames, dtype=np.float64)
    if x.ndim in (1, 3):
        x = x[None]
    x = x.reshape(x.shape[0], -1)
    if x.shape[1] != encoder.input_dim:
        raise ValueError(
            f"observation has {x.shape[1]} values, encoder wants {encoder.input_dim}"
        )
    return x


def compute_goal(encoder: EncoderModel, videos: list[DemoVideo]) -> np.ndarray:
    """Mean embedding of the last frame across all demos."""
    if not videos:
        raise ValueError("cannot fit a goal on an empty demo set")
    last = np.concatenate([v.frames_f64([len(v) - 1]) for v in videos], axis=0)
    return forward_np(encoder, last).mean(axis=0)


def _first_frame_distances(encoder, videos, goal, distance) -> np.ndarray:
    first = np.concatenate([v.frames_f64([0]) for v in videos], axis=0)
    d2 = ((forward_np(encoder, first) - goal[None, :]) ** 2).sum(axis=1)
    return d2 if distance == "squared" else np.sqrt(d2)


def compute_kappa(
    encoder: EncoderModel,
    videos: list[DemoVideo],
    goal: np.ndarray,
    distance: str = "squared",
) -> float:
    """Mean first-frame distance to the goal; the reward scale."""
    if not videos:
        raise ValueError("cannot fit a scale on an empty demo set")
    kappa = float(_first_frame_distances(encoder, videos, goal, distance).mean())
    if kappa < 1e-9:
        raise ValueError(
            "degenerate kappa: first frames already sit at the goal embedding, "
            "the encoder does not separate start from finish"
        )
    return kappa


def fit_reward_model(
    encoder: EncoderModel,
    videos: list[DemoVideo],
    distance: str = "squared",
    augment_sparse: bool = False,
) -> RewardModel:
    source = SOURCE_BY_ALGO[encoder.algo]
    if source == "goal_classifier":
        return RewardModel(encoder, source, None, None, distance, augment_sparse)
    goal = compute_goal(encoder, videos)
    kappa = compute_kappa(encoder, videos, goal, distance)
    return RewardModel(encoder, source, goal, kappa, distance, augment_sparse)


def reward(model: RewardModel, observation, in_zone: float | None = None) -> float:
    """Learned reward for one rendered observation.

    Embedding sources give r <= 0 with r = 0 exactly at the goal; the
    goal classifier gives its success probability in [0, 1]. When the
    model was fit with augment_sparse, the environment's in-zone
    fraction is added on top."""
    x = _flat_frames(model.encoder, observation)
    if model.source == "goal_classifier":
        logit = classifier_logits_np(model.encoder, x)[0]
        r = float(1.0 / (1.0 + np.exp(-logit)))
    else:
        d2 = float(((forward_np(model.encoder, x)[0] - model.goal) ** 2).sum())
        d = d2 if model.distance == "squared" else np.sqrt(d2)
        r = -d / model.kappa
    if model.augment_sparse and in_zone is not None:
        r += float(in_zone)
    return r


def reward_trace(model: RewardModel, video: DemoVideo) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame learned rewards beside the env's own, for plotting."""
    x = video.frames_f64()
    if model.source == "goal_classifier":
        logits = classifier_logits_np(model.encoder, x)
        learned = 1.0 / (1.0 + np.exp(-logits))
    else:
        d2 = ((forward_np(model.encoder, x) - model.goal[None, :]) ** 2).sum(axis=1)
        d = d2 if model.distance == "squared" else np.sqrt(d2)
        learned = -d / model.kappa
    return learned, video.rewards.astype(np.float64)


def save_reward_model(model: RewardModel, meta: dict, path: str | Path) -> None:
    """One checkpoint holds the encoder weights and the reward fit."""
    full = {
        **meta,
        "source": model.source,
        "distance": model.distance,
        "augment_sparse": model.augment_sparse,
    }
    if model.goal is not None:
        full["goal"] = [float(v) for v in model.goal]
        full["kappa"] = model.kappa
    save_model(model.encoder, full, path)


def load_reward_model(path: str | Path) -> tuple[RewardModel, dict]:
    encoder, meta = load_model(path)
    source = str(meta["source"])
    goal = np.array(meta["goal"], dtype=np.float64) if "goal" in meta else None
    kappa = float(meta["kappa"]) if "kappa" in meta else None
    model = RewardModel(
        encoder,
        source,
        goal,
        kappa,
        distance=str(meta.get("distance", "squared")),
        augment_sparse=bool(meta.get("augment_sparse", False)),
    )
    return model, meta


def refit(model: RewardModel, videos: list[DemoVideo]) -> RewardModel:
    """Recompute g and kappa for a new demo set, keeping the encoder."""
    if model.source == "goal_classifier":
        return model
    goal = compute_goal(model.encoder, videos)
    kappa = compute_kappa(model.encoder, videos, goal, model.distance)
    return replace(model, goal=goal, kappa=kappa)
