"""Alignment quality metrics between embedding sequences."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .embedding import EmbeddingSequence


def kendalls_tau(z_i: np.ndarray, z_j: np.ndarray) -> float:
    """Rank correlation between frame order and nearest-neighbor retrieval.

    Each frame of `z_i` retrieves its hard nearest neighbor in `z_j`
    (squared L2, ties to the lower index); tau-b between source and
    retrieved indices. A degenerate (constant) retrieval yields 0."""
    z_i, z_j = np.asarray(z_i, float), np.asarray(z_j, float)
    if z_i.shape[0] < 2 or z_j.shape[0] < 2:
        raise ValueError("kendalls_tau needs sequences of length >= 2")
    d = ((z_i[:, None, :] - z_j[None, :, :]) ** 2).sum(axis=2)
    retrieved = d.argmin(axis=1)
    tau = stats.kendalltau(np.arange(z_i.shape[0]), retrieved, variant="b").statistic
    return 0.0 if np.isnan(tau) else float(tau)


@dataclass(frozen=True)
class AlignmentReport:
    pair_taus: list[tuple[str, str, float]]  # (embodiment_i, embodiment_j, tau)
    mean_tau: float
    mean_same_embodiment: float
    mean_cross_embodiment: float


def alignment_report(seqs: list[EmbeddingSequence]) -> AlignmentReport:
    """Tau over every ordered pair of distinct sequences."""
    if len(seqs) < 2:
        raise ValueError("alignment needs at least 2 sequences")
    pairs: list[tuple[str, str, float]] = []
    for i, a in enumerate(seqs):
        for j, b in enumerate(seqs):
            if i == j:
                continue
            pairs.append((a.embodiment, b.embodiment, kendalls_tau(a.z, b.z)))
    taus = np.array([t for _, _, t in pairs])
    same = np.array([t for ei, ej, t in pairs if ei == ej])
    cross = np.array([t for ei, ej, t in pairs if ei != ej])
    return AlignmentReport(
        pair_taus=pairs,
        mean_tau=float(taus.mean()),
        mean_same_embodiment=float(same.mean()) if same.size else float("nan"),
        mean_cross_embodiment=float(cross.mean()) if cross.size else float("nan"),
    )


def mean_tau(seqs: list[EmbeddingSequence]) -> float:
    return alignment_report(seqs).mean_tau
