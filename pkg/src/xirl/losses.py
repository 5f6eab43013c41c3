"""Self-supervised alignment losses over embedding sequences.

All losses are pure functions of `autodiff.Var` inputs so their gradients
flow back into whatever produced the embeddings. Distances are squared L2
throughout. Time indices are normalized to [0, 1] (index / (L - 1)) so
videos of different lengths regress onto a common scale.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Var, as_var


def _norm_index(length: int) -> np.ndarray:
    return np.arange(length, dtype=np.float64) / max(length - 1, 1)


def soft_nn(q, v) -> tuple[Var, Var]:
    """Soft nearest neighbor of query `q` in sequence `v` (L, d).

    Returns (alpha, v_tilde): alpha is the softmax over negative squared
    distances, v_tilde the alpha-weighted combination of v's rows."""
    q, v = as_var(q), as_var(v)
    if v.data.ndim != 2 or v.data.shape[0] == 0:
        raise ValueError("soft_nn needs a non-empty (L, d) sequence")
    row = ad.reshape(q, (1, -1))
    alpha = ad.softmax(ad.neg(ad.pairwise_sqdist(row, v)), axis=1)
    v_tilde = ad.matmul(alpha, v)
    return ad.reshape(alpha, (-1,)), ad.reshape(v_tilde, (-1,))


def cycle_back(v_tilde, v_i, t: int) -> tuple[Var, Var, Var]:
    """Cycle `v_tilde` back into its source sequence `v_i`.

    Returns (beta, mu, loss): beta the soft retrieval distribution over
    v_i's frames, mu the expected retrieved index in normalized time, and
    loss = (mu - t / (L - 1))^2."""
    v_tilde, v_i = as_var(v_tilde), as_var(v_i)
    L = v_i.data.shape[0]
    if not 0 <= t < L:
        raise ValueError(f"frame index {t} outside [0, {L})")
    row = ad.reshape(v_tilde, (1, -1))
    beta = ad.reshape(ad.softmax(ad.neg(ad.pairwise_sqdist(row, v_i)), axis=1), (-1,))
    idx = _norm_index(L)
    mu = ad.vsum(ad.mul(beta, idx))
    loss = ad.square(ad.sub(mu, idx[t]))
    return beta, mu, loss


def tcc_loss(seqs: Sequence) -> Var:
    """Temporal cycle-consistency over all ordered sequence pairs.

    Every frame of every sequence cycles through every other sequence; the
    result is the mean of the per-frame squared index-regression errors."""
    if len(seqs) < 2:
        raise ValueError("tcc_loss needs at least 2 sequences")
    vs = [as_var(s) for s in seqs]
    total = None
    count = 0
    for i, a in enumerate(vs):
        idx = _norm_index(a.data.shape[0])
        for j, b in enumerate(vs):
            if i == j:
                continue
            alphas = ad.softmax(ad.neg(ad.pairwise_sqdist(a, b)), axis=1)
            v_tilde = ad.matmul(alphas, b)  # (L_a, d)
            betas = ad.softmax(ad.neg(ad.pairwise_sqdist(v_tilde, a)), axis=1)
            mu = ad.vsum(ad.mul(betas, idx[None, :]), axis=1)  # (L_a,)
            pair = ad.vsum(ad.square(ad.sub(mu, idx)))
            total = pair if total is None else ad.add(total, pair)
            count += a.data.shape[0]
    return ad.div(total, float(count))


POSITIVE_WINDOW = 1
NEGATIVE_WINDOW = 4


def tcn_loss(seqs: Sequence, temperature) -> Var:
    """Time-contrastive loss over contiguous frame chunks.

    For every anchor frame, frames within index distance 1 are positives
    and frames beyond distance 4 are negatives (2..4 take part in
    neither). Each (anchor, positive) pair contributes
    -log(e^{s_p} / (e^{s_p} + sum_n e^{s_n})), with s = -squared distance
    / temperature."""
    temperature = as_var(temperature)
    total = None
    count = 0
    for s in seqs:
        z = as_var(s)
        n = z.data.shape[0]
        for anchor in range(n):
            offsets = np.abs(np.arange(n) - anchor)
            pos = np.flatnonzero((offsets > 0) & (offsets <= POSITIVE_WINDOW))
            neg = np.flatnonzero(offsets > NEGATIVE_WINDOW)
            if pos.size == 0 or neg.size == 0:
                continue
            row = ad.pairwise_sqdist(ad.gather_rows(z, [anchor]), z)  # (1, n)
            col = ad.reshape(row, (n, 1))
            s_neg = ad.div(ad.neg(ad.reshape(ad.gather_rows(col, neg), (-1,))), temperature)
            s_pos = ad.div(ad.neg(ad.reshape(ad.gather_rows(col, pos), (-1,))), temperature)
            # logsumexp over the negatives, shifted by a constant for
            # stability (any constant shift leaves the value and gradient
            # exact)
            shift = float(s_neg.data.max())
            lse = ad.add(ad.log(ad.vsum(ad.exp(ad.sub(s_neg, shift)))), shift)
            terms = ad.softplus(ad.sub(lse, s_pos))
            total = ad.vsum(terms) if total is None else ad.add(total, ad.vsum(terms))
            count += pos.size
    if count == 0:
        raise ValueError(
            f"no anchor had a negative: chunks must exceed {NEGATIVE_WINDOW + 1} frames"
        )
    return ad.div(total, float(count))


def nearest_time_pairing(length_a: int, length_b: int) -> np.ndarray:
    """For each frame t of video a, the frame of video b whose normalized
    time index is nearest (ties resolved toward the lower index)."""
    ta = _norm_index(length_a)
    tb = _norm_index(length_b)
    return np.abs(ta[:, None] - tb[None, :]).argmin(axis=1)


def lifs_loss(z_a, z_b, recon_a, recon_b, x_a, x_b, lam: float = 1.0) -> Var:
    """Time-alignment loss with a reconstruction term.

    Frames of the two videos are paired by nearest normalized time index
    (both directions); the loss is the mean squared embedding distance
    over those pairs plus `lam` times the mean squared reconstruction
    error of the decoder outputs against the raw inputs."""
    z_a, z_b = as_var(z_a), as_var(z_b)
    recon_a, recon_b = as_var(recon_a), as_var(recon_b)
    x_a, x_b = as_var(x_a), as_var(x_b)
    la, lb = z_a.data.shape[0], z_b.data.shape[0]

    ab = nearest_time_pairing(la, lb)
    ba = nearest_time_pairing(lb, la)
    d_ab = ad.vsum(ad.square(ad.sub(z_a, ad.gather_rows(z_b, ab))))
    d_ba = ad.vsum(ad.square(ad.sub(z_b, ad.gather_rows(z_a, ba))))
    pair = ad.div(ad.add(d_ab, d_ba), float(la + lb))

    r = ad.add(
        ad.vsum(ad.square(ad.sub(recon_a, x_a))),
        ad.vsum(ad.square(ad.sub(recon_b, x_b))),
    )
    recon = ad.div(r, float(x_a.data.size + x_b.data.size))
    return ad.add(pair, ad.mul(lam, recon))


def goal_classifier_loss(logits, labels) -> Var:
    """Binary cross-entropy of a sigmoid head; labels in {0, 1}."""
    z = ad.reshape(as_var(logits), (-1,))
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if z.data.shape[0] != y.shape[0]:
        raise ValueError("logits and labels disagree in length")
    if not (y == 1.0).any() or not (y == 0.0).any():
        raise ValueError("batch needs at least one positive and one negative")
    # softplus(z) - z*y is -log sigmoid(z) for y=1 and -log(1-sigmoid(z))
    # for y=0, computed without exponent overflow
    return ad.vmean(ad.sub(ad.softplus(z), ad.mul(z, y)))
