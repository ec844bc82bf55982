"""Temperature-scaled in-batch contrastive loss (NT-Xent).

Rows i and i + N of the input are the two views of graph i. Similarity is
the cosine of the internally normalized projections; each anchor's positive
competes against the other 2N - 2 views in the batch.
"""

from __future__ import annotations

import numpy as np

from ..errors import SceneCovError

_NORM_FLOOR = 1e-12


def nt_xent_loss(projections: np.ndarray, temperature: float) -> tuple[float, np.ndarray]:
    """Compute the loss and its gradient w.r.t. the raw projections.

    projections: (2N, d) with N >= 2, rows i and i + N forming the
    positive pairs. Returns (mean negative log-likelihood over all 2N
    anchors, gradient array of the same shape).
    """
    p = np.asarray(projections, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] % 2 != 0:
        raise SceneCovError("projections must be a (2N, d) array")
    two_n = p.shape[0]
    n = two_n // 2
    if n < 2:
        raise SceneCovError("NT-Xent needs at least 2 graphs per batch")
    if temperature <= 0:
        raise SceneCovError("temperature must be positive")

    norms = np.linalg.norm(p, axis=1)
    safe = norms > _NORM_FLOOR
    u = np.where(safe[:, None], p / np.maximum(norms, _NORM_FLOOR)[:, None], 0.0)
    # degenerate zero rows keep a constant unit direction, with no gradient
    u[~safe, 0] = 1.0

    sim = u @ u.T
    logits = sim / temperature
    np.fill_diagonal(logits, -np.inf)
    row_max = logits.max(axis=1, keepdims=True)
    exp = np.exp(logits - row_max)
    denom = exp.sum(axis=1, keepdims=True)
    log_softmax = logits - row_max - np.log(denom)
    positive = (np.arange(two_n) + n) % two_n
    loss = float(-log_softmax[np.arange(two_n), positive].mean())

    softmax = exp / denom
    d_logits = softmax.copy()
    d_logits[np.arange(two_n), positive] -= 1.0
    d_logits /= two_n
    np.fill_diagonal(d_logits, 0.0)
    d_sim = d_logits / temperature
    d_u = (d_sim + d_sim.T) @ u

    dot = np.einsum("ij,ij->i", u, d_u)
    d_p = np.where(safe[:, None],
                   (d_u - u * dot[:, None]) / np.maximum(norms, _NORM_FLOOR)[:, None],
                   0.0)
    return loss, d_p
