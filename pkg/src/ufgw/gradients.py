"""Regularizer gradients with the transport plan held fixed.

Only the structural (quadratic) term depends on the semantic cost, so with a
detached plan the anchor, KL and entropy terms contribute nothing here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .semantic import EmbeddingMatrix


@dataclass(frozen=True)
class RegGradient:
    d_cost: np.ndarray
    d_embeddings: np.ndarray


def _plan_values(pi):
    return np.asarray(getattr(pi, "pi", pi), dtype=np.float64)


def grad_wrt_cost(Cm, Cg, pi_detached, alpha) -> np.ndarray:
    """d/dCm of ``alpha * sum (Cm[i,k] - Cg[j,l])**2 pi[i,j] pi[k,l]``.

    Closed form ``2 alpha (Cm * r r^T - pi Cg pi^T)`` with ``r = pi 1``.
    """
    A = np.asarray(getattr(Cm, "values", Cm), dtype=np.float64)
    B = np.asarray(getattr(Cg, "values", Cg), dtype=np.float64)
    P = _plan_values(pi_detached)
    r = P.sum(axis=1)
    return 2.0 * alpha * (A * np.outer(r, r) - P @ B @ P.T)


def grad_wrt_embeddings(emb, d_cost, normalization_mean, delta=1e-9, rows=None) -> np.ndarray:
    """Pull a gradient on the normalized cosine cost back to the embedding rows.

    Parameters
    ----------
    emb : EmbeddingMatrix or (N, d) array
    d_cost : (n, n) array
        Gradient with respect to the normalized cost ``C / (mean(C) + delta)``.
    normalization_mean : float
        ``mean(C)`` of the raw cosine cost the normalized matrix came from.
    rows : index array, optional
        Embedding rows that make up the batch (default: all rows).

    Returns
    -------
    (n, d) array, one row per batch node.
    """
    H = emb.values if isinstance(emb, EmbeddingMatrix) else np.asarray(emb, dtype=np.float64)
    if rows is not None:
        H = H[np.asarray(rows)]
    g = np.asarray(d_cost, dtype=np.float64)
    n = H.shape[0]
    if g.shape != (n, n):
        raise ValidationError(f"d_cost shape {g.shape} does not match {n} embedding rows")
    norms = np.linalg.norm(H, axis=1)
    if np.any(norms == 0):
        raise ValidationError(f"embedding row {int(np.flatnonzero(norms == 0)[0])} has zero norm")
    norms = np.maximum(norms, 1e-12)
    Hn = H / norms[:, None]
    cos = Hn @ Hn.T
    C = 1.0 - cos
    np.fill_diagonal(C, 0.0)
    scale = normalization_mean + delta
    # through C_bar = C / (mean(C) + delta)
    gC = g / scale - np.sum(g * C) / (scale**2 * n * n)
    # the diagonal is pinned at zero
    np.fill_diagonal(gC, 0.0)
    S = -(gC + gC.T)
    return (S @ Hn - np.sum(S * cos, axis=1)[:, None] * Hn) / norms[:, None]


def regularizer_gradient(emb, rows, semantic_cost, graph_cost, plan, alpha, delta=1e-9) -> RegGradient:
    """Cost and embedding gradients of the detached-plan regularizer for one batch."""
    d_cost = grad_wrt_cost(semantic_cost, graph_cost, plan, alpha)
    d_emb = grad_wrt_embeddings(emb, d_cost, semantic_cost.normalization_mean, delta, rows)
    return RegGradient(d_cost, d_emb)
