"""Edge-level cross-modal agreement: where text and image similarity disagree."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .graph import Graph
from .semantic import EmbeddingMatrix

QUADRANTS = ("both_similar", "text_only", "image_only", "neither")


@dataclass(frozen=True)
class ConflictSample:
    edges: np.ndarray
    cos_text: np.ndarray
    cos_image: np.ndarray
    tags: np.ndarray
    theta: float

    def counts(self) -> dict:
        return {q: int(np.sum(self.tags == q)) for q in QUADRANTS}

    def shares(self) -> dict:
        total = max(len(self.tags), 1)
        return {q: c / total for q, c in self.counts().items()}


def quadrant(cos_text, cos_image, theta=0.5) -> np.ndarray:
    """Tag each pair by which modalities call it similar (``cos >= theta``)."""
    t = np.asarray(cos_text) >= theta
    i = np.asarray(cos_image) >= theta
    out = np.where(t & i, "both_similar", np.where(t, "text_only", np.where(i, "image_only", "neither")))
    return out.astype(str)


def _edge_cosine(H, edges):
    norms = np.linalg.norm(H, axis=1)
    bad = np.flatnonzero(norms[edges].min(axis=1) == 0) if len(edges) else []
    if len(bad):
        i, j = edges[bad[0]]
        node = i if norms[i] == 0 else j
        raise ValidationError(f"embedding row {int(node)} has zero norm")
    a, b = H[edges[:, 0]], H[edges[:, 1]]
    return np.einsum("ij,ij->i", a, b) / (norms[edges[:, 0]] * norms[edges[:, 1]])


def analyze_conflict(g: Graph, text: EmbeddingMatrix, image: EmbeddingMatrix, sample_edges=1000,
                     rng_seed=0, theta=0.5) -> ConflictSample:
    """Sample ``min(sample_edges, |E|)`` edges without replacement and tag them.

    Sampled edges are reported in canonical edge order so that the output
    does not depend on the draw order.
    """
    for emb, name in ((text, "text"), (image, "image")):
        if emb.values.shape[0] != g.num_nodes:
            raise ValidationError(f"{name} embeddings have {emb.values.shape[0]} rows, graph has {g.num_nodes} nodes")
    if sample_edges < 1:
        raise ValidationError("sample_edges must be >= 1")
    all_edges = g.edges
    k = min(int(sample_edges), len(all_edges))
    rng = np.random.default_rng(rng_seed)
    idx = np.sort(rng.choice(len(all_edges), size=k, replace=False))
    edges = all_edges[idx]
    ct = _edge_cosine(text.values, edges)
    ci = _edge_cosine(image.values, edges)
    return ConflictSample(edges, ct, ci, quadrant(ct, ci, theta), float(theta))
