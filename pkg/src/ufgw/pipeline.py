"""Whole-graph alignment by covering the nodes with sampled batches."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .diffusion import PprMatrix, graph_cost_for_batch
from .errors import NumericalError, ValidationError
from .graph import Graph, sample_neighbor_batch
from .semantic import EmbeddingMatrix, build_measure_space, cosine_cost
from .solver import NODE_CLASSES, UfgwConfig, solve_ufgw


@dataclass(frozen=True)
class BatchResult:
    index: int
    node_ids: np.ndarray
    num_seeds: int
    report: object


@dataclass(frozen=True)
class NodeSummary:
    node: int
    batches: int
    row_mass: float
    rel_mass: float
    cost: float
    node_class: str
    class_counts: dict


def plan_batches(g: Graph, batch_size, fanout=10, hops=2, rng_seed=0) -> list:
    """Seed partition plus neighbor expansion covering every node at least once.

    Nodes are shuffled once and dealt round-robin into
    ``ceil(N / (batch_size // 2))`` seed groups; each group is expanded by
    neighbor sampling and truncated to ``batch_size`` (seeds come first, so
    they always survive).  With ``batch_size >= N`` there is a single batch
    holding every node in id order.
    """
    n = g.num_nodes
    if batch_size < 2:
        raise ValidationError("batch_size must be >= 2")
    if batch_size >= n:
        ids = np.arange(n, dtype=np.int64)
        return [(ids, n)]
    rng = np.random.default_rng(rng_seed)
    per_batch = batch_size // 2
    num = math.ceil(n / per_batch)
    perm = rng.permutation(n)
    out = []
    for k in range(num):
        seeds = perm[k::num]
        batch = sample_neighbor_batch(g, seeds, fanout, hops, int(rng.integers(2**63 - 1)))
        out.append((batch.node_ids[:batch_size], seeds.size))
    return out


def align_graph(g: Graph, emb: EmbeddingMatrix, ppr: PprMatrix, cfg: UfgwConfig, *, batch_size=512,
                fanout=10, hops=2, rng_seed=0, delta=1e-9, on_batch=None):
    """Solve UFGW on every batch and average per-node statistics.

    Returns ``(batches, nodes)``: one :class:`BatchResult` per batch in
    order and one :class:`NodeSummary` per node.  ``rel_mass`` is the row
    mass divided by the node's reference mass in that batch, which makes
    batches of different sizes comparable.  The summary class is the most
    frequent per-batch class, ties going to the more cautious label
    (rejected, then smoothed).
    """
    n = g.num_nodes
    if emb.values.shape[0] != n:
        raise ValidationError(f"embeddings have {emb.values.shape[0]} rows, graph has {n} nodes")
    if ppr.values.shape[0] != n:
        raise ValidationError(f"PPR matrix covers {ppr.values.shape[0]} nodes, graph has {n}")
    count = np.zeros(n, dtype=np.int64)
    mass = np.zeros(n)
    rel = np.zeros(n)
    cost = np.zeros(n)
    classes = {c: np.zeros(n, dtype=np.int64) for c in NODE_CLASSES}
    batches = []
    for k, (ids, num_seeds) in enumerate(plan_batches(g, batch_size, fanout, hops, rng_seed)):
        sem = build_measure_space(cosine_cost(emb, rows=ids), delta)
        graph_space = build_measure_space(graph_cost_for_batch(ppr, ids, delta), delta)
        try:
            _, rep = solve_ufgw(sem, graph_space, cfg)
        except NumericalError as exc:
            raise NumericalError(f"batch {k}: {exc.message}", exc.details) from exc
        count[ids] += 1
        mass[ids] += rep.row_mass
        rel[ids] += rep.row_mass / sem.mu
        cost[ids] += rep.alignment_cost
        for c in NODE_CLASSES:
            classes[c][ids] += rep.node_class == c
        result = BatchResult(k, ids, int(num_seeds), rep)
        batches.append(result)
        if on_batch is not None:
            on_batch(result)
    nodes = []
    preference = ("rejected", "smoothed", "anchor")
    for i in range(n):
        tally = {c: int(classes[c][i]) for c in NODE_CLASSES}
        label = max(preference, key=lambda c: (tally[c], -preference.index(c)))
        k = max(count[i], 1)
        nodes.append(NodeSummary(i, int(count[i]), mass[i] / k, rel[i] / k, cost[i] / k, label, tally))
    return batches, nodes
