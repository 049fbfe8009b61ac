"""Synthetic multimodal graphs with planted conflicts, and a toy training loop.

The generator gives every node a text cluster and an image cluster.  Most
nodes are *matched* (same cluster in both modalities); a few *mismatched*
nodes carry an image cluster that differs from their text cluster.  Edges
between matched nodes of one cluster are ``both_similar``; every conflict
edge joins a mismatched node to a matched node, either inside its text
cluster (``text_only``) or inside its image cluster (``image_only``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .diffusion import compute_ppr, graph_cost_for_batch
from .errors import NumericalError, ValidationError
from .gradients import regularizer_gradient
from .graph import Graph, sample_neighbor_batch, save_edge_list
from .semantic import EmbeddingMatrix, build_measure_space, cosine_cost, write_embeddings
from .solver import UfgwConfig, solve_ufgw

EDGE_TAGS = ("both_similar", "text_only", "image_only", "neither")


@dataclass(frozen=True)
class SyntheticMag:
    graph: Graph
    text_emb: EmbeddingMatrix
    image_emb: EmbeddingMatrix
    conflict_labels: np.ndarray
    text_labels: np.ndarray
    image_labels: np.ndarray

    @property
    def conflict_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.text_labels != self.image_labels)


def _orthonormal_rows(rng, k, dim):
    Q, _ = np.linalg.qr(rng.normal(size=(dim, k)))
    return Q.T


def generate_synthetic_mag(n=200, clusters=4, conflict_fraction=0.3, rng_seed=0, *,
                           dim=32, noise=0.1, avg_degree=6.0, nuisance_dims=0,
                           nuisance_scale=0.0) -> SyntheticMag:
    """Planted-conflict multimodal graph.

    ``noise`` is the per-coordinate standard deviation added to unit-norm,
    mutually orthogonal cluster centers in ``dim`` dimensions.  About
    ``conflict_fraction * n / 2`` nodes are mismatched, which keeps their
    degree close to the average.

    ``nuisance_dims`` extra directions, orthogonal to every cluster center,
    get Gaussian coordinates of standard deviation ``nuisance_scale``.  They
    carry no cluster information but dominate raw cosine similarity, which
    makes the graph the more reliable guide to cluster membership.
    """
    if not n >= clusters >= 2:
        raise ValidationError("need n >= clusters >= 2")
    if not 0.0 <= conflict_fraction <= 1.0:
        raise ValidationError("conflict_fraction must lie in [0, 1]")
    if dim < clusters + nuisance_dims:
        raise ValidationError("dim must be at least clusters + nuisance_dims")
    rng = np.random.default_rng(rng_seed)
    text = np.arange(n) % clusters
    rng.shuffle(text)
    image = text.copy()
    n_mis = int(round(conflict_fraction * n / 2))
    if conflict_fraction > 0:
        n_mis = min(max(n_mis, 1), n - clusters * 2)
    mismatched = np.sort(rng.choice(n, size=n_mis, replace=False)) if n_mis else np.empty(0, int)
    for i in mismatched:
        image[i] = (text[i] + rng.integers(1, clusters)) % clusters
    matched = np.setdiff1d(np.arange(n), mismatched)
    by_cluster = [matched[text[matched] == k] for k in range(clusters)]

    n_edges = int(round(n * avg_degree / 2))
    n_conf = int(round(conflict_fraction * n_edges))
    tags = {}

    def add(i, j, tag):
        key = (min(i, j), max(i, j))
        if i == j or key in tags:
            return False
        tags[key] = tag
        return True

    def conflict_edge(i, kind):
        pool = by_cluster[text[i]] if kind == "text_only" else by_cluster[image[i]]
        return add(i, int(rng.choice(pool)), kind) if pool.size else False

    placed = 0
    attempts = 0
    while placed < n_conf and attempts < 50 * n_conf:
        i = int(mismatched[placed % n_mis]) if placed < n_mis else int(rng.choice(mismatched))
        kind = "text_only" if rng.random() < 0.5 else "image_only"
        placed += conflict_edge(i, kind)
        attempts += 1
    target = n_edges - n_conf
    placed = 0
    attempts = 0
    while placed < target and attempts < 50 * max(target, 1):
        k = int(rng.integers(clusters))
        if by_cluster[k].size >= 2:
            i, j = rng.choice(by_cluster[k], size=2, replace=False)
            placed += add(int(i), int(j), "both_similar")
        attempts += 1

    # give every isolated node one edge of the kind the planted fraction allows
    deg = np.zeros(n, dtype=int)
    for i, j in tags:
        deg[i] += 1
        deg[j] += 1
    for v in np.flatnonzero(deg == 0):
        if v in mismatched:
            ok = conflict_edge(v, "text_only") or conflict_edge(v, "image_only")
        elif conflict_fraction >= 1.0:
            partners = mismatched[(text[mismatched] == text[v]) | (image[mismatched] == text[v])]
            u = int(rng.choice(partners))
            ok = add(v, u, "text_only" if text[u] == text[v] else "image_only")
        else:
            ok = add(int(v), int(rng.choice(by_cluster[text[v]][by_cluster[text[v]] != v])), "both_similar")
        if not ok:
            raise ValidationError(f"could not attach isolated node {v}")

    g = Graph.from_edges(list(tags), n)
    edge_tags = np.array([tags[(int(i), int(j))] for i, j in g.edges])
    H = []
    for clusters_of in (text, image):
        basis = _orthonormal_rows(rng, clusters + nuisance_dims, dim)
        X = basis[:clusters][clusters_of] + noise * rng.normal(size=(n, dim))
        if nuisance_dims:
            X += nuisance_scale * rng.normal(size=(n, nuisance_dims)) @ basis[clusters:]
        H.append(X)
    H_t, H_i = H
    return SyntheticMag(g, EmbeddingMatrix(H_t, "text"), EmbeddingMatrix(H_i, "image"),
                        edge_tags, text, image)


def save_synthetic_mag(mag: SyntheticMag, directory):
    """Write ``edges.txt``, ``text.emb``, ``image.emb`` and ``labels.txt``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_edge_list(mag.graph, d / "edges.txt")
    write_embeddings(d / "text.emb", mag.text_emb)
    write_embeddings(d / "image.emb", mag.image_emb)
    with open(d / "labels.txt", "w", encoding="utf-8") as fh:
        for k, tag in enumerate(mag.conflict_labels):
            fh.write(f"{k} {tag}\n")
    return d


@dataclass
class TrainState:
    W_text: np.ndarray
    W_image: np.ndarray
    head_W: np.ndarray
    head_b: np.ndarray
    train_mask: np.ndarray
    step: int = 0
    loss_history: list = field(default_factory=list)
    rejected_counts: dict = field(default_factory=dict)
    seen_counts: dict = field(default_factory=dict)

    def encode(self, mag):
        return mag.text_emb.values @ self.W_text.T, mag.image_emb.values @ self.W_image.T

    def predict(self, mag):
        ht, hi = self.encode(mag)
        return np.argmax(np.hstack([ht, hi]) @ self.head_W + self.head_b, axis=1)


def _softmax_xent(Z, y):
    Z = Z - Z.max(axis=1, keepdims=True)
    P = np.exp(Z)
    P /= P.sum(axis=1, keepdims=True)
    loss = -np.mean(np.log(P[np.arange(y.size), y] + 1e-300))
    P[np.arange(y.size), y] -= 1.0
    return loss, P / y.size


def _train_mask(rng, labels, fraction):
    mask = np.zeros(labels.size, dtype=bool)
    for k in np.unique(labels):
        idx = np.flatnonzero(labels == k)
        take = max(1, int(round(fraction * idx.size)))
        mask[rng.choice(idx, size=take, replace=False)] = True
    return mask


def train_toy_encoder(mag: SyntheticMag, cfg: UfgwConfig, lam=0.1, steps=100, lr=0.5, rng_seed=0, *,
                      embed_dim=16, batch_size=64, fanout=5, hops=1, label_fraction=0.1,
                      beta=0.15, delta=1e-9, task=True, ppr=None) -> TrainState:
    """Gradient descent on ``task + lam * (reg_text + reg_image)``.

    Each step draws a neighbor-sampled batch, solves UFGW for each modality
    against the PPR graph geometry and back-propagates the structural term
    with the plan held fixed.  The task is cluster classification from the
    text clusters on a labeled subset, using a linear head over both
    encodings.  Initialization and batch sampling use independent streams,
    so ``lam = 0`` follows the task-only trajectory exactly.
    """
    if steps < 1 or not lr > 0:
        raise ValidationError("need steps >= 1 and lr > 0")
    init_seq, batch_seq = np.random.SeedSequence(rng_seed).spawn(2)
    init_rng = np.random.default_rng(init_seq)
    batch_rng = np.random.default_rng(batch_seq)
    X_t, X_i = mag.text_emb.values, mag.image_emb.values
    n, K = X_t.shape[0], int(mag.text_labels.max()) + 1
    y = mag.text_labels
    state = TrainState(
        W_text=init_rng.normal(size=(embed_dim, X_t.shape[1])) / np.sqrt(X_t.shape[1]),
        W_image=init_rng.normal(size=(embed_dim, X_i.shape[1])) / np.sqrt(X_i.shape[1]),
        head_W=init_rng.normal(size=(2 * embed_dim, K)) * 0.01,
        head_b=np.zeros(K),
        train_mask=_train_mask(init_rng, y, label_fraction),
    )
    ppr = ppr if ppr is not None else compute_ppr(mag.graph, beta)
    seeds_per_batch = max(1, batch_size // (1 + fanout))
    for m in ("text", "image"):
        state.rejected_counts[m] = np.zeros(n, dtype=int)
        state.seen_counts[m] = np.zeros(n, dtype=int)

    for step in range(steps):
        seeds = batch_rng.choice(n, size=min(seeds_per_batch, n), replace=False)
        batch = sample_neighbor_batch(mag.graph, seeds, fanout, hops, int(batch_rng.integers(2**31)))
        ids = batch.node_ids[:batch_size]
        graph_space = build_measure_space(graph_cost_for_batch(ppr, ids, delta))

        grads = {}
        regs = {}
        for m, X, W in (("text", X_t, state.W_text), ("image", X_i, state.W_image)):
            Xb = X[ids]
            Hb = Xb @ W.T
            sem = build_measure_space(cosine_cost(EmbeddingMatrix(Hb)), delta)
            plan, report = solve_ufgw(sem, graph_space, cfg)
            regs[m] = report.loss_total
            g = regularizer_gradient(Hb, None, sem.cost, graph_space.cost, plan, cfg.alpha, delta)
            grads[m] = g.d_embeddings.T @ Xb
            state.rejected_counts[m][ids] += report.node_class == "rejected"
            state.seen_counts[m][ids] += 1

        ht, hi = X_t @ state.W_text.T, X_i @ state.W_image.T
        F = np.hstack([ht, hi])
        tm = state.train_mask
        if task:
            task_loss, dZ = _softmax_xent(F[tm] @ state.head_W + state.head_b, y[tm])
            dF = dZ @ state.head_W.T
            g_head_W = F[tm].T @ dZ
            g_head_b = dZ.sum(axis=0)
            g_text = dF[:, :embed_dim].T @ X_t[tm]
            g_image = dF[:, embed_dim:].T @ X_i[tm]
        else:
            task_loss = 0.0
            g_head_W = np.zeros_like(state.head_W)
            g_head_b = np.zeros_like(state.head_b)
            g_text = np.zeros_like(state.W_text)
            g_image = np.zeros_like(state.W_image)

        total = task_loss + lam * (regs["text"] + regs["image"])
        if not np.isfinite(total):
            raise NumericalError(f"non-finite training loss at step {step}",
                                 {"task": task_loss, "reg_text": regs["text"], "reg_image": regs["image"]})
        state.W_text = state.W_text - lr * (g_text + lam * grads["text"])
        state.W_image = state.W_image - lr * (g_image + lam * grads["image"])
        state.head_W = state.head_W - lr * g_head_W
        state.head_b = state.head_b - lr * g_head_b
        state.step = step + 1
        state.loss_history.append((float(task_loss), float(regs["text"]), float(regs["image"]), float(total)))
    return state


def task_accuracy(state: TrainState, mag: SyntheticMag) -> float:
    """Accuracy on the nodes that were not used for the task loss."""
    test = ~state.train_mask
    return float(np.mean(state.predict(mag)[test] == mag.text_labels[test]))


# Benchmark used for the alpha / rho sensitivity curves.  Nuisance directions
# dominate raw cosine similarity, so the graph carries information that a
# handful of labels cannot recover on their own; lambda is the best of
# {10, 30, 100} at the default (alpha, rho) = (0.6, 0.1).
SENSITIVITY_DATA = dict(n=200, clusters=4, conflict_fraction=0.3, noise=0.1, nuisance_dims=8, nuisance_scale=1.0)
SENSITIVITY_TRAINING = dict(lam=30.0, steps=100, lr=0.5, label_fraction=0.05)


def sensitivity_sweep(alphas=(0.0, 0.3, 0.6, 0.9), rhos=(0.01, 0.1, 1.0, 1e3), seeds=range(5), *,
                      base_alpha=0.6, base_rho=0.1, bcd_iters=10, data=None, training=None) -> dict:
    """Final task accuracy for one-at-a-time sweeps of ``alpha`` and ``rho``.

    Returns ``{(alpha, rho): [accuracy per seed]}``; the ``alpha`` sweep holds
    ``rho = base_rho`` and the ``rho`` sweep holds ``alpha = base_alpha``.
    Shared settings are trained once.
    """
    data = dict(SENSITIVITY_DATA if data is None else data)
    training = dict(SENSITIVITY_TRAINING if training is None else training)
    settings = list(dict.fromkeys([(float(a), float(base_rho)) for a in alphas]
                                  + [(float(base_alpha), float(r)) for r in rhos]))
    out = {s: [] for s in settings}
    n, clusters, frac = data.pop("n"), data.pop("clusters"), data.pop("conflict_fraction")
    lam, steps, lr = training.pop("lam"), training.pop("steps"), training.pop("lr")
    for seed in seeds:
        mag = generate_synthetic_mag(n, clusters, frac, seed, **data)
        ppr = compute_ppr(mag.graph)
        for alpha, rho in settings:
            cfg = UfgwConfig(alpha=alpha, rho=rho, bcd_iters=bcd_iters)
            state = train_toy_encoder(mag, cfg, lam, steps, lr, seed, ppr=ppr, **training)
            out[(alpha, rho)].append(task_accuracy(state, mag))
    return out


def has_interior_maximum(values) -> bool:
    """True when some interior entry beats both end points."""
    values = list(values)
    return len(values) >= 3 and max(values[1:-1]) > max(values[0], values[-1])
