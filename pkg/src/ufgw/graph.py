"""Sparse undirected graphs: loading, canonicalization, random walks and
neighbor sampling."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import InputError, ValidationError


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph in CSR form.

    Use :meth:`from_edges` rather than the constructor; it performs the
    canonicalization (duplicates collapsed, self-loops dropped, both
    directions stored) that the rest of the package relies on.
    """

    num_nodes: int
    indptr: np.ndarray
    indices: np.ndarray

    def __post_init__(self):
        self.indptr.setflags(write=False)
        self.indices.setflags(write=False)

    @classmethod
    def from_edges(cls, edges, num_nodes=None) -> "Graph":
        arr = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if arr.size and arr.min() < 0:
            raise ValidationError("node ids must be non-negative")
        inferred = int(arr.max()) + 1 if arr.size else 0
        if num_nodes is None:
            num_nodes = inferred
        elif inferred > num_nodes:
            raise ValidationError(f"edge references node {inferred - 1} but num_nodes={num_nodes}")
        arr = arr[arr[:, 0] != arr[:, 1]]
        both = np.concatenate([arr, arr[:, ::-1]])
        both = np.unique(both, axis=0)
        indptr = np.zeros(num_nodes + 1, dtype=np.int64)
        np.add.at(indptr, both[:, 0] + 1, 1)
        np.cumsum(indptr, out=indptr)
        return cls(int(num_nodes), indptr, both[:, 1].copy())

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def num_edges(self) -> int:
        return int(self.indices.size // 2)

    @property
    def edges(self) -> np.ndarray:
        """Canonical edge list, one row ``(i, j)`` with ``i < j`` per edge."""
        src = np.repeat(np.arange(self.num_nodes), self.degrees)
        keep = src < self.indices
        return np.stack([src[keep], self.indices[keep]], axis=1)

    def neighbors(self, i) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def adjacency(self) -> sp.csr_matrix:
        data = np.ones(self.indices.size)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.num_nodes,) * 2)

    def isolated_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.degrees == 0)

    def require_no_isolated(self):
        iso = self.isolated_nodes()
        if iso.size:
            shown = ", ".join(str(i) for i in iso[:10])
            more = "" if iso.size <= 10 else f" (+{iso.size - 10} more)"
            raise ValidationError(f"isolated node(s) {shown}{more}; remove them before diffusion")


@dataclass(frozen=True)
class BatchSample:
    node_ids: np.ndarray
    seed_ids: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def __len__(self):
        return int(self.node_ids.size)


def load_edge_list(path, *, allow_isolated=False) -> Graph:
    """Read a whitespace-separated edge list.

    Lines starting with ``#`` and blank lines are skipped.  An optional first
    content line ``nodes=N`` fixes the node count; otherwise it is one more
    than the largest id seen.  Isolated nodes are rejected unless
    ``allow_isolated`` is set.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read edge list: {exc.strerror or exc}", path) from exc
    num_nodes = None
    edges = []
    seen_content = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if not seen_content and line.startswith("nodes="):
            seen_content = True
            try:
                num_nodes = int(line[len("nodes="):])
            except ValueError:
                raise InputError(f"bad header {line!r}", path, lineno) from None
            if num_nodes < 1:
                raise InputError("header node count must be positive", path, lineno)
            continue
        seen_content = True
        parts = line.split()
        if len(parts) != 2:
            raise InputError(f"expected two node ids, got {line!r}", path, lineno)
        try:
            a, b = int(parts[0]), int(parts[1])
        except ValueError:
            raise InputError(f"non-integer node id in {line!r}", path, lineno) from None
        if a < 0 or b < 0:
            raise InputError(f"negative node id in {line!r}", path, lineno)
        if num_nodes is not None and max(a, b) >= num_nodes:
            raise InputError(f"node id out of range for nodes={num_nodes}", path, lineno)
        edges.append((a, b))
    if not edges:
        raise ValidationError(f"{path}: edge list is empty")
    g = Graph.from_edges(edges, num_nodes)
    if g.num_edges == 0:
        raise ValidationError(f"{path}: edge list has no edges after dropping self-loops")
    if not allow_isolated:
        g.require_no_isolated()
    return g


def save_edge_list(g: Graph, path, header=True):
    lines = [f"nodes={g.num_nodes}"] if header else []
    lines += [f"{i} {j}" for i, j in g.edges]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def random_walk_matrix(g: Graph) -> np.ndarray:
    """Dense row-stochastic transition matrix ``D^-1 A``."""
    g.require_no_isolated()
    deg = g.degrees.astype(np.float64)
    A = g.adjacency().toarray()
    return A / deg[:, None]


def sample_neighbor_batch(g: Graph, seeds, fanout=10, hops=2, rng_seed=0) -> BatchSample:
    """Expand ``seeds`` by ``hops`` rounds of per-node neighbor subsampling.

    Each frontier node contributes at most ``fanout`` neighbors drawn without
    replacement.  Output order is the seeds (deduplicated, in the given order)
    followed by newly discovered nodes in discovery order.
    """
    if fanout < 1:
        raise ValidationError("fanout must be >= 1")
    if hops < 0:
        raise ValidationError("hops must be >= 0")
    seeds = np.asarray(seeds, dtype=np.int64).ravel()
    bad = seeds[(seeds < 0) | (seeds >= g.num_nodes)]
    if bad.size:
        raise InputError(f"seed id {int(bad[0])} outside [0, {g.num_nodes})")
    rng = np.random.default_rng(rng_seed)
    order = list(dict.fromkeys(seeds.tolist()))
    seen = set(order)
    frontier = order
    for _ in range(hops):
        nxt = []
        for node in frontier:
            nbrs = g.neighbors(node)
            if nbrs.size > fanout:
                nbrs = rng.choice(nbrs, size=fanout, replace=False)
            for x in nbrs.tolist():
                if x not in seen:
                    seen.add(x)
                    nxt.append(x)
        order.extend(nxt)
        frontier = nxt
        if not frontier:
            break
    seed_ids = np.array(list(dict.fromkeys(seeds.tolist())), dtype=np.int64)
    return BatchSample(np.array(order, dtype=np.int64), seed_ids)
