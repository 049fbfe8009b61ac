"""Personalized PageRank diffusion and the graph-side cost matrix."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import lapack

from .errors import InputError, NumericalError, ValidationError
from .graph import BatchSample, Graph, random_walk_matrix

PPR_MAGIC = b"PPR1"
_PPR_HEADER = struct.Struct("<4sQd")


@dataclass(frozen=True)
class PprMatrix:
    values: np.ndarray
    beta: float

    @property
    def num_nodes(self):
        return self.values.shape[0]


@dataclass(frozen=True)
class CostMatrix:
    """Pairwise cost matrix.

    ``normalization_mean`` is the mean of the raw matrix when the values have
    been divided by ``mean + delta``, and ``None`` for raw costs.
    """

    values: np.ndarray
    kind: str
    normalization_mean: float | None = None

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def normalized(self):
        return self.normalization_mean is not None


def normalize_cost(values, kind, delta=1e-9) -> CostMatrix:
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ValidationError(f"{kind} cost matrix has non-finite entries")
    mean = float(values.mean()) if values.size else 0.0
    return CostMatrix(values / (mean + delta), kind, mean)


def _check_beta(beta):
    if not 0.0 < beta < 1.0:
        raise ValidationError(f"teleport probability must lie in (0, 1), got {beta}")


def compute_ppr(g: Graph, beta=0.15, method="dense", tol=1e-8, max_iter=10_000) -> PprMatrix:
    """Full personalized PageRank matrix ``beta (I - (1-beta) D^-1 A)^-1``.

    ``method="dense"`` factors the symmetric positive definite matrix
    ``D - (1-beta) A`` by Cholesky and uses
    ``Pi = beta (D - (1-beta) A)^-1 D``.  ``method="power"`` iterates
    ``Pi <- beta I + (1-beta) A~ Pi`` with a sparse transition matrix until the
    largest update falls below ``tol``.
    """
    _check_beta(beta)
    g.require_no_isolated()
    n = g.num_nodes
    deg = g.degrees.astype(np.float64)
    if method == "dense":
        S = g.adjacency().toarray()
        S *= -(1.0 - beta)
        S[np.diag_indices(n)] += deg
        c, info = lapack.dpotrf(S, lower=0, overwrite_a=1, clean=0)
        if info != 0:
            raise NumericalError("Cholesky factorization failed", {"info": info})
        inv, info = lapack.dpotri(c, lower=0, overwrite_c=1)
        if info != 0:
            raise NumericalError("triangular inverse failed", {"info": info})
        inv = np.triu(inv) + np.triu(inv, 1).T
        inv *= beta
        inv *= deg[None, :]
        values = inv
    elif method == "power":
        P = g.adjacency().multiply(1.0 / deg[:, None]).tocsr()
        values = beta * np.eye(n)
        for _ in range(max_iter):
            nxt = (1.0 - beta) * (P @ values)
            nxt[np.diag_indices(n)] += beta
            change = np.max(np.abs(nxt - values))
            values = nxt
            if change < tol:
                break
        else:
            raise NumericalError("power iteration did not converge", {"change": change})
    else:
        raise ValueError(f"unknown PPR method {method!r}")
    dev = np.max(np.abs(values.sum(axis=1) - 1.0))
    if dev > 1e-6:
        raise NumericalError("PPR rows are not stochastic", {"max_row_sum_deviation": dev})
    return PprMatrix(values, float(beta))


def ppr_residual(g: Graph, ppr: PprMatrix, columns=None) -> float:
    """Max-abs residual of ``(I - (1-beta) A~) Pi - beta I`` over ``columns``."""
    At = random_walk_matrix(g)
    cols = np.arange(g.num_nodes) if columns is None else np.asarray(columns)
    R = ppr.values[:, cols] - (1.0 - ppr.beta) * (At @ ppr.values[:, cols])
    R[cols, np.arange(cols.size)] -= ppr.beta
    return float(np.max(np.abs(R)))


def graph_cost_for_batch(ppr: PprMatrix, batch: BatchSample | np.ndarray, delta=1e-9) -> CostMatrix:
    """Normalized ``-log(Pi[B, B] + delta)`` cost for the nodes of a batch."""
    if delta <= 0:
        raise ValidationError("delta must be positive")
    ids = np.asarray(batch.node_ids if isinstance(batch, BatchSample) else batch, dtype=np.int64)
    n = ppr.values.shape[0]
    if ids.size == 0 or ids.min() < 0 or ids.max() >= n:
        raise ValidationError(f"batch node ids must lie in [0, {n})")
    sub = np.asarray(ppr.values[np.ix_(ids, ids)], dtype=np.float64)
    return normalize_cost(-np.log(sub + delta), "graph", delta)


def write_ppr_cache(path, ppr: PprMatrix):
    """Write ``PPR1`` header followed by row-major little-endian float64 values."""
    n = ppr.values.shape[0]
    with open(path, "wb") as fh:
        fh.write(_PPR_HEADER.pack(PPR_MAGIC, n, float(ppr.beta)))
        np.ascontiguousarray(ppr.values, dtype="<f8").tofile(fh)


def read_ppr_cache(path, mmap=False) -> PprMatrix:
    """Load a cache written by :func:`write_ppr_cache`.

    With ``mmap=True`` the values stay on disk and batch extraction only
    touches the rows it needs.
    """
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            head = fh.read(_PPR_HEADER.size)
    except OSError as exc:
        raise InputError(f"cannot read PPR cache: {exc.strerror or exc}", path) from exc
    if len(head) < _PPR_HEADER.size:
        raise InputError("truncated PPR cache header", path)
    magic, n, beta = _PPR_HEADER.unpack(head)
    if magic != PPR_MAGIC:
        raise InputError(f"bad magic {magic!r}, expected {PPR_MAGIC!r}", path)
    expected = _PPR_HEADER.size + 8 * n * n
    if path.stat().st_size != expected:
        raise InputError(f"PPR cache size {path.stat().st_size} != expected {expected}", path)
    if mmap:
        values = np.memmap(path, dtype="<f8", mode="r", offset=_PPR_HEADER.size, shape=(n, n))
    else:
        values = np.fromfile(path, dtype="<f8", offset=_PPR_HEADER.size).reshape(n, n)
    return PprMatrix(values, float(beta))
