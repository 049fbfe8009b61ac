"""Cosine-distance geometry of modality embeddings."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .diffusion import CostMatrix, normalize_cost
from .errors import InputError, ValidationError

EMB_MAGIC = b"EMB1"
_EMB_HEADER = struct.Struct("<4sQQ")
MODALITIES = ("text", "image", "other")


@dataclass(frozen=True)
class EmbeddingMatrix:
    values: np.ndarray
    modality: str = "other"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise ValidationError(f"embeddings must be 2-D, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValidationError("embeddings contain non-finite entries")
        if self.modality not in MODALITIES:
            raise ValidationError(f"unknown modality {self.modality!r}")
        object.__setattr__(self, "values", vals)

    @property
    def dim(self):
        return self.values.shape[1]

    @property
    def num_rows(self):
        return self.values.shape[0]


@dataclass(frozen=True)
class MeasureSpace:
    cost: CostMatrix
    mu: np.ndarray

    @property
    def n(self):
        return self.mu.size


def _row_norms(H, rows):
    norms = np.linalg.norm(H, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ValidationError(f"embedding row {int(rows[zero[0]])} has zero norm")
    return np.maximum(norms, 1e-12)


def cosine_cost(emb: EmbeddingMatrix, rows=None) -> CostMatrix:
    """Raw cosine-distance matrix ``1 - cos(h_i, h_j)`` for the selected rows."""
    rows = np.arange(emb.num_rows) if rows is None else np.asarray(rows, dtype=np.int64)
    if rows.size and (rows.min() < 0 or rows.max() >= emb.num_rows):
        raise ValidationError(f"row index outside [0, {emb.num_rows})")
    H = emb.values[rows]
    Hn = H / _row_norms(H, rows)[:, None]
    C = 1.0 - Hn @ Hn.T
    C = 0.5 * (C + C.T)
    np.fill_diagonal(C, 0.0)
    np.clip(C, 0.0, 2.0, out=C)
    return CostMatrix(C, "semantic")


def uniform_measure(n) -> np.ndarray:
    return np.full(n, 1.0 / n)


def build_measure_space(cost: CostMatrix, delta=1e-9) -> MeasureSpace:
    """Mean-normalize a raw cost (no-op if already normalized) and attach a uniform measure."""
    if cost.n < 1:
        raise ValidationError("cost matrix must be at least 1x1")
    if not cost.normalized:
        cost = normalize_cost(cost.values, cost.kind, delta)
    return MeasureSpace(cost, uniform_measure(cost.n))


def write_embeddings(path, emb: EmbeddingMatrix | np.ndarray, binary=True):
    vals = emb.values if isinstance(emb, EmbeddingMatrix) else np.asarray(emb)
    if binary:
        n, d = vals.shape
        with open(path, "wb") as fh:
            fh.write(_EMB_HEADER.pack(EMB_MAGIC, n, d))
            np.ascontiguousarray(vals, dtype="<f4").tofile(fh)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            for row in vals:
                fh.write(" ".join(repr(float(x)) for x in row) + "\n")


def read_embeddings(path, modality="other") -> EmbeddingMatrix:
    """Load an embedding file, auto-detecting binary ``EMB1`` versus text rows."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read embeddings: {exc.strerror or exc}", path) from exc
    if raw[:4] == EMB_MAGIC:
        if len(raw) < _EMB_HEADER.size:
            raise InputError("truncated embedding header", path)
        _, n, d = _EMB_HEADER.unpack_from(raw)
        body = len(raw) - _EMB_HEADER.size
        if body != 4 * n * d:
            raise InputError(f"embedding payload is {body} bytes, expected {4 * n * d}", path)
        vals = np.frombuffer(raw, dtype="<f4", offset=_EMB_HEADER.size).reshape(n, d)
        return EmbeddingMatrix(vals.astype(np.float64), modality)
    rows = []
    width = None
    for lineno, line in enumerate(raw.decode("utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            row = [float(x) for x in line.split()]
        except ValueError:
            raise InputError(f"non-numeric embedding value in {line[:40]!r}", path, lineno) from None
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise InputError(f"row has {len(row)} values, expected {width}", path, lineno)
        rows.append(row)
    if not rows:
        raise InputError("embedding file has no rows", path)
    return EmbeddingMatrix(np.array(rows), modality)
