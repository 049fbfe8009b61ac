"""Run configuration and the flat ``key = value`` config-file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .errors import InputError, ValidationError
from .solver import UfgwConfig


@dataclass(frozen=True)
class RunConfig:
    # solver
    alpha: float = 0.6
    rho: float = 0.1
    epsilon: float = 0.05
    tau: float = 0.5
    sinkhorn_iters: int = 20
    bcd_iters: int = 50
    tol: float = 1e-9
    bcd_tol: float = 1e-7
    anchor_mass: float = 0.8
    anchor_diagonal: float = 0.5
    reject_mass: float = 0.2
    # spaces and batching
    beta: float = 0.15
    delta: float = 1e-9
    ppr_method: str = "dense"
    batch_size: int = 512
    fanout: int = 10
    hops: int = 2
    rng_seed: int = 0
    # conflict analysis
    theta: float = 0.5
    sample_edges: int = 1000
    # synthetic demo
    lam: float = 0.1
    n: int = 200
    clusters: int = 4
    conflict_fraction: float = 0.3
    noise: float = 0.1
    nuisance_dims: int = 0
    nuisance_scale: float = 0.0
    raw_dim: int = 32
    embed_dim: int = 16
    avg_degree: float = 6.0
    steps: int = 100
    lr: float = 0.5
    label_fraction: float = 0.1
    train_batch_size: int = 64
    train_bcd_iters: int = 10
    # io
    edge_list: str = ""
    embeddings: str = ""
    text_embeddings: str = ""
    image_embeddings: str = ""
    ppr_cache: str = ""

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValidationError(f"beta must lie in (0, 1), got {self.beta}")
        if self.batch_size < 2:
            raise ValidationError("batch_size must be >= 2")
        if self.delta <= 0:
            raise ValidationError("delta must be positive")
        if self.fanout < 1 or self.hops < 0:
            raise ValidationError("need fanout >= 1 and hops >= 0")
        if self.ppr_method not in ("dense", "power"):
            raise ValidationError(f"unknown ppr_method {self.ppr_method!r}")
        self.ufgw()

    def ufgw(self, **overrides) -> UfgwConfig:
        names = {f.name for f in dataclasses.fields(UfgwConfig)}
        kwargs = {k: getattr(self, k) for k in names if hasattr(self, k)}
        kwargs.update(overrides)
        return UfgwConfig(**kwargs)

    def as_dict(self):
        out = dataclasses.asdict(self)
        out["lambda"] = out.pop("lam")
        return out


# ``lambda`` is a Python keyword, so the file key maps onto ``lam``
_ALIASES = {"lambda": "lam"}


def _coerce(field, raw, path, lineno):
    typ = field.type if isinstance(field.type, str) else field.type.__name__
    try:
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
    except ValueError:
        raise InputError(f"{field.name} expects {typ}, got {raw!r}", path, lineno) from None
    return raw


def parse_config_text(text, path="<config>") -> dict:
    fields = {f.name: f for f in dataclasses.fields(RunConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"expected 'key = value', got {line!r}", path, lineno)
        key, raw = (s.strip() for s in line.split("=", 1))
        name = _ALIASES.get(key, key)
        if name not in fields:
            raise InputError(f"unknown config key {key!r}", path, lineno)
        values[name] = _coerce(fields[name], raw, path, lineno)
    return values


def load_config(path=None, **overrides) -> RunConfig:
    """Defaults, then the config file (if any), then explicit overrides."""
    values = {}
    if path:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise InputError(f"cannot read config: {exc.strerror or exc}", path) from exc
        values.update(parse_config_text(text, path))
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**values)
