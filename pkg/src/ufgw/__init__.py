"""Unbalanced fused Gromov-Wasserstein alignment of embeddings with graph structure."""

from ._kernels import BACKEND
from .conflict import analyze_conflict
from .diffusion import CostMatrix, PprMatrix, compute_ppr, graph_cost_for_batch, read_ppr_cache, write_ppr_cache
from .errors import InputError, NumericalError, UfgwError, ValidationError
from .gradients import RegGradient, grad_wrt_cost, grad_wrt_embeddings, regularizer_gradient
from .graph import BatchSample, Graph, load_edge_list, random_walk_matrix, sample_neighbor_batch
from .semantic import EmbeddingMatrix, MeasureSpace, build_measure_space, cosine_cost, read_embeddings
from .solver import TransportPlan, UfgwConfig, UfgwReport, solve_ufgw, unbalanced_sinkhorn

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BatchSample",
    "CostMatrix",
    "EmbeddingMatrix",
    "Graph",
    "InputError",
    "MeasureSpace",
    "NumericalError",
    "PprMatrix",
    "RegGradient",
    "TransportPlan",
    "UfgwConfig",
    "UfgwError",
    "UfgwReport",
    "ValidationError",
    "analyze_conflict",
    "build_measure_space",
    "compute_ppr",
    "cosine_cost",
    "grad_wrt_cost",
    "grad_wrt_embeddings",
    "graph_cost_for_batch",
    "load_edge_list",
    "random_walk_matrix",
    "read_embeddings",
    "read_ppr_cache",
    "regularizer_gradient",
    "sample_neighbor_batch",
    "solve_ufgw",
    "unbalanced_sinkhorn",
    "write_ppr_cache",
]
