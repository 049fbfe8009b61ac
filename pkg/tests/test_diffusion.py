import numpy as np
import pytest

from conftest import random_connected_graph
from ufgw.diffusion import (compute_ppr, graph_cost_for_batch, normalize_cost, ppr_residual, read_ppr_cache,
                            write_ppr_cache)
from ufgw.errors import InputError, ValidationError
from ufgw.graph import BatchSample, Graph, random_walk_matrix


def neumann_ppr(g, beta, terms=200):
    """Truncated series sum_k beta (1-beta)^k P^k."""
    P = random_walk_matrix(g)
    out = np.zeros_like(P)
    term = beta * np.eye(g.num_nodes)
    for _ in range(terms + 1):
        out += term
        term = (1.0 - beta) * term @ P
    return out


def test_single_edge_half_teleport():
    ppr = compute_ppr(Graph.from_edges([(0, 1)]), beta=0.5)
    np.testing.assert_allclose(ppr.values, [[2 / 3, 1 / 3], [1 / 3, 2 / 3]], atol=1e-14)


def test_near_one_teleport_is_identity(rng):
    g = random_connected_graph(6, 0.5, rng)
    ppr = compute_ppr(g, beta=1 - 1e-9)
    np.testing.assert_allclose(ppr.values, np.eye(6), atol=1e-8)


@pytest.mark.parametrize("method", ["dense", "power"])
def test_matches_neumann_oracle(rng, method):
    g = random_connected_graph(6, 0.4, rng)
    ppr = compute_ppr(g, beta=0.15, method=method, tol=1e-13)
    np.testing.assert_allclose(ppr.values, neumann_ppr(g, 0.15), rtol=0, atol=1e-8)


@pytest.mark.parametrize("beta", [0.05, 0.15, 0.5, 0.85])
def test_ppr_invariants(rng, beta):
    g = random_connected_graph(40, 0.1, rng)
    ppr = compute_ppr(g, beta)
    V = ppr.values
    assert np.all(V >= 0)
    assert np.max(np.abs(V.sum(axis=1) - 1.0)) < 1e-8
    assert np.all(np.diag(V) >= beta - 1e-12)
    assert ppr_residual(g, ppr) < 1e-10


def test_adding_an_edge_never_decreases_its_entry(rng):
    for _ in range(10):
        g = random_connected_graph(7, 0.3, rng)
        A = g.adjacency().toarray()
        missing = np.argwhere(np.triu(A == 0, 1))
        if not len(missing):
            continue
        i, j = missing[rng.integers(len(missing))]
        g2 = Graph.from_edges(np.vstack([g.edges, [[i, j]]]), 7)
        before, after = neumann_ppr(g, 0.15), compute_ppr(g2, 0.15).values
        assert after[i, j] >= before[i, j] - 1e-12
        assert after[j, i] >= before[j, i] - 1e-12


@pytest.mark.parametrize("beta", [0.0, 1.0, -0.1])
def test_beta_outside_open_interval(beta):
    with pytest.raises(ValidationError):
        compute_ppr(Graph.from_edges([(0, 1)]), beta)


def test_batch_cost_two_node_example():
    ppr = compute_ppr(Graph.from_edges([(0, 1)]), beta=0.5)
    cost = graph_cost_for_batch(ppr, BatchSample(np.array([0, 1])), delta=1e-9)
    raw = [[-np.log(2 / 3 + 1e-9), -np.log(1 / 3 + 1e-9)], [-np.log(1 / 3 + 1e-9), -np.log(2 / 3 + 1e-9)]]
    mean = sum(sum(r) for r in raw) / 4
    expected = [[x / (mean + 1e-9) for x in r] for r in raw]
    np.testing.assert_allclose(cost.values, expected, rtol=1e-14)
    assert cost.kind == "graph"
    assert cost.normalization_mean == pytest.approx(mean, rel=1e-14)


def test_batch_cost_finite_on_zero_entries():
    from ufgw.diffusion import PprMatrix

    ppr = PprMatrix(np.eye(3), 0.5)
    cost = graph_cost_for_batch(ppr, np.arange(3))
    assert np.all(np.isfinite(cost.values))


def test_constant_similarity_normalizes_to_ones():
    from ufgw.diffusion import PprMatrix

    ppr = PprMatrix(np.full((4, 4), 0.25), 0.5)
    cost = graph_cost_for_batch(ppr, np.arange(4))
    np.testing.assert_allclose(cost.values, 1.0, atol=1e-8)


def test_batch_cost_mean_is_one_and_diagonal_smallest(rng):
    g = random_connected_graph(60, 0.05, rng)
    ppr = compute_ppr(g, 0.5)
    ids = rng.choice(60, 20, replace=False)
    cost = graph_cost_for_batch(ppr, ids)
    assert abs(cost.values.mean() - 1.0) < 1e-9
    sub = ppr.values[np.ix_(ids, ids)]
    dominant = np.diag(sub) > np.max(sub - np.diag(np.diag(sub)), axis=1)
    assert dominant.all()
    C = cost.values
    for i in np.flatnonzero(dominant):
        assert C[i, i] == C[i].min()


def test_batch_cost_validates_ids(rng):
    ppr = compute_ppr(random_connected_graph(5, 0.5, rng))
    with pytest.raises(ValidationError):
        graph_cost_for_batch(ppr, [0, 5])
    with pytest.raises(ValidationError):
        graph_cost_for_batch(ppr, [0, 1], delta=0.0)


def test_normalize_rejects_non_finite():
    with pytest.raises(ValidationError):
        normalize_cost([[0.0, np.inf], [1.0, 0.0]], "graph")


@pytest.mark.parametrize("mmap", [False, True])
def test_cache_roundtrip(tmp_path, rng, mmap):
    ppr = compute_ppr(random_connected_graph(12, 0.3, rng), 0.15)
    write_ppr_cache(tmp_path / "c.ppr", ppr)
    back = read_ppr_cache(tmp_path / "c.ppr", mmap=mmap)
    assert back.beta == 0.15
    np.testing.assert_array_equal(np.asarray(back.values), ppr.values)
    raw = (tmp_path / "c.ppr").read_bytes()
    assert raw[:4] == b"PPR1"
    assert len(raw) == 4 + 8 + 8 + 8 * 144


def test_cache_corruption(tmp_path, rng):
    ppr = compute_ppr(random_connected_graph(4, 0.5, rng))
    write_ppr_cache(tmp_path / "c.ppr", ppr)
    raw = (tmp_path / "c.ppr").read_bytes()
    (tmp_path / "short.ppr").write_bytes(raw[:-8])
    (tmp_path / "magic.ppr").write_bytes(b"XXXX" + raw[4:])
    (tmp_path / "tiny.ppr").write_bytes(raw[:5])
    for name in ("short", "magic", "tiny"):
        with pytest.raises(InputError):
            read_ppr_cache(tmp_path / f"{name}.ppr")
