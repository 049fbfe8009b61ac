import numpy as np
import pytest

from ufgw import _kernels

BACKENDS = sorted(_kernels.BACKENDS)


def problem(n, m, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    G = scale * rng.random((n, m))
    return G, np.log(np.full(n, 1 / n)), np.log(np.full(m, 1 / m))


def lse_reference(G, lmu, lnu, eps, fi, iters):
    """Textbook log-domain unbalanced sweeps."""
    from scipy.special import logsumexp

    S = -G / eps
    lu, lv = np.zeros(G.shape[0]), np.zeros(G.shape[1])
    for _ in range(iters):
        lu = fi * (lmu - logsumexp(S + lv[None, :], axis=1))
        lv = fi * (lnu - logsumexp(S.T + lu[None, :], axis=1))
    return lu, lv


@pytest.mark.parametrize("name", BACKENDS)
@pytest.mark.parametrize("kernel", ["sinkhorn_log", "sinkhorn_stabilized"])
def test_log_kernels_match_reference(name, kernel):
    mod = _kernels.get_backend(name)
    G, lmu, lnu = problem(9, 6, 0, scale=40.0)
    eps, fi = 0.01, 0.1 / 0.11
    out = getattr(mod, kernel)(G, lmu, lnu, eps, fi, 30, 0.0, np.zeros(9), np.zeros(6))
    lu, lv = lse_reference(G, lmu, lnu, eps, fi, 30)
    np.testing.assert_allclose(out[0], lu, atol=1e-10)
    np.testing.assert_allclose(out[1], lv, atol=1e-10)
    assert out[2] == 30


@pytest.mark.parametrize("name", BACKENDS)
def test_plain_kernel_matches_reference(name):
    mod = _kernels.get_backend(name)
    G, lmu, lnu = problem(5, 7, 1)
    eps, fi = 0.5, 0.5
    u, v, it, res = mod.sinkhorn_plain(np.exp(-G / eps), np.exp(lmu), np.exp(lnu), fi, 25, 0.0,
                                       np.ones(5), np.ones(7))
    lu, lv = lse_reference(G, lmu, lnu, eps, fi, 25)
    np.testing.assert_allclose(np.log(u), lu, atol=1e-12)
    np.testing.assert_allclose(np.log(v), lv, atol=1e-12)


@pytest.mark.parametrize("name", BACKENDS)
def test_stabilized_absorbs_large_scalings(name):
    mod = _kernels.get_backend(name)
    G, lmu, lnu = problem(6, 6, 2, scale=5.0)
    G[0] += 20.0
    eps, fi = 0.005, 1.0
    lu, lv, it, res, ok = mod.sinkhorn_stabilized(G, lmu, lnu, eps, fi, 200, 0.0, np.zeros(6), np.zeros(6),
                                                  absorb_at=5.0)
    assert ok
    ref = lse_reference(G, lmu, lnu, eps, fi, 200)
    # balanced problem: scalings are defined up to a constant shift
    shift = lu[0] - ref[0][0]
    np.testing.assert_allclose(lu - shift, ref[0], atol=1e-8)
    np.testing.assert_allclose(lv + shift, ref[1], atol=1e-8)


@pytest.mark.parametrize("name", BACKENDS)
def test_stabilized_reports_underflow(name):
    mod = _kernels.get_backend(name)
    # after the first absorption row 1 of the stabilized kernel is exp(-5e4)
    G = np.array([[0.0, 0.0], [1e5, 1e5]])
    lmu = np.log([0.5, 0.5])
    out = mod.sinkhorn_stabilized(G, lmu, lmu, 1.0, 0.5, 5, 0.0, np.zeros(2), np.zeros(2))
    assert not out[4]


def test_solver_falls_back_to_log_sum_exp(backend):
    from ufgw.solver import unbalanced_sinkhorn

    G = np.array([[0.0, 0.0], [1e5, 1e5]])
    mu = np.full(2, 0.5)
    plan = unbalanced_sinkhorn(G, mu, mu, 1.0, 1.0, iters=5, tol=0.0)
    lu, lv = lse_reference(G, np.log(mu), np.log(mu), 1.0, 0.5, 5)
    np.testing.assert_allclose(plan.log_u, lu, rtol=1e-12)
    np.testing.assert_allclose(plan.log_v, lv, rtol=1e-12)


def test_backends_agree():
    if len(BACKENDS) < 2:
        pytest.skip("compiled backend not built")
    py, c = (_kernels.get_backend(n) for n in ("python", "compiled"))
    G, lmu, lnu = problem(40, 40, 3, scale=3.0)
    args = (G, lmu, lnu, 0.05, 0.6, 20, 0.0, np.zeros(40), np.zeros(40))
    for kernel in ("sinkhorn_log", "sinkhorn_stabilized"):
        a, b = getattr(py, kernel)(*args), getattr(c, kernel)(*args)
        np.testing.assert_allclose(a[0], b[0], atol=1e-12)
        np.testing.assert_allclose(a[1], b[1], atol=1e-12)
        assert a[2] == b[2]


def test_unknown_backend():
    with pytest.raises(ValueError):
        _kernels.get_backend("fortran")
