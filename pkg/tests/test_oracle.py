import itertools

import numpy as np
import pytest
from scipy.optimize import linprog

from ufgw import oracle
from ufgw.diffusion import CostMatrix
from ufgw.errors import ValidationError
from ufgw.semantic import EmbeddingMatrix, MeasureSpace, build_measure_space, cosine_cost
from ufgw.solver import UfgwConfig, solve_ufgw, unbalanced_sinkhorn


def space(C):
    C = np.asarray(C, float)
    return MeasureSpace(CostMatrix(C, "semantic", 1.0), np.full(C.shape[0], 1 / C.shape[0]))


def check_feasible(sol, mu, nu):
    assert np.all(sol.plan >= 0)
    np.testing.assert_allclose(sol.plan.sum(axis=1), mu, atol=1e-10)
    np.testing.assert_allclose(sol.plan.sum(axis=0), nu, atol=1e-10)


def test_identity_cost_matching():
    sol = oracle.exact_linear_ot([[0, 1], [1, 0]], [0.5, 0.5], [0.5, 0.5])
    np.testing.assert_allclose(sol.plan, np.diag([0.5, 0.5]))
    assert sol.cost == 0.0


def test_forced_plan():
    assert oracle.exact_linear_ot([[3.7]], [1.0], [1.0]).cost == pytest.approx(3.7)


def test_matches_vertex_enumeration(rng):
    for _ in range(20):
        M = rng.random((3, 3))
        mu, nu = rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(3))
        nu *= mu.sum() / nu.sum()
        sol = oracle.exact_linear_ot(M, mu, nu)
        check_feasible(sol, mu, nu)
        assert sol.cost == pytest.approx(oracle.vertex_enumeration_ot(M, mu, nu).cost, abs=1e-12)


def test_matches_linprog_on_rectangular(rng):
    for n, m in ((4, 4), (2, 7), (8, 8)):
        M = rng.random((n, m))
        mu = rng.dirichlet(np.ones(n))
        nu = rng.dirichlet(np.ones(m))
        nu *= mu.sum() / nu.sum()
        sol = oracle.exact_linear_ot(M, mu, nu)
        check_feasible(sol, mu, nu)
        A = np.vstack([np.kron(np.eye(n), np.ones(m)), np.kron(np.ones(n), np.eye(m))])
        lp = linprog(M.ravel(), A_eq=A, b_eq=np.concatenate([mu, nu]), bounds=(0, None), method="highs")
        assert sol.cost == pytest.approx(lp.fun, abs=1e-10)


def test_degenerate_marginals(rng):
    mu = np.array([0.25, 0.25, 0.5])
    sol = oracle.exact_linear_ot(rng.random((3, 3)), mu, mu[::-1])
    check_feasible(sol, mu, mu[::-1])


def test_lp_errors():
    with pytest.raises(ValidationError):
        oracle.exact_linear_ot([[0, 1], [1, 0]], [0.5, 0.5], [0.6, 0.5])
    with pytest.raises(ValidationError):
        oracle.exact_linear_ot(np.zeros((9, 8)), np.full(9, 1 / 9), np.full(8, 1 / 8))


def test_lp_lower_bounds_balanced_sinkhorn(rng, backend):
    for _ in range(5):
        M = rng.random((4, 4))
        mu = np.full(4, 0.25)
        plan = unbalanced_sinkhorn(M, mu, mu, 1e6, 0.05, iters=2000)
        assert oracle.exact_linear_ot(M, mu, mu).cost <= np.sum(plan.pi * M) + 1e-9


def test_exhaustive_gw_isometry(rng):
    C = cosine_cost(EmbeddingMatrix(rng.normal(size=(5, 3)))).values
    p = rng.permutation(5)
    C2 = C[np.ix_(p, p)]
    perm, val = oracle.exhaustive_gw(C, C2)
    assert val == pytest.approx(0.0, abs=1e-24)
    np.testing.assert_allclose(C2[np.ix_(perm, perm)], C, atol=1e-15)


def test_exhaustive_gw_identity_among_minimizers(rng):
    C = rng.random((4, 4))
    C = C + C.T
    perm, val = oracle.exhaustive_gw(C, C)
    assert val == 0.0
    assert np.sum((C - C[np.ix_(perm, perm)]) ** 2) == 0.0


def test_exhaustive_gw_loop_swapped_reimplementation(rng):
    C1, C2 = rng.random((5, 5)), rng.random((5, 5))
    _, val = oracle.exhaustive_gw(C1, C2)
    best = np.inf
    for perm in itertools.permutations(range(5)):
        acc = 0.0
        for k in range(5):
            for i in range(5):
                acc += (C1[i, k] - C2[perm[i], perm[k]]) ** 2
        best = min(best, acc / 25)
    assert val == pytest.approx(best, rel=1e-12)


def test_exhaustive_gw_invariant_under_joint_permutation(rng):
    C1, C2 = rng.random((5, 5)), rng.random((5, 5))
    p = rng.permutation(5)
    assert oracle.exhaustive_gw(C1, C2)[1] == pytest.approx(
        oracle.exhaustive_gw(C1[np.ix_(p, p)], C2[np.ix_(p, p)])[1], rel=1e-12)


def test_exhaustive_gw_limits():
    with pytest.raises(ValidationError):
        oracle.exhaustive_gw(np.zeros((8, 8)), np.zeros((8, 8)))
    with pytest.raises(ValidationError):
        oracle.exhaustive_gw(np.zeros((2, 2)), np.zeros((2, 2)), mu=[0.9, 0.1])


def test_reference_identical_spaces_alpha_one(rng):
    sem = build_measure_space(cosine_cost(EmbeddingMatrix(rng.normal(size=(4, 3)))))
    cfg = UfgwConfig(alpha=1.0)
    _, rep = solve_ufgw(sem, space(sem.cost.values), cfg)
    ref = oracle.reference_ufgw(sem, space(sem.cost.values), cfg, restarts=20, max_steps=1500)
    assert abs(ref - rep.loss_total) <= 0.02 * abs(ref)


def test_reference_alpha_zero_against_family_grid(rng):
    n = 4
    cfg = UfgwConfig(alpha=0.0, rho=0.1, epsilon=0.05, tau=0.5)
    C = rng.random((n, n))
    ref = oracle.reference_ufgw(space(C), space(C.T), cfg, restarts=20, max_steps=1500)
    # with alpha = 0 the problem is invariant under joint relabeling and strictly
    # convex, so the minimizer lies in the family a I + b 11^T
    best = np.inf
    for a in np.linspace(0, 0.5, 201):
        for b in np.geomspace(1e-6, 0.1, 201):
            pi = a * np.eye(n) + b
            val = oracle.ufgw_objective_bruteforce(pi, C, C.T, np.full(n, 1 / n), np.full(n, 1 / n),
                                                   cfg.alpha, cfg.rho, cfg.epsilon, cfg.tau)
            best = min(best, val)
    assert abs(ref - best) <= 0.05 * abs(best)


def test_reference_two_node_hand_evaluation():
    A = np.array([[0.0, 1.0], [1.0, 0.0]])
    B = np.array([[0.0, 2.0], [2.0, 0.0]])
    alpha, rho, eps, tau = 0.5, 0.2, 0.1, 0.5
    cfg = UfgwConfig(alpha=alpha, rho=rho, epsilon=eps, tau=tau)
    val, pi = oracle.reference_ufgw(space(A), space(B), cfg, restarts=10, max_steps=500, return_plan=True)
    (p00, p01), (p10, p11) = pi
    lin = tau * (p01 + p10)
    # A[i,k] - B[j,l] = [i != k] - 2 [j != l]
    quad = 0.0
    for i, j, k, l in itertools.product(range(2), repeat=4):
        d = (1.0 if i != k else 0.0) - (2.0 if j != l else 0.0)
        quad += d * d * pi[i, j] * pi[k, l]
    r, c = (p00 + p01, p10 + p11), (p00 + p10, p01 + p11)
    kl = sum(x * np.log(x / 0.5) - x + 0.5 for x in r + c)
    ent = sum(x * np.log(x) - x for x in (p00, p01, p10, p11))
    assert val == pytest.approx((1 - alpha) * lin + alpha * quad + rho * kl + eps * ent, rel=1e-12)


def test_reference_value_is_achieved(rng):
    sem = build_measure_space(cosine_cost(EmbeddingMatrix(rng.normal(size=(3, 3)))))
    gr = build_measure_space(CostMatrix(rng.random((3, 3)), "graph"))
    cfg = UfgwConfig()
    val, pi = oracle.reference_ufgw(sem, gr, cfg, restarts=5, max_steps=300, return_plan=True)
    assert np.all(pi >= 0)
    assert val == pytest.approx(oracle.ufgw_objective_bruteforce(
        pi, sem.cost.values, gr.cost.values, sem.mu, gr.mu, cfg.alpha, cfg.rho, cfg.epsilon, cfg.tau), rel=1e-12)


def test_reference_size_limit():
    with pytest.raises(ValidationError):
        oracle.reference_ufgw(space(np.zeros((7, 7))), space(np.zeros((7, 7))), UfgwConfig())
