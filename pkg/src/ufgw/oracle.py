"""Slow, structurally independent references used to check the solvers.

Nothing in here shares code with :mod:`ufgw.solver`; loops are written out
explicitly so a bug in the fast path cannot be mirrored here.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

MAX_OT_CELLS = 64
MAX_GW_NODES = 7
MAX_REFERENCE_NODES = 6


@dataclass(frozen=True)
class ExactOtSolution:
    plan: np.ndarray
    cost: float


def _northwest_corner(a, b):
    n, m = a.size, b.size
    a, b = a.copy(), b.copy()
    x = np.zeros((n, m))
    basis = []
    i = j = 0
    while True:
        q = min(a[i], b[j])
        x[i, j] = q
        a[i] -= q
        b[j] -= q
        basis.append((i, j))
        if i == n - 1 and j == m - 1:
            break
        if i == n - 1:
            j += 1
        elif j == m - 1:
            i += 1
        elif a[i] <= b[j]:
            i += 1
        else:
            j += 1
    return x, basis


def _potentials(M, basis, n, m):
    u = [None] * n
    v = [None] * m
    u[0] = 0.0
    by_row = {}
    by_col = {}
    for i, j in basis:
        by_row.setdefault(i, []).append(j)
        by_col.setdefault(j, []).append(i)
    queue = deque([("r", 0)])
    while queue:
        kind, k = queue.popleft()
        if kind == "r":
            for j in by_row.get(k, ()):
                if v[j] is None:
                    v[j] = M[k, j] - u[k]
                    queue.append(("c", j))
        else:
            for i in by_col.get(k, ()):
                if u[i] is None:
                    u[i] = M[i, k] - v[k]
                    queue.append(("r", i))
    return np.array(u, dtype=float), np.array(v, dtype=float)


def _tree_path(basis, start_row, end_col):
    """Cells on the basis-tree path from row ``start_row`` to column ``end_col``."""
    adj = {}
    for i, j in basis:
        adj.setdefault(("r", i), []).append(("c", j))
        adj.setdefault(("c", j), []).append(("r", i))
    start, goal = ("r", start_row), ("c", end_col)
    parent = {start: None}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        if node == goal:
            break
        for nxt in adj.get(node, ()):
            if nxt not in parent:
                parent[nxt] = node
                queue.append(nxt)
    nodes = [goal]
    while parent[nodes[-1]] is not None:
        nodes.append(parent[nodes[-1]])
    nodes.reverse()
    cells = []
    for p, q in zip(nodes, nodes[1:]):
        cells.append((p[1], q[1]) if p[0] == "r" else (q[1], p[1]))
    return cells


def exact_linear_ot(M, mu, nu, tol=1e-12, max_iter=10_000) -> ExactOtSolution:
    """Exact discrete OT by the transportation simplex (MODI potentials).

    Northwest-corner start; entering and leaving cells are chosen by Bland's
    smallest-index rule so degenerate pivots cannot cycle.
    """
    M = np.asarray(M, dtype=float)
    a = np.asarray(mu, dtype=float).ravel()
    b = np.asarray(nu, dtype=float).ravel()
    n, m = a.size, b.size
    if M.shape != (n, m):
        raise ValidationError(f"cost shape {M.shape} does not match marginals {(n, m)}")
    if n * m > MAX_OT_CELLS:
        raise ValidationError(f"exact_linear_ot is limited to n*m <= {MAX_OT_CELLS}")
    if np.any(a < 0) or np.any(b < 0):
        raise ValidationError("marginals must be non-negative")
    if abs(a.sum() - b.sum()) > 1e-12:
        raise ValidationError(f"unbalanced marginals: {a.sum()!r} vs {b.sum()!r}")
    x, basis = _northwest_corner(a, b)
    for _ in range(max_iter):
        u, v = _potentials(M, basis, n, m)
        entering = None
        for i in range(n):
            for j in range(m):
                if (i, j) not in basis and M[i, j] - u[i] - v[j] < -tol:
                    entering = (i, j)
                    break
            if entering is not None:
                break
        if entering is None:
            break
        path = _tree_path(basis, entering[0], entering[1])
        # path runs row(entering) -> ... -> col(entering); cells alternate -, +, -
        minus = path[0::2]
        plus = path[1::2]
        theta = min(x[c] for c in minus)
        leaving = min(c for c in minus if x[c] == theta)
        for c in minus:
            x[c] -= theta
        for c in plus:
            x[c] += theta
        x[entering] += theta
        x[leaving] = 0.0
        basis.remove(leaving)
        basis.append(entering)
    else:
        raise RuntimeError("transportation simplex did not terminate")
    x = np.maximum(x, 0.0)
    return ExactOtSolution(x, float(np.sum(x * M)))


def vertex_enumeration_ot(M, mu, nu) -> ExactOtSolution:
    """Minimum cost over all basic feasible solutions (tiny problems only)."""
    M = np.asarray(M, dtype=float)
    a = np.asarray(mu, dtype=float)
    b = np.asarray(nu, dtype=float)
    n, m = M.shape
    if n * m > 16:
        raise ValidationError("vertex enumeration is limited to n*m <= 16")
    cells = [(i, j) for i in range(n) for j in range(m)]
    rhs = np.concatenate([a, b])
    best = None
    for subset in itertools.combinations(range(len(cells)), n + m - 1):
        E = np.zeros((n + m, n + m - 1))
        for col, idx in enumerate(subset):
            i, j = cells[idx]
            E[i, col] = 1.0
            E[n + j, col] = 1.0
        if np.linalg.matrix_rank(E) < n + m - 1:
            continue
        sol, *_ = np.linalg.lstsq(E, rhs, rcond=None)
        if np.max(np.abs(E @ sol - rhs)) > 1e-10 or sol.min() < -1e-12:
            continue
        plan = np.zeros((n, m))
        for col, idx in enumerate(subset):
            plan[cells[idx]] = max(sol[col], 0.0)
        cost = float(np.sum(plan * M))
        if best is None or cost < best.cost:
            best = ExactOtSolution(plan, cost)
    return best


def exhaustive_gw(C1, C2, mu=None, nu=None):
    """Best permutation coupling for the squared-loss GW objective.

    Evaluates ``sum_{i,k} (C1[i,k] - C2[s(i), s(k)])**2 / n**2`` for every
    permutation ``s`` and returns ``(s, value)``; the first minimizer in
    lexicographic order wins ties.  This is an upper bound on GW that is tight
    whenever the spaces are isometric.  ``mu`` and ``nu`` must be uniform.
    """
    C1 = np.asarray(C1, dtype=float)
    C2 = np.asarray(C2, dtype=float)
    n = C1.shape[0]
    if n > MAX_GW_NODES:
        raise ValidationError(f"exhaustive_gw is limited to n <= {MAX_GW_NODES}")
    for w in (mu, nu):
        if w is not None and not np.allclose(w, 1.0 / n):
            raise ValidationError("exhaustive_gw requires uniform measures")
    best_perm, best_val = None, np.inf
    for perm in itertools.permutations(range(n)):
        p = np.array(perm)
        val = float(np.sum((C1 - C2[np.ix_(p, p)]) ** 2)) / n**2
        if val < best_val:
            best_perm, best_val = p, val
    return best_perm, best_val


def _quadratic_tensor(A, B):
    n = A.shape[0]
    L = np.empty((n, n, n, n))
    for i in range(n):
        for j in range(n):
            for k in range(n):
                for l in range(n):
                    L[i, j, k, l] = (A[i, k] - B[j, l]) ** 2
    return L.reshape(n * n, n * n)


def ufgw_objective_bruteforce(pi, A, B, mu, nu, alpha, rho, epsilon, tau):
    """Objective evaluated term by term with the explicit four-index tensor."""
    A, B = np.asarray(A, float), np.asarray(B, float)
    n = A.shape[0]
    x = np.asarray(pi, float).reshape(n * n)
    Q = _quadratic_tensor(A, B)
    return _objective(x[None, :], Q, n, np.asarray(mu, float), np.asarray(nu, float),
                      alpha, rho, epsilon, tau)[0]


def _objective(X, Q, n, mu, nu, alpha, rho, epsilon, tau):
    # X: (restarts, n*n); rows are flattened plans
    P = X.reshape(-1, n, n)
    lin = tau * (P.sum(axis=(1, 2)) - np.trace(P, axis1=1, axis2=2))
    quad = np.einsum("ra,ab,rb->r", X, Q, X)
    r = P.sum(axis=2)
    c = P.sum(axis=1)

    def kl(a, b):
        safe = np.where(a > 0, a, 1.0)
        return np.sum(np.where(a > 0, a * np.log(safe / b), 0.0) - a + b, axis=1)

    safeX = np.where(X > 0, X, 1.0)
    ent = np.sum(np.where(X > 0, X * np.log(safeX), 0.0) - X, axis=1)
    return (1 - alpha) * lin + alpha * quad + rho * (kl(r, mu[None]) + kl(c, nu[None])) + epsilon * ent


def _gradient(X, Q, n, mu, nu, alpha, rho, epsilon, tau):
    P = X.reshape(-1, n, n)
    Mflat = np.full(n * n, tau)
    Mflat[:: n + 1] = 0.0
    r = P.sum(axis=2)
    c = P.sum(axis=1)
    marg = np.log(r / mu[None])[:, :, None] + np.log(c / nu[None])[:, None, :]
    return ((1 - alpha) * Mflat[None] + alpha * X @ (Q + Q.T)
            + rho * marg.reshape(-1, n * n) + epsilon * np.log(X))


def _as_space(space):
    if hasattr(space, "cost"):
        C = np.asarray(space.cost.values, float)
        return C, np.asarray(space.mu, float)
    C = np.asarray(space, float)
    return C, np.full(C.shape[0], 1.0 / C.shape[0])


def reference_ufgw(semantic, graph, cfg, restarts=50, max_steps=3000, seed=0, floor=1e-300,
                   return_plan=False):
    """Best objective value found by projected gradient descent from random starts.

    Every restart takes diagonally scaled projected gradient steps
    ``pi <- max(pi - t * pi * grad, floor)`` on the exact four-index quadratic
    tensor, with an Armijo backtracking step that starts tiny and may grow.
    The scaling by ``pi`` tames the ``log pi`` curvature of the entropy term
    near zero.  The value returned is achieved by an actual plan, so it
    upper-bounds the true minimum.
    """
    A, mu = _as_space(semantic)
    B, nu = _as_space(graph)
    n = A.shape[0]
    if n > MAX_REFERENCE_NODES:
        raise ValidationError(f"reference_ufgw is limited to n <= {MAX_REFERENCE_NODES}")
    args = (_quadratic_tensor(A, B), n, mu, nu, cfg.alpha, cfg.rho, cfg.epsilon, cfg.tau)
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.0, 2.0 / n**2, size=(restarts, n * n)) + 1e-4
    f = _objective(X, *args)
    step = np.full(restarts, 1e-3)
    active = np.ones(restarts, dtype=bool)
    for _ in range(max_steps):
        if not active.any():
            break
        g = _gradient(X, *args) * X
        accepted = np.zeros(restarts, dtype=bool)
        Xn = X.copy()
        fn = f.copy()
        trial = step.copy()
        for _ in range(60):
            todo = active & ~accepted
            if not todo.any():
                break
            idx = np.flatnonzero(todo)
            cand = np.maximum(X[idx] - trial[idx, None] * g[idx], floor)
            fc = _objective(cand, *args)
            ok = fc <= f[idx] - 1e-4 * np.sum(g[idx] / X[idx] * (X[idx] - cand), axis=1)
            Xn[idx[ok]] = cand[ok]
            fn[idx[ok]] = fc[ok]
            accepted[idx[ok]] = True
            trial[idx[~ok]] *= 0.5
        gain = f - fn
        X, f = Xn, fn
        step = np.where(accepted, trial * 2.0, trial)
        active &= accepted & (gain > 1e-16)
    best = int(np.argmin(f))
    if return_plan:
        return float(f[best]), X[best].reshape(n, n)
    return float(f[best])
