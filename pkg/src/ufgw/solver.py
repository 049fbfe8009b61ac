"""Unbalanced fused Gromov-Wasserstein (UFGW) alignment of two measure spaces.

The objective for a plan ``pi >= 0`` between a semantic space ``(A, mu)`` and a
graph space ``(B, nu)`` is::

    (1 - alpha) <M, pi>
    + alpha * sum_{ijkl} (A[i,k] - B[j,l])**2 pi[i,j] pi[k,l]
    + rho * (KL(pi 1 | mu) + KL(pi^T 1 | nu))
    + epsilon * sum_ij (pi log pi - pi)

with ``M`` the anchor prior (0 on the diagonal, ``tau`` elsewhere) and KL the
generalized divergence ``sum a log(a/b) - a + b``.  It is minimized by block
coordinate descent: the quadratic term is linearized at the current plan and
the resulting linear unbalanced problem is solved by Sinkhorn scaling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from . import _kernels
from .errors import NumericalError, ValidationError
from .semantic import MeasureSpace

NODE_CLASSES = ("anchor", "smoothed", "rejected")


@dataclass(frozen=True)
class UfgwConfig:
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
    # "exact": full gradient of the fused objective; "cross": only the
    # 2 alpha Cm pi Cg^T cross term (kept for comparison, not a descent step).
    linearization: str = "exact"
    log_domain_below: float = 0.1
    line_search: bool = True

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValidationError(f"alpha must lie in [0, 1], got {self.alpha}")
        for name in ("rho", "epsilon", "tau", "tol"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive, got {getattr(self, name)}")
        if self.sinkhorn_iters < 1 or self.bcd_iters < 1:
            raise ValidationError("sinkhorn_iters and bcd_iters must be >= 1")
        if not 0 <= self.reject_mass <= self.anchor_mass:
            raise ValidationError("need 0 <= reject_mass <= anchor_mass")
        if self.linearization not in ("exact", "cross"):
            raise ValidationError(f"unknown linearization {self.linearization!r}")


@dataclass(frozen=True)
class TransportPlan:
    pi: np.ndarray
    log_u: np.ndarray
    log_v: np.ndarray
    epsilon: float
    converged: bool
    final_residual: float
    n_iter: int

    @property
    def u(self):
        return np.exp(self.log_u)

    @property
    def v(self):
        return np.exp(self.log_v)

    def reconstruct(self, G) -> np.ndarray:
        """``diag(u) exp(-G/eps) diag(v)`` evaluated stably in log space."""
        return np.exp(self.log_u[:, None] + self.log_v[None, :] - np.asarray(G) / self.epsilon)


@dataclass
class UfgwReport:
    loss_linear: float
    loss_quadratic: float
    loss_kl: float
    loss_entropy: float
    loss_total: float
    loss_quadratic_linearized: float
    entropy: float
    row_mass: np.ndarray
    col_mass: np.ndarray
    diag_share: np.ndarray
    node_class: np.ndarray
    alignment_cost: np.ndarray
    predicted_mass: np.ndarray
    history: list = field(default_factory=list)
    bcd_iterations: int = 0
    converged: bool = False
    final_cost: np.ndarray | None = None

    def class_counts(self):
        return {c: int(np.sum(self.node_class == c)) for c in NODE_CLASSES}


def anchor_matrix(n, tau) -> np.ndarray:
    """Identity prior: zero cost on the diagonal, ``tau`` everywhere else."""
    if not tau > 0:
        raise ValidationError(f"tau must be positive, got {tau}")
    M = np.full((n, n), float(tau))
    np.fill_diagonal(M, 0.0)
    return M


def _values(C):
    return np.asarray(getattr(C, "values", C), dtype=np.float64)


def _check_square(*mats):
    n = mats[0].shape[0]
    for X in mats:
        if X.shape != (n, n):
            raise ValidationError(f"dimension mismatch: expected {(n, n)}, got {X.shape}")


def linearized_gradient(Cm, Cg, M, pi, alpha) -> np.ndarray:
    """Cross-term linearization ``(1-alpha) M + 2 alpha Cm pi Cg^T``.

    This omits the marginal terms of the squared loss and carries the opposite
    sign of its cross term, so it is not the gradient of the fused objective;
    see :func:`fused_gradient` for the one the solver uses by default.
    """
    A, B, M, pi = _values(Cm), _values(Cg), np.asarray(M, float), np.asarray(pi, float)
    _check_square(A, B, M, pi)
    return (1.0 - alpha) * M + 2.0 * alpha * (A @ pi @ B.T)


def quadratic_gradient(A, B, pi) -> np.ndarray:
    """Gradient of ``sum (A[i,k] - B[j,l])**2 pi[i,j] pi[k,l]`` w.r.t. ``pi``.

    Valid for non-symmetric ``A`` and ``B`` (PPR-derived costs are not symmetric).
    """
    r = pi.sum(axis=1)
    c = pi.sum(axis=0)
    A2, B2 = A * A, B * B
    rows = A2 @ r + A2.T @ r
    cols = B2 @ c + B2.T @ c
    return rows[:, None] + cols[None, :] - 2.0 * (A @ pi @ B.T + A.T @ pi @ B)


def fused_gradient(Cm, Cg, M, pi, alpha) -> np.ndarray:
    """Gradient of the anchor plus quadratic part of the objective at ``pi``."""
    A, B, M, pi = _values(Cm), _values(Cg), np.asarray(M, float), np.asarray(pi, float)
    _check_square(A, B, M, pi)
    return (1.0 - alpha) * M + alpha * quadratic_gradient(A, B, pi)


def quadratic_loss(A, B, pi) -> float:
    """Exact structural term via ``r'A^2 r + c'B^2 c - 2 <A pi B^T, pi>``."""
    r = pi.sum(axis=1)
    c = pi.sum(axis=0)
    return float(r @ (A * A) @ r + c @ (B * B) @ c - 2.0 * np.sum((A @ pi @ B.T) * pi))


def generalized_kl(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    pos = a > 0
    return float(np.sum(a[pos] * np.log(a[pos] / b[pos])) - a.sum() + b.sum())


def neg_entropy(pi) -> float:
    """``sum pi log pi - pi`` with ``0 log 0 = 0``."""
    p = pi[pi > 0]
    return float(np.sum(p * np.log(p)) - pi.sum())


def shannon_entropy(pi) -> float:
    p = pi[pi > 0]
    return float(-np.sum(p * np.log(p)))


def ufgw_terms(pi, Cm, Cg, M, mu, nu, alpha, rho, epsilon) -> dict:
    """All objective terms at ``pi``; ``total`` recombines them with their weights."""
    A, B = _values(Cm), _values(Cg)
    pi = np.asarray(pi, dtype=np.float64)
    terms = {
        "linear": float(np.sum(np.asarray(M) * pi)),
        "quadratic": quadratic_loss(A, B, pi),
        "kl": rho * (generalized_kl(pi.sum(axis=1), mu) + generalized_kl(pi.sum(axis=0), nu)),
        "entropy": neg_entropy(pi),
    }
    terms["total"] = ((1.0 - alpha) * terms["linear"] + alpha * terms["quadratic"]
                      + terms["kl"] + epsilon * terms["entropy"])
    return terms


def _check_measure(x, name):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or not np.all(np.isfinite(x)) or np.any(x <= 0):
        raise ValidationError(f"{name} must be a finite, strictly positive vector")
    return x


def unbalanced_sinkhorn(G, mu, nu, rho, epsilon, iters=20, tol=1e-9, init=None,
                        log_domain_below=0.1, backend=None) -> TransportPlan:
    """KL-relaxed entropic transport for the linear cost ``G``.

    Alternates ``u <- (mu / K v)**f`` and ``v <- (nu / K^T u)**f`` with
    ``K = exp(-G/epsilon)`` and ``f = rho / (rho + epsilon)`` until the largest
    change in ``log u`` drops below ``tol`` or ``iters`` sweeps are done.
    When ``epsilon < log_domain_below`` or the plain kernel underflows the
    scalings are kept in log space: the current scalings are absorbed into a
    stabilized kernel and the sweeps run on the small remainders, with full
    log-sum-exp sweeps as the fallback if even that kernel underflows.

    Parameters
    ----------
    G : (n, m) array
        Linear cost.
    mu, nu : arrays
        Strictly positive reference marginals.
    rho : float
        Marginal KL weight; ``math.inf`` gives balanced entropic OT.
    init : tuple of arrays, optional
        Warm-start ``(log_u, log_v)``.
    """
    G = np.asarray(G, dtype=np.float64)
    mu = _check_measure(mu, "mu")
    nu = _check_measure(nu, "nu")
    if G.shape != (mu.size, nu.size):
        raise ValidationError(f"cost shape {G.shape} does not match measures {(mu.size, nu.size)}")
    if not np.all(np.isfinite(G)):
        raise NumericalError("non-finite linear cost", {"min": float(np.nanmin(G)), "max": float(np.nanmax(G))})
    if not (rho > 0 and epsilon > 0):
        raise ValidationError("rho and epsilon must be positive")
    fi = 1.0 if math.isinf(rho) else rho / (rho + epsilon)
    kern = _kernels.get_backend(backend)
    if init is None:
        log_u, log_v = np.zeros(mu.size), np.zeros(nu.size)
    else:
        log_u, log_v = (np.asarray(x, dtype=np.float64) for x in init)

    use_log = epsilon < log_domain_below
    if not use_log:
        K = np.exp(-G / epsilon)
        if np.any(K.sum(axis=1) == 0) or np.any(K.sum(axis=0) == 0):
            use_log = True
    if use_log:
        start = (log_u, log_v)
        log_u, log_v, n_iter, residual, ok = kern.sinkhorn_stabilized(
            G, np.log(mu), np.log(nu), epsilon, fi, iters, tol, *start)
        if not ok:
            # absorbed kernel underflowed; redo every sweep with log-sum-exp
            log_u, log_v, n_iter, residual = kern.sinkhorn_log(
                G, np.log(mu), np.log(nu), epsilon, fi, iters, tol, *start)
    else:
        u, v, n_iter, residual = kern.sinkhorn_plain(K, mu, nu, fi, iters, tol, np.exp(log_u), np.exp(log_v))
        log_u, log_v = np.log(u), np.log(v)
        if not (np.all(np.isfinite(log_u)) and np.all(np.isfinite(log_v))):
            log_u, log_v, n_iter, residual = kern.sinkhorn_log(
                G, np.log(mu), np.log(nu), epsilon, fi, iters, tol, np.zeros(mu.size), np.zeros(nu.size))
    pi = np.exp(log_u[:, None] + log_v[None, :] - G / epsilon)
    if not np.all(np.isfinite(pi)) or not pi.any():
        raise NumericalError("transport kernel underflowed to zero",
                             {"min_G_over_eps": float(G.min() / epsilon), "max_G_over_eps": float(G.max() / epsilon)})
    return TransportPlan(pi, log_u, log_v, float(epsilon), bool(residual < tol), float(residual), int(n_iter))


def mass_equilibrium_diagnostics(plan, G, mu, rho):
    """Per-node ``(c, r, predicted_r)`` for the soft-thresholding relation.

    ``c`` is the mass-weighted row cost, ``r`` the row mass and
    ``predicted_r`` is ``mu * exp(-c / rho)`` rescaled to the same total as ``r``.
    """
    pi = plan.pi if isinstance(plan, TransportPlan) else np.asarray(plan)
    G = np.asarray(G, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    r = pi.sum(axis=1)
    c = (pi * G).sum(axis=1) / np.maximum(r, 1e-30)
    logp = np.log(mu) - c / rho
    w = np.exp(logp - logp.max())
    predicted = w * (r.sum() / w.sum())
    return c, r, predicted


def classify_nodes(pi, mu, cfg: UfgwConfig):
    r = pi.sum(axis=1)
    share = np.diag(pi) / np.maximum(r, 1e-300)
    cls = np.full(r.size, "smoothed", dtype=object)
    cls[(r >= cfg.anchor_mass * mu) & (share >= cfg.anchor_diagonal)] = "anchor"
    cls[r < cfg.reject_mass * mu] = "rejected"
    return cls.astype(str), share


class _Structure:
    """Cached pieces of the structural term for fixed cost matrices ``A, B``.

    Uses ``<A pi B^T, pi> = <A^T pi B, pi>``, so with ``Z = A pi B^T + A^T pi B``
    the gradient is ``(A2s r) 1^T + 1 (B2s c)^T - 2 Z`` and the value is
    ``(r'A2s r + c'B2s c) / 2 - <Z, pi>`` where ``A2s = A*A + (A*A)^T``.
    One symmetric cost matrix brings ``Z`` down to two matrix products.
    """

    def __init__(self, A, B):
        self.A, self.B = A, B
        A2, B2 = A * A, B * B
        self.A2s = A2 + A2.T
        self.B2s = B2 + B2.T
        self.a_sym = bool(np.array_equal(A, A.T))
        self.b_sym = bool(np.array_equal(B, B.T))
        self.As = A + A.T
        self.Bs = B + B.T

    def cross(self, pi):
        if self.a_sym:
            return (self.A @ pi) @ self.Bs
        if self.b_sym:
            return self.As @ (pi @ self.B)
        return self.A @ pi @ self.B.T + self.A.T @ pi @ self.B

    def value(self, pi, Z=None):
        Z = self.cross(pi) if Z is None else Z
        r, c = pi.sum(axis=1), pi.sum(axis=0)
        return float(0.5 * (r @ self.A2s @ r + c @ self.B2s @ c) - np.sum(Z * pi))

    def gradient(self, pi, Z=None):
        Z = self.cross(pi) if Z is None else Z
        r, c = pi.sum(axis=1), pi.sum(axis=0)
        return (self.A2s @ r)[:, None] + (self.B2s @ c)[None, :] - 2.0 * Z


def _line_search(pi, d, M, mu, nu, q0, q1, q2, cfg):
    """Step in [0, 1] minimizing the objective on the segment ``pi + t d``.

    ``q0 + t q1 + t^2 q2`` is the structural term along the segment, which is
    exact because that term is quadratic in the plan.  Returns ``(t, f(t))``.
    """
    lin0 = float(np.sum(M * pi))
    lin1 = float(np.sum(M * d))
    a = cfg.alpha
    r0, rd = pi.sum(axis=1), d.sum(axis=1)
    c0, cd = pi.sum(axis=0), d.sum(axis=0)
    # pi and pi + d are both nonnegative, so the whole segment is too
    p0, pd = pi.ravel(), d.ravel()

    def kl(x, ref):
        with np.errstate(divide="ignore", invalid="ignore"):
            return float(np.sum(np.where(x > 0, x * np.log(x / ref), 0.0)) - x.sum() + ref.sum())

    def f(t):
        p = p0 + t * pd
        with np.errstate(divide="ignore", invalid="ignore"):
            ent = float(np.sum(np.where(p > 0, p * np.log(p), 0.0)) - p.sum())
        smooth = (1 - a) * (lin0 + t * lin1) + a * (q0 + t * q1 + t * t * q2)
        return smooth + cfg.rho * (kl(r0 + t * rd, mu) + kl(c0 + t * cd, nu)) + cfg.epsilon * ent

    res = minimize_scalar(f, bounds=(0.0, 1.0), method="bounded", options={"xatol": 1e-7})
    # the bounded search never evaluates the end points themselves
    return min(((float(res.x), float(res.fun)), (1.0, f(1.0)), (0.0, f(0.0))), key=lambda x: x[1])


def solve_ufgw(semantic: MeasureSpace, graph: MeasureSpace, cfg: UfgwConfig | None = None,
               backend=None):
    """Minimize the UFGW objective by block coordinate descent.

    Starts from the product coupling ``mu nu^T``.  Every outer iteration
    linearizes the quadratic term at the current plan, solves the unbalanced
    Sinkhorn problem (warm-started from the previous scalings), moves towards
    its solution by an exact line search on the true objective and stops when
    the objective changes by less than ``cfg.bcd_tol``.

    Returns
    -------
    plan : TransportPlan
        The last Sinkhorn solution; ``plan.reconstruct(report.final_cost)``
        reproduces ``plan.pi``.
    report : UfgwReport
        Loss terms at the returned plan (exact quadratic term), per-node masses,
        classes and equilibrium diagnostics.  ``history`` holds the objective
        at the initial plan followed by its value at the line-searched iterate
        after each outer iteration.
    """
    cfg = cfg or UfgwConfig()
    A, B = semantic.cost.values, graph.cost.values
    mu, nu = semantic.mu, graph.mu
    if A.shape != B.shape:
        raise ValidationError(f"spaces differ in size: {A.shape[0]} vs {B.shape[0]}")
    n = A.shape[0]
    M = anchor_matrix(n, cfg.tau)
    S = _Structure(A, B)

    pi = np.outer(mu, nu)
    Z = S.cross(pi)
    grad_q = S.gradient(pi, Z)
    q = S.value(pi, Z)
    history = [ufgw_terms(pi, A, B, M, mu, nu, cfg.alpha, cfg.rho, cfg.epsilon)["total"]]
    init = None
    plan = None
    G = None
    quad_lin = 0.0
    it = 0
    for it in range(1, cfg.bcd_iters + 1):
        if cfg.linearization == "exact":
            G = (1.0 - cfg.alpha) * M + cfg.alpha * grad_q
        else:
            G = linearized_gradient(A, B, M, pi, cfg.alpha)
        plan = unbalanced_sinkhorn(G, mu, nu, cfg.rho, cfg.epsilon, cfg.sinkhorn_iters, cfg.tol,
                                   init=init, log_domain_below=cfg.log_domain_below, backend=backend)
        init = (plan.log_u, plan.log_v)
        d = plan.pi - pi
        q1 = float(np.sum(grad_q * d))
        quad_lin = 0.5 * float(np.sum(grad_q * plan.pi))
        q2 = S.value(d)
        if cfg.line_search:
            step, value = _line_search(pi, d, M, mu, nu, q, q1, q2, cfg)
        else:
            step = 1.0
            value = ufgw_terms(plan.pi, A, B, M, mu, nu, cfg.alpha, cfg.rho, cfg.epsilon)["total"]
        pi = pi + step * d
        q = q + step * q1 + step * step * q2
        history.append(value)
        if abs(history[-1] - history[-2]) < cfg.bcd_tol or it == cfg.bcd_iters:
            break
        grad_q = S.gradient(pi)

    # report on the last Sinkhorn plan so that it reconstructs exactly from
    # its kernel; at a fixed point it coincides with the line-searched iterate
    pi = plan.pi
    terms = ufgw_terms(pi, A, B, M, mu, nu, cfg.alpha, cfg.rho, cfg.epsilon)
    if not all(math.isfinite(v) for v in terms.values()):
        raise NumericalError("non-finite UFGW loss", terms)
    cls, share = classify_nodes(pi, mu, cfg)
    c, r, predicted = mass_equilibrium_diagnostics(plan, G, mu, cfg.rho)
    report = UfgwReport(
        loss_linear=terms["linear"],
        loss_quadratic=terms["quadratic"],
        loss_kl=terms["kl"],
        loss_entropy=terms["entropy"],
        loss_total=terms["total"],
        loss_quadratic_linearized=quad_lin,
        entropy=shannon_entropy(pi),
        row_mass=r,
        col_mass=pi.sum(axis=0),
        diag_share=share,
        node_class=cls,
        alignment_cost=c,
        predicted_mass=predicted,
        history=history,
        bcd_iterations=it,
        converged=plan.converged,
        final_cost=G,
    )
    return plan, report
