"""Exact linear-programming reference.

A dense two-phase revised simplex (explicit basis inverse with periodic
refactorization) plus the two LPs used as baselines: basis pursuit over
``(D (x) D) q = P`` and the l1 distance to the local polytope.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Iterator

import numpy as np
from scipy import sparse

from .behavior import Behavior, Scenario, behavior_new
from .detcomp import QuasiProb, assignment_from_index
from .errors import Infeasible, ProblemTooLarge, TooManyVertices

logger = logging.getLogger(__name__)

DEFAULT_VARIABLE_CAP = 4096
DEFAULT_VERTEX_CAP = 10**7
PIVOT_TOL = 1e-9
BLAND_AFTER = 50
DEVEX_RESET = 1e6
PIVOT_RULES = ("bland", "dantzig-bland", "devex-bland")


class LpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"


@dataclass
class LinearProgram:
    """``min c^T x  s.t.  A x = b,  x >= lower_bounds``.

    ``equality_lhs`` may be a dense array or a scipy sparse matrix.
    """

    objective: np.ndarray
    equality_lhs: np.ndarray | sparse.spmatrix
    equality_rhs: np.ndarray
    lower_bounds: np.ndarray | None = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float).ravel()
        if sparse.issparse(self.equality_lhs):
            A = sparse.csc_matrix(self.equality_lhs, dtype=float)
        else:
            A = np.asarray(self.equality_lhs, dtype=float)
            if A.ndim == 1:
                A = A.reshape(-1, self.objective.size)
        self.equality_lhs = A
        self.equality_rhs = np.asarray(self.equality_rhs, dtype=float).ravel()
        if self.lower_bounds is None:
            self.lower_bounds = np.zeros(self.objective.size)
        self.lower_bounds = np.asarray(self.lower_bounds, dtype=float).ravel()
        nv = self.objective.size
        if A.shape[1] != nv or A.shape[0] != self.equality_rhs.size or self.lower_bounds.size != nv:
            raise ValueError(
                f"inconsistent LP dimensions: c {nv}, A {A.shape}, "
                f"b {self.equality_rhs.size}, lb {self.lower_bounds.size}"
            )


@dataclass
class LpSolution:
    x: np.ndarray
    objective_value: float
    status: LpStatus
    iterations: int = 0


class _Tableau:
    """Basis bookkeeping for the revised simplex on ``A x = b, x >= 0``."""

    def __init__(self, A, b, basis, refactor_every):
        self.A = sparse.csc_matrix(A)
        self.b = b
        self.basis = list(basis)
        self.refactor_every = refactor_every
        self.since_refactor = 0
        self.refactor()

    def refactor(self):
        B = self.A[:, self.basis].toarray()
        self.Binv = np.linalg.inv(B)
        self.xB = self.Binv @ self.b
        self.since_refactor = 0

    def column(self, j):
        """``B^-1 A[:, j]`` touching only the nonzeros of column j."""
        lo, hi = self.A.indptr[j], self.A.indptr[j + 1]
        return self.Binv[:, self.A.indices[lo:hi]] @ self.A.data[lo:hi]

    def row(self, r):
        """Row r of ``B^-1 A``."""
        return self.A.T @ self.Binv[r]

    def delete_row(self, i):
        keep = np.ones(self.A.shape[0], dtype=bool)
        keep[i] = False
        self.A = sparse.csc_matrix(self.A[keep])
        self.b = self.b[keep]

    def pivot(self, r, j, col):
        piv = col[r]
        self.Binv[r] /= piv
        rowr = self.Binv[r].copy()
        self.Binv -= np.outer(col, rowr)
        self.Binv[r] = rowr
        theta = self.xB[r] / piv
        self.xB -= theta * col
        self.xB[r] = theta
        self.basis[r] = j
        self.since_refactor += 1
        if self.since_refactor >= self.refactor_every:
            self.refactor()


def _run_simplex(tab: _Tableau, c, allowed, max_iters, tol, pivot_rule):
    """Iterate until optimal/unbounded/limit. ``allowed`` masks enterable columns.

    Reduced costs are updated from the pivot row each iteration and recomputed
    from scratch after every refactorization and before declaring optimality.
    """
    A = tab.A
    scale = 1.0 + np.max(np.abs(c))
    weights = np.ones(A.shape[1])  # devex reference weights
    iters = 0
    degenerate_run = 0
    use_bland = pivot_rule == "bland"
    d = None
    while iters < max_iters:
        fresh = d is None or tab.since_refactor == 0
        if fresh:
            d = c - A.T @ (c[tab.basis] @ tab.Binv)
        price = np.where(allowed, d, 0.0)
        price[tab.basis] = 0.0
        candidates = np.flatnonzero(price < -tol * scale)
        if candidates.size == 0:
            if fresh:
                return LpStatus.OPTIMAL, iters
            d = None
            continue
        if use_bland:
            j = int(candidates[0])
        elif pivot_rule == "devex-bland":
            dc = price[candidates]
            j = int(candidates[np.argmax(dc * dc / weights[candidates])])
        else:
            j = int(candidates[np.argmin(price[candidates])])
        col = tab.column(j)
        pos = np.flatnonzero(col > PIVOT_TOL * max(1.0, float(np.max(np.abs(col)))))
        if pos.size == 0:
            return LpStatus.UNBOUNDED, iters
        xb = np.maximum(tab.xB[pos], 0.0)
        ratios = xb / col[pos]
        best = ratios.min()
        tied = ratios <= best + tol
        # among tied rows skip pivots much smaller than the best available one
        tied &= col[pos] >= 1e-3 * col[pos][tied].max()
        ties = pos[tied]
        # Bland's leaving rule: smallest variable index among tied rows
        r = int(min(ties, key=lambda i: tab.basis[i]))
        if best <= tol:
            degenerate_run += 1
        else:
            degenerate_run = 0
        if pivot_rule != "bland":
            # fall back to Bland while stalled on a degenerate vertex
            use_bland = degenerate_run >= BLAND_AFTER
        alpha = tab.row(r)
        piv = col[r]
        leaving = tab.basis[r]
        d -= (d[j] / piv) * alpha
        d[j] = 0.0
        wj = weights[j]
        np.maximum(weights, (alpha / piv) ** 2 * wj, out=weights)
        weights[leaving] = max(wj / piv**2, 1.0)
        if weights.max() > DEVEX_RESET:
            weights[:] = 1.0
        tab.pivot(r, j, col)
        iters += 1
    return LpStatus.ITERATION_LIMIT, iters


def lp_solve(lp: LinearProgram, max_iters: int = 200000, tol: float = 1e-10,
             pivot_rule: str = "bland", refactor_every: int = 64) -> LpSolution:
    """Two-phase revised simplex.

    ``pivot_rule`` is ``"bland"`` (smallest-index entering and leaving
    variables, cycle-free) or ``"dantzig-bland"`` (most negative reduced cost,
    switching to Bland after a run of degenerate pivots). Pivoting is
    deterministic either way. Never raises on LP outcomes; inspect
    ``status``.
    """
    if pivot_rule not in PIVOT_RULES:
        raise ValueError(f"unknown pivot rule {pivot_rule!r}")
    c = lp.objective
    A = lp.equality_lhs
    lb = lp.lower_bounds
    A_data = A.data if sparse.issparse(A) else A
    if not (np.all(np.isfinite(c)) and np.all(np.isfinite(A_data)) and np.all(np.isfinite(lp.equality_rhs))
            and np.all(np.isfinite(lb))):
        raise ValueError("LP data must be finite")
    nv = c.size
    b = lp.equality_rhs - A @ lb
    nr = A.shape[0]
    if nr == 0:
        if np.any(c < 0):
            return LpSolution(lb.copy(), float("-inf"), LpStatus.UNBOUNDED)
        return LpSolution(lb.copy(), float(c @ lb), LpStatus.OPTIMAL)

    sign = np.where(b < 0, -1.0, 1.0)
    A1 = sparse.hstack([sparse.diags(sign) @ sparse.csc_matrix(A), sparse.identity(nr)],
                       format="csc")
    b1 = b * sign
    c1 = np.concatenate([np.zeros(nv), np.ones(nr)])
    tab = _Tableau(A1, b1, range(nv, nv + nr), refactor_every)
    allowed = np.ones(nv + nr, dtype=bool)
    status, it1 = _run_simplex(tab, c1, allowed, max_iters, tol, pivot_rule)
    total = it1
    if status is LpStatus.ITERATION_LIMIT:
        return LpSolution(np.full(nv, np.nan), float("nan"), status, total)
    tab.refactor()
    infeas = float(np.sum(np.maximum(tab.xB[[i for i, v in enumerate(tab.basis) if v >= nv]], 0.0)))
    if infeas > 1e-9 * max(1.0, float(np.max(np.abs(b1)))):
        return LpSolution(np.full(nv, np.nan), float("nan"), LpStatus.INFEASIBLE, total)

    # drive artificials out of the basis; rows where that is impossible are redundant
    r = 0
    while r < len(tab.basis):
        if tab.basis[r] < nv:
            r += 1
            continue
        row = tab.row(r)[:nv]
        row[[v for v in tab.basis if v < nv]] = 0.0
        j = int(np.argmax(np.abs(row)))
        if abs(row[j]) > 1e-9:
            col = tab.column(j)
            tab.pivot(r, j, col)
            r += 1
        else:
            # the artificial's own row is a combination of the others
            i = int(tab.A[:, tab.basis[r]].indices[0])
            del tab.basis[r]
            tab.delete_row(i)
            tab.refactor()
    # phase 2 on the original columns only
    tab.A = tab.A[:, :nv]
    tab.refactor()
    status, it2 = _run_simplex(tab, c, np.ones(nv, dtype=bool), max_iters - total, tol, pivot_rule)
    total += it2
    tab.refactor()
    x = np.zeros(nv)
    x[tab.basis] = np.maximum(tab.xB, 0.0)
    x += lb
    if status is LpStatus.UNBOUNDED:
        return LpSolution(x, float("-inf"), status, total)
    return LpSolution(x, float(c @ x), status, total)


def local_vertices(scenario: Scenario, cap: int = DEFAULT_VERTEX_CAP) -> Iterator[Behavior]:
    """All deterministic behaviors in flat joint-assignment order (streamed)."""
    n, m = scenario.n, scenario.m
    count = scenario.quasi_size
    if count > cap:
        raise TooManyVertices(f"{count} vertices exceed cap {cap}")
    k = n**m
    for idx in range(count):
        alice = assignment_from_index(idx // k, n, m)
        bob = assignment_from_index(idx % k, n, m)
        p = np.zeros(scenario.shape)
        for x, y in itertools.product(range(m), repeat=2):
            p[x, y, alice[x], bob[y]] = 1.0
        yield behavior_new(scenario, p)


def deterministic_matrix(scenario: Scenario) -> np.ndarray:
    """Dense ``D (x) D`` with rows ``(x, y, a, b)`` and one column per vertex."""
    n, m = scenario.n, scenario.m
    k = n**m
    onehot = np.zeros((k, m, n))  # onehot[j, x, a] = delta(a, a_x(j))
    for j in range(k):
        for x, a in enumerate(assignment_from_index(j, n, m)):
            onehot[j, x, a] = 1.0
    DD = np.einsum("ixa,jyb->xyabij", onehot, onehot)
    return DD.reshape(scenario.behavior_size, k * k)


def min_l1_quasiprob_lp(b: Behavior, cap: int = DEFAULT_VARIABLE_CAP, **lp_kwargs):
    """Basis pursuit ``min ||q||_1  s.t.  (D (x) D) q = P`` as an LP.

    Returns ``(QuasiProb, l1)``. Raises :class:`Infeasible` when no
    quasi-probability reproduces ``P``, which happens exactly for
    signalling behaviors.
    """
    s = b.scenario
    N = s.quasi_size
    if N > cap:
        raise ProblemTooLarge(f"{N} quasi-probability entries exceed cap {cap}")
    DD = sparse.csc_matrix(deterministic_matrix(s))
    lp = LinearProgram(
        objective=np.ones(2 * N),
        equality_lhs=sparse.hstack([DD, -DD], format="csc"),
        equality_rhs=b.p.ravel(),
    )
    sol = lp_solve(lp, **lp_kwargs)
    if sol.status is LpStatus.INFEASIBLE:
        raise Infeasible("no quasi-probability reproduces the behavior (signalling input?)")
    if sol.status is not LpStatus.OPTIMAL:
        raise Infeasible(f"basis pursuit LP ended with status {sol.status.value}")
    q = sol.x[:N] - sol.x[N:]
    return QuasiProb(s, q), float(np.sum(np.abs(q)))


def ns_distance(b: Behavior, cap: int = DEFAULT_VARIABLE_CAP, **lp_kwargs) -> float:
    """Unnormalized l1 distance ``min_w ||P - sum_l w_l D_l||_1`` to the local polytope.

    The sum runs over all ``m**2 n**2`` entries of P; no 1/2 or 1/m**2 factor.
    """
    s = b.scenario
    N = s.quasi_size
    if N > cap:
        raise TooManyVertices(f"{N} vertices exceed cap {cap}")
    M = s.behavior_size
    DD = sparse.csc_matrix(deterministic_matrix(s))
    eye = sparse.identity(M)
    A = sparse.vstack([
        sparse.hstack([DD, eye, -eye]),
        sparse.hstack([np.ones((1, N)), sparse.csr_matrix((1, 2 * M))]),
    ], format="csc")
    lp = LinearProgram(
        objective=np.concatenate([np.zeros(N), np.ones(2 * M)]),
        equality_lhs=A,
        equality_rhs=np.concatenate([b.p.ravel(), [1.0]]),
    )
    sol = lp_solve(lp, **lp_kwargs)
    if sol.status is not LpStatus.OPTIMAL:
        raise Infeasible(f"distance LP ended with status {sol.status.value}")
    return max(sol.objective_value, 0.0)


def is_local(b: Behavior, tol: float = 1e-9, **kwargs) -> bool:
    return ns_distance(b, **kwargs) <= tol
