"""Deterministic tensor D, its closed-form SVD and the constant-column-sum
decompositions into deterministic assignments.

A single-party assignment ``(a_0, ..., a_{m-1})`` prescribes output ``a_x``
for input ``x``. It is flattened with the first input most significant, and
a joint (Alice, Bob) assignment puts Alice's index in the high digits.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .behavior import Behavior, Scenario, behavior_new
from .errors import InvalidDimension, LengthMismatch, NegativeEntry, NotConstantColumnSums

DENSE_LIMIT = 10**6

Assignment = tuple  # tuple of m output labels


def assignment_index(outputs, n: int) -> int:
    idx = 0
    for a in outputs:
        if not 0 <= a < n:
            raise ValueError(f"output {a} out of range for n={n}")
        idx = idx * n + int(a)
    return idx


def assignment_from_index(idx: int, n: int, m: int) -> Assignment:
    out = []
    for _ in range(m):
        idx, r = divmod(idx, n)
        out.append(r)
    return tuple(reversed(out))


def iter_assignments(n: int, m: int) -> Iterator[Assignment]:
    for idx in range(n**m):
        yield assignment_from_index(idx, n, m)


@dataclass(frozen=True, eq=False)
class QuasiProb:
    """Quasi-probability over joint deterministic assignments."""

    scenario: Scenario
    q: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=float, copy=True).ravel()
        if q.size != self.scenario.quasi_size:
            raise LengthMismatch(
                f"expected {self.scenario.quasi_size} entries, got {q.size}"
            )
        q.flags.writeable = False
        object.__setattr__(self, "q", q)

    def matrix(self) -> np.ndarray:
        """View as an (Alice assignment) x (Bob assignment) matrix."""
        k = self.scenario.party_assignments
        return self.q.reshape(k, k)

    def to_dict(self) -> dict:
        return {"n": self.scenario.n, "m": self.scenario.m, "q": self.q.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "QuasiProb":
        return cls(Scenario(int(data["n"]), int(data["m"])), np.asarray(data["q"], dtype=float))


@dataclass
class StochasticDecomposition:
    terms: list = field(default_factory=list)  # [(assignment, weight)]

    @property
    def total_weight(self) -> float:
        return float(sum(w for _, w in self.terms))

    def reconstruct(self, n: int, m: int) -> np.ndarray:
        return reconstruct_terms(self.terms, n, m)


def reconstruct_terms(terms, n: int, m: int) -> np.ndarray:
    M = np.zeros((n, m))
    cols = np.arange(m)
    for assignment, weight in terms:
        M[np.asarray(assignment), cols] += weight
    return M


def rotation_matrix(d: int) -> np.ndarray:
    """Orthogonal d x d matrix whose first column is constant.

    Column ``b > 0`` has ``1/sqrt(b(b+1))`` above the diagonal,
    ``-b/sqrt(b(b+1))`` on it and zeros below, so it sums to zero.
    ``d = 1`` gives ``[[1]]`` (needed for single-input scenarios).
    """
    if int(d) != d or d < 1:
        raise InvalidDimension(f"rotation dimension must be >= 1, got {d}")
    R = np.zeros((d, d))
    R[:, 0] = 1.0 / np.sqrt(d)
    for b in range(1, d):
        norm = np.sqrt(b * (b + 1.0))
        R[:b, b] = 1.0 / norm
        R[b, b] = -b / norm
    return R


def controlled_rotation(n: int, m: int) -> np.ndarray:
    """Tensor ``cr[a, x, y]``: the m-dim rotation when a == 0, identity otherwise."""
    Rm = rotation_matrix(m)
    cr = np.broadcast_to(np.eye(m), (n, m, m)).copy()
    cr[0] = Rm
    return cr


def deterministic_map(q, n: int, m: int) -> np.ndarray:
    """Raw ``P[x, y, a, b] = sum delta(a, a_x) delta(b, b_y) q`` without validation.

    Works by summing the tensor ``q[a_0..a_{m-1}, b_0..b_{m-1}]`` over every
    axis except ``a_x`` and ``b_y``; the matrix ``D (x) D`` is never built.
    """
    q = np.asarray(q, dtype=float)
    if q.size != n ** (2 * m):
        raise LengthMismatch(f"expected {n ** (2 * m)} entries, got {q.size}")
    t = q.reshape((n,) * (2 * m))
    P = np.empty((m, m, n, n))
    for x in range(m):
        # collapse Alice's other inputs once per x
        other_a = tuple(i for i in range(m) if i != x)
        tx = t.sum(axis=other_a) if other_a else t
        for y in range(m):
            other_b = tuple(1 + i for i in range(m) if i != y)
            P[x, y] = tx.sum(axis=other_b) if other_b else tx
    return P


def apply_deterministic(q: QuasiProb) -> Behavior:
    """Push a quasi-probability through ``D (x) D`` and validate the result.

    Raises :class:`NegativeEntry` when ``q`` produces negative probabilities.
    """
    s = q.scenario
    return behavior_new(s, deterministic_map(q.q, s.n, s.m))


def deterministic_tensor(n: int, m: int) -> np.ndarray:
    """Dense single-party D with rows ``(a, x)`` flattened as ``a*m + x``.

    Only for small scenarios; refuses above 1e6 entries.
    """
    k = n**m
    if n * m * k > DENSE_LIMIT:
        raise InvalidDimension(f"dense D would have {n * m * k} entries")
    D = np.zeros((n * m, k))
    for j in range(k):
        for x, a in enumerate(assignment_from_index(j, n, m)):
            D[a * m + x, j] = 1.0
    return D


def _column_sums(M: np.ndarray, tol: float) -> float:
    sums = M.sum(axis=0)
    if np.max(sums) - np.min(sums) > tol:
        raise NotConstantColumnSums(f"column sums {sums.tolist()} differ beyond {tol:g}")
    return float(sums.mean())


def decompose_stochastic(M, tol: float = 1e-9) -> StochasticDecomposition:
    """Greedy non-negative decomposition ``M = sum_k w_k delta(a, a^k_x)``.

    Each step takes the smallest positive entry of every column (lowest row
    on ties), subtracts the smallest of those values along that assignment
    and records it. At least one entry reaches zero per step.
    """
    M = np.array(M, dtype=float, copy=True)
    if M.ndim != 2:
        raise ValueError("expected a 2-d matrix")
    n, m = M.shape
    _column_sums(M, tol)
    if np.any(M < -tol):
        idx = tuple(int(i) for i in np.argwhere(M < -tol)[0])
        raise NegativeEntry(idx, float(M[idx]))
    M[M < 0] = 0.0
    cols = np.arange(m)
    terms = []
    for _ in range(n * m + 1):
        positive = M > 0
        if not positive.any(axis=0).all():
            # a column is exhausted; anything left is round-off
            break
        masked = np.where(positive, M, np.inf)
        rows = np.argmin(masked, axis=0)
        picks = M[rows, cols]
        lam = float(picks.min())
        M[rows, cols] -= lam
        hit = picks == lam
        M[rows[hit], cols[hit]] = 0.0
        terms.append((tuple(int(r) for r in rows), lam))
    return StochasticDecomposition(terms)


def decompose_signed(M, tol: float = 1e-9) -> list:
    """Signed decomposition of a matrix with constant column sums.

    Negative entries are cancelled against a positive entry of the same
    column using pairs of assignments that differ in that column only; the
    non-negative remainder then goes through :func:`decompose_stochastic`.
    Returns a list of ``(assignment, weight)`` with distinct assignments.
    """
    M = np.array(M, dtype=float, copy=True)
    if M.ndim != 2:
        raise ValueError("expected a 2-d matrix")
    n, m = M.shape
    total = _column_sums(M, tol)
    sign = 1.0
    if total < 0:
        M = -M
        sign = -1.0
    weights: dict = {}

    def add(assignment, w):
        weights[assignment] = weights.get(assignment, 0.0) + w

    for x in range(m):
        col = M[:, x]
        while True:
            neg = np.flatnonzero(col < 0)
            if neg.size == 0:
                break
            a = int(neg[0])
            pos = np.flatnonzero(col > 0)
            if pos.size == 0:
                # only possible for a (near) zero column sum: round-off
                col[neg] = 0.0
                break
            a2 = int(pos[np.argmax(col[pos])])
            lam = float(min(-col[a], col[a2]))
            base = [0] * m
            base[x] = a
            add(tuple(base), -lam)
            base[x] = a2
            add(tuple(base), lam)
            if lam == -col[a]:
                col[a] = 0.0
                col[a2] -= lam
            else:
                col[a] += lam
                col[a2] = 0.0
    for assignment, w in decompose_stochastic(M, tol).terms:
        add(assignment, w)
    return [(k, sign * w) for k, w in weights.items() if w != 0.0]


@dataclass(frozen=True, eq=False)
class SvdFactors:
    """Closed-form SVD ``D = U S V^T`` of the single-party deterministic tensor.

    ``S_entries`` maps a left singular label ``(a, x)`` to the pair
    ``(assignment index, singular value)``; labels absent from the map have
    zero singular value.
    """

    scenario: Scenario
    R: np.ndarray
    R_input: np.ndarray
    S_entries: dict

    @property
    def rank(self) -> int:
        return len(self.S_entries)

    def singular_values(self) -> np.ndarray:
        return np.sort(np.array([v for _, v in self.S_entries.values()]))[::-1]

    def U(self) -> np.ndarray:
        """Dense U with rows ``(a, x)`` and columns ``(a', x')`` as ``a*m + x``."""
        n, m = self.scenario.n, self.scenario.m
        cr = controlled_rotation(n, m)
        # U[a, x, a', x'] = R[a, a'] * cr[a', x, x']
        U = np.einsum("ab,bxy->axby", self.R, cr)
        return U.reshape(n * m, n * m)

    def S(self) -> np.ndarray:
        n, m = self.scenario.n, self.scenario.m
        S = np.zeros((n * m, n**m))
        for (a, x), (j, v) in self.S_entries.items():
            S[a * m + x, j] = v
        return S

    def V(self) -> np.ndarray:
        n, m = self.scenario.n, self.scenario.m
        if n ** (2 * m) > DENSE_LIMIT:
            raise InvalidDimension("dense V too large")
        V = np.ones((1, 1))
        for _ in range(m):
            V = np.kron(V, self.R)
        return V

    def reconstruct(self) -> np.ndarray:
        return self.U() @ self.S() @ self.V().T

    def weighted_left(self) -> tuple[np.ndarray, np.ndarray]:
        """``(US restricted to nonzero singular values, support indices)``.

        Columns follow the increasing order of the supported assignment
        indices, which is the order used for fixed correlation coordinates.
        """
        n, m = self.scenario.n, self.scenario.m
        U = self.U()
        items = sorted(self.S_entries.items(), key=lambda kv: kv[1][0])
        support = np.array([j for _, (j, _) in items], dtype=np.int64)
        W = np.empty((n * m, len(items)))
        for col, ((a, x), (_, v)) in enumerate(items):
            W[:, col] = U[:, a * m + x] * v
        return W, support


def svd_factors(scenario: Scenario) -> SvdFactors:
    n, m = scenario.n, scenario.m
    base = np.sqrt(float(n) ** (m - 1))
    entries = {(0, 0): (0, base * np.sqrt(m))}
    for x in range(m):
        for a in range(1, n):
            entries[(a, x)] = (a * n ** (m - 1 - x), base)
    return SvdFactors(scenario, rotation_matrix(n), rotation_matrix(m), entries)
