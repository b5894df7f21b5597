"""Correlation basis: ``z = (R^T)^{(x)2m} q`` and the coordinates of z that a
behavior pins down.

Orientation: ``to_correlation_basis`` applies ``R^T`` to every index, so
``q = R^{(x)2m} z``. With this choice the all-zero coordinate of any
normalized q equals ``n**-m``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .behavior import Behavior, Scenario, all_marginals, behavior_new
from .detcomp import QuasiProb, rotation_matrix, svd_factors
from .errors import LengthMismatch, UnsupportedScenario


def kron_apply(R: np.ndarray, k: int, v, adjoint: bool = False) -> np.ndarray:
    """Apply ``R^{(x)k}`` (or its transpose) to ``v`` without forming it.

    One pass per tensor factor: reshape to ``(d, d**(k-1))``, multiply, and
    transpose so the next factor comes to the front. After ``k`` passes the
    axes are back in their original order.
    """
    R = np.asarray(R, dtype=float)
    d = R.shape[0]
    v = np.asarray(v, dtype=float)
    if R.shape != (d, d):
        raise LengthMismatch(f"R must be square, got {R.shape}")
    if v.size != d**k:
        raise LengthMismatch(f"vector of length {v.size} does not match {d}**{k}")
    M = R.T if adjoint else R
    t = v.reshape(-1)
    for _ in range(k):
        t = (M @ t.reshape(d, -1)).T.reshape(-1)
    return t


@dataclass(frozen=True, eq=False)
class CorrVector:
    scenario: Scenario
    z: np.ndarray

    def __post_init__(self):
        z = np.array(self.z, dtype=float, copy=True).ravel()
        if z.size != self.scenario.quasi_size:
            raise LengthMismatch(f"expected {self.scenario.quasi_size} entries, got {z.size}")
        z.flags.writeable = False
        object.__setattr__(self, "z", z)

    def to_dict(self) -> dict:
        return {
            "n": self.scenario.n,
            "m": self.scenario.m,
            "basis": "correlation",
            "q": self.z.tolist(),
        }


@dataclass(frozen=True, eq=False)
class FixedCoords:
    """Coordinates of z fixed by a behavior (indices sorted ascending)."""

    scenario: Scenario
    indices: np.ndarray
    values: np.ndarray

    def as_dict(self) -> dict:
        return {int(i): float(v) for i, v in zip(self.indices, self.values)}

    def __getitem__(self, label: str) -> float:
        """Look up a coordinate by its digit string, e.g. ``"1010"``."""
        n = self.scenario.n
        idx = 0
        for ch in label:
            idx = idx * n + int(ch)
        pos = np.searchsorted(self.indices, idx)
        if pos < self.indices.size and self.indices[pos] == idx:
            return float(self.values[pos])
        raise KeyError(label)


def to_correlation_basis(q: QuasiProb) -> CorrVector:
    s = q.scenario
    return CorrVector(s, kron_apply(rotation_matrix(s.n), 2 * s.m, q.q, adjoint=True))


def from_correlation_basis(z: CorrVector) -> QuasiProb:
    s = z.scenario
    return QuasiProb(s, kron_apply(rotation_matrix(s.n), 2 * s.m, z.z, adjoint=False))


def _party_support(n: int, m: int) -> np.ndarray:
    # assignment indices with at most one nonzero digit
    idx = [0]
    for x in range(m):
        for a in range(1, n):
            idx.append(a * n ** (m - 1 - x))
    return np.array(sorted(idx), dtype=np.int64)


@lru_cache(maxsize=64)
def _fixed_indices_cached(n: int, m: int) -> np.ndarray:
    party = _party_support(n, m)
    joint = (party[:, None] * n**m + party[None, :]).ravel()
    joint.sort()
    joint.flags.writeable = False
    return joint


def fixed_coordinate_indices(scenario: Scenario) -> np.ndarray:
    """Flat indices of z determined by the behavior; ``(1 + m(n-1))**2`` of them."""
    return _fixed_indices_cached(scenario.n, scenario.m)


def z0_from_behavior(b: Behavior, tol: float = 1e-9) -> FixedCoords:
    """Fixed correlation coordinates computed from marginals and joint terms."""
    s = b.scenario
    n, m = s.n, s.m
    PA, PB = all_marginals(b, tol)
    Rc = rotation_matrix(n)[:, 1:]
    k = n**m
    single = n ** (0.5 - m)
    alice = single * PA @ Rc  # [x, a'-1]
    bob = single * PB @ Rc
    joint = n ** (1.0 - m) * np.einsum("xyab,ai,bj->xiyj", b.p, Rc, Rc)

    # party label -> assignment index; label None is the all-zero assignment
    def party_index(x, ap):
        return ap * n ** (m - 1 - x)

    values = {0: n ** (-float(m))}
    for x in range(m):
        for i in range(n - 1):
            ia = party_index(x, i + 1)
            values[ia * k] = alice[x, i]
            values[ia] = bob[x, i]
            for y in range(m):
                for j in range(n - 1):
                    values[ia * k + party_index(y, j + 1)] = joint[x, i, y, j]
    indices = fixed_coordinate_indices(s)
    vals = np.array([values[int(i)] for i in indices])
    return FixedCoords(s, indices, vals)


def behavior_from_z(z) -> Behavior:
    """``P = (US (x) US) z`` using only the coordinates with nonzero singular value."""
    s = z.scenario
    n, m = s.n, s.m
    W, support = svd_factors(s).weighted_left()
    k = n**m
    if isinstance(z, FixedCoords):
        full = np.zeros(s.quasi_size)
        full[z.indices] = z.values
    else:
        full = z.z
    Z = full.reshape(k, k)[np.ix_(support, support)]
    P = W @ Z @ W.T  # rows (a, x), columns (b, y) as a*m + x
    P = P.reshape(n, m, n, m).transpose(1, 3, 0, 2)
    return behavior_new(s, P)


def min_l2_quasiprob(b: Behavior, tol: float = 1e-9) -> QuasiProb:
    """Minimum-norm solution of ``(D (x) D) q = P``: free coordinates set to 0."""
    fixed = z0_from_behavior(b, tol)
    z = np.zeros(b.scenario.quasi_size)
    z[fixed.indices] = fixed.values
    return from_correlation_basis(CorrVector(b.scenario, z))


def chsh_correlation(z) -> float:
    """``|z_1010 + z_0110 + z_1001 - z_0101|``; local behaviors stay <= 1/2."""
    s = z.scenario
    if (s.n, s.m) != (2, 2):
        raise UnsupportedScenario("CHSH evaluator needs n = m = 2")
    if isinstance(z, FixedCoords):
        get = z.__getitem__
    else:
        get = lambda label: float(z.z[int(label, 2)])  # noqa: E731
    return abs(get("1010") + get("0110") + get("1001") - get("0101"))
