"""Bipartite behaviors P(ab|xy): validation, families, mixing and JSON I/O.

Tensors are indexed ``p[x, y, a, b]`` with 0-based inputs and outputs.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import (
    NegativeEntry,
    NotNormalized,
    ScenarioMismatch,
    ShapeMismatch,
    SignallingInput,
    UnsupportedScenario,
    WeightMismatch,
)

NORMALIZATION_TOL = 1e-9
CLAMP_TOL = 1e-12


@dataclass(frozen=True)
class Scenario:
    """Bipartite scenario with ``n`` outputs and ``m`` inputs per party."""

    n: int
    m: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise UnsupportedScenario(f"need n >= 2 outputs, got {self.n}")
        if int(self.m) != self.m or self.m < 1:
            raise UnsupportedScenario(f"need m >= 1 inputs, got {self.m}")

    @property
    def behavior_size(self) -> int:
        return (self.n * self.m) ** 2

    @property
    def party_assignments(self) -> int:
        return self.n ** self.m

    @property
    def quasi_size(self) -> int:
        return self.n ** (2 * self.m)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return (self.m, self.m, self.n, self.n)


@dataclass(frozen=True, eq=False)
class Behavior:
    scenario: Scenario
    p: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, Behavior):
            return NotImplemented
        return self.scenario == other.scenario and np.array_equal(self.p, other.p)

    __hash__ = None

    def to_dict(self) -> dict:
        return {"n": self.scenario.n, "m": self.scenario.m, "p": self.p.tolist()}

    def to_json(self, indent=None) -> str:
        return json.dumps(self.to_dict(), indent=indent)


@dataclass(frozen=True)
class NoSignallingReport:
    is_ns: bool
    max_violation: float


class Party(str, Enum):
    A = "A"
    B = "B"


class Family(str, Enum):
    WHITE_NOISE = "white_noise"
    LOCAL_DETERMINISTIC = "local_deterministic"
    GENERALIZED_PR = "generalized_pr"


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float, copy=True)
    arr.flags.writeable = False
    return arr


def behavior_new(scenario: Scenario, p) -> Behavior:
    """Validate a probability tensor and wrap it as a :class:`Behavior`.

    Entries in ``[-1e-12, 0)`` are clamped to zero; anything more negative
    raises :class:`NegativeEntry`. Every (x, y) block must sum to one within
    1e-9.
    """
    arr = np.asarray(p, dtype=float)
    if arr.shape != scenario.shape:
        raise ShapeMismatch(f"expected shape {scenario.shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ShapeMismatch("tensor contains non-finite entries")
    arr = arr.copy()
    low = arr < -CLAMP_TOL
    if low.any():
        idx = tuple(int(i) for i in np.argwhere(low)[0])
        raise NegativeEntry(idx, float(arr[idx]))
    arr[arr < 0] = 0.0
    sums = arr.sum(axis=(2, 3))
    bad = np.abs(sums - 1.0) > NORMALIZATION_TOL
    if bad.any():
        x, y = (int(i) for i in np.argwhere(bad)[0])
        raise NotNormalized(x, y, float(sums[x, y]))
    return Behavior(scenario, _freeze(arr))


def _marginal_tables(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # alice[x, y, a] and bob[x, y, b]
    return p.sum(axis=3), p.sum(axis=2)


def check_no_signalling(b: Behavior, tol: float = 1e-9) -> NoSignallingReport:
    alice, bob = _marginal_tables(b.p)
    # Alice's marginal must not depend on y, Bob's must not depend on x.
    va = np.max(alice, axis=1) - np.min(alice, axis=1)
    vb = np.max(bob, axis=0) - np.min(bob, axis=0)
    worst = float(max(va.max(), vb.max()))
    return NoSignallingReport(is_ns=worst <= tol, max_violation=worst)


def require_no_signalling(b: Behavior, tol: float = 1e-9) -> None:
    report = check_no_signalling(b, tol)
    if not report.is_ns:
        raise SignallingInput(
            f"behavior violates no-signalling by {report.max_violation:.3e} (tol {tol:g})"
        )


def marginal(b: Behavior, party, setting: int, tol: float = 1e-9) -> np.ndarray:
    """Local output distribution of one party for a given input.

    The partner's input is fixed to 0 after checking that the choice does
    not matter.
    """
    party = Party(party)
    m = b.scenario.m
    if not 0 <= setting < m:
        raise ValueError(f"setting {setting} out of range for m={m}")
    alice, bob = _marginal_tables(b.p)
    if party is Party.A:
        rows = alice[setting, :, :]
    else:
        rows = bob[:, setting, :]
    spread = float(np.max(rows.max(axis=0) - rows.min(axis=0)))
    if spread > tol:
        raise SignallingInput(
            f"marginal of party {party.value} for setting {setting} varies by {spread:.3e}"
        )
    return rows[0].copy()


def all_marginals(b: Behavior, tol: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(PA[x, a], PB[y, b])`` after a no-signalling check."""
    require_no_signalling(b, tol)
    alice, bob = _marginal_tables(b.p)
    return alice[:, 0, :].copy(), bob[0, :, :].copy()


def make_family(kind, scenario: Scenario) -> Behavior:
    """Build one of the reference behaviors used in benchmarks.

    The generalized PR box puts weight 1/n on ``b - a = x*y (mod n)``; for
    n = 2 this is the usual PR box.
    """
    kind = Family(kind)
    n, m = scenario.n, scenario.m
    if kind is Family.WHITE_NOISE:
        p = np.full(scenario.shape, 1.0 / n**2)
    elif kind is Family.LOCAL_DETERMINISTIC:
        p = np.zeros(scenario.shape)
        p[:, :, 0, 0] = 1.0
    else:
        if m != 2:
            raise UnsupportedScenario("generalized PR box needs m = 2")
        x, y, a, bb = np.indices(scenario.shape)
        p = np.where((bb - a) % n == (x * y) % n, 1.0 / n, 0.0)
    return behavior_new(scenario, p)


def pr_box() -> Behavior:
    return make_family(Family.GENERALIZED_PR, Scenario(2, 2))


def mix(behaviors: Sequence[Behavior], weights: Sequence[float]) -> Behavior:
    """Convex combination of behaviors over a common scenario."""
    if len(behaviors) == 0 or len(behaviors) != len(weights):
        raise WeightMismatch("need one weight per behavior")
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise WeightMismatch(f"weights must be non-negative and sum to 1, got {w.tolist()}")
    scenario = behaviors[0].scenario
    if any(b.scenario != scenario for b in behaviors):
        raise ScenarioMismatch("all behaviors must share a scenario")
    p = np.zeros(scenario.shape)
    for wi, b in zip(w, behaviors):
        p += wi * b.p
    return behavior_new(scenario, p)


def behavior_from_dict(data: dict) -> Behavior:
    for key in ("n", "m", "p"):
        if key not in data:
            raise ShapeMismatch(f"missing field {key!r}")
    scenario = Scenario(int(data["n"]), int(data["m"]))
    try:
        arr = np.array(data["p"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ShapeMismatch(f"ragged or non-numeric tensor: {exc}") from None
    return behavior_new(scenario, arr)


def load_behavior(path) -> Behavior:
    with open(path) as fh:
        return behavior_from_dict(json.load(fh))


def save_behavior(b: Behavior, path) -> None:
    with open(path, "w") as fh:
        fh.write(b.to_json())
        fh.write("\n")
