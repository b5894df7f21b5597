"""Minimal-negativity quasi-probabilities by smoothed basis pursuit.

Solves ``min ||V z||_1  s.t.  z[fixed] = z0`` with ``V = R^{(x)2m}``
using Nesterov's accelerated scheme on a Huber-smoothed objective, with
continuation on the smoothing parameter. Because ``V`` is orthogonal the
gradient has Lipschitz constant ``1/mu`` and the constraint set is a plain
coordinate overwrite, so both the step size and the projection are exact.
"""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .behavior import Behavior, Scenario
from .corrbasis import (
    CorrVector,
    FixedCoords,
    from_correlation_basis,
    kron_apply,
    z0_from_behavior,
)
from .detcomp import QuasiProb, rotation_matrix
from .errors import NotNormalized

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    mu_final: float = 1e-6
    continuation_steps: int = 5
    max_iters_per_stage: int = 10000
    stop_tol: float = 1e-7
    stagnation_window: int = 10

    def __post_init__(self):
        for name in ("mu_final", "continuation_steps", "max_iters_per_stage",
                     "stop_tol", "stagnation_window"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "SolverConfig":
        known = {k: data[k] for k in cls.__dataclass_fields__ if k in data}
        unknown = set(data) - set(known)
        if unknown:
            raise ValueError(f"unknown solver options: {sorted(unknown)}")
        return cls(**known)


@dataclass(frozen=True, eq=False)
class SolverResult:
    q: QuasiProb
    z: CorrVector
    negativity: float
    l1_norm: float
    iterations: int
    converged: bool
    wall_time: float
    stage_l1: list = field(default_factory=list)
    stage_iterations: list = field(default_factory=list)

    def feasibility(self, fixed: FixedCoords) -> float:
        return float(np.max(np.abs(self.z.z[fixed.indices] - fixed.values)))

    def to_dict(self) -> dict:
        return {
            "n": self.q.scenario.n,
            "m": self.q.scenario.m,
            "q": self.q.q.tolist(),
            "z": self.z.z.tolist(),
            "negativity": self.negativity,
            "l1_norm": self.l1_norm,
            "iterations": self.iterations,
            "converged": self.converged,
            "wall_time": self.wall_time,
            "stage_l1": list(self.stage_l1),
            "stage_iterations": list(self.stage_iterations),
        }


def huber(w: np.ndarray, mu: float) -> np.ndarray:
    a = np.abs(w)
    return np.where(a <= mu, w * w / (2.0 * mu), a - mu / 2.0)


def _smoothed(R, k, z, mu):
    w = kron_apply(R, k, z)
    value = float(np.sum(huber(w, mu)))
    grad = kron_apply(R, k, np.clip(w / mu, -1.0, 1.0), adjoint=True)
    return value, grad


def smoothed_l1_grad(z: CorrVector, mu: float) -> tuple[float, np.ndarray]:
    """Huber-smoothed ``||V z||_1`` and its gradient with respect to z."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    s = z.scenario
    return _smoothed(rotation_matrix(s.n), 2 * s.m, z.z, mu)


def project_fixed(z, fixed: FixedCoords) -> np.ndarray:
    """Euclidean projection onto ``{z : z[fixed] = z0}``."""
    out = np.array(z, dtype=float, copy=True)
    out[fixed.indices] = fixed.values
    return out


def negativity(q) -> float:
    """Total weight of negative entries, ``sum max(-q_i, 0)``."""
    arr = q.q if isinstance(q, QuasiProb) else np.asarray(q, dtype=float)
    total = float(arr.sum())
    if abs(total - 1.0) > 1e-6:
        raise NotNormalized(None, None, total)
    return float(np.sum(np.maximum(-arr, 0.0)))


def _stage(R, k, x0, fixed, mu, config):
    """One fixed-mu run of the accelerated scheme; returns ``(y, iters, stopped)``."""
    xk = x0
    acc = np.zeros_like(x0)
    history = []
    window = config.stagnation_window
    y = x0
    for it in range(config.max_iters_per_stage):
        fx, g = _smoothed(R, k, xk, mu)
        y = project_fixed(xk - mu * g, fixed)
        acc += 0.5 * (it + 1) * g
        zk = project_fixed(x0 - mu * acc, fixed)
        tau = 2.0 / (it + 3)
        xk = tau * zk + (1.0 - tau) * y
        if len(history) >= window:
            fbar = sum(history[-window:]) / window
            if fbar > 0 and abs(fx - fbar) / fbar < config.stop_tol:
                return y, it + 1, True
        history.append(fx)
    return y, config.max_iters_per_stage, False


def nesta_solve(fixed: FixedCoords, scenario: Scenario = None,
                config: SolverConfig = None) -> SolverResult:
    """Minimize the l1 norm of the quasi-probability consistent with ``fixed``.

    Starts from the minimum-l2 point (free coordinates zero) and runs
    ``continuation_steps`` stages with geometrically decreasing smoothing,
    each warm-started from the previous stage's output. ``converged`` is
    False when the last stage hit ``max_iters_per_stage``; the iterate is
    still returned.
    """
    scenario = scenario or fixed.scenario
    config = config or SolverConfig()
    n, m = scenario.n, scenario.m
    R = rotation_matrix(n)
    k = 2 * m
    start = time.perf_counter()

    z = project_fixed(np.zeros(scenario.quasi_size), fixed)
    mu0 = 0.9 * float(np.max(np.abs(kron_apply(R, k, z))))
    mu0 = max(mu0, config.mu_final)
    steps = config.continuation_steps
    ratio = (config.mu_final / mu0) ** (1.0 / steps)
    total_iters = 0
    stage_l1, stage_iters = [], []
    converged = False
    for s in range(1, steps + 1):
        mu = config.mu_final if s == steps else mu0 * ratio**s
        z, iters, converged = _stage(R, k, z, fixed, mu, config)
        total_iters += iters
        stage_iters.append(iters)
        stage_l1.append(float(np.sum(np.abs(kron_apply(R, k, z)))))
        logger.debug("stage %d mu=%.3g iters=%d l1=%.12g", s, mu, iters, stage_l1[-1])

    z = project_fixed(z, fixed)
    wall = time.perf_counter() - start
    q = from_correlation_basis(CorrVector(scenario, z))
    if not converged:
        logger.warning("smoothed solver hit the iteration limit (%d iterations)", total_iters)
    return SolverResult(
        q=q,
        z=CorrVector(scenario, z),
        negativity=float(np.sum(np.maximum(-q.q, 0.0))),
        l1_norm=float(np.sum(np.abs(q.q))),
        iterations=total_iters,
        converged=converged,
        wall_time=wall,
        stage_l1=stage_l1,
        stage_iterations=stage_iters,
    )


def solve_behavior(b: Behavior, config: SolverConfig = None, tol: float = 1e-9) -> SolverResult:
    """Convenience wrapper: fixed coordinates from ``b`` then :func:`nesta_solve`."""
    return nesta_solve(z0_from_behavior(b, tol), b.scenario, config)


def config_dict(config: SolverConfig) -> dict:
    return asdict(config)
