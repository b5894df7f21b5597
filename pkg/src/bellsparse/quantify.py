"""Nonlocality analyses built on the two solvers: negativity of a behavior,
critical visibility, NEG-vs-NS comparison and the scaling benchmark."""
from __future__ import annotations

import csv
import io
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import least_squares

from .behavior import Behavior, Family, Scenario, check_no_signalling, make_family, mix
from .corrbasis import z0_from_behavior
from .errors import (
    BellError,
    FitDiverged,
    InsufficientData,
    ProblemTooLarge,
    SignallingInput,
    TargetAlreadyLocal,
    TooManyVertices,
)
from .lp_baseline import min_l1_quasiprob_lp, ns_distance
from .sparse_solver import SolverConfig, nesta_solve

logger = logging.getLogger(__name__)

LOCALITY_THRESHOLD = 1e-5

CSV_COLUMNS = [
    "n", "m", "sample", "seed", "c0", "c1", "c2", "method",
    "negativity", "ns_distance", "wall_time_s", "iterations", "converged",
]


class Method(str, Enum):
    NESTA = "nesta"
    LP = "lp"


@dataclass
class AnalysisRecord:
    scenario: Scenario
    behavior_id: str
    method: Method
    negativity: float
    ns_distance: float | None = None
    wall_time: float = 0.0
    iterations: int | None = None
    converged: bool = True
    error: str | None = None


@dataclass(frozen=True)
class ExpFit:
    """``f(n) = a * (exp(b * n) - 1)``."""

    a: float
    b: float
    residual: float

    def __call__(self, n):
        return self.a * np.expm1(self.b * np.asarray(n, dtype=float))


@dataclass(frozen=True)
class LineFit:
    n: int
    slope: float
    intercept: float
    r2: float
    count: int


def neg_of_behavior(b: Behavior, method=Method.NESTA, config: SolverConfig | None = None,
                    behavior_id: str = "", lp_pivot_rule: str = "devex-bland") -> AnalysisRecord:
    """Minimal negativity of ``b`` by the smoothed solver or the exact LP.

    Timing covers the solve call only.
    """
    method = Method(method)
    report = check_no_signalling(b)
    if not report.is_ns:
        raise SignallingInput(f"behavior violates no-signalling by {report.max_violation:.3e}")
    if method is Method.NESTA:
        fixed = z0_from_behavior(b)
        res = nesta_solve(fixed, b.scenario, config or SolverConfig())
        return AnalysisRecord(b.scenario, behavior_id, method, res.negativity,
                              wall_time=res.wall_time, iterations=res.iterations,
                              converged=res.converged)
    start = time.perf_counter()
    _, l1 = min_l1_quasiprob_lp(b, pivot_rule=lp_pivot_rule)
    wall = time.perf_counter() - start
    return AnalysisRecord(b.scenario, behavior_id, method, max((l1 - 1.0) / 2.0, 0.0),
                          wall_time=wall, converged=True)


def _is_local(b: Behavior, method: Method, config, threshold: float) -> bool:
    if method is Method.LP:
        return ns_distance(b, pivot_rule="devex-bland") <= threshold
    return neg_of_behavior(b, method, config).negativity <= threshold


def critical_visibility(target: Behavior, noise: Behavior, method=Method.LP, tol: float = 1e-4,
                        config: SolverConfig | None = None,
                        threshold: float = LOCALITY_THRESHOLD) -> float:
    """Smallest visibility ``v`` at which ``v*target + (1-v)*noise`` turns nonlocal.

    Bisection to interval width ``tol``; returns the midpoint. LP locality is
    decided by the l1 distance to the local polytope, the smoothed solver by
    negativity, both against ``threshold``.
    """
    method = Method(method)
    for name, b in (("target", target), ("noise", noise)):
        if not check_no_signalling(b).is_ns:
            raise SignallingInput(f"{name} behavior is signalling")
    if not _is_local(noise, method, config, threshold):
        raise BellError("noise behavior must be local")
    if _is_local(target, method, config, threshold):
        raise TargetAlreadyLocal("target behavior is already local")
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        v = 0.5 * (lo + hi)
        if _is_local(mix([target, noise], [v, 1.0 - v]), method, config, threshold):
            lo = v
        else:
            hi = v
    return 0.5 * (lo + hi)


def sample_simplex(rng: np.random.Generator) -> tuple[float, float, float]:
    """Uniform point on the 2-simplex from two sorted uniforms."""
    u = np.sort(rng.random(2))
    return float(u[0]), float(u[1] - u[0]), float(1.0 - u[1])


def sample_family(n: int, m: int, samples: int, seed: int):
    """Seeded draws ``c0*white_noise + c1*local_det + c2*generalized_pr``.

    Yields ``(sample_index, (c0, c1, c2), behavior)``. The RNG is keyed by
    ``(seed, n)`` so adding values of n does not change earlier draws.
    """
    s = Scenario(n, m)
    fams = [make_family(k, s) for k in (Family.WHITE_NOISE, Family.LOCAL_DETERMINISTIC,
                                        Family.GENERALIZED_PR)]
    rng = np.random.default_rng([seed, n])
    for i in range(samples):
        c = sample_simplex(rng)
        yield i, c, mix(fams, c)


def _run_one(n, m, i, c, b, seed, method, config, with_ns, ns_cache):
    bid = f"n{n}m{m}s{seed}i{i}"
    try:
        rec = neg_of_behavior(b, method, config, behavior_id=bid)
    except (ProblemTooLarge, TooManyVertices) as exc:
        rec = AnalysisRecord(b.scenario, bid, Method(method), float("nan"),
                             converged=False, error=type(exc).__name__)
    if with_ns:
        rec.ns_distance = ns_cache.get((n, m, i))
    return rec


def benchmark_scaling(n_range: Iterable[int], m: int = 2, samples: int = 10, seed: int = 0,
                      methods: Sequence = (Method.NESTA, Method.LP),
                      config: SolverConfig | None = None, with_ns: bool = True,
                      jobs: int = 1) -> list[tuple[dict, AnalysisRecord]]:
    """Run every method on seeded family samples for each n.

    Returns ``(meta, record)`` pairs in ``(n, sample, method)`` order, where
    ``meta`` holds ``n, m, sample, seed, c0, c1, c2``. Problems above the LP
    size cap produce records with ``error`` set rather than raising.
    """
    methods = [Method(mm) for mm in methods]
    tasks = []
    for n in n_range:
        for i, c, b in sample_family(n, m, samples, seed):
            meta = {"n": n, "m": m, "sample": i, "seed": seed, "c0": c[0], "c1": c[1], "c2": c[2]}
            for method in methods:
                tasks.append((meta, (n, m, i, c, b, seed, method)))
    ns_cache: dict = {}
    if with_ns:
        # distance LPs run up front so parallel workers only read the cache
        for meta, args in tasks:
            key = (meta["n"], m, meta["sample"])
            if key in ns_cache:
                continue
            try:
                ns_cache[key] = ns_distance(args[4], pivot_rule="devex-bland")
            except (ProblemTooLarge, TooManyVertices):
                ns_cache[key] = None

    def work(task):
        meta, args = task
        return meta, _run_one(*args, config, with_ns, ns_cache)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(work, tasks))
    return [work(t) for t in tasks]


def records_to_csv(rows, include_timing: bool = True) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for meta, rec in rows:
        writer.writerow([
            meta["n"], meta["m"], meta["sample"], meta["seed"],
            repr(meta["c0"]), repr(meta["c1"]), repr(meta["c2"]),
            rec.method.value,
            "" if rec.negativity is None or np.isnan(rec.negativity) else repr(rec.negativity),
            "" if rec.ns_distance is None else repr(rec.ns_distance),
            repr(rec.wall_time) if include_timing else "",
            "" if rec.iterations is None else rec.iterations,
            rec.converged,
        ])
    return buf.getvalue()


def fit_exp(points) -> ExpFit:
    """Least-squares fit of ``t = a (exp(b n) - 1)``.

    A coarse grid over ``b`` (with the optimal ``a`` solved in closed form
    for each) seeds a Gauss-Newton/Levenberg-Marquardt refinement.
    """
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3:
        raise FitDiverged("need at least 3 (n, t) points")
    n, t = pts[:, 0], pts[:, 1]
    if np.any(t <= 0) or not np.all(np.isfinite(pts)):
        raise FitDiverged("times must be positive and finite")

    def best_a(b):
        g = np.expm1(b * n)
        return float(g @ t / (g @ g))

    grid = np.linspace(0.01, 5.0, 500)
    sse = [np.sum((best_a(b) * np.expm1(b * n) - t) ** 2) for b in grid]
    b0 = float(grid[int(np.argmin(sse))])
    a0 = best_a(b0)
    scale = float(np.max(t))

    def resid(theta):
        a, b = theta
        return (a * np.expm1(b * n) - t) / scale

    sol = least_squares(resid, x0=[a0, b0], method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                        max_nfev=20000)
    a, b = (float(v) for v in sol.x)
    if not sol.success or not np.isfinite([a, b]).all():
        raise FitDiverged(sol.message)
    residual = float(np.sqrt(np.mean((a * np.expm1(b * n) - t) ** 2)))
    return ExpFit(a, b, residual)


def compare_neg_ns(records, min_spread: float = 1e-6) -> dict[int, LineFit]:
    """Per-n least-squares line ``NEG = slope * NS + intercept``.

    ``records`` is an iterable of ``(n, ns, neg)`` triples or
    :class:`AnalysisRecord` objects with ``ns_distance`` set.
    """
    by_n: dict[int, list] = {}
    for r in records:
        if isinstance(r, AnalysisRecord):
            if r.ns_distance is None or r.negativity is None or np.isnan(r.negativity):
                continue
            n, ns, neg = r.scenario.n, r.ns_distance, r.negativity
        else:
            n, ns, neg = r
        by_n.setdefault(int(n), []).append((float(ns), float(neg)))
    if not by_n:
        raise InsufficientData("no records with both measures")
    out = {}
    for n, pairs in sorted(by_n.items()):
        x, y = np.array(pairs).T
        if len(pairs) < 2 or np.ptp(x) < min_spread:
            raise InsufficientData(f"n={n}: NS values do not spread, regression is degenerate")
        slope, intercept = np.polyfit(x, y, 1)
        fit = slope * x + intercept
        ss_tot = float(np.sum((y - y.mean()) ** 2))
        r2 = 1.0 - float(np.sum((y - fit) ** 2)) / ss_tot if ss_tot > 0 else 1.0
        out[n] = LineFit(n, float(slope), float(intercept), r2, len(pairs))
    return out


def record_dict(rec: AnalysisRecord) -> dict:
    d = asdict(rec)
    d["scenario"] = {"n": rec.scenario.n, "m": rec.scenario.m}
    d["method"] = rec.method.value
    return d
