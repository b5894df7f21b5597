import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from conftest import dense_joint_d, random_family_mixture, random_local_behavior

from bellsparse.behavior import Family, Scenario, behavior_new, make_family, mix, pr_box
from bellsparse.corrbasis import CorrVector, from_correlation_basis, z0_from_behavior
from bellsparse.detcomp import QuasiProb, deterministic_map
from bellsparse.errors import NotNormalized
from bellsparse.sparse_solver import (
    SolverConfig,
    config_dict,
    huber,
    negativity,
    nesta_solve,
    project_fixed,
    smoothed_l1_grad,
    solve_behavior,
)

S22 = Scenario(2, 2)
CERTIFY = SolverConfig(mu_final=1e-9, continuation_steps=6, stop_tol=1e-10)
PR_Q = np.array([[3, 3, -1, -1], [3, -1, 3, -1], [-1, 3, -1, 3], [-1, -1, 3, 3]]) / 16


def lp_l1_oracle(b):
    DD = dense_joint_d(b.scenario.n, b.scenario.m)
    N = DD.shape[1]
    res = linprog(np.ones(2 * N), A_eq=np.hstack([DD, -DD]), b_eq=b.p.ravel(), method="highs")
    assert res.status == 0
    return res.fun


# --- configuration --------------------------------------------------------------------

def test_config_defaults_and_overrides():
    c = SolverConfig()
    assert (c.mu_final, c.continuation_steps, c.max_iters_per_stage, c.stop_tol,
            c.stagnation_window) == (1e-6, 5, 10000, 1e-7, 10)
    c2 = SolverConfig.from_dict({"mu_final": 1e-5, "continuation_steps": 3})
    assert c2.mu_final == 1e-5 and c2.continuation_steps == 3
    assert config_dict(c2)["stop_tol"] == 1e-7


@pytest.mark.parametrize("bad", [{"mu_final": 0}, {"continuation_steps": -1}, {"stop_tol": 0.0}])
def test_config_rejects_nonpositive(bad):
    with pytest.raises(ValueError):
        SolverConfig.from_dict(bad)


def test_config_rejects_unknown_key():
    with pytest.raises(ValueError, match="unknown"):
        SolverConfig.from_dict({"mu": 1e-3})


# --- smoothing ----------------------------------------------------------------------------

def test_smoothed_zero():
    value, grad = smoothed_l1_grad(CorrVector(S22, np.zeros(16)), 1e-2)
    assert value == 0.0
    assert np.all(grad == 0.0)


def test_huber_arithmetic():
    mu = 0.01
    assert huber(np.array([3 * mu]), mu)[0] == pytest.approx(2.5 * mu, rel=1e-14)
    assert huber(np.array([mu / 2]), mu)[0] == pytest.approx(mu / 8, rel=1e-14)
    assert huber(np.array([-3 * mu]), mu)[0] == pytest.approx(2.5 * mu, rel=1e-14)
    with pytest.raises(ValueError):
        smoothed_l1_grad(CorrVector(S22, np.zeros(16)), 0.0)


@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_finite_differences(seed):
    mu, h = 1e-2, 1e-6
    z = np.random.default_rng(seed).normal(scale=0.05, size=16)
    _, grad = smoothed_l1_grad(CorrVector(S22, z), mu)
    fd = np.empty(16)
    for i in range(16):
        e = np.zeros(16)
        e[i] = h
        fp, _ = smoothed_l1_grad(CorrVector(S22, z + e), mu)
        fm, _ = smoothed_l1_grad(CorrVector(S22, z - e), mu)
        fd[i] = (fp - fm) / (2 * h)
    np.testing.assert_allclose(grad, fd, atol=1e-6)


def test_gradient_lipschitz_bound():
    mu = 1e-2
    rng = np.random.default_rng(9)
    for _ in range(20):
        a, b = rng.normal(scale=0.05, size=(2, 16))
        ga = smoothed_l1_grad(CorrVector(S22, a), mu)[1]
        gb = smoothed_l1_grad(CorrVector(S22, b), mu)[1]
        assert np.linalg.norm(ga - gb) <= np.linalg.norm(a - b) / mu + 1e-12


# --- projection -------------------------------------------------------------------------

def test_projection_examples():
    fixed = z0_from_behavior(pr_box())
    z0 = project_fixed(np.zeros(16), fixed)
    assert np.count_nonzero(z0[np.setdiff1d(np.arange(16), fixed.indices)]) == 0
    np.testing.assert_array_equal(z0[fixed.indices], fixed.values)
    np.testing.assert_array_equal(project_fixed(z0, fixed), z0)
    z = np.random.default_rng(0).normal(size=16)
    once = project_fixed(z, fixed)
    np.testing.assert_array_equal(project_fixed(once, fixed), once)
    assert once is not z


# --- negativity ----------------------------------------------------------------------------

def test_negativity_examples():
    assert negativity(QuasiProb(S22, PR_Q.ravel())) == pytest.approx(0.5, abs=1e-15)
    assert negativity(np.full(16, 1 / 16)) == 0.0
    assert negativity([1.1, -0.1]) == pytest.approx(0.1, abs=1e-15)
    with pytest.raises(NotNormalized):
        negativity([0.5, 0.4])


def test_negativity_identity_1000_vectors():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        q = rng.normal(size=rng.integers(2, 200))
        q += (1.0 - q.sum()) / q.size
        assert abs((np.abs(q).sum() - 1.0) / 2.0 - negativity(q)) <= 1e-12


# --- solver --------------------------------------------------------------------------------

def test_white_noise_is_local():
    r = solve_behavior(make_family(Family.WHITE_NOISE, S22))
    assert r.negativity <= 1e-5
    assert r.converged


def test_pr_box_matches_lp_fixture(oracle):
    fixed = z0_from_behavior(pr_box())
    r = nesta_solve(fixed, S22, SolverConfig())
    assert abs(r.negativity - oracle["pr_box_min_negativity"]) <= 1e-4
    assert r.feasibility(fixed) <= 1e-12
    assert r.l1_norm == pytest.approx(2 * r.negativity + 1, abs=1e-9)


def test_local_mixture_below_chsh_bound():
    b = mix([pr_box(), make_family(Family.WHITE_NOISE, S22)], [0.4, 0.6])
    assert solve_behavior(b).negativity <= 1e-4


def test_result_invariants_and_json():
    b = mix([pr_box(), make_family(Family.LOCAL_DETERMINISTIC, S22)], [0.7, 0.3])
    fixed = z0_from_behavior(b)
    r = nesta_solve(fixed)
    np.testing.assert_array_equal(r.q.q, from_correlation_basis(r.z).q)
    assert r.negativity == pytest.approx(float(np.maximum(-r.q.q, 0).sum()), abs=0)
    assert r.feasibility(fixed) <= 1e-12
    assert len(r.stage_l1) == len(r.stage_iterations) == 5
    assert sum(r.stage_iterations) == r.iterations
    d = json.loads(json.dumps(r.to_dict()))
    assert d["n"] == 2 and len(d["q"]) == 16 and d["converged"] is True
    assert r.wall_time >= 0


def test_iteration_limit_reported():
    fixed = z0_from_behavior(pr_box())
    r = nesta_solve(fixed, S22, SolverConfig(max_iters_per_stage=3))
    assert not r.converged
    assert r.iterations == 15
    assert r.feasibility(fixed) <= 1e-12


@pytest.mark.parametrize("n", [2, 3])
def test_continuation_monotone(n):
    rng = np.random.default_rng(n)
    for _ in range(5):
        b = random_family_mixture(rng, n)
        r = solve_behavior(b)
        assert all(b2 <= a2 + 1e-9 for a2, b2 in zip(r.stage_l1, r.stage_l1[1:]))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_zero_negativity_certifies_locality(seed):
    # entry-level certificates need smoothing well below the 1e-8 target
    s, p = random_local_behavior(np.random.default_rng(seed), 2, 2)
    b = behavior_new(s, p)
    assert solve_behavior(b).negativity <= 1e-5
    r = solve_behavior(b, CERTIFY)
    assert r.converged
    assert r.q.q.min() >= -1e-8
    np.testing.assert_allclose(deterministic_map(r.q.q, 2, 2), b.p, atol=1e-8)


def test_matches_lp_oracle_on_random_behaviors():
    rng = np.random.default_rng(77)
    worst = 0.0
    for _ in range(50):
        b = random_family_mixture(rng, 2)
        r = solve_behavior(b)
        worst = max(worst, abs(r.l1_norm - lp_l1_oracle(b)))
    assert worst <= 1e-4
