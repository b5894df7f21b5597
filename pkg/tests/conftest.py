import itertools
import json
from pathlib import Path

import numpy as np
import pytest

from bellsparse.behavior import Family, Scenario, make_family, mix

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def oracle():
    return json.loads((FIXTURES / "oracle.json").read_text())


def dense_single_party_d(n, m):
    """D[(a, x), j] = delta(a, a_x(j)) built by brute-force enumeration."""
    assignments = list(itertools.product(range(n), repeat=m))
    D = np.zeros((n * m, len(assignments)))
    for j, outs in enumerate(assignments):
        for x, a in enumerate(outs):
            D[a * m + x, j] = 1.0
    return D


def dense_joint_d(n, m):
    """(D (x) D) with rows (x, y, a, b), columns (alice, bob) assignments."""
    assignments = list(itertools.product(range(n), repeat=m))
    k = len(assignments)
    DD = np.zeros((m, m, n, n, k * k))
    for i, al in enumerate(assignments):
        for j, bo in enumerate(assignments):
            for x in range(m):
                for y in range(m):
                    DD[x, y, al[x], bo[y], i * k + j] = 1.0
    return DD.reshape(m * m * n * n, k * k)


def dense_kron(R, k):
    out = np.ones((1, 1))
    for _ in range(k):
        out = np.kron(out, R)
    return out


def families(n, m=2):
    s = Scenario(n, m)
    return [make_family(f, s) for f in (Family.WHITE_NOISE, Family.LOCAL_DETERMINISTIC,
                                        Family.GENERALIZED_PR)]


def random_local_behavior(rng, n, m, terms=4):
    """Convex mixture of random deterministic vertices."""
    s = Scenario(n, m)
    w = rng.dirichlet(np.ones(terms))
    p = np.zeros(s.shape)
    for wi in w:
        al = rng.integers(0, n, m)
        bo = rng.integers(0, n, m)
        for x in range(m):
            for y in range(m):
                p[x, y, al[x], bo[y]] += wi
    return s, p


def random_family_mixture(rng, n, m=2):
    """Mixture of white noise, local deterministic and (for m=2) PR behaviors."""
    s = Scenario(n, m)
    kinds = [Family.WHITE_NOISE, Family.LOCAL_DETERMINISTIC]
    if m == 2:
        kinds.append(Family.GENERALIZED_PR)
    fams = [make_family(k, s) for k in kinds]
    return mix(fams, rng.dirichlet(np.ones(len(fams))))
