"""Random generators shared by the test modules."""

import numpy as np

from sublinear_clt import DiscreteDistribution, ScenarioSet


def random_distribution(rng, d=1, k=None, lattice=True, span=3):
    k = k or int(rng.integers(1, 4))
    while True:
        if lattice:
            pts = rng.integers(-span, span + 1, size=(k, d)).astype(float)
        else:
            pts = rng.uniform(-span, span, size=(k, d))
        if len(np.unique(pts, axis=0)) == k:
            break
    w = rng.uniform(0.1, 1.0, size=k)
    return DiscreteDistribution(pts, w / w.sum())


def random_scenario_set(rng, d=1, m=None, lattice=True, mean_zero=False):
    m = m or int(rng.integers(1, 4))
    scen = []
    for _ in range(m):
        if mean_zero:
            # symmetric laws have mean zero
            half = random_distribution(rng, d, int(rng.integers(1, 3)), lattice)
            pts = half.points[np.any(half.points != 0, axis=1)]
            if len(pts) == 0:
                pts = np.ones((1, d))
            pts = np.unique(np.vstack([pts, -pts]), axis=0)
            scen.append(DiscreteDistribution(pts, np.full(len(pts), 1 / len(pts))))
        else:
            scen.append(random_distribution(rng, d, lattice=lattice))
    return ScenarioSet.of(*scen)


def random_psd(rng, d, scale=1.0):
    b = rng.normal(size=(d, d))
    return scale * b @ b.T / d


def random_lattice_sequence(rng, max_n=8, leaf_cap=200_000):
    """Random non-identical lattice sequence for DP/oracle comparisons.

    Returns (seq, n). n is drawn from 1..max_n and then lowered, if needed,
    so the brute-force tree stays under ``leaf_cap`` leaves.
    """
    from sublinear_clt import SequenceSpec

    d = int(rng.integers(1, 3))
    span = 2 if d == 1 else 1
    n = int(rng.integers(1, max_n + 1))
    steps = [random_scenario_set(rng, d, lattice=True) for _ in range(max_n)]
    # a random common pitch keeps the lattice nontrivial
    pitch = float(rng.choice([1.0, 0.5, 0.25]))
    steps = [ScenarioSet.of(*(DiscreteDistribution(sc.points * pitch, sc.weights) for sc in s))
             for s in steps]
    leaves = 1
    for i, s in enumerate(steps[:n]):
        leaves *= len(s.support())
        if leaves > leaf_cap:
            n = max(1, i)
            break
    seq = SequenceSpec("clt", d, lambda i: steps[i - 1], builder={"id": "random"})
    return seq, n
