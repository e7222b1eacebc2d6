"""Cross-route checks on randomly generated subcritical models.

The fixture models exercise hand-checked numbers; these tests sweep seeded
random offspring laws so the route identities are verified away from any
structure the fixtures might share.
"""

import numpy as np
import pytest

from stopbp.exact_engine import (
    absorb_direct,
    enumerate_states,
    hitting_columns,
    one_step_kernel,
    restricted_kernel,
    restricted_via_inclusion_exclusion,
    stop_coefficients,
    stopped_hitting_column,
)
from stopbp.model import BranchingModel, OffspringLaw, PopulationState, StoppingSet
from stopbp.spectral import classify, moments


def random_model(seed: int, k: int = 2, max_children: int = 2) -> BranchingModel:
    """Random finite-support laws, biased toward extinction (subcritical)."""
    rng = np.random.default_rng(seed)
    laws = []
    for _ in range(k):
        n_atoms = int(rng.integers(2, 5))
        seen = {(0,) * k}
        atoms = [(0,) * k]
        while len(atoms) < n_atoms:
            counts = tuple(int(c) for c in rng.integers(0, max_children + 1, size=k))
            if counts not in seen:
                seen.add(counts)
                atoms.append(counts)
        weights = rng.integers(1, 20, size=len(atoms)).astype(float)
        weights[0] += 40.0  # heavy weight on the empty offspring atom
        probs = weights / weights.sum()
        laws.append(
            OffspringLaw(
                tuple((PopulationState(c), float(p)) for c, p in zip(atoms, probs))
            )
        )
    return BranchingModel(tuple(f"t{i}" for i in range(k)), tuple(laws))


SEEDS = [3, 11, 27, 58, 104]


@pytest.mark.parametrize("seed", SEEDS)
def test_route_identities_random_model(seed):
    model = random_model(seed)
    c = classify(moments(model))
    assert c.criticality == "subcritical", "seeds are chosen extinction-heavy"
    space = enumerate_states(2, 14)
    kernel = one_step_kernel(model, space)
    kernel.validate(tol=1e-12)
    rng = np.random.default_rng(seed + 1)
    members = []
    while len(members) < 2:
        counts = tuple(int(c) for c in rng.integers(0, 3, size=2))
        state = PopulationState(counts)
        if not state.is_zero and state not in members:
            members.append(state)
    stopping = StoppingSet(frozenset(members))

    t_max = 10
    restricted = restricted_kernel(kernel, stopping, t_max)
    # dual-route first-passage identity
    other = restricted_via_inclusion_exclusion(kernel, stopping, t_max)
    assert np.max(np.abs(restricted.values - other)) <= 1e-12
    # dominated by the free chain
    free = hitting_columns(kernel, restricted.targets, t_max)
    assert np.all(restricted.values <= free[1:] + 1e-12)

    coeffs = stop_coefficients(restricted)
    for r in stopping:
        direct = stopped_hitting_column(kernel, stopping, r, t_max)
        r_idx = restricted.column_index(r)
        partial = np.cumsum(restricted.values[:, :, r_idx], axis=0)
        valid = np.ones(space.size, dtype=bool)
        valid[[0, space.overflow]] = False
        valid[[space.ordinal(m) for m in stopping]] = False
        for t in range(1, t_max + 1):
            formula = np.zeros(space.size)
            for l in range(1, t + 1):
                formula += free[l] @ coeffs.first_column[:, r_idx, t - l]
            assert np.max(np.abs(formula[valid] - direct[t][valid])) <= 1e-10
            assert np.max(np.abs(partial[t - 1][valid] - direct[t][valid])) <= 1e-12


@pytest.mark.parametrize("seed", SEEDS[:3])
def test_overflow_bound_is_honest(seed):
    # enlarging the cap can raise the absorption probability by at most the
    # smaller space's accumulated overflow mass
    model = random_model(seed)
    stopping = StoppingSet(frozenset({PopulationState((1, 1))}))
    n, r, t = PopulationState((2, 2)), PopulationState((1, 1)), 12
    values = {}
    overflow = {}
    for cap in (6, 10, 20):
        space = enumerate_states(2, cap)
        kernel = one_step_kernel(model, space)
        values[cap] = absorb_direct(kernel, stopping, n, r, t)
        v = np.zeros(space.size)
        v[space.ordinal(n)] = 1.0
        for _ in range(t):
            v = v @ kernel.matrix
        overflow[cap] = float(v[space.overflow])
    assert values[6] <= values[10] + 1e-12 <= values[20] + 2e-12
    assert values[20] - values[6] <= overflow[6] + 1e-12
    assert values[20] - values[10] <= overflow[10] + 1e-12
