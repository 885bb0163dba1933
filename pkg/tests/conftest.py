"""Session-scoped fixtures shared by the unit and acceptance tests.

Evolutions and large ensembles are expensive, so they are computed once per
session and cached by scenario name and overridden resolution.
"""

import pytest

from qgflow.sampler import kernel_turn_rule, sample_ensemble
from qgflow.scenarios import load_scenario, run_evolution


@pytest.fixture(scope="session")
def evolved():
    """Factory returning (Prepared, EvolutionRecord), cached per arguments."""
    cache = {}

    def get(name, h=None, dt=None):
        key = (name, h, dt)
        if key not in cache:
            cache[key] = run_evolution(load_scenario(name), h=h, dt=dt)
        return cache[key]

    return get


@pytest.fixture(scope="session")
def star3_asym_ensemble(evolved):
    """Criterion-scale minimal-graph-process ensemble on star3-asym."""
    spec = load_scenario("star3-asym")
    _, record = evolved("star3-asym")
    return sample_ensemble(record, 10_000, spec.seed)


@pytest.fixture(scope="session")
def star3_asym_kernel_ensemble(evolved):
    """Same ensemble size, driven by a randomized feasible vertex kernel."""
    spec = load_scenario("star3-asym")
    _, record = evolved("star3-asym")
    return sample_ensemble(record, 10_000, spec.seed, turn_rule=kernel_turn_rule(1234))

