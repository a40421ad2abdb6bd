"""Shared fixtures and builders for the test suite."""

import numpy as np
import pytest

from beliefrhc import (
    CostContext,
    CostWeights,
    LinearProcess,
    ParticleBelief,
    chain_products,
    linearize_process,
    load_scenario,
    map_trajectory,
    offset_summaries,
)


@pytest.fixture(scope="session")
def light_dark():
    return load_scenario("light_dark")


@pytest.fixture(scope="session")
def two_walls():
    return load_scenario("two_walls")


@pytest.fixture(scope="session")
def house_short():
    return load_scenario("house_short")


def make_linear_context(
    A,
    B,
    x_map,
    particles,
    observation,
    horizon,
    V,
    beta=0,
    obstacles=None,
    weights=None,
):
    """CostContext for a time-invariant linear process and a particle cloud."""
    process = LinearProcess(A, B)
    x_map = np.asarray(x_map, dtype=np.float64)
    nominal_states = np.repeat(x_map[None, :], horizon + 1, axis=0)
    nominal_controls = np.zeros((horizon, process.n_u))
    lin = linearize_process(process, nominal_states, nominal_controls)
    chains = chain_products(lin)
    belief = ParticleBelief.uniform(np.atleast_2d(particles))
    if weights is not None:
        belief = ParticleBelief(np.atleast_2d(particles), weights)
    offsets = offset_summaries(belief, x_map, chains)
    traj = map_trajectory(lin, x_map)
    return CostContext(
        map_traj=traj,
        offsets=offsets,
        weights=CostWeights(V=V, beta=beta),
        observation=observation,
        obstacles=obstacles,
    )


def announce(capsys, line):
    """Print one line that survives pytest's output capture."""
    with capsys.disabled():
        print(line, flush=True)
