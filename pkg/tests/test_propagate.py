"""Initial states and Crank-Nicolson evolution."""

import numpy as np
import pytest

from qgflow import (
    assemble_hamiltonian,
    build_grid,
    eigenstate,
    evolve,
    gaussian_packet,
    parse_spec,
    step_crank_nicolson,
    validate_graph,
)
from qgflow.propagate import WaveState, initial_state
from util import interval_doc


def _setup(doc, h):
    grid = build_grid(validate_graph(parse_spec(doc)), h)
    return grid, assemble_hamiltonian(grid)


def test_packet_is_normalized():
    grid, _ = _setup(interval_doc(length=2.0, h=0.01), 0.01)
    state = gaussian_packet(grid, "e", center=1.0, width=0.1, k=10.0)
    assert state.norm() == pytest.approx(1.0, abs=1e-12)


def test_packet_momentum_expectation():
    # <psi, -i d/dx psi> should be close to k for a packet well inside the edge
    grid, _ = _setup(interval_doc(length=2.0, h=0.002), 0.002)
    k = 30.0
    state = gaussian_packet(grid, "e", center=1.0, width=0.08, k=k)
    psi = grid.edge_values(state.psi, "e")
    x = grid.edge_x["e"]
    dpsi = np.gradient(psi, x)
    p = np.sum(grid.weights * np.real(np.conj(state.psi) * -1j * _embed(grid, dpsi)))
    assert abs(p - k) / k <= 0.01


def _embed(grid, edge_vals):
    out = np.zeros(grid.n_points, dtype=complex)
    out[grid.edge_index["e"]] = edge_vals
    return out


def test_packet_validation_errors():
    grid, _ = _setup(interval_doc(length=2.0, h=0.01), 0.01)
    with pytest.raises(ValueError, match="width"):
        gaussian_packet(grid, "e", center=1.0, width=0.0, k=1.0)
    with pytest.raises(ValueError, match="outside edge"):
        gaussian_packet(grid, "e", center=3.0, width=0.1, k=1.0)
    with pytest.warns(UserWarning, match="close to an end"):
        gaussian_packet(grid, "e", center=0.05, width=0.1, k=1.0)


def test_packet_pinned_at_dirichlet_vertices():
    grid, _ = _setup(interval_doc(length=2.0, h=0.01), 0.01)
    state = gaussian_packet(grid, "e", center=1.0, width=0.1, k=5.0)
    assert state.psi[grid.vertex_index["a"]] == 0.0
    assert state.psi[grid.vertex_index["b"]] == 0.0


def test_superposed_initial_state_normalized():
    grid, _ = _setup(interval_doc(length=2.0, h=0.01), 0.01)
    desc = {
        "packets": [
            {"edge": "e", "center": 0.6, "width": 0.08, "k": 12.0, "amplitude": 1.0},
            {"edge": "e", "center": 1.4, "width": 0.08, "k": -9.0, "amplitude": 0.5},
        ]
    }
    state = initial_state(grid, desc)
    assert state.norm() == pytest.approx(1.0, abs=1e-12)


def test_cn_step_preserves_norm_exactly():
    grid, H = _setup(interval_doc(length=2.0, h=0.01), 0.01)
    state = gaussian_packet(grid, "e", center=1.0, width=0.1, k=10.0)
    for _ in range(50):
        state = step_crank_nicolson(H, state, 1e-4)
    assert state.norm() == pytest.approx(1.0, abs=1e-12)


def test_cn_zero_step_returns_copy():
    grid, H = _setup(interval_doc(length=2.0, h=0.01), 0.01)
    state = gaussian_packet(grid, "e", center=1.0, width=0.1, k=10.0)
    out = step_crank_nicolson(H, state, 0.0)
    assert out is not state
    assert np.array_equal(out.psi, state.psi)


def test_eigenstate_acquires_pure_phase():
    grid, H = _setup(interval_doc(length=1.0, h=0.005), 0.005)
    ev, state = eigenstate(H, 0)
    dt = 1e-4
    psi0 = state.psi.copy()
    for n in range(1, 101):
        state = step_crank_nicolson(H, state, dt)
        # Cayley phase per step: the discrete eigenvalue maps to
        # exp(-2i atan(ev dt / 2)) which agrees with exp(-i ev dt) to O(dt^3)
        expected = np.exp(-1j * ev * dt * n) * psi0
        assert np.abs(state.psi - expected).max() <= 1e-8


def test_time_reversal_round_trip():
    grid, H = _setup(interval_doc(length=2.0, h=0.01), 0.01)
    state = gaussian_packet(grid, "e", center=1.0, width=0.1, k=10.0)
    psi0 = state.psi.copy()
    n_steps = 300
    for _ in range(n_steps):
        state = step_crank_nicolson(H, state, 1e-4)
    state = state.conjugated()
    for _ in range(n_steps):
        state = step_crank_nicolson(H, state, 1e-4)
    assert np.abs(np.conj(state.psi) - psi0).max() <= 1e-8


def test_positive_k_moves_mass_right():
    grid, H = _setup(interval_doc(length=2.0, h=0.01), 0.01)
    state = gaussian_packet(grid, "e", center=0.8, width=0.1, k=10.0)
    record = evolve(H, state, 1e-4, 300)
    x = grid.edge_x["e"]
    right = x > 1.0

    def right_mass(psi):
        vals = np.abs(grid.edge_values(psi, "e")) ** 2
        return np.trapezoid(vals[right], x[right])

    assert right_mass(record.states[-1]) > right_mass(record.states[0]) + 0.1


def test_discrete_continuity_identity():
    # mass change in any region equals the K-flux through its boundary,
    # evaluated at the Cayley midpoint state; exact up to solver roundoff
    grid, H = _setup(interval_doc(length=2.0, h=0.01), 0.01)
    state = gaussian_packet(grid, "e", center=1.0, width=0.1, k=10.0)
    dt = 1e-4
    new = step_crank_nicolson(H, state, dt)
    mid = 0.5 * (state.psi + new.psi)
    rate = (2.0 / H.hbar) * np.imag(np.conj(mid) * (H.stiffness @ mid))
    mass_rate = H.weights * (np.abs(new.psi) ** 2 - np.abs(state.psi) ** 2) / dt
    region = np.arange(grid.n_points) % 3 == 0  # arbitrary site subset
    assert abs(mass_rate[region].sum() - rate[region].sum()) <= 1e-10


def test_record_interpolation_and_snapping():
    grid, H = _setup(interval_doc(length=2.0, h=0.01), 0.01)
    state = gaussian_packet(grid, "e", center=1.0, width=0.1, k=10.0)
    record = evolve(H, state, 1e-4, 10, output_times=(0.00052,))
    assert record.t_final == pytest.approx(1e-3)
    assert record.output_times[0] == pytest.approx(5e-4)
    k, f = record.bracket(0.00035)
    assert k == 3 and f == pytest.approx(0.5)
    mid = record.state_at(0.00035)
    manual = 0.5 * (record.states[3] + record.states[4])
    assert np.array_equal(mid.psi, manual)


def test_evolution_norm_constant_over_record():
    grid, H = _setup(interval_doc(length=2.0, h=0.01), 0.01)
    state = gaussian_packet(grid, "e", center=1.0, width=0.1, k=10.0)
    record = evolve(H, state, 1e-4, 200)
    norms = [WaveState(grid, 0.0, psi).norm() for psi in record.states[::20]]
    assert np.abs(np.asarray(norms) - 1.0).max() <= 1e-12
