"""Density, probability currents, Bohmian velocities, and edge selection.

Vertex currents use second-order one-sided stencils; the outward current
s_e at a vertex q is positive when probability flows from q into the edge.
All functions here are pure in the wave state and safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .propagate import EvolutionRecord, WaveState

RHO_FLOOR_REL = 1e-12   # velocity division floor, relative to max rho at t
SIGMA_FLOOR = 1e-14     # total-outflux floor for edge selection


class NodeEncounterError(RuntimeError):
    """Trajectory ran into a node of the wave function (rho below floor)."""


class StalledVertexError(RuntimeError):
    """All currents at a vertex vanish; the edge-selection rule is undefined."""


@dataclass(frozen=True)
class FluxReport:
    """Per-edge signed outward currents at one vertex and time."""

    vertex: str
    t: float
    edges: tuple[str, ...]
    s: np.ndarray
    s_plus: np.ndarray
    s_minus: np.ndarray

    @property
    def kirchhoff_residual(self) -> float:
        return float(self.s.sum())


@dataclass(frozen=True)
class EdgeSelection:
    """Outgoing-edge distribution at a vertex, Eq-selection over E_q."""

    vertex: str
    t: float
    edges: tuple[str, ...]
    probabilities: np.ndarray


def density(state: WaveState) -> np.ndarray:
    """rho_i = |psi_i|^2 on the global grid."""
    return np.abs(state.psi) ** 2


def edge_current(state: WaveState, edge_id: str, hbar: float = 1.0) -> np.ndarray:
    """Current along one edge in the +x direction, at every edge grid point.

    Central differences at interior points, second-order one-sided stencils
    at the two edge ends.
    """
    grid = state.grid
    psi = grid.edge_values(state.psi, edge_id)
    he = grid.edge_h[edge_id]
    d = np.empty_like(psi)
    d[1:-1] = (psi[2:] - psi[:-2]) / (2.0 * he)
    d[0] = (-3.0 * psi[0] + 4.0 * psi[1] - psi[2]) / (2.0 * he)
    d[-1] = (3.0 * psi[-1] - 4.0 * psi[-2] + psi[-3]) / (2.0 * he)
    return hbar * np.imag(np.conj(psi) * d)


def current(state: WaveState, hbar: float = 1.0) -> dict[str, np.ndarray]:
    """Currents on every edge (see edge_current)."""
    return {e.id: edge_current(state, e.id, hbar) for e in state.grid.graph.edges}


def vertex_currents(state: WaveState, vertex: str, hbar: float = 1.0) -> FluxReport:
    """Signed outward currents s_e = n_e . j_e at a vertex, per incident edge."""
    grid = state.grid
    pairs = grid.graph.incidence[vertex]
    edges = []
    s = np.empty(len(pairs))
    for i, (eid, end) in enumerate(pairs):
        psi = grid.edge_values(state.psi, eid)
        if psi.size < 3:
            raise ValueError(f"edge {eid!r} has fewer than 3 grid points")
        he = grid.edge_h[eid]
        if end == 0:
            grad_out = (-3.0 * psi[0] + 4.0 * psi[1] - psi[2]) / (2.0 * he)
            psi_q = psi[0]
        else:
            grad_out = (-3.0 * psi[-1] + 4.0 * psi[-2] - psi[-3]) / (2.0 * he)
            psi_q = psi[-1]
        s[i] = hbar * np.imag(np.conj(psi_q) * grad_out)
        edges.append(eid)
    return FluxReport(
        vertex=vertex,
        t=state.t,
        edges=tuple(edges),
        s=s,
        s_plus=np.maximum(s, 0.0),
        s_minus=np.maximum(-s, 0.0),
    )


def selection_from_flux(flux: FluxReport, sigma_floor: float = SIGMA_FLOOR) -> EdgeSelection:
    total = flux.s_plus.sum()
    if total <= sigma_floor:
        raise StalledVertexError(
            f"all currents vanish at vertex {flux.vertex!r} at t={flux.t}"
        )
    return EdgeSelection(
        vertex=flux.vertex,
        t=flux.t,
        edges=flux.edges,
        probabilities=flux.s_plus / total,
    )


def edge_selection(
    state: WaveState, vertex: str, hbar: float = 1.0, sigma_floor: float = SIGMA_FLOOR
) -> EdgeSelection:
    """P(e|q) proportional to the positive part of the outward current."""
    return selection_from_flux(vertex_currents(state, vertex, hbar), sigma_floor)


class EdgeField:
    """Precomputed rho and j arrays over (time, position) for one edge.

    Backs fast scalar velocity evaluation inside the trajectory integrator:
    rho and j are interpolated linearly in t and x separately, then divided.
    """

    def __init__(self, record: EvolutionRecord, edge_id: str):
        grid = record.grid
        self.edge_id = edge_id
        self.he = grid.edge_h[edge_id]
        self.length = grid.graph.edge(edge_id).length
        self.n = grid.edge_x[edge_id].size - 1
        psi = record.states[:, grid.edge_index[edge_id]]   # (T, n+1)
        he = self.he
        d = np.empty_like(psi)
        d[:, 1:-1] = (psi[:, 2:] - psi[:, :-2]) / (2.0 * he)
        d[:, 0] = (-3.0 * psi[:, 0] + 4.0 * psi[:, 1] - psi[:, 2]) / (2.0 * he)
        d[:, -1] = (3.0 * psi[:, -1] - 4.0 * psi[:, -2] + psi[:, -3]) / (2.0 * he)
        self.j = record.hbar * np.imag(np.conj(psi) * d)
        self.rho = np.abs(psi) ** 2
        self.record = record

    def rho_j_at(self, t: float, x: float) -> tuple[float, float]:
        k, f = self.record.bracket(t)
        u = x / self.he
        i = int(u)
        if i < 0:
            i, g = 0, 0.0
        elif i >= self.n:
            i, g = self.n - 1, 1.0
        else:
            g = u - i
        rho0 = (1.0 - g) * self.rho[k, i] + g * self.rho[k, i + 1]
        rho1 = (1.0 - g) * self.rho[k + 1, i] + g * self.rho[k + 1, i + 1]
        j0 = (1.0 - g) * self.j[k, i] + g * self.j[k, i + 1]
        j1 = (1.0 - g) * self.j[k + 1, i] + g * self.j[k + 1, i + 1]
        return (1.0 - f) * rho0 + f * rho1, (1.0 - f) * j0 + f * j1

    def velocity_at(self, t: float, x: float) -> float:
        rho, j = self.rho_j_at(t, x)
        if rho < RHO_FLOOR_REL * self.record.rho_max_at(t):
            raise NodeEncounterError(
                f"node encounter on edge {self.edge_id!r} at x={x:.6g}, t={t:.6g}"
            )
        return j / rho


def get_edge_field(record: EvolutionRecord, edge_id: str) -> EdgeField:
    if edge_id not in record._edge_fields:
        record._edge_fields[edge_id] = EdgeField(record, edge_id)
    return record._edge_fields[edge_id]


def velocity(record: EvolutionRecord, edge_id: str, x: float, t: float) -> float:
    """Bohmian velocity v = j/rho at an arbitrary point, interpolated."""
    return get_edge_field(record, edge_id).velocity_at(t, x)
