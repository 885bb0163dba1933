"""Bundled example scenarios and the standard setup pipeline."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from ..graph import GraphSpec, MetricGraph, parse_spec, validate_graph
from ..hamiltonian import Grid, HamiltonianMatrix, assemble_hamiltonian, build_grid
from ..propagate import EvolutionRecord, WaveState, evolve, initial_state

BUNDLED = ("interval", "chain2", "star3-sym", "star3-asym", "loop-triangle")


def bundled_document(name: str) -> str:
    if name not in BUNDLED:
        raise KeyError(f"no bundled scenario {name!r}; choose from {BUNDLED}")
    return resources.files(__package__).joinpath(f"{name}.json").read_text()


def load_scenario(name_or_path: str) -> GraphSpec:
    """Load a bundled scenario by name or a scenario file by path."""
    if name_or_path in BUNDLED:
        return parse_spec(bundled_document(name_or_path))
    return parse_spec(Path(name_or_path).read_text())


@dataclass
class Prepared:
    spec: GraphSpec
    graph: MetricGraph
    grid: Grid
    H: HamiltonianMatrix
    psi0: WaveState


def prepare(spec: GraphSpec, h: float | None = None) -> Prepared:
    """Validate, discretize, assemble, and build the initial state."""
    graph = validate_graph(spec)
    grid = build_grid(graph, spec.h if h is None else h)
    H = assemble_hamiltonian(grid, spec.hbar)
    psi0 = initial_state(grid, spec.initial_state)
    return Prepared(spec=spec, graph=graph, grid=grid, H=H, psi0=psi0)


def run_evolution(
    spec: GraphSpec, h: float | None = None, dt: float | None = None
) -> tuple[Prepared, EvolutionRecord]:
    prep = prepare(spec, h=h)
    dt = spec.dt if dt is None else dt
    n_steps = int(round(spec.t_final / dt))
    record = evolve(prep.H, prep.psi0, dt, n_steps, spec.output_times)
    return prep, record
