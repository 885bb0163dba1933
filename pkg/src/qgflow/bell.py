"""Markov jump process on the lattice discretization of the graph.

Jump rates between neighboring grid sites come from the positive part of
the off-diagonal probability flux.  With the weighted assembly (stiffness
K, weights w) the flux from site q to neighbor q' is

    J(q -> q') = (2/hbar) K[q', q] Im(psi_q psi*_q')

and the rate is sigma(q'|q) = [J(q -> q')]^+ / (w_q |psi_q|^2).  On a
uniform interior lattice this reduces to the textbook form with matrix
element of magnitude hbar^2 / (2 eps^2).  Time-inhomogeneous paths are
simulated by thinning with an adaptively rechecked dominating rate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .currents import NodeEncounterError
from .hamiltonian import HamiltonianMatrix
from .propagate import EvolutionRecord, WaveState

DENSITY_FLOOR_REL = 1e-12


@dataclass(frozen=True)
class RateTable:
    """Jump rates from one site to its grid neighbors at one time."""

    site: int
    t: float
    neighbors: np.ndarray
    rates: np.ndarray

    @property
    def total(self) -> float:
        return float(self.rates.sum())


@dataclass
class BellPath:
    """Piecewise-constant lattice path: site_history[i] holds on
    [jump_times[i], jump_times[i+1])."""

    t0: float
    t_final: float
    jump_times: list
    sites: list
    termination: str = "t_final"


def _neighbors(H: HamiltonianMatrix, site: int) -> np.ndarray:
    row = H.stiffness.getrow(site).tocoo()
    return row.col[row.col != site]


def jump_rates(state: WaveState, H: HamiltonianMatrix, site: int) -> RateTable:
    """Bell rates from `site` to each grid neighbor."""
    w = H.weights[site]
    psi_q = state.psi[site]
    dens = w * abs(psi_q) ** 2
    floor = DENSITY_FLOOR_REL * float(np.max(np.abs(state.psi) ** 2)) * w
    if dens <= floor:
        raise NodeEncounterError(f"zero-density site {site} at t={state.t}")
    nbrs = _neighbors(H, site)
    k_vals = np.asarray(H.stiffness[nbrs, site].todense()).ravel()
    flux = (2.0 / H.hbar) * k_vals * np.imag(psi_q * np.conj(state.psi[nbrs]))
    return RateTable(
        site=site, t=state.t, neighbors=nbrs, rates=np.maximum(flux, 0.0) / dens
    )


def sample_bell_path(
    record: EvolutionRecord,
    H: HamiltonianMatrix,
    start_site: int,
    seed_or_rng,
    t_final: float | None = None,
    t0: float | None = None,
    stop_sites: frozenset | set | None = None,
) -> BellPath:
    """Simulate the jump process by thinning.

    Per window the dominating bound is twice the max total rate over the
    stored wave-function snapshots in the window, rechecked at every
    candidate; an exceeded bound shrinks the window and restarts it.
    """
    rng = (
        seed_or_rng
        if isinstance(seed_or_rng, np.random.Generator)
        else np.random.default_rng(seed_or_rng)
    )
    t = record.t0 if t0 is None else t0
    t_end = record.t_final if t_final is None else t_final
    site = start_site
    path = BellPath(t0=t, t_final=t_end, jump_times=[t], sites=[site])
    window = max(10.0 * record.dt, (t_end - t) / 200.0)

    def window_bound(t_lo: float, t_hi: float) -> float:
        k_lo, _ = record.bracket(t_lo)
        k_hi, _ = record.bracket(t_hi)
        best = 0.0
        for k in range(k_lo, k_hi + 2):
            tk = record.t0 + min(k, record.states.shape[0] - 1) * record.dt
            best = max(best, jump_rates(record.state_at(tk), H, site).total)
        return 2.0 * best + 1e-12

    try:
        while t < t_end:
            t_hi = min(t + window, t_end)
            bound = window_bound(t, t_hi)
            while t < t_hi:
                t = t + rng.exponential(1.0 / bound)
                if t >= t_hi:
                    t = t_hi
                    break
                table = jump_rates(record.state_at(t), H, site)
                total = table.total
                if total > bound:
                    # bound violated: shrink the window and restart it
                    window *= 0.5
                    t_hi = min(t + window, t_end)
                    bound = 2.0 * total + 1e-12
                    continue
                if rng.random() < total / bound:
                    probs = table.rates / total
                    site = int(rng.choice(table.neighbors, p=probs))
                    path.jump_times.append(t)
                    path.sites.append(site)
                    if stop_sites is not None and site in stop_sites:
                        path.termination = "stopped"
                        return path
                    break  # rates changed with the site: rebuild the window
    except NodeEncounterError:
        path.termination = "zero-density"
    return path


def restrict_record(record: EvolutionRecord, eps: float) -> EvolutionRecord:
    """Restrict a finely resolved evolution to the eps-lattice.

    The jump process at lattice spacing eps is defined for a given wave
    function; sharing one well-resolved psi across an eps-ladder keeps the
    ladder free of evolution error.  eps must be a multiple of the fine
    spacing on every edge.
    """
    from .hamiltonian import build_grid

    fine = record.grid
    coarse = build_grid(fine.graph, eps)
    index_map = np.empty(coarse.n_points, dtype=np.intp)
    for q, qi in coarse.vertex_index.items():
        index_map[qi] = fine.vertex_index[q]
    for e in fine.graph.edges:
        ratio = coarse.edge_h[e.id] / fine.edge_h[e.id]
        stride = int(round(ratio))
        if abs(ratio - stride) > 1e-9 or stride < 1:
            raise ValueError(
                f"eps={eps} is not a multiple of the fine spacing on edge {e.id!r}"
            )
        index_map[coarse.edge_index[e.id]] = fine.edge_index[e.id][::stride]
    return EvolutionRecord(
        grid=coarse,
        hbar=record.hbar,
        t0=record.t0,
        dt=record.dt,
        states=record.states[:, index_map],
        output_times=record.output_times,
    )


def bell_site_at(path: BellPath, t: float) -> int:
    """Site occupied at time t."""
    i = int(np.searchsorted(path.jump_times, t, side="right")) - 1
    return path.sites[max(i, 0)]


@dataclass(frozen=True)
class ExitComparison:
    """Exit-edge statistics of Bell paths started at a vertex, next to the
    analytic lattice ratio and the continuum edge-selection value."""

    vertex: str
    t: float
    edges: tuple[str, ...]
    empirical: np.ndarray
    lattice_exact: np.ndarray
    continuum: np.ndarray
    n_paths: int


def lattice_exit_ratio(
    state: WaveState, H: HamiltonianMatrix, vertex: str
) -> tuple[tuple[str, ...], np.ndarray]:
    """Normalized positive off-diagonal fluxes from the vertex into the first
    site of each incident edge (the lattice analogue of the edge selection)."""
    grid = state.grid
    qi = grid.vertex_index[vertex]
    psi_q = state.psi[qi]
    edges, flux = [], []
    for eid, end in grid.graph.incidence[vertex]:
        idx = grid.edge_index[eid]
        nbr = idx[1] if end == 0 else idx[-2]
        k_val = H.stiffness[nbr, qi]
        flux.append((2.0 / H.hbar) * k_val * np.imag(psi_q * np.conj(state.psi[nbr])))
        edges.append(eid)
    plus = np.maximum(np.asarray(flux), 0.0)
    total = plus.sum()
    if total <= 0.0:
        raise ValueError(f"no outflux at vertex {vertex!r} at t={state.t}")
    return tuple(edges), plus / total


def vertex_exit_distribution(
    record: EvolutionRecord,
    H: HamiltonianMatrix,
    vertex: str,
    t_start: float,
    n_paths: int,
    seed: int,
) -> ExitComparison:
    """Start Bell paths at the vertex and record the first edge on which a
    path reaches two lattice sites from the vertex (absorbs immediate
    re-crossings)."""
    from .currents import edge_selection  # local import avoids cycle at module load

    grid = record.grid
    qi = grid.vertex_index[vertex]
    state = record.state_at(t_start)
    edges, lattice = lattice_exit_ratio(state, H, vertex)
    sel = edge_selection(state, vertex, record.hbar)
    continuum = np.array([sel.probabilities[sel.edges.index(e)] for e in edges])

    # map each incident edge to its first two interior sites
    marks = {}
    for eid, end in grid.graph.incidence[vertex]:
        idx = grid.edge_index[eid]
        marks[eid] = (idx[1], idx[2]) if end == 0 else (idx[-2], idx[-3])
    second_site = {v[1]: e for e, v in marks.items()}

    counts = {e: 0 for e in edges}
    done = 0
    stop = frozenset(second_site)
    for i in range(n_paths):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
        path = sample_bell_path(record, H, qi, rng, t0=t_start, stop_sites=stop)
        if path.termination == "stopped":
            counts[second_site[path.sites[-1]]] += 1
            done += 1
    empirical = np.array(
        [counts[e] / done if done else np.nan for e in edges]
    )
    return ExitComparison(
        vertex=vertex,
        t=t_start,
        edges=edges,
        empirical=empirical,
        lattice_exact=lattice,
        continuum=continuum,
        n_paths=done,
    )
