"""Piecewise-deterministic trajectory sampler on the graph.

A path moves along an edge by the Bohmian ODE dx/dt = v_t(x) and, on
arrival at a vertex, picks the outgoing edge at random with probability
proportional to the positive part of the outward current there.  Paths are
mutually independent given the (immutable) evolution record; every path
derives its own RNG stream from the root seed and its path index, so
ensembles are reproducible and order-independent.
"""

from __future__ import annotations

import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .currents import (
    EdgeSelection,
    FluxReport,
    NodeEncounterError,
    StalledVertexError,
    get_edge_field,
    selection_from_flux,
    vertex_currents,
)
from .propagate import EvolutionRecord, WaveState

MAX_TURNS = 10_000


@dataclass(frozen=True)
class Segment:
    """One deterministic stretch of a path along a single edge."""

    edge: str
    t0: float
    t1: float
    times: np.ndarray
    xs: np.ndarray


@dataclass(frozen=True)
class TurnEvent:
    t: float
    vertex: str
    in_edge: str
    out_edge: str
    u: float


@dataclass
class Trajectory:
    start: tuple[str, float, float]        # (edge, x, t0)
    segments: list[Segment] = field(default_factory=list)
    turns: list[TurnEvent] = field(default_factory=list)
    termination: str = "t_final"           # t_final | node-encounter | stalled-vertex
    termination_time: float = np.inf

    def position_at(self, t: float) -> tuple[str, float] | None:
        """Edge and arc length at time t, or None if terminated before t."""
        if t > self.termination_time:
            return None
        for seg in self.segments:
            if seg.t0 <= t <= seg.t1:
                return seg.edge, float(np.interp(t, seg.times, seg.xs))
        return None


def integrate_edge(
    record: EvolutionRecord,
    edge_id: str,
    x0: float,
    t0: float,
    t_end: float | None = None,
) -> tuple[Segment, tuple[str, float] | None]:
    """Integrate the Bohmian ODE along one edge until a vertex is reached.

    Returns the segment and, on arrival, the (vertex, arrival time); None
    when the path stays on the edge until t_end.  Endpoint crossings are
    located by the solver's sign-change bisection on the event functions.
    May raise NodeEncounterError from the velocity evaluation.
    """
    fld = get_edge_field(record, edge_id)
    length = fld.length
    if t_end is None:
        t_end = record.t_final
    if t_end <= t0:
        seg = Segment(edge_id, t0, t0, np.array([t0]), np.array([x0]))
        return seg, None

    def rhs(t, y):
        x = min(max(y[0], 0.0), length)
        return (fld.velocity_at(t, x),)

    def hit_lo(t, y):
        return y[0]

    def hit_hi(t, y):
        return y[0] - length

    hit_lo.terminal = True
    hit_lo.direction = -1.0
    hit_hi.terminal = True
    hit_hi.direction = 1.0

    sol = solve_ivp(
        rhs,
        (t0, t_end),
        [x0],
        method="RK45",
        events=(hit_lo, hit_hi),
        rtol=1e-6,
        atol=1e-9 * length,
        max_step=max(20.0 * record.dt, (t_end - t0) * 1e-3),
    )
    if sol.status == -1:
        raise RuntimeError(f"integrator failed on edge {edge_id!r}: {sol.message}")

    times = sol.t
    xs = np.clip(sol.y[0], 0.0, length)
    if sol.status == 1:
        graph = record.grid.graph
        if sol.t_events[0].size:
            t_hit = float(sol.t_events[0][0])
            vertex = graph.vertex_at_end(edge_id, 0)
            x_hit = 0.0
        else:
            t_hit = float(sol.t_events[1][0])
            vertex = graph.vertex_at_end(edge_id, 1)
            x_hit = length
        times = np.append(times[times < t_hit], t_hit)
        xs = np.append(xs[: times.size - 1], x_hit)
        seg = Segment(edge_id, t0, t_hit, times, xs)
        return seg, (vertex, t_hit)
    seg = Segment(edge_id, t0, t_end, times, xs)
    return seg, None


def turn(selection: EdgeSelection, u: float) -> str:
    """Inverse-CDF draw over the fixed incidence ordering of E_q."""
    cdf = np.cumsum(selection.probabilities)
    i = int(np.searchsorted(cdf, u, side="right"))
    return selection.edges[min(i, len(selection.edges) - 1)]


def markov_turn_rule(flux: FluxReport, in_edge, rng) -> tuple[str, float]:
    """The standard rule: P(e|q) = s_e^+ / sum s_f^+, independent of in_edge."""
    sel = selection_from_flux(flux)
    u = rng.random()
    return turn(sel, u), u


def argmax_turn_rule(flux: FluxReport, in_edge, rng) -> tuple[str, float]:
    """Deliberately broken deterministic rule: always take the largest-outflux
    edge.  Used to demonstrate that a deterministic process cannot stay
    equivariant."""
    sel = selection_from_flux(flux)
    return sel.edges[int(np.argmax(sel.probabilities))], float("nan")


def kernel_turn_rule(kernel_seed: int):
    """Turn rule driven by a randomized feasible incoming-edge-dependent
    kernel.

    The kernel at (vertex, turn time) is seeded from `kernel_seed` and the
    quantized turn time, so all paths see the same kernel and the ensemble
    realizes one well-defined almost-Markov process.  Falls back to the
    memoryless rule when the vertex has no resolvable influx.
    """
    from .almost_markov import feasible_kernel
    from .currents import StalledVertexError as _Stalled

    def rule(flux: FluxReport, in_edge, rng) -> tuple[str, float]:
        tag = f"{kernel_seed}:{flux.vertex}:{round(flux.t, 9)}".encode()
        try:
            kern = feasible_kernel(flux, mode="randomized", seed=zlib.crc32(tag))
        except _Stalled:
            return markov_turn_rule(flux, in_edge, rng)
        row = kern.matrix[kern.edges.index(in_edge)]
        sel = EdgeSelection(flux.vertex, flux.t, kern.edges, row)
        u = rng.random()
        return turn(sel, u), u

    return rule


def sample_path(
    record: EvolutionRecord,
    start: tuple[str, float, float],
    rng: np.random.Generator,
    turn_rule=markov_turn_rule,
) -> Trajectory:
    """Alternate edge integration and vertex turns until t_final or abort."""
    edge_id, x, t = start
    graph = record.grid.graph
    traj = Trajectory(start=start)
    for _ in range(MAX_TURNS):
        try:
            seg, arrival = integrate_edge(record, edge_id, x, t)
        except NodeEncounterError:
            traj.termination = "node-encounter"
            traj.termination_time = t
            return traj
        traj.segments.append(seg)
        if arrival is None:
            traj.termination = "t_final"
            traj.termination_time = record.t_final
            return traj
        vertex, t = arrival
        state = record.state_at(t)
        flux = vertex_currents(state, vertex, record.hbar)
        try:
            out_edge, u = turn_rule(flux, edge_id, rng)
        except StalledVertexError:
            traj.termination = "stalled-vertex"
            traj.termination_time = t
            return traj
        traj.turns.append(TurnEvent(t, vertex, edge_id, out_edge, u))
        edge_id = out_edge
        end = 0 if graph.vertex_at_end(out_edge, 0) == vertex else 1
        x = 0.0 if end == 0 else graph.edge(out_edge).length
    traj.termination = "stalled-vertex"
    traj.termination_time = t
    return traj


class InitialSampler:
    """Inverse-CDF sampler over the grid-cell masses of |psi_0|^2.

    Positions are uniform within a cell, so the ensemble is exactly
    |psi_0|^2 distributed at the discrete level.
    """

    def __init__(self, state: WaveState):
        grid = state.grid
        rho = np.abs(state.psi) ** 2
        edges, xlo, xhi, mass = [], [], [], []
        for e in grid.graph.edges:
            r = rho[grid.edge_index[e.id]]
            x = grid.edge_x[e.id]
            he = grid.edge_h[e.id]
            cell_mass = 0.5 * he * (r[:-1] + r[1:])
            edges.extend([e.id] * (x.size - 1))
            xlo.extend(x[:-1])
            xhi.extend(x[1:])
            mass.extend(cell_mass)
        mass = np.asarray(mass)
        self.edges = edges
        self.xlo = np.asarray(xlo)
        self.xhi = np.asarray(xhi)
        self.cdf = np.cumsum(mass / mass.sum())
        self.t0 = state.t

    def draw(self, rng: np.random.Generator) -> tuple[str, float, float]:
        i = int(np.searchsorted(self.cdf, rng.random(), side="right"))
        i = min(i, len(self.edges) - 1)
        x = self.xlo[i] + rng.random() * (self.xhi[i] - self.xlo[i])
        return self.edges[i], float(x), self.t0


@dataclass
class EnsembleStats:
    """Aggregated ensemble observables at the output times."""

    n_paths: int
    output_times: tuple[float, ...]
    bins_per_edge: int
    edge_masses: dict            # t -> {edge: fraction of all paths}
    histograms: dict             # t -> {edge: counts per bin}
    turn_counts: dict            # vertex -> {(in_edge, out_edge): count}
    terminations: dict           # reason -> count
    trajectories: list | None = None

    def merge(self, other: "EnsembleStats") -> "EnsembleStats":
        assert self.output_times == other.output_times
        out = EnsembleStats(
            n_paths=self.n_paths + other.n_paths,
            output_times=self.output_times,
            bins_per_edge=self.bins_per_edge,
            edge_masses={},
            histograms={},
            turn_counts={},
            terminations={},
            trajectories=None,
        )
        for t in self.output_times:
            hists = {
                e: self.histograms[t][e] + other.histograms[t][e]
                for e in self.histograms[t]
            }
            # recompute from integer counts so merging is exact and the
            # result does not depend on how paths were split across workers
            out.edge_masses[t] = {e: h.sum() / out.n_paths for e, h in hists.items()}
            out.histograms[t] = hists
        for src in (self.turn_counts, other.turn_counts):
            for q, cnts in src.items():
                acc = out.turn_counts.setdefault(q, {})
                for key, c in cnts.items():
                    acc[key] = acc.get(key, 0) + c
        for src in (self.terminations, other.terminations):
            for reason, c in src.items():
                out.terminations[reason] = out.terminations.get(reason, 0) + c
        if self.trajectories is not None and other.trajectories is not None:
            out.trajectories = self.trajectories + other.trajectories
        return out


def _path_rng(seed: int, path_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(path_index,)))


def _sample_chunk(args) -> EnsembleStats:
    record, indices, seed, output_times, bins, turn_rule, keep_paths = args
    sampler = InitialSampler(record.state_at(record.t0))
    graph = record.grid.graph
    edges = [e.id for e in graph.edges]
    stats = EnsembleStats(
        n_paths=len(indices),
        output_times=tuple(output_times),
        bins_per_edge=bins,
        edge_masses={t: {e: 0.0 for e in edges} for t in output_times},
        histograms={
            t: {e: np.zeros(bins, dtype=np.int64) for e in edges} for t in output_times
        },
        turn_counts={},
        terminations={},
        trajectories=[] if keep_paths else None,
    )
    counts = {t: {e: 0 for e in edges} for t in output_times}
    for i in indices:
        rng = _path_rng(seed, i)
        start = sampler.draw(rng)
        traj = sample_path(record, start, rng, turn_rule)
        stats.terminations[traj.termination] = (
            stats.terminations.get(traj.termination, 0) + 1
        )
        for ev in traj.turns:
            acc = stats.turn_counts.setdefault(ev.vertex, {})
            key = (ev.in_edge, ev.out_edge)
            acc[key] = acc.get(key, 0) + 1
        for t in output_times:
            pos = traj.position_at(t)
            if pos is None:
                continue
            eid, x = pos
            counts[t][eid] += 1
            length = graph.edge(eid).length
            b = min(int(x / length * bins), bins - 1)
            stats.histograms[t][eid][b] += 1
        if keep_paths:
            stats.trajectories.append(traj)
    for t in output_times:
        for e in edges:
            stats.edge_masses[t][e] = counts[t][e] / len(indices)
    return stats


def sample_ensemble(
    record: EvolutionRecord,
    n_paths: int,
    seed: int,
    output_times: tuple[float, ...] | None = None,
    turn_rule=markov_turn_rule,
    bins_per_edge: int = 20,
    workers: int = 1,
    keep_paths: bool = False,
) -> EnsembleStats:
    """Draw n_paths independent trajectories from |psi_0|^2 and aggregate.

    Results are independent of `workers` because every path owns a stream
    derived from (seed, path index).
    """
    if n_paths < 1:
        raise ValueError("ensemble size must be >= 1")
    if output_times is None:
        output_times = record.output_times or (record.t_final,)
    output_times = tuple(record.snap_time(t) for t in output_times)
    indices = np.arange(n_paths)
    if workers <= 1:
        return _sample_chunk(
            (record, indices, seed, output_times, bins_per_edge, turn_rule, keep_paths)
        )
    chunks = np.array_split(indices, workers)
    args = [
        (record, c, seed, output_times, bins_per_edge, turn_rule, keep_paths)
        for c in chunks
        if c.size
    ]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_sample_chunk, args))
    stats = parts[0]
    for p in parts[1:]:
        stats = stats.merge(p)
    return stats


def exact_edge_masses(state: WaveState) -> dict[str, float]:
    """Trapezoidal |psi|^2 mass per edge (vertex halves assigned per edge)."""
    grid = state.grid
    masses = {}
    for e in grid.graph.edges:
        r = np.abs(grid.edge_values(state.psi, e.id)) ** 2
        masses[e.id] = float(np.trapezoid(r, dx=grid.edge_h[e.id]))
    return masses


def exact_bin_masses(state: WaveState, edge_id: str, bins: int) -> np.ndarray:
    """|psi|^2 mass per uniform position bin on one edge."""
    grid = state.grid
    r = np.abs(grid.edge_values(state.psi, edge_id)) ** 2
    x = grid.edge_x[edge_id]
    he = grid.edge_h[edge_id]
    cell_mass = 0.5 * he * (r[:-1] + r[1:])
    cdf_x = x
    cdf = np.concatenate([[0.0], np.cumsum(cell_mass)])
    length = grid.graph.edge(edge_id).length
    edges_of_bins = np.linspace(0.0, length, bins + 1)
    cdf_at = np.interp(edges_of_bins, cdf_x, cdf)
    return np.diff(cdf_at)


@dataclass(frozen=True)
class EquivarianceReport:
    t: float
    tv_edges: float
    tv_positions: float
    alive_fraction: float


def equivariance_distance(
    stats: EnsembleStats, record: EvolutionRecord, t: float
) -> EquivarianceReport:
    """Total-variation distance between the ensemble and |psi_t|^2."""
    t = record.snap_time(t)
    if t not in stats.output_times:
        raise ValueError(f"t={t} is not among the ensemble output times")
    state = record.state_at(t)
    exact = exact_edge_masses(state)
    total = sum(exact.values())
    tv_edges = 0.5 * sum(
        abs(stats.edge_masses[t][e] - exact[e] / total) for e in exact
    )
    tv_pos = 0.0
    alive = 0.0
    for e in exact:
        emp = stats.histograms[t][e] / stats.n_paths
        alive += emp.sum()
        exact_bins = exact_bin_masses(state, e, stats.bins_per_edge) / total
        tv_pos += 0.5 * float(np.abs(emp - exact_bins).sum())
    return EquivarianceReport(t, float(tv_edges), tv_pos, float(alive))


@dataclass
class ImpossibilityReport:
    """Flux-sign evidence that a deterministic equivariant process fails.

    Over the window, probability flows out of the packet's edge while both
    other edges gain strictly positive mass simultaneously; a deterministic
    turn could feed only one of them.
    """

    vertex: str
    in_edge: str
    out_edges: tuple[str, ...]
    window: tuple[float, float]
    sample_times: np.ndarray
    sign_pattern_fraction: float
    fluxes: dict                  # edge -> array of s_e over sample_times
    edge_masses: dict             # edge -> array of masses over sample_times


def impossibility_scenario(
    record: EvolutionRecord, vertex: str, in_edge: str, n_samples: int = 200
) -> ImpossibilityReport:
    """Locate the (-, +, +) flux window at a vertex of degree >= 3."""
    graph = record.grid.graph
    out_edges = tuple(e for e, _ in graph.incidence[vertex] if e != in_edge)
    if len(out_edges) < 2:
        raise ValueError("impossibility scenario needs vertex degree >= 3")
    ts = np.linspace(record.t0, record.t_final, n_samples)
    fluxes = {e: np.empty(n_samples) for e, _ in graph.incidence[vertex]}
    masses = {e: np.empty(n_samples) for e, _ in graph.incidence[vertex]}
    for i, t in enumerate(ts):
        state = record.state_at(t)
        flux = vertex_currents(state, vertex, record.hbar)
        em = exact_edge_masses(state)
        for e, s in zip(flux.edges, flux.s):
            fluxes[e][i] = s
            masses[e][i] = em[e]
    pattern = (fluxes[in_edge] < 0.0) & np.all(
        [fluxes[e] > 0.0 for e in out_edges], axis=0
    )
    if not pattern.any():
        raise RuntimeError(
            "no window with simultaneous influx and multi-edge outflux found; "
            f"flux ranges: { {e: (v.min(), v.max()) for e, v in fluxes.items()} }"
        )
    # largest contiguous run of the sign pattern
    best_lo = best_hi = lo = None
    for i, ok in enumerate(pattern):
        if ok and lo is None:
            lo = i
        if (not ok or i == len(pattern) - 1) and lo is not None:
            hi = i if ok else i - 1
            if best_lo is None or hi - lo > best_hi - best_lo:
                best_lo, best_hi = lo, hi
            lo = None
    window = (float(ts[best_lo]), float(ts[best_hi]))
    inside = (ts >= window[0]) & (ts <= window[1])
    return ImpossibilityReport(
        vertex=vertex,
        in_edge=in_edge,
        out_edges=out_edges,
        window=window,
        sample_times=ts[inside],
        sign_pattern_fraction=float(pattern[inside].mean()),
        fluxes={e: v[inside] for e, v in fluxes.items()},
        edge_masses={e: v[inside] for e, v in masses.items()},
    )


@dataclass(frozen=True)
class ReversalCheck:
    forward: EdgeSelection
    reversed: EdgeSelection
    swap_residual: float


def time_reversal_check(record: EvolutionRecord, vertex: str, t: float) -> ReversalCheck:
    """Edge selections for psi_t and conj(psi_t); conjugation must swap the
    roles of s^+ and s^- exactly."""
    state = record.state_at(t)
    fwd_flux = vertex_currents(state, vertex, record.hbar)
    rev_flux = vertex_currents(state.conjugated(), vertex, record.hbar)
    residual = float(np.max(np.abs(fwd_flux.s + rev_flux.s)))
    return ReversalCheck(
        forward=selection_from_flux(fwd_flux),
        reversed=selection_from_flux(rev_flux),
        swap_residual=residual,
    )
