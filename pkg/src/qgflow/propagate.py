"""Initial states and unitary time evolution (Crank-Nicolson).

The Cayley step (W + i dt K / 2 hbar) psi' = (W - i dt K / 2 hbar) psi is
exactly unitary in the weighted inner product because K is real symmetric;
the sparse factorization is computed once per (H, dt) and cached.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .hamiltonian import Grid, HamiltonianMatrix


@dataclass
class WaveState:
    """Complex amplitudes on the global grid at one instant."""

    grid: Grid
    t: float
    psi: np.ndarray

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.grid.weights * np.abs(self.psi) ** 2)))

    def conjugated(self) -> "WaveState":
        return WaveState(self.grid, self.t, np.conj(self.psi))


def gaussian_packet(
    grid: Grid,
    edge_id: str,
    center: float,
    width: float,
    k: float,
    normalize: bool = True,
) -> WaveState:
    """Gaussian packet exp(-(x-center)^2 / 4 width^2 + i k x) on one edge.

    Dirichlet vertex amplitudes are pinned to zero before normalization.
    """
    edge = grid.graph.edge(edge_id)
    if width <= 0:
        raise ValueError(f"packet width must be positive, got {width}")
    if not (0.0 <= center <= edge.length):
        raise ValueError(f"packet center {center} outside edge {edge_id!r}")
    if min(center, edge.length - center) < 3.0 * width:
        warnings.warn(
            f"packet of width {width} is close to an end of edge {edge_id!r}; "
            "truncation will distort it",
            stacklevel=2,
        )
    psi = np.zeros(grid.n_points, dtype=np.complex128)
    x = grid.edge_x[edge_id]
    psi[grid.edge_index[edge_id]] = np.exp(
        -((x - center) ** 2) / (4.0 * width * width) + 1j * k * x
    )
    _pin_dirichlet(grid, psi)
    state = WaveState(grid, 0.0, psi)
    if normalize:
        state.psi /= state.norm()
    return state


def initial_state(grid: Grid, description: dict) -> WaveState:
    """Superpose the packets of a scenario's initial_state and normalize."""
    psi = np.zeros(grid.n_points, dtype=np.complex128)
    for p in description["packets"]:
        part = gaussian_packet(
            grid, p["edge"], p["center"], p["width"], p["k"], normalize=False
        )
        psi += complex(p.get("amplitude", 1.0)) * part.psi
    _pin_dirichlet(grid, psi)
    state = WaveState(grid, 0.0, psi)
    state.psi /= state.norm()
    return state


def _pin_dirichlet(grid: Grid, psi: np.ndarray) -> None:
    for q, qi in grid.vertex_index.items():
        cond = grid.graph.condition(q)
        if cond.kind == "dirichlet" or cond.alpha == 0.0:
            psi[qi] = 0.0


def eigenstate(H: HamiltonianMatrix, n: int) -> tuple[float, WaveState]:
    """n-th lowest eigenpair of H, normalized in the weighted inner product."""
    free = H.free
    if n >= int(free.sum()):
        raise ValueError(f"eigenstate index {n} out of range")
    w = H.weights[free]
    Kff = H.stiffness[np.ix_(free, free)].toarray()
    s = 1.0 / np.sqrt(w)
    A = (Kff * s[None, :]) * s[:, None]
    evals, evecs = scipy.linalg.eigh(A)
    psi_free = s * evecs[:, n]
    psi = np.zeros(H.dim, dtype=np.complex128)
    psi[free] = psi_free
    state = WaveState(H.grid, 0.0, psi)
    state.psi /= state.norm()
    return float(evals[n]), state


def _cn_factorization(H: HamiltonianMatrix, dt: float):
    key = float(dt)
    if key not in H._cn_cache:
        W = sp.diags(H.weights).astype(np.complex128)
        K = H.stiffness.astype(np.complex128)
        A = (W + 0.5j * dt / H.hbar * K).tocsc()
        B = (W - 0.5j * dt / H.hbar * K).tocsr()
        H._cn_cache[key] = (spla.splu(A), B)
    return H._cn_cache[key]


def step_crank_nicolson(H: HamiltonianMatrix, state: WaveState, dt: float) -> WaveState:
    """One implicit-midpoint (Cayley) step; exactly norm-preserving."""
    if dt == 0.0:
        return WaveState(state.grid, state.t, state.psi.copy())
    lu, B = _cn_factorization(H, dt)
    psi_new = lu.solve(B @ state.psi)
    return WaveState(state.grid, state.t + dt, psi_new)


@dataclass
class EvolutionRecord:
    """Uniformly spaced states; linear interpolation between stored steps."""

    grid: Grid
    hbar: float
    t0: float
    dt: float
    states: np.ndarray                 # (n_times, n_points) complex
    output_times: tuple[float, ...] = ()
    _edge_fields: dict = field(default_factory=dict, repr=False)
    _rho_max: np.ndarray | None = field(default=None, repr=False)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.states.shape[0])

    @property
    def t_final(self) -> float:
        return self.t0 + self.dt * (self.states.shape[0] - 1)

    def bracket(self, t: float) -> tuple[int, float]:
        """Stored-step index and interpolation fraction for time t."""
        n = self.states.shape[0]
        if n == 1:
            return 0, 0.0
        s = (t - self.t0) / self.dt
        k = int(np.clip(np.floor(s), 0, n - 2))
        return k, float(np.clip(s - k, 0.0, 1.0))

    def state_at(self, t: float) -> WaveState:
        k, f = self.bracket(t)
        psi = (1.0 - f) * self.states[k] + f * self.states[k + 1]
        return WaveState(self.grid, t, psi)

    def snap_time(self, t: float) -> float:
        """Snap t onto the step lattice."""
        k = int(round((t - self.t0) / self.dt))
        return self.t0 + self.dt * np.clip(k, 0, self.states.shape[0] - 1)

    def rho_max_at(self, t: float) -> float:
        if self._rho_max is None:
            self._rho_max = np.max(np.abs(self.states) ** 2, axis=1)
        k, f = self.bracket(t)
        return float((1.0 - f) * self._rho_max[k] + f * self._rho_max[k + 1])


def evolve(
    H: HamiltonianMatrix,
    initial: WaveState,
    dt: float,
    n_steps: int,
    output_times: tuple[float, ...] = (),
) -> EvolutionRecord:
    """Propagate `initial` for n_steps of size dt, storing every step."""
    states = np.empty((n_steps + 1, initial.psi.size), dtype=np.complex128)
    states[0] = initial.psi
    state = initial
    for i in range(n_steps):
        state = step_crank_nicolson(H, state, dt)
        states[i + 1] = state.psi
    record = EvolutionRecord(
        grid=H.grid, hbar=H.hbar, t0=initial.t, dt=dt, states=states
    )
    record.output_times = tuple(record.snap_time(t) for t in output_times)
    return record
