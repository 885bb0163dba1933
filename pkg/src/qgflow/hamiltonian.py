"""Global grid over all edges and the discrete Hamiltonian.

The grid shares a single amplitude per vertex (continuity is built into the
indexing).  The Hamiltonian is assembled from the quadratic form: a real
symmetric stiffness matrix K plus trapezoidal weights w, so that
H = diag(1/w) K is exactly self-adjoint in the weighted inner product
<phi, psi> = sum_i w_i conj(phi_i) psi_i.  Robin vertex conditions enter
through the form; Dirichlet vertices are eliminated (row and column zeroed,
amplitude pinned to 0).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .graph import GraphError, MetricGraph


@dataclass(frozen=True)
class Grid:
    """Discretization of a metric graph.

    Per edge e: n_e = round(length / h) intervals with effective spacing
    h_e = length / n_e, so edge endpoints land exactly on grid points.
    """

    graph: MetricGraph
    h_target: float
    vertex_index: dict[str, int]
    edge_index: dict[str, np.ndarray]   # global indices, vertex ends included
    edge_x: dict[str, np.ndarray]       # arc-length coordinates along the edge
    edge_h: dict[str, float]
    weights: np.ndarray                 # trapezoidal integration weights

    @property
    def n_points(self) -> int:
        return self.weights.size

    def edge_values(self, values: np.ndarray, edge_id: str) -> np.ndarray:
        """Restrict a global grid array to one edge (endpoints included)."""
        return values[self.edge_index[edge_id]]


def build_grid(graph: MetricGraph, h: float) -> Grid:
    """Build the shared global grid with spacing target h."""
    if not (h > 0):
        raise GraphError(f"grid spacing must be positive, got {h}")
    vertex_index = {v: i for i, v in enumerate(graph.vertices)}
    next_index = len(graph.vertices)

    edge_index: dict[str, np.ndarray] = {}
    edge_x: dict[str, np.ndarray] = {}
    edge_h: dict[str, float] = {}
    for e in graph.edges:
        n = int(round(e.length / h))
        if n < 2:
            raise GraphError(
                f"spacing h={h} too coarse for edge {e.id!r} of length {e.length}"
            )
        he = e.length / n
        idx = np.empty(n + 1, dtype=np.intp)
        idx[0] = vertex_index[e.endpoints[0]]
        idx[-1] = vertex_index[e.endpoints[1]]
        idx[1:-1] = np.arange(next_index, next_index + n - 1)
        next_index += n - 1
        edge_index[e.id] = idx
        edge_x[e.id] = np.linspace(0.0, e.length, n + 1)
        edge_h[e.id] = he

    weights = np.zeros(next_index)
    for e in graph.edges:
        he = edge_h[e.id]
        w_edge = np.full(edge_index[e.id].size, he)
        w_edge[0] = w_edge[-1] = he / 2.0
        np.add.at(weights, edge_index[e.id], w_edge)

    return Grid(
        graph=graph,
        h_target=h,
        vertex_index=vertex_index,
        edge_index=edge_index,
        edge_x=edge_x,
        edge_h=edge_h,
        weights=weights,
    )


@dataclass
class HamiltonianMatrix:
    """Discrete Hamiltonian H = diag(1/w) K with K real symmetric.

    `free` marks degrees of freedom; Dirichlet vertex amplitudes are not
    free (their K rows and columns are zero and psi is pinned to 0 there).
    """

    grid: Grid
    stiffness: sp.csr_matrix          # K, real symmetric
    matrix: sp.csr_matrix             # H = diag(1/w) K, complex
    weights: np.ndarray
    free: np.ndarray                  # bool mask over grid points
    hbar: float
    _cn_cache: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return self.weights.size


def _sample_potential(edge, x: np.ndarray) -> np.ndarray:
    if edge.potential is None:
        return np.zeros_like(x)
    table = sorted(edge.potential)
    xs = np.array([p[0] for p in table])
    vs = np.array([p[1] for p in table])
    return np.interp(x, xs, vs)


def assemble_hamiltonian(grid: Grid, hbar: float = 1.0) -> HamiltonianMatrix:
    """Assemble the Hermitian Hamiltonian for -(hbar^2/2) Laplacian + V
    with the graph's Robin/Dirichlet vertex conditions."""
    graph = grid.graph
    n = grid.n_points
    K = sp.lil_matrix((n, n))

    for e in graph.edges:
        idx = grid.edge_index[e.id]
        he = grid.edge_h[e.id]
        c = hbar * hbar / (2.0 * he)
        for i, j in zip(idx[:-1], idx[1:]):
            K[i, j] -= c
            K[j, i] -= c
            K[i, i] += c
            K[j, j] += c
        # potential enters through the weighted diagonal
        v = _sample_potential(e, grid.edge_x[e.id])
        w_edge = np.full(idx.size, he)
        w_edge[0] = w_edge[-1] = he / 2.0
        for i, wv in zip(idx, w_edge * v):
            K[i, i] += wv

    free = np.ones(n, dtype=bool)
    for q, qi in grid.vertex_index.items():
        cond = graph.condition(q)
        if cond.kind == "dirichlet" or cond.alpha == 0.0:
            free[qi] = False
        elif cond.beta != 0.0:
            K[qi, qi] += (hbar * hbar / 2.0) * cond.beta / cond.alpha

    K = K.tocsr()
    if not free.all():
        keep = sp.diags(free.astype(float))
        K = keep @ K @ keep

    H = sp.diags(1.0 / grid.weights) @ K
    return HamiltonianMatrix(
        grid=grid,
        stiffness=K.tocsr(),
        matrix=H.tocsr().astype(np.complex128),
        weights=grid.weights.copy(),
        free=free,
        hbar=hbar,
    )


def check_hermitian(H: HamiltonianMatrix) -> float:
    """Max residual of weighted symmetry: |w_i H_ij - conj(w_j H_ji)|."""
    M = sp.diags(H.weights) @ H.matrix
    R = (M - M.getH()).tocoo()
    return float(np.abs(R.data).max()) if R.nnz else 0.0
