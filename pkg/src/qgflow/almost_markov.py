"""Incoming-edge-dependent vertex kernels and their Markovization.

A kernel K[f][e] gives the probability of leaving a vertex along e when it
was reached along f.  Feasibility means every row is a probability vector
and the influx-weighted column sums reproduce the positive outward
currents; any feasible kernel Markovizes back to the memoryless edge
selection s_e^+ / sum s^+.

Before construction the positive parts are rescaled so that total outflux
equals total influx exactly, absorbing the O(h) Kirchhoff residual; this
makes the Markovization identity hold at machine precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .currents import EdgeSelection, FluxReport, SIGMA_FLOOR, StalledVertexError


@dataclass(frozen=True)
class AlmostMarkovKernel:
    vertex: str
    t: float
    edges: tuple[str, ...]
    matrix: np.ndarray            # K[f_index, e_index]
    s_plus: np.ndarray            # rebalanced positive parts
    s_minus: np.ndarray

    def constraint_residual(self) -> float:
        """Max violation of row normalization and the flux constraint."""
        rows = np.abs(self.matrix.sum(axis=1) - 1.0).max()
        flux = np.abs(self.s_minus @ self.matrix - self.s_plus).max()
        return float(max(rows, flux))


def rebalance(flux: FluxReport, sigma_floor: float = SIGMA_FLOOR) -> tuple[np.ndarray, np.ndarray]:
    """Scale s^+ uniformly so total outflux equals total influx exactly."""
    total_plus = flux.s_plus.sum()
    total_minus = flux.s_minus.sum()
    if total_plus <= sigma_floor or total_minus <= sigma_floor:
        raise StalledVertexError(
            f"vertex {flux.vertex!r} has no usable flux at t={flux.t}"
        )
    return flux.s_plus * (total_minus / total_plus), flux.s_minus.copy()


def feasible_kernel(
    flux: FluxReport, mode: str = "product", seed: int | None = None
) -> AlmostMarkovKernel:
    """Construct a kernel satisfying the feasibility constraints.

    `product` is the incoming-independent kernel K[f][e] = s_e^+ / sum s^+.
    `randomized` adds a seeded element of the constraint null space, scaled
    to keep all entries inside [0, 1].
    """
    s_plus, s_minus = rebalance(flux)
    d = len(flux.edges)
    total = s_plus.sum()
    K = np.tile(s_plus / total, (d, 1))

    if mode == "randomized":
        in_idx = np.flatnonzero(s_minus > 0.0)
        out_idx = np.flatnonzero(s_plus > 0.0)
        n_in, n_out = in_idx.size, out_idx.size
        if n_in >= 2 and n_out >= 2:
            # constraints on the in x out block: per-column flux, per-row sum
            n_var = n_in * n_out
            rows = []
            for c in range(n_out):
                r = np.zeros(n_var)
                r[c::n_out] = s_minus[in_idx]
                rows.append(r)
            for ri in range(n_in):
                r = np.zeros(n_var)
                r[ri * n_out : (ri + 1) * n_out] = 1.0
                rows.append(r)
            null = scipy.linalg.null_space(np.array(rows))
            rng = np.random.default_rng(seed)
            coeffs = rng.standard_normal(null.shape[1])
            direction = (null @ coeffs).reshape(n_in, n_out)
            scale = np.abs(direction).max()
            if scale > 0.0:
                base = K[np.ix_(in_idx, out_idx)]
                # largest step keeping the block within [0, 1]
                with np.errstate(divide="ignore"):
                    up = np.where(direction > 0, (1.0 - base) / direction, np.inf)
                    dn = np.where(direction < 0, -base / direction, np.inf)
                step = 0.8 * min(up.min(), dn.min())
                K[np.ix_(in_idx, out_idx)] = base + step * direction
    elif mode != "product":
        raise ValueError(f"unknown kernel mode {mode!r}")

    kernel = AlmostMarkovKernel(
        vertex=flux.vertex,
        t=flux.t,
        edges=flux.edges,
        matrix=K,
        s_plus=s_plus,
        s_minus=s_minus,
    )
    if kernel.constraint_residual() > 1e-12:
        raise RuntimeError(
            f"kernel construction infeasible at {flux.vertex!r}: "
            f"residual {kernel.constraint_residual():.3e}"
        )
    return kernel


def null_space_dimension(flux: FluxReport) -> int:
    """Dimension of the kernel-constraint null space: (in-1)(out-1)."""
    s_plus, s_minus = rebalance(flux)
    n_in = int((s_minus > 0.0).sum())
    n_out = int((s_plus > 0.0).sum())
    return max(n_in - 1, 0) * max(n_out - 1, 0)


def markovize(kernel: AlmostMarkovKernel, flux: FluxReport) -> EdgeSelection:
    """Influx-weighted average of the kernel rows: the memoryless selection
    of the Markovization."""
    total_in = kernel.s_minus.sum()
    if total_in <= 0.0:
        raise StalledVertexError(f"zero influx at vertex {flux.vertex!r}")
    probs = kernel.s_minus @ kernel.matrix / total_in
    return EdgeSelection(
        vertex=flux.vertex, t=flux.t, edges=flux.edges, probabilities=probs
    )


def markovization_discrete(joint: np.ndarray) -> np.ndarray:
    """Row-normalize a two-time joint count/probability table.

    joint[b, c] counts (state b at t, state c at t + step); the result is
    the discrete-time Markovization's transition matrix.
    """
    joint = np.asarray(joint, dtype=float)
    row_sums = joint.sum(axis=1)
    if np.any(row_sums == 0.0):
        empty = np.flatnonzero(row_sums == 0.0)
        raise ValueError(f"state(s) {empty.tolist()} unvisited at the first time")
    return joint / row_sums[:, None]
