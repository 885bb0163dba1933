"""The four figure kinds.

Each renderer takes parsed tables and returns a matplotlib Figure. The
ladder renderer recomputes the convergence slope from the CSV alone, with
the same fit the producing tool uses, so the annotation can be checked
against the tool's JSON report.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .io import Table


def _edge_order(values) -> list:
    order = []
    for v in values:
        if v not in order:
            order.append(v)
    return order


def _edge_offsets(edges, spans) -> dict:
    offsets = {}
    total = 0.0
    for e in edges:
        offsets[e] = total
        total += spans[e]
    return offsets


def ladder_errors(table: Table):
    """Per-epsilon worst-edge error of the lattice exit distribution."""
    table.require("epsilon", "edge", "lattice_exact", "continuum")
    gap = np.abs(table["lattice_exact"] - table["continuum"])
    groups = {}
    for i, eps in enumerate(table["epsilon"]):
        groups.setdefault(float(eps), []).append(i)
    epsilons = list(groups)
    errors = [float(gap[idx].max()) for idx in groups.values()]
    return epsilons, errors


def ladder_slope(epsilons, errors) -> float:
    """Log-log convergence rate, fitted over the positive-error rungs."""
    pos = [(ep, er) for ep, er in zip(epsilons, errors) if er > 0.0]
    if len(pos) < 2:
        return float("nan")
    le = np.log([p[0] for p in pos])
    lr = np.log([p[1] for p in pos])
    return float(np.polyfit(le, lr, 1)[0])


def render_density_histogram(table: Table):
    table.require("t", "edge", "bin_lo", "bin_hi", "empirical_mass", "exact_mass")
    times = sorted(set(table["t"]))
    edges = _edge_order(table["edge"])
    spans = {e: float(table["bin_hi"][table["edge"] == e].max()) for e in edges}
    offsets = _edge_offsets(edges, spans)
    fig, axes = plt.subplots(len(times), 1, figsize=(8, 2.8 * len(times)), squeeze=False)
    for ax, t in zip(axes[:, 0], times):
        at_t = table["t"] == t
        for e in edges:
            sel = at_t & (table["edge"] == e)
            lo = table["bin_lo"][sel] + offsets[e]
            hi = table["bin_hi"][sel] + offsets[e]
            mid = 0.5 * (lo + hi)
            ax.bar(mid, table["empirical_mass"][sel], width=hi - lo,
                   alpha=0.55, label=f"{e} sampled")
            ax.step(np.append(lo, hi[-1]),
                    np.append(table["exact_mass"][sel], table["exact_mass"][sel][-1]),
                    where="post", lw=1.4)
        for e in edges[1:]:
            ax.axvline(offsets[e], color="0.6", lw=0.8, ls=":")
        ax.set_title(f"t = {t:g}")
        ax.set_ylabel("mass per bin")
    axes[-1, 0].set_xlabel("arclength along concatenated edges")
    axes[0, 0].legend(fontsize=8, ncol=max(1, len(edges)))
    fig.tight_layout()
    return fig


def render_trajectory_fan(table: Table):
    table.require("path_id", "t", "edge", "x")
    edges = _edge_order(table["edge"])
    spans = {e: float(table["x"][table["edge"] == e].max()) for e in edges}
    offsets = _edge_offsets(edges, spans)
    y = np.array([offsets[e] for e in table["edge"]]) + table["x"]
    fig, ax = plt.subplots(figsize=(8, 5))
    for pid in np.unique(table["path_id"]):
        sel = table["path_id"] == pid
        ax.plot(table["t"][sel], y[sel], lw=0.6, alpha=0.45, color="tab:blue")
    for e in edges[1:]:
        ax.axhline(offsets[e], color="0.5", lw=0.8, ls=":")
        ax.annotate(e, (0.0, offsets[e]), fontsize=8, color="0.35",
                    xytext=(2, 2), textcoords="offset points")
    ax.set_xlabel("t")
    ax.set_ylabel("arclength along concatenated edges")
    ax.set_title(f"trajectory fan, {np.unique(table['path_id']).size} paths")
    fig.tight_layout()
    return fig


def render_ladder(table: Table):
    epsilons, errors = ladder_errors(table)
    slope = ladder_slope(epsilons, errors)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.loglog(epsilons, errors, "o-", label="worst-edge exit error")
    if np.isfinite(slope):
        anchor = max(zip(epsilons, errors))
        guide = [anchor[1] * (e / anchor[0]) for e in epsilons]
        ax.loglog(epsilons, guide, "--", color="0.6", label="first order")
        ax.annotate(f"slope {slope:.12g}", xy=(0.05, 0.9),
                    xycoords="axes fraction")
    ax.set_xlabel("lattice spacing")
    ax.set_ylabel("exit distribution error")
    ax.legend(fontsize=9)
    fig.tight_layout()
    return fig


def render_residual(table: Table):
    table.require("h", "vertex", "t", "residual")
    h = table["h"]
    res = np.abs(table["residual"])
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.loglog(h, res, "s-", color="tab:red")
    keep = res > 0.0
    if keep.sum() >= 2:
        slope = float(np.polyfit(np.log(h[keep]), np.log(res[keep]), 1)[0])
        ax.annotate(f"slope {slope:.3g}", xy=(0.05, 0.9), xycoords="axes fraction")
    vertex = table["vertex"][0]
    ax.set_xlabel("grid spacing h")
    ax.set_ylabel("|Kirchhoff residual|")
    ax.set_title(f"current conservation at vertex {vertex}, t = {table['t'][0]:g}")
    fig.tight_layout()
    return fig


KINDS = {
    "density-histogram": render_density_histogram,
    "trajectory-fan": render_trajectory_fan,
    "ladder": render_ladder,
    "residual": render_residual,
}


def render(kind: str, table: Table, out) -> None:
    if kind not in KINDS:
        raise ValueError(f"unknown figure kind: {kind}")
    fig = KINDS[kind](table)
    fig.savefig(out, dpi=150)
    plt.close(fig)
