"""End-to-end acceptance suite: one test per numbered criterion.

Each test prints a single PASS/FAIL verdict line (visible with -s; pytest -v
shows one line per criterion through the test names) and enforces the stated
tolerance.  The large ensembles are shared session fixtures, so the whole
suite runs in minutes on one core.
"""

import json

import numpy as np
import pytest

from qgflow import (
    assemble_hamiltonian,
    build_grid,
    check_hermitian,
    edge_selection,
    eigenstate,
    equivariance_distance,
    feasible_kernel,
    lattice_exit_ratio,
    markovize,
    parse_spec,
    restrict_record,
    validate_graph,
    vertex_currents,
    vertex_exit_distribution,
)
from qgflow.cli import main
from qgflow.currents import selection_from_flux
from qgflow.propagate import WaveState
from qgflow.scenarios import BUNDLED, load_scenario, prepare
from util import interval_doc, rising_half_peak_time


def _verdict(num, name, ok, detail):
    print(f"[criterion {num:02d}] {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"criterion {num} ({name}): {detail}"


def test_criterion_01_self_adjointness():
    worst = 0.0
    for name in BUNDLED:
        prep = prepare(load_scenario(name))
        worst = max(worst, check_hermitian(prep.H))
    _verdict(1, "self-adjointness", worst <= 1e-13, f"max residual {worst:.3e}")


def test_criterion_02_unitarity(evolved):
    worst = 0.0
    for name in ("interval", "star3-sym"):
        _, record = evolved(name)
        grid = record.grid
        steps = min(1000, record.states.shape[0] - 1)
        norms = np.array(
            [WaveState(grid, 0.0, psi).norm() for psi in record.states[: steps + 1]]
        )
        worst = max(worst, float(np.abs(norms - norms[0]).max()))
    _verdict(2, "unitarity over 1e3 steps", worst <= 1e-10, f"max drift {worst:.3e}")


def test_criterion_03_spectral_oracle():
    h = np.pi / 400
    doc = interval_doc(length=np.pi, h=h)
    grid = build_grid(validate_graph(parse_spec(doc)), h)
    H = assemble_hamiltonian(grid)
    worst = 0.0
    for n in (1, 2, 3):
        ev, _ = eigenstate(H, n - 1)
        exact = n * n / 2.0
        worst = max(worst, abs(ev - exact) / exact)
    _verdict(3, "Dirichlet spectrum", worst <= 1e-3, f"max relative error {worst:.3e}")


def test_criterion_04_split_interval_oracle(evolved):
    diffs = []
    for h in (1 / 100, 1 / 200):
        _, single = evolved("interval", h=h)
        _, split = evolved("chain2", h=h)
        a = np.abs(single.grid.edge_values(single.states[-1], "e"))
        g = split.grid
        b = np.concatenate(
            [
                np.abs(g.edge_values(split.states[-1], "e1")),
                np.abs(g.edge_values(split.states[-1], "e2"))[1:],
            ]
        )
        diffs.append(float(np.abs(a - b).max()))
    ok = diffs[0] <= 5 / 100 and diffs[1] <= 5 / 200
    ok = ok and diffs[1] <= max(0.75 * diffs[0], 1e-12)
    _verdict(4, "split-interval oracle", ok, f"max |psi| diffs {diffs[0]:.2e}, {diffs[1]:.2e}")


def test_criterion_05_kirchhoff_residual_ladder(evolved):
    spec = load_scenario("star3-asym")
    _, base = evolved("star3-asym")
    ts = np.linspace(base.t0, base.t_final, 400)
    totals = [vertex_currents(base.state_at(float(t)), "c").s_plus.sum() for t in ts]
    t_star = base.snap_time(float(ts[int(np.argmax(totals))]))
    residuals = []
    for h in (4 * spec.h, 2 * spec.h, spec.h):
        _, rec = evolved("star3-asym", h=h)
        flux = vertex_currents(rec.state_at(t_star), "c", rec.hbar)
        residuals.append(abs(flux.kirchhoff_residual))
    ratios = [residuals[i] / residuals[i + 1] for i in range(2)]
    ok = all(r >= 1.7 for r in ratios)
    _verdict(5, "Kirchhoff residual ladder", ok,
             f"residuals {['%.2e' % r for r in residuals]}, ratios {['%.2f' % r for r in ratios]}")


def test_criterion_06_equivariance(star3_asym_ensemble, evolved):
    _, record = evolved("star3-asym")
    stats = star3_asym_ensemble
    details = []
    ok = True
    for t in stats.output_times:
        rep = equivariance_distance(stats, record, t)
        ok = ok and rep.tv_edges <= 0.03 and rep.tv_positions <= 0.06
        details.append(f"t={t:g}: edges {rep.tv_edges:.4f}, positions {rep.tv_positions:.4f}")
    _verdict(6, "equivariance at N=1e4", ok, "; ".join(details))


def test_criterion_07_bell_limit(evolved):
    spec = load_scenario("star3-asym")
    _, record = evolved("star3-asym")
    t_star = rising_half_peak_time(record, "c")
    ref_sel = edge_selection(record.state_at(t_star), "c", record.hbar)
    ref = dict(zip(ref_sel.edges, ref_sel.probabilities))
    errors = []
    empirical_ok = True
    for eps in (4 * spec.h, 2 * spec.h, spec.h):
        coarse = restrict_record(record, eps)
        H = assemble_hamiltonian(coarse.grid, spec.hbar)
        edges, lattice = lattice_exit_ratio(coarse.state_at(t_star), H, "c")
        errors.append(max(abs(l - ref[e]) for e, l in zip(edges, lattice)))
        comp = vertex_exit_distribution(coarse, H, "c", t_star, 400, spec.seed)
        for emp, lat in zip(comp.empirical, comp.lattice_exact):
            sigma = np.sqrt(max(lat * (1 - lat), 1e-12) / comp.n_paths)
            empirical_ok = empirical_ok and abs(emp - lat) <= max(3 * sigma, 0.01)
    ratios = [errors[i] / errors[i + 1] for i in range(2)]
    ok = all(1.4 <= r <= 2.8 for r in ratios) and errors[-1] <= 0.02 and empirical_ok
    _verdict(7, "Bell exit-distribution limit", ok,
             f"errors {['%.4f' % e for e in errors]}, ratios {['%.2f' % r for r in ratios]}, "
             f"empirical within bands: {empirical_ok}")


def test_criterion_08_markovization_identity(evolved):
    _, record = evolved("star3-asym")
    flux = vertex_currents(record.state_at(0.04), "c", record.hbar)
    base = selection_from_flux(flux)
    worst = 0.0
    for seed in range(100):
        kern = feasible_kernel(flux, mode="randomized", seed=seed)
        sel = markovize(kern, flux)
        worst = max(worst, float(np.abs(sel.probabilities - base.probabilities).max()))
    _verdict(8, "Markovization identity", worst <= 1e-12, f"max gap {worst:.3e} over 100 kernels")


def test_criterion_09_time_reversal(star3_asym_ensemble, evolved):
    _, record = evolved("star3-asym")
    edges = ("e1", "e2", "e3")

    # conjugation swaps the signed currents exactly
    state = record.state_at(0.04)
    fwd = vertex_currents(state, "c", record.hbar)
    rev = vertex_currents(state.conjugated(), "c", record.hbar)
    swap = float(np.abs(fwd.s + rev.s).max())

    # joint (incoming, outgoing) turn frequencies against s_f^- s_e^+ / sum s^+
    ts = record.times
    sm = np.zeros((ts.size, 3))
    sp = np.zeros((ts.size, 3))
    for i, t in enumerate(ts):
        flux = vertex_currents(record.state_at(float(t)), "c", record.hbar)
        for j, e in enumerate(edges):
            k = flux.edges.index(e)
            sm[i, j] = flux.s_minus[k]
            sp[i, j] = flux.s_plus[k]
    tot = sp.sum(axis=1)
    expected = np.zeros((3, 3))
    for f in range(3):
        for e in range(3):
            integrand = np.where(tot > 1e-12, sm[:, f] * sp[:, e] / np.maximum(tot, 1e-300), 0.0)
            expected[f, e] = np.trapezoid(integrand, ts)
    p = expected / expected.sum()
    counts = np.zeros((3, 3))
    for (f, e), c in star3_asym_ensemble.turn_counts.get("c", {}).items():
        counts[edges.index(f), edges.index(e)] = c
    n_tot = counts.sum()
    z_max = 0.0
    for f in range(3):
        for e in range(3):
            sigma = np.sqrt(max(n_tot * p[f, e] * (1 - p[f, e]), 1e-12))
            z_max = max(z_max, abs(counts[f, e] - n_tot * p[f, e]) / max(sigma, 1.0))
    ok = swap <= 1e-13 and z_max <= 3.0
    _verdict(9, "time reversal", ok, f"swap residual {swap:.2e}, max joint z-score {z_max:.2f}")


def test_criterion_10_impossibility(tmp_path):
    code = main([
        "impossibility", "--scenario", "star3-asym",
        "--out", str(tmp_path), "--ensemble", "4000",
    ])
    report = json.loads((tmp_path / "impossibility.json").read_text())
    ok = (
        code == 0
        and report["sign_pattern_fraction"] >= 0.9
        and report["tv_argmax_deterministic"] >= 0.1
        and report["tv_minimal_process"] <= 0.03
    )
    _verdict(10, "deterministic impossibility", ok,
             f"sign fraction {report['sign_pattern_fraction']:.2f}, "
             f"argmax TV {report['tv_argmax_deterministic']:.3f}, "
             f"minimal TV {report['tv_minimal_process']:.3f}")


def test_criterion_11_almost_markov_equivariance(star3_asym_kernel_ensemble, evolved):
    _, record = evolved("star3-asym")
    stats = star3_asym_kernel_ensemble
    details = []
    ok = True
    for t in stats.output_times:
        rep = equivariance_distance(stats, record, t)
        ok = ok and rep.tv_edges <= 0.03 and rep.tv_positions <= 0.06
        details.append(f"t={t:g}: edges {rep.tv_edges:.4f}, positions {rep.tv_positions:.4f}")
    _verdict(11, "almost-Markov equivariance", ok, "; ".join(details))
