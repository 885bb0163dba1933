"""Command-line front end: scenario loading, experiment orchestration, and
CSV/JSON emission.

Exit codes: 0 ok, 1 numeric/runtime failure, 2 usage error.  Every run
writes a manifest.json next to its outputs; re-running with the same
scenario, seed, and flags reproduces the outputs bit-for-bit.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .almost_markov import feasible_kernel, markovize, rebalance
from .bell import (
    lattice_exit_ratio,
    restrict_record,
    sample_bell_path,
    vertex_exit_distribution,
)
from .currents import StalledVertexError, edge_selection, vertex_currents
from .graph import GraphError, SpecError
from .hamiltonian import assemble_hamiltonian, build_grid
from .propagate import evolve, initial_state
from .sampler import (
    argmax_turn_rule,
    equivariance_distance,
    exact_edge_masses,
    exact_bin_masses,
    impossibility_scenario,
    kernel_turn_rule,
    markov_turn_rule,
    sample_ensemble,
    time_reversal_check,
)
from .scenarios import BUNDLED, load_scenario, prepare, run_evolution

SCHEMA_VERSION = 1


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def _write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"# schema_version={SCHEMA_VERSION}"])
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _write_report(out: Path, name: str, subcommand: str, data: dict) -> Path:
    path = out / name
    payload = {"schema_version": SCHEMA_VERSION, "subcommand": subcommand, **data}
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def _write_manifest(out: Path, args: argparse.Namespace, resolved: dict) -> None:
    manifest = {
        "tool": "qgflow",
        "version": __version__,
        "subcommand": args.command,
        "scenario": args.scenario,
        "seed": getattr(args, "seed", None),
        "resolved": resolved,
        "argv": sys.argv[1:],
        "written_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _rising_time(record, vertex: str) -> float:
    """First stored time at which the total outflux reaches half its peak.

    On the rising flank of a vertex transit the density there still changes,
    which is where lattice effects are first order and ladders are clean.
    """
    ts = record.times
    sample = ts[:: max(1, ts.size // 400)]
    totals = np.array(
        [
            float(vertex_currents(record.state_at(float(t)), vertex, record.hbar).s_plus.sum())
            for t in sample
        ]
    )
    k_peak = int(np.argmax(totals))
    half = 0.5 * totals[k_peak]
    for i in range(k_peak + 1):
        if totals[i] >= half:
            return record.snap_time(float(sample[i]))
    return record.snap_time(float(sample[k_peak]))


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _busiest_vertex(prep) -> str:
    """Vertex of maximal degree (ties broken by declaration order)."""
    return max(prep.graph.vertices, key=prep.graph.degree)


def _peak_activity_time(record, vertex: str) -> float:
    """Stored time with the largest total outflux at the vertex."""
    ts = record.times
    sample = ts[:: max(1, ts.size // 400)]
    best_t, best = float(ts[0]), -1.0
    for t in sample:
        flux = vertex_currents(record.state_at(float(t)), vertex, record.hbar)
        total = float(flux.s_plus.sum())
        if total > best:
            best, best_t = total, float(t)
    return best_t


def cmd_validate(args) -> int:
    spec = load_scenario(args.scenario)
    prep = prepare(spec)
    lines = [
        f"vertex {q}: degree {prep.graph.degree(q)}, {prep.graph.condition(q).kind}"
        for q in prep.graph.vertices
    ]
    print(f"scenario ok: {len(prep.graph.vertices)} vertices, "
          f"{len(prep.graph.edges)} edges, {prep.grid.n_points} grid points")
    for line in lines:
        print(line)
    if args.out:
        out = _out_dir(args)
        _write_report(out, "validate.json", "validate", {
            "vertices": list(prep.graph.vertices),
            "degrees": {q: prep.graph.degree(q) for q in prep.graph.vertices},
            "edges": {e.id: e.length for e in prep.graph.edges},
            "grid_points": prep.grid.n_points,
        })
        _write_manifest(out, args, {"h": spec.h, "dt": spec.dt})
    return 0


def cmd_evolve(args) -> int:
    spec = load_scenario(args.scenario)
    prep, record = run_evolution(spec)
    out = _out_dir(args)
    rows = []
    for t in record.output_times or (record.t_final,):
        state = record.state_at(t)
        for e in prep.graph.edges:
            psi = prep.grid.edge_values(state.psi, e.id)
            for x, a in zip(prep.grid.edge_x[e.id], psi):
                rows.append((t, e.id, x, a.real, a.imag, abs(a) ** 2))
    _write_csv(out / "states.csv", ["t", "edge_id", "x", "re", "im", "rho"], rows)
    if args.dump_matrix:
        M = prep.H.matrix.tocoo()
        _write_csv(
            out / "matrix.csv",
            ["row", "col", "re", "im"],
            ((int(i), int(j), v.real, v.imag) for i, j, v in zip(M.row, M.col, M.data)),
        )
    _write_report(out, "evolve.json", "evolve", {
        "t_final": record.t_final,
        "output_times": list(record.output_times),
        "final_norm": record.state_at(record.t_final).norm(),
    })
    _write_manifest(out, args, {"h": spec.h, "dt": spec.dt, "n_steps": record.states.shape[0] - 1})
    return 0


def _flux_rows(prep, record, times):
    for t in times:
        state = record.state_at(float(t))
        for q in prep.graph.vertices:
            flux = vertex_currents(state, q, record.hbar)
            for e, s, sp_, sm in zip(flux.edges, flux.s, flux.s_plus, flux.s_minus):
                yield (float(t), q, e, s, sp_, sm, flux.kirchhoff_residual)


def cmd_flux(args) -> int:
    spec = load_scenario(args.scenario)
    prep, record = run_evolution(spec)
    out = _out_dir(args)
    ts = record.times[:: max(1, record.times.size // 200)]
    _write_csv(
        out / "flux.csv",
        ["t", "vertex", "edge", "s", "s_plus", "s_minus", "residual"],
        _flux_rows(prep, record, ts),
    )
    data = {"vertices": list(prep.graph.vertices)}
    if args.ladder > 0:
        q = _busiest_vertex(prep)
        t_star = _peak_activity_time(record, q)
        rows = []
        residuals = []
        # coarsen upward from the scenario h so the finest rung is h itself
        ladder_h = [spec.h * 2 ** (args.ladder - 1 - r) for r in range(args.ladder)]
        for h in ladder_h:
            _, rec = run_evolution(spec, h=h)
            flux = vertex_currents(rec.state_at(t_star), q, rec.hbar)
            rows.append((h, q, t_star, abs(flux.kirchhoff_residual)))
            residuals.append(abs(flux.kirchhoff_residual))
        _write_csv(out / "ladder_residual.csv", ["h", "vertex", "t", "residual"], rows)
        data["ladder"] = {
            "vertex": q,
            "t": t_star,
            "h": ladder_h,
            "residuals": residuals,
            "ratios": [residuals[i] / residuals[i + 1] for i in range(len(residuals) - 1)],
        }
    _write_report(out, "flux.json", "flux", data)
    _write_manifest(out, args, {"h": spec.h, "ladder": args.ladder})
    return 0


_TURN_RULES = {
    "markov": lambda args: markov_turn_rule,
    "argmax": lambda args: argmax_turn_rule,
    "almost-markov": lambda args: kernel_turn_rule(args.seed),
}


def cmd_sample(args) -> int:
    spec = load_scenario(args.scenario)
    n = args.ensemble if args.ensemble is not None else spec.ensemble
    seed = args.seed if args.seed is not None else spec.seed
    args.seed = seed
    prep, record = run_evolution(spec)
    stats = sample_ensemble(
        record,
        n,
        seed,
        turn_rule=_TURN_RULES[args.turn_rule](args),
        workers=args.workers,
        keep_paths=True,
    )
    out = _out_dir(args)

    path_rows = []
    sample_ts = np.linspace(record.t0, record.t_final, 201)
    for pid, traj in enumerate(stats.trajectories[: args.max_paths_csv]):
        for t in sample_ts:
            pos = traj.position_at(float(t))
            if pos is not None:
                path_rows.append((pid, float(t), pos[0], pos[1]))
    _write_csv(out / "paths.csv", ["path_id", "t", "edge", "x"], path_rows)

    turn_rows = []
    for pid, traj in enumerate(stats.trajectories):
        for ev in traj.turns:
            turn_rows.append((pid, ev.t, ev.vertex, ev.in_edge, ev.out_edge))
    _write_csv(out / "turns.csv", ["path_id", "t", "vertex", "in_edge", "out_edge"], turn_rows)

    stat_rows, hist_rows, reports = [], [], {}
    for t in stats.output_times:
        report = equivariance_distance(stats, record, t)
        state = record.state_at(t)
        exact = exact_edge_masses(state)
        total = sum(exact.values())
        for e in exact:
            stat_rows.append(
                (t, e, stats.edge_masses[t][e], exact[e] / total, report.tv_edges)
            )
            bins = exact_bin_masses(state, e, stats.bins_per_edge) / total
            emp = stats.histograms[t][e] / stats.n_paths
            length = prep.graph.edge(e).length
            edges_of_bins = np.linspace(0.0, length, stats.bins_per_edge + 1)
            for b in range(stats.bins_per_edge):
                hist_rows.append(
                    (t, e, edges_of_bins[b], edges_of_bins[b + 1], emp[b], bins[b])
                )
        reports[f"{t:.12g}"] = {
            "tv_edges": report.tv_edges,
            "tv_positions": report.tv_positions,
            "alive_fraction": report.alive_fraction,
        }
    _write_csv(out / "stats.csv", ["t", "edge", "empirical_mass", "exact_mass", "tv"], stat_rows)
    _write_csv(
        out / "hist.csv",
        ["t", "edge", "bin_lo", "bin_hi", "empirical_mass", "exact_mass"],
        hist_rows,
    )
    _write_report(out, "equivariance.json", "sample", {
        "ensemble": n,
        "seed": seed,
        "turn_rule": args.turn_rule,
        "terminations": stats.terminations,
        "equivariance": reports,
    })
    _write_manifest(out, args, {"ensemble": n, "turn_rule": args.turn_rule})
    return 0


def cmd_bell(args) -> int:
    spec = load_scenario(args.scenario)
    seed = args.seed if args.seed is not None else spec.seed
    n = args.ensemble if args.ensemble is not None else 2000
    base_eps = args.epsilon if args.epsilon is not None else 4.0 * spec.h
    out = _out_dir(args)

    # one well-resolved evolution; every rung restricts its wave function
    prep0, record0 = run_evolution(spec)
    q = _busiest_vertex(prep0)
    t_star = _rising_time(record0, q)

    ref_sel = edge_selection(record0.state_at(t_star), q, record0.hbar)
    ref = {e: p for e, p in zip(ref_sel.edges, ref_sel.probabilities)}

    rows, errors, epsilons = [], [], []
    for rung in range(args.epsilon_ladder):
        eps = base_eps / 2**rung
        record = restrict_record(record0, eps)
        H = assemble_hamiltonian(record.grid, spec.hbar)
        comp = vertex_exit_distribution(record, H, q, t_star, n, seed)
        err = max(
            abs(lat - ref[e]) for e, lat in zip(comp.edges, comp.lattice_exact)
        )
        errors.append(err)
        epsilons.append(eps)
        for e, emp, lat in zip(comp.edges, comp.empirical, comp.lattice_exact):
            rows.append((eps, e, emp, lat, ref[e]))
    _write_csv(
        out / "ladder.csv",
        ["epsilon", "edge", "empirical", "lattice_exact", "continuum"],
        rows,
    )

    # degree-2 vertices give exact lattice exits; fit only positive errors
    pos = [(ep, er) for ep, er in zip(epsilons, errors) if er > 0.0]
    if len(pos) >= 2:
        le = np.log([p[0] for p in pos])
        lr = np.log([p[1] for p in pos])
        slope = float(np.polyfit(le, lr, 1)[0])
    else:
        slope = float("nan")

    # a few full Bell paths on the base lattice for inspection
    path_rows = []
    record_base = restrict_record(record0, base_eps)
    H_base = assemble_hamiltonian(record_base.grid, spec.hbar)
    grid0 = record_base.grid
    site_loc = {}
    for e in prep0.graph.edges:
        for x, i in zip(grid0.edge_x[e.id], grid0.edge_index[e.id]):
            site_loc.setdefault(int(i), (e.id, float(x)))
    from .sampler import InitialSampler

    init = InitialSampler(record_base.state_at(record_base.t0))
    for pid in range(min(n, args.max_paths_csv)):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(pid, 1)))
        eid, x, t0 = init.draw(rng)
        idx = grid0.edge_index[eid]
        site = int(idx[int(round(x / grid0.edge_h[eid]))])
        path = sample_bell_path(record_base, H_base, site, rng)
        for t, s in zip(path.jump_times, path.sites):
            le, lx = site_loc[s]
            path_rows.append((pid, t, le, lx))
    _write_csv(out / "bell_paths.csv", ["path_id", "t", "site_edge", "site_x"], path_rows)

    _write_report(out, "bell.json", "bell", {
        "vertex": q,
        "t": t_star,
        "epsilons": epsilons,
        "errors": errors,
        "error_ratios": [
            errors[i] / errors[i + 1] if errors[i + 1] > 0.0 else float("nan")
            for i in range(len(errors) - 1)
        ],
        "fitted_slope": slope,
        "ensemble": n,
        "seed": seed,
    })
    _write_manifest(out, args, {"base_epsilon": base_eps, "ladder": args.epsilon_ladder})
    return 0


def cmd_markovize(args) -> int:
    spec = load_scenario(args.scenario)
    seed = args.seed if args.seed is not None else spec.seed
    prep, record = run_evolution(spec)
    q = _busiest_vertex(prep)
    t_star = _peak_activity_time(record, q)
    flux = vertex_currents(record.state_at(t_star), q, record.hbar)
    sel = edge_selection(record.state_at(t_star), q, record.hbar)
    out = _out_dir(args)
    rows = []
    max_diff = 0.0
    for mode, kseed in [("product", None)] + [("randomized", seed + i) for i in range(args.kernels)]:
        kern = feasible_kernel(flux, mode=mode, seed=kseed)
        tilde = markovize(kern, flux)
        for fi, f in enumerate(kern.edges):
            for ei, e in enumerate(kern.edges):
                diff = abs(tilde.probabilities[ei] - sel.probabilities[ei])
                max_diff = max(max_diff, diff)
                rows.append((
                    t_star, q, mode if kseed is None else f"randomized-{kseed}",
                    f, e, kern.matrix[fi, ei],
                    tilde.probabilities[ei], sel.probabilities[ei], diff,
                ))
    _write_csv(
        out / "markovize.csv",
        ["t", "vertex", "kernel", "in_edge", "out_edge", "kernel_prob",
         "markovized", "edgeprob", "abs_diff"],
        rows,
    )
    _write_report(out, "markovize.json", "markovize", {
        "vertex": q, "t": t_star, "kernels": args.kernels, "max_identity_gap": max_diff,
    })
    _write_manifest(out, args, {"kernels": args.kernels})
    return 0


def cmd_impossibility(args) -> int:
    spec = load_scenario(args.scenario)
    seed = args.seed if args.seed is not None else spec.seed
    n = args.ensemble if args.ensemble is not None else spec.ensemble
    prep, record = run_evolution(spec)
    q = _busiest_vertex(prep)
    in_edge = spec.initial_state["packets"][0]["edge"]
    report = impossibility_scenario(record, q, in_edge)
    out = _out_dir(args)
    rows = []
    for i, t in enumerate(report.sample_times):
        for e in report.fluxes:
            rows.append((float(t), e, report.fluxes[e][i], report.edge_masses[e][i]))
    _write_csv(out / "impossibility_window.csv", ["t", "edge", "s", "edge_mass"], rows)

    times = record.output_times or (record.t_final,)
    ens = sample_ensemble(record, n, seed, output_times=times)
    det = sample_ensemble(record, n, seed, output_times=times, turn_rule=argmax_turn_rule)
    tv_mgp = max(equivariance_distance(ens, record, t).tv_edges for t in ens.output_times)
    tv_det = max(equivariance_distance(det, record, t).tv_edges for t in det.output_times)
    _write_report(out, "impossibility.json", "impossibility", {
        "vertex": q,
        "in_edge": in_edge,
        "window": list(report.window),
        "sign_pattern_fraction": report.sign_pattern_fraction,
        "ensemble": n,
        "tv_minimal_process": tv_mgp,
        "tv_argmax_deterministic": tv_det,
    })
    _write_manifest(out, args, {"ensemble": n})
    return 0


def cmd_reverse(args) -> int:
    spec = load_scenario(args.scenario)
    prep, record = run_evolution(spec)
    q = _busiest_vertex(prep)
    t_star = _peak_activity_time(record, q)
    check = time_reversal_check(record, q, t_star)
    out = _out_dir(args)
    rows = [
        (t_star, q, e, pf, pr)
        for e, pf, pr in zip(
            check.forward.edges, check.forward.probabilities, check.reversed.probabilities
        )
    ]
    _write_csv(out / "reverse.csv", ["t", "vertex", "edge", "p_forward", "p_reversed"], rows)
    _write_report(out, "reverse.json", "reverse", {
        "vertex": q,
        "t": t_star,
        "swap_residual": check.swap_residual,
    })
    _write_manifest(out, args, {})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qgflow",
        description="Quantum dynamics and trajectory processes on metric graphs.",
    )
    parser.add_argument("--version", action="version", version=f"qgflow {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument(
            "--scenario", required=True,
            help=f"scenario file path or bundled name ({', '.join(BUNDLED)})",
        )
        if out_required:
            p.add_argument("--out", required=True, help="output directory")
        else:
            p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="root RNG seed")
        p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("validate", help="parse and validate a scenario")
    common(p, out_required=False)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("evolve", help="propagate the wave function, dump states CSV")
    common(p)
    p.add_argument("--dump-matrix", action="store_true", help="dump H in triplet format")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("flux", help="vertex currents and Kirchhoff residuals")
    common(p)
    p.add_argument("--ladder", type=int, default=0, help="h-refinement rungs for the residual ladder")
    p.set_defaults(func=cmd_flux)

    p = sub.add_parser("sample", help="trajectory ensemble and equivariance report")
    common(p)
    p.add_argument("--ensemble", type=int, default=None)
    p.add_argument("--turn-rule", choices=tuple(_TURN_RULES), default="markov")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--max-paths-csv", type=int, default=200)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("bell", help="lattice jump process and the epsilon ladder")
    common(p)
    p.add_argument("--ensemble", type=int, default=None)
    p.add_argument("--epsilon", type=float, default=None, help="base lattice spacing (default 4h)")
    p.add_argument("--epsilon-ladder", type=int, default=3, help="number of rungs")
    p.add_argument("--max-paths-csv", type=int, default=20)
    p.set_defaults(func=cmd_bell)

    p = sub.add_parser("markovize", help="feasible-kernel Markovization identity report")
    common(p)
    p.add_argument("--kernels", type=int, default=10, help="randomized kernels to test")
    p.set_defaults(func=cmd_markovize)

    p = sub.add_parser("impossibility", help="deterministic-impossibility demonstration")
    common(p)
    p.add_argument("--ensemble", type=int, default=None)
    p.set_defaults(func=cmd_impossibility)

    p = sub.add_parser("reverse", help="time-reversal symmetry report")
    common(p)
    p.set_defaults(func=cmd_reverse)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "ensemble", None) is not None and args.ensemble < 1:
        parser.exit(2, "qgflow: error: --ensemble must be >= 1\n")
    if getattr(args, "epsilon_ladder", None) is not None and args.epsilon_ladder < 1:
        parser.exit(2, "qgflow: error: --epsilon-ladder must be >= 1\n")
    try:
        return args.func(args)
    except (SpecError, GraphError, StalledVertexError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
