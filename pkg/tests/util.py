"""Shared helpers for building small scenario documents in tests."""

import json

import numpy as np

from qgflow import FluxReport


def star_doc(lengths=(1.0, 1.0, 1.0), conditions=None, h=0.1, packets=None):
    """A k-star scenario document: center c, leaves l1..lk."""
    k = len(lengths)
    leaves = [f"l{i + 1}" for i in range(k)]
    doc = {
        "graph": {
            "vertices": ["c"] + leaves,
            "edges": [
                {"id": f"e{i + 1}", "from": "c", "to": leaves[i], "length": lengths[i]}
                for i in range(k)
            ],
            "conditions": conditions
            if conditions is not None
            else [{"vertex": q, "kind": "dirichlet"} for q in leaves],
        },
        "numerics": {"h": h, "dt": 0.0001},
        "initial_state": {
            "packets": packets
            or [{"edge": "e1", "center": lengths[0] / 2, "width": lengths[0] / 10, "k": 10.0}]
        },
        "run": {"t_final": 0.01},
    }
    return json.dumps(doc)


def interval_doc(length=1.0, h=0.01, conditions=None, packets=None, dt=0.0001,
                 t_final=0.05, potential=None):
    edge = {"id": "e", "from": "a", "to": "b", "length": length}
    if potential is not None:
        edge["potential"] = potential
    doc = {
        "graph": {
            "vertices": ["a", "b"],
            "edges": [edge],
            "conditions": conditions
            if conditions is not None
            else [
                {"vertex": "a", "kind": "dirichlet"},
                {"vertex": "b", "kind": "dirichlet"},
            ],
        },
        "numerics": {"h": h, "dt": dt},
        "initial_state": {
            "packets": packets
            or [{"edge": "e", "center": length / 2, "width": length / 10, "k": 10.0}]
        },
        "run": {"t_final": t_final},
    }
    return json.dumps(doc)


def make_flux(s, vertex="q", t=0.0):
    """FluxReport from raw signed outward currents."""
    s = np.asarray(s, dtype=float)
    return FluxReport(
        vertex=vertex,
        t=t,
        edges=tuple(f"e{i + 1}" for i in range(s.size)),
        s=s,
        s_plus=np.maximum(s, 0.0),
        s_minus=np.maximum(-s, 0.0),
    )


def rising_half_peak_time(record, vertex):
    """First stored time with total outflux at half its peak (rising flank)."""
    from qgflow.currents import vertex_currents

    ts = np.linspace(record.t0, record.t_final, 400)
    totals = np.array(
        [vertex_currents(record.state_at(float(t)), vertex, record.hbar).s_plus.sum() for t in ts]
    )
    k_peak = int(np.argmax(totals))
    half = 0.5 * totals[k_peak]
    k = next(i for i in range(k_peak + 1) if totals[i] >= half)
    return record.snap_time(float(ts[k]))
