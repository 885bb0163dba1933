"""Metric graph data model, scenario parsing, and graph isometries.

A metric graph is a set of finite 1-D edges glued at vertices.  Each edge
carries an arc-length coordinate x in [0, length], oriented from its `from`
endpoint (end 0) to its `to` endpoint (end 1).  The outward direction at a
vertex always points away from the vertex into the edge.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Any


class SpecError(ValueError):
    """Raised when a scenario document is malformed or inconsistent."""


class GraphError(ValueError):
    """Raised when a parsed graph violates a structural invariant."""


@dataclass(frozen=True)
class Edge:
    """A finite edge, isometric to [0, length].

    `potential` is an optional table of (x, V) samples along the edge;
    values between samples are linearly interpolated.
    """

    id: str
    endpoints: tuple[str, str]
    length: float
    potential: tuple[tuple[float, float], ...] | None = None


@dataclass(frozen=True)
class VertexCondition:
    """Vertex condition: Robin (alpha * sum of outward derivatives = beta * psi)
    with psi continuous, or Dirichlet (psi pinned to zero)."""

    vertex: str
    kind: str  # "robin" | "dirichlet"
    alpha: float = 1.0
    beta: float = 0.0

    def __post_init__(self):
        if self.kind not in ("robin", "dirichlet"):
            raise SpecError(f"unknown vertex condition kind {self.kind!r}")
        if self.kind == "robin" and self.alpha == 0.0 and self.beta == 0.0:
            raise SpecError(f"Robin condition at {self.vertex!r} has alpha = beta = 0")

    def equivalent(self, other: "VertexCondition") -> bool:
        """Physical equivalence, ignoring the vertex id and common scaling."""
        if self.kind != other.kind:
            return False
        if self.kind == "dirichlet":
            return True
        if (self.alpha == 0.0) != (other.alpha == 0.0):
            return False
        if self.alpha == 0.0:
            return True
        return self.beta / self.alpha == other.beta / other.alpha


@dataclass(frozen=True)
class GraphSpec:
    """A fully resolved scenario document."""

    vertices: tuple[str, ...]
    edges: tuple[Edge, ...]
    conditions: dict[str, VertexCondition]
    h: float
    dt: float
    hbar: float
    initial_state: dict[str, Any]
    ensemble: int
    seed: int
    t_final: float
    output_times: tuple[float, ...]


@dataclass(frozen=True)
class MetricGraph:
    """Validated metric graph.  Immutable; safe to share across workers."""

    vertices: tuple[str, ...]
    edges: tuple[Edge, ...]
    # vertex -> ordered (edge id, end label in {0, 1}) pairs
    incidence: dict[str, tuple[tuple[str, int], ...]]
    conditions: dict[str, VertexCondition]

    def edge(self, edge_id: str) -> Edge:
        return self._edge_map[edge_id]

    @property
    def _edge_map(self) -> dict[str, Edge]:
        return {e.id: e for e in self.edges}

    def degree(self, vertex: str) -> int:
        return len(self.incidence[vertex])

    def condition(self, vertex: str) -> VertexCondition:
        return self.conditions[vertex]

    def vertex_at_end(self, edge_id: str, end: int) -> str:
        return self.edge(edge_id).endpoints[end]

    @property
    def total_length(self) -> float:
        return sum(e.length for e in self.edges)

    @property
    def min_edge_length(self) -> float:
        return min(e.length for e in self.edges)


@dataclass(frozen=True)
class Automorphism:
    """Isometry of a metric graph onto itself.

    `edge_flip[e]` is True when the image edge is traversed in the reversed
    orientation (end 0 maps to end 1).
    """

    vertex_map: dict[str, str]
    edge_map: dict[str, str]
    edge_flip: dict[str, bool]

    def is_identity(self) -> bool:
        return (
            all(u == v for u, v in self.vertex_map.items())
            and all(e == f for e, f in self.edge_map.items())
            and not any(self.edge_flip.values())
        )

    def inverse(self) -> "Automorphism":
        vmap = {v: u for u, v in self.vertex_map.items()}
        emap = {f: e for e, f in self.edge_map.items()}
        flip = {self.edge_map[e]: fl for e, fl in self.edge_flip.items()}
        return Automorphism(vmap, emap, flip)

    def compose(self, other: "Automorphism") -> "Automorphism":
        """Return self applied after other."""
        vmap = {u: self.vertex_map[other.vertex_map[u]] for u in other.vertex_map}
        emap = {e: self.edge_map[other.edge_map[e]] for e in other.edge_map}
        flip = {
            e: other.edge_flip[e] != self.edge_flip[other.edge_map[e]]
            for e in other.edge_map
        }
        return Automorphism(vmap, emap, flip)


_TOP_KEYS = {"graph", "numerics", "initial_state", "run"}
_GRAPH_KEYS = {"vertices", "edges", "conditions"}
_EDGE_KEYS = {"id", "from", "to", "length", "potential"}
_COND_KEYS = {"vertex", "kind", "alpha", "beta"}
_NUMERICS_KEYS = {"h", "dt", "hbar"}
_RUN_KEYS = {"ensemble", "seed", "t_final", "output_times"}
_STATE_KEYS = {"packets"}
_PACKET_KEYS = {"edge", "center", "width", "k", "amplitude"}


def _reject_unknown(mapping: dict, allowed: set, where: str) -> None:
    unknown = set(mapping) - allowed
    if unknown:
        raise SpecError(f"unknown key(s) {sorted(unknown)} in {where}")


def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise SpecError(f"missing required field {key!r} in {where}")
    return mapping[key]


def parse_spec(document: str) -> GraphSpec:
    """Parse a scenario document (JSON text) into a GraphSpec.

    Rejects unknown keys, duplicate ids, and references to undeclared ids.
    """
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise SpecError(f"syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise SpecError("top-level document must be an object")
    _reject_unknown(doc, _TOP_KEYS, "document")

    gsec = _require(doc, "graph", "document")
    _reject_unknown(gsec, _GRAPH_KEYS, "graph")
    vertices = [str(v) for v in _require(gsec, "vertices", "graph")]
    if len(set(vertices)) != len(vertices):
        raise SpecError("duplicate vertex id in graph.vertices")
    vset = set(vertices)

    edges = []
    seen_edge_ids = set()
    for raw in _require(gsec, "edges", "graph"):
        _reject_unknown(raw, _EDGE_KEYS, "edge")
        eid = str(_require(raw, "id", "edge"))
        if eid in seen_edge_ids:
            raise SpecError(f"duplicate edge id {eid!r}")
        seen_edge_ids.add(eid)
        u, v = str(_require(raw, "from", f"edge {eid}")), str(_require(raw, "to", f"edge {eid}"))
        for w in (u, v):
            if w not in vset:
                raise SpecError(f"edge {eid!r} references undeclared vertex {w!r}")
        length = float(_require(raw, "length", f"edge {eid}"))
        pot = raw.get("potential")
        if pot is not None:
            pot = tuple((float(x), float(val)) for x, val in pot)
        edges.append(Edge(eid, (u, v), length, pot))

    conditions: dict[str, VertexCondition] = {}
    for raw in gsec.get("conditions", []):
        _reject_unknown(raw, _COND_KEYS, "condition")
        q = str(_require(raw, "vertex", "condition"))
        if q not in vset:
            raise SpecError(f"condition references undeclared vertex {q!r}")
        if q in conditions:
            raise SpecError(f"duplicate condition for vertex {q!r}")
        kind = _require(raw, "kind", f"condition at {q}")
        conditions[q] = VertexCondition(
            q, kind, float(raw.get("alpha", 1.0)), float(raw.get("beta", 0.0))
        )

    num = _require(doc, "numerics", "document")
    _reject_unknown(num, _NUMERICS_KEYS, "numerics")
    h = float(_require(num, "h", "numerics"))
    dt = float(_require(num, "dt", "numerics"))
    hbar = float(num.get("hbar", 1.0))

    state = _require(doc, "initial_state", "document")
    _reject_unknown(state, _STATE_KEYS, "initial_state")
    for packet in _require(state, "packets", "initial_state"):
        _reject_unknown(packet, _PACKET_KEYS, "packet")
        pedge = str(_require(packet, "edge", "packet"))
        if pedge not in seen_edge_ids:
            raise SpecError(f"packet references undeclared edge {pedge!r}")

    run = _require(doc, "run", "document")
    _reject_unknown(run, _RUN_KEYS, "run")

    return GraphSpec(
        vertices=tuple(vertices),
        edges=tuple(edges),
        conditions=conditions,
        h=h,
        dt=dt,
        hbar=hbar,
        initial_state=state,
        ensemble=int(run.get("ensemble", 1000)),
        seed=int(run.get("seed", 0)),
        t_final=float(_require(run, "t_final", "run")),
        output_times=tuple(float(t) for t in run.get("output_times", [])),
    )


def validate_graph(spec: GraphSpec) -> MetricGraph:
    """Check structural invariants and return the immutable MetricGraph.

    Unconditioned vertices default to Robin alpha=1, beta=0 (pure
    Kirchhoff-continuity junction).
    """
    if not spec.vertices:
        raise GraphError("graph has no vertices")
    if not spec.edges:
        raise GraphError("graph has no edges")

    for e in spec.edges:
        u, v = e.endpoints
        if u == v:
            raise GraphError(f"edge {e.id!r} ends at the same vertex on both sides")
        if math.isinf(e.length):
            raise GraphError(f"edge {e.id!r} is semi-infinite; only finite edges are supported")
        if not (e.length > 0) or math.isnan(e.length):
            raise GraphError(f"edge {e.id!r} has nonpositive length {e.length}")

    incidence: dict[str, list[tuple[str, int]]] = {v: [] for v in spec.vertices}
    for e in spec.edges:
        incidence[e.endpoints[0]].append((e.id, 0))
        incidence[e.endpoints[1]].append((e.id, 1))

    # connectivity by BFS over vertices
    adj: dict[str, set[str]] = {v: set() for v in spec.vertices}
    for e in spec.edges:
        u, v = e.endpoints
        adj[u].add(v)
        adj[v].add(u)
    seen = {spec.vertices[0]}
    stack = [spec.vertices[0]]
    while stack:
        for w in adj[stack.pop()]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    if seen != set(spec.vertices):
        missing = sorted(set(spec.vertices) - seen)
        raise GraphError(f"graph is disconnected; unreachable vertices {missing}")

    conditions = dict(spec.conditions)
    for v in spec.vertices:
        if v not in conditions:
            conditions[v] = VertexCondition(v, "robin", 1.0, 0.0)
        elif conditions[v].kind == "robin" and conditions[v].alpha == 0.0:
            # alpha = 0 is the Dirichlet case; store it explicitly
            conditions[v] = VertexCondition(v, "dirichlet")

    return MetricGraph(
        vertices=tuple(spec.vertices),
        edges=tuple(spec.edges),
        incidence={v: tuple(pairs) for v, pairs in incidence.items()},
        conditions=conditions,
    )


def _flipped_potential(edge: Edge) -> tuple[tuple[float, float], ...] | None:
    if edge.potential is None:
        return None
    return tuple(sorted((edge.length - x, v) for x, v in edge.potential))


def enumerate_isometries(graph: MetricGraph) -> list[Automorphism]:
    """Brute-force enumeration of graph automorphisms.

    An automorphism is an edge permutation plus a per-edge orientation flip
    that preserves lengths, incidence, vertex conditions, and potentials.
    The candidate space has at most k! * 2^k elements for k edges.
    """
    edges = graph.edges
    k = len(edges)
    autos: list[Automorphism] = []
    for perm in itertools.permutations(range(k)):
        if any(edges[i].length != edges[perm[i]].length for i in range(k)):
            continue
        for flips in itertools.product((False, True), repeat=k):
            vmap: dict[str, str] = {}
            ok = True
            for i in range(k):
                src, dst, flip = edges[i], edges[perm[i]], flips[i]
                ends = dst.endpoints if not flip else dst.endpoints[::-1]
                for a, b in zip(src.endpoints, ends):
                    if vmap.setdefault(a, b) != b:
                        ok = False
                        break
                if not ok:
                    break
            if not ok or len(set(vmap.values())) != len(vmap):
                continue
            if any(
                not graph.condition(u).equivalent(graph.condition(v))
                for u, v in vmap.items()
            ):
                continue
            pot_ok = True
            for i in range(k):
                src, dst, flip = edges[i], edges[perm[i]], flips[i]
                src_pot = src.potential if src.potential is None else tuple(sorted(src.potential))
                dst_pot = _flipped_potential(dst) if flip else (
                    dst.potential if dst.potential is None else tuple(sorted(dst.potential))
                )
                if src_pot != dst_pot:
                    pot_ok = False
                    break
            if not pot_ok:
                continue
            autos.append(
                Automorphism(
                    vertex_map=vmap,
                    edge_map={edges[i].id: edges[perm[i]].id for i in range(k)},
                    edge_flip={edges[i].id: flips[i] for i in range(k)},
                )
            )
    return autos
