"""Dynamic undirected graph substrate with per-endpoint port labels.

Vertex handles are opaque integers handed out at creation time.  The layer
above (the relabeling protocol) must never interpret handle values; every
observable collection here iterates in insertion order, so a run is
reproducible and invariant under a renaming of the handles.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum, IntEnum
from itertools import count
from typing import Iterable, Iterator, Optional


class VertexLabel(Enum):
    """Protocol vertex state: ``T`` holds its tree's token, ``N`` does not."""

    T = "T"
    N = "N"


class Port(IntEnum):
    """Per-endpoint edge label.

    ``NONE`` marks a non-tree edge endpoint.  On a tree edge the endpoint
    nearer the token carries ``AWAY`` (walking over the edge leads away from
    the token) and the far endpoint carries ``TOWARD``.
    """

    NONE = 0
    TOWARD = 1
    AWAY = 2


#: Port pairs a present edge may carry between atomic rule applications.
LEGAL_PORT_PAIRS = frozenset({
    (Port.NONE, Port.NONE),
    (Port.TOWARD, Port.AWAY),
    (Port.AWAY, Port.TOWARD),
})


@dataclass(frozen=True)
class EdgeAddition:
    """Record of an edge insertion; additions never trigger a rule."""

    u: int
    v: int
    tick: int

    def endpoints(self) -> tuple[int, int]:
        return (self.u, self.v)


@dataclass(frozen=True)
class EdgeRemoval:
    """Snapshot of a removed edge, consumed by the protocol's loss rules.

    The ports recorded here are the labels the edge carried immediately
    before removal; the graph itself forgets them atomically.
    """

    u: int
    v: int
    port_u: Port
    port_v: Port
    tick: int

    def endpoints(self) -> tuple[int, int]:
        return (self.u, self.v)

    def port_at(self, w: int) -> Port:
        if w == self.u:
            return self.port_u
        if w == self.v:
            return self.port_v
        raise ValueError(f"vertex {w!r} is not an endpoint of this record")


class DynamicGraph:
    """Undirected simple graph with labeled vertices and edge endpoints.

    Supports live edge insertion/removal and keeps an event log from which
    the topology (labels excluded) can be replayed.  ``handle_pool`` can
    supply custom handle values; runs must behave identically under any
    injective renaming, which the test suite checks.
    """

    def __init__(self, handle_pool: Optional[Iterable[int]] = None) -> None:
        self._handles: Iterator[int] = iter(handle_pool) if handle_pool is not None else count()
        self._ports: dict[int, dict[int, Port]] = {}
        self._labels: dict[int, VertexLabel] = {}
        self._alias: dict[int, int] = {}
        self._edges: dict[tuple[int, int], None] = {}
        self._events: list[dict] = []
        self.tick = 0

    # ------------------------------------------------------------------ vertices

    def add_vertex(self) -> int:
        """Create an isolated vertex labeled T (a fresh singleton tree)."""
        v = next(self._handles)
        if v in self._ports:
            raise ValueError(f"handle pool repeated value {v!r}")
        self._ports[v] = {}
        self._labels[v] = VertexLabel.T
        self._alias[v] = len(self._alias)
        self.tick += 1
        self._events.append({"tick": self.tick, "op": "add_vertex", "u": self._alias[v], "v": None})
        return v

    def vertices(self) -> list[int]:
        return list(self._ports)

    def __contains__(self, v: int) -> bool:
        return v in self._ports

    @property
    def vertex_count(self) -> int:
        return len(self._ports)

    @property
    def edge_count(self) -> int:
        return len(self._edges)

    def alias(self, v: int) -> int:
        """Stable per-run integer alias (creation index) for serialization."""
        return self._alias[v]

    def label(self, v: int) -> VertexLabel:
        return self._labels[v]

    def set_label(self, v: int, label: VertexLabel) -> None:
        if v not in self._labels:
            raise ValueError(f"unknown vertex {v!r}")
        self._labels[v] = label

    def degree(self, v: int) -> int:
        return len(self._ports[v])

    # ------------------------------------------------------------------ edges

    def has_edge(self, u: int, v: int) -> bool:
        return u in self._ports and v in self._ports[u]

    def _require_vertex(self, v: int) -> None:
        if v not in self._ports:
            raise ValueError(f"unknown vertex {v!r}")

    def add_edge(self, u: int, v: int) -> tuple[int, int]:
        """Insert edge (u, v) with both ports NONE and log the event."""
        self._require_vertex(u)
        self._require_vertex(v)
        if u == v:
            raise ValueError("self-loops are not allowed")
        if v in self._ports[u]:
            raise ValueError("edge already present")
        self._ports[u][v] = Port.NONE
        self._ports[v][u] = Port.NONE
        self._edges[(u, v)] = None
        self.tick += 1
        self._events.append(
            {"tick": self.tick, "op": "add_edge", "u": self._alias[u], "v": self._alias[v]}
        )
        return (u, v)

    def remove_edge(self, e: tuple[int, int] | int, v: Optional[int] = None) -> EdgeRemoval:
        """Delete an edge and return the pre-removal snapshot of its ports.

        Accepts either the pair returned by :meth:`add_edge` or two
        endpoint handles.  The snapshot lets the protocol layer fire its
        loss rules atomically after the topology change.
        """
        if v is None:
            u, v = e  # type: ignore[misc]
        else:
            u = e  # type: ignore[assignment]
        self._require_vertex(u)
        self._require_vertex(v)
        if v not in self._ports[u]:
            raise ValueError("edge not present")
        record = EdgeRemoval(u, v, self._ports[u][v], self._ports[v][u], self.tick + 1)
        del self._ports[u][v]
        del self._ports[v][u]
        if (u, v) in self._edges:
            del self._edges[(u, v)]
        else:
            del self._edges[(v, u)]
        self.tick += 1
        self._events.append(
            {"tick": self.tick, "op": "remove_edge", "u": self._alias[u], "v": self._alias[v]}
        )
        return record

    def neighbors(self, v: int) -> list[tuple[int, Port, Port]]:
        """All present incident edges of ``v`` as (other, port here, port there)."""
        self._require_vertex(v)
        ports = self._ports
        return [(u, p, ports[u][v]) for u, p in ports[v].items()]

    def port(self, u: int, v: int) -> Port:
        """Port label at ``u``'s end of edge (u, v)."""
        self._require_vertex(u)
        if v not in self._ports[u]:
            raise ValueError("edge not present")
        return self._ports[u][v]

    def set_tree_edge(self, near: int, far: int) -> None:
        """Mark edge (near, far) as a tree edge with the token on the near side."""
        if not self.has_edge(near, far):
            raise ValueError("edge not present")
        self._ports[near][far] = Port.AWAY
        self._ports[far][near] = Port.TOWARD

    def edges(self) -> Iterator[tuple[int, int, Port, Port]]:
        """Iterate present edges once each, in insertion order."""
        for (u, v) in self._edges:
            yield (u, v, self._ports[u][v], self._ports[v][u])

    # ------------------------------------------------------------------ event log

    @property
    def event_log(self) -> list[dict]:
        return list(self._events)

    def event_log_jsonl(self) -> str:
        """Serialize the topology event log, one JSON object per line."""
        return "\n".join(json.dumps(ev, sort_keys=True) for ev in self._events)

    @classmethod
    def replay(cls, events: Iterable[dict]) -> "DynamicGraph":
        """Rebuild the topology (labels excluded) from an event log."""
        g = cls()
        by_alias: dict[int, int] = {}
        for ev in events:
            op = ev["op"]
            if op == "add_vertex":
                by_alias[ev["u"]] = g.add_vertex()
            elif op == "add_edge":
                g.add_edge(by_alias[ev["u"]], by_alias[ev["v"]])
            elif op == "remove_edge":
                g.remove_edge(by_alias[ev["u"]], by_alias[ev["v"]])
            else:
                raise ValueError(f"unknown event op {op!r}")
        return g

    def topology_signature(self) -> tuple[int, frozenset]:
        """Handle-independent topology fingerprint, for replay checks."""
        edges = frozenset(
            frozenset((self._alias[u], self._alias[v])) for (u, v) in self._edges
        )
        return (len(self._ports), edges)

    # ------------------------------------------------------------------ checks

    def port_violations(self) -> list[str]:
        """Scan for illegal port pairs or asymmetric storage."""
        problems = []
        for (u, v) in self._edges:
            pu = self._ports.get(u, {}).get(v)
            pv = self._ports.get(v, {}).get(u)
            if pu is None or pv is None:
                problems.append(f"edge ({u}, {v}) lost one of its port entries")
            elif (pu, pv) not in LEGAL_PORT_PAIRS:
                problems.append(f"edge ({u}, {v}) carries illegal ports ({pu.name}, {pv.name})")
        for v, adj in self._ports.items():
            for u in adj:
                if (u, v) not in self._edges and (v, u) not in self._edges:
                    problems.append(f"adjacency ({v}, {u}) without a registered edge")
        return problems
