"""Spanning-forest maintenance rules, token scheduling, and forest audits.

Every tree in the forest holds exactly one token, marked by the vertex
label ``T``.  The token walks along tree edges; when two tokens sit on
adjacent vertices the trees merge, and when a tree edge disappears the
orphaned side regenerates a token.  All four transitions read and write
only the acting vertex's label, its incident ports, and its neighbors'
labels: handles are never ordered or compared, which keeps the rules local
and anonymous.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

from spanforest.graph import (
    DynamicGraph,
    EdgeAddition,
    EdgeRemoval,
    Port,
    VertexLabel,
)


class WalkPolicy(Enum):
    """How a token picks its next tree neighbor."""

    UNIFORM = "uniform"
    NON_BACKTRACKING = "nobacktrack"

    @classmethod
    def from_name(cls, name: str) -> "WalkPolicy":
        for policy in cls:
            if policy.value == name:
                return policy
        raise ValueError(f"unknown walk policy {name!r}")


@dataclass(eq=False)
class Token:
    """A tree's mobile privilege: its position plus walk memory.

    ``memory`` is the vertex the token last came from; it is only ever a
    current tree neighbor of ``position`` and is cleared whenever that stops
    being true (merge, regeneration, or loss of the remembered edge).
    ``position`` is None once the token has been absorbed by a merge.
    """

    position: Optional[int]
    memory: Optional[int] = None


@dataclass
class StepReport:
    """Which rules fired during one scheduler step."""

    merges: list[tuple[int, int]] = field(default_factory=list)
    moves: list[tuple[int, int]] = field(default_factory=list)

    @property
    def move_count(self) -> int:
        return len(self.moves)

    @property
    def fired(self) -> list[tuple[str, int, int]]:
        return [("merge", a, b) for a, b in self.merges] + [
            ("circulate", a, b) for a, b in self.moves
        ]

    def to_json(self, graph: DynamicGraph) -> str:
        """One JSON line in alias space, for debug traces."""
        return json.dumps(
            {
                "merges": [[graph.alias(a), graph.alias(b)] for a, b in self.merges],
                "moves": [[graph.alias(a), graph.alias(b)] for a, b in self.moves],
            },
            sort_keys=True,
        )


@dataclass(frozen=True)
class TreeComponent:
    """One tree of the forest: its vertices, tree edges, and token vertex."""

    vertices: tuple[int, ...]
    edges: tuple[tuple[int, int], ...]
    root: Optional[int]

    @property
    def size(self) -> int:
        return len(self.vertices)


@dataclass(frozen=True)
class ForestView:
    """Partition of the graph into trees, derived by scanning tree edges."""

    trees: tuple[TreeComponent, ...]
    index: dict[int, int]

    def tree_of(self, v: int) -> int:
        return self.index[v]


class ForestWorld:
    """A graph plus the live tokens, advanced one scheduler step at a time."""

    def __init__(self, graph: DynamicGraph) -> None:
        self.graph = graph
        self.tokens: list[Token] = []
        self._token_at: dict[int, Token] = {}
        for v in graph.vertices():
            if graph.label(v) is VertexLabel.T:
                token = Token(v)
                self.tokens.append(token)
                self._token_at[v] = token

    # ------------------------------------------------------------------ queries

    @property
    def token_count(self) -> int:
        return len(self.tokens)

    def token_at(self, v: int) -> Optional[Token]:
        return self._token_at.get(v)

    def token_positions(self) -> list[int]:
        return [t.position for t in self.tokens if t.position is not None]

    def tree_neighbors(self, v: int) -> list[int]:
        """Neighbors of ``v`` across tree edges, in insertion order."""
        return [u for u, port_here, _ in self.graph.neighbors(v) if port_here is not Port.NONE]

    def merge_candidates(self, v: int) -> list[int]:
        """T-labeled neighbors of ``v`` across non-tree edges."""
        g = self.graph
        return [
            u
            for u, port_here, _ in g.neighbors(v)
            if port_here is Port.NONE and g.label(u) is VertexLabel.T
        ]

    # ------------------------------------------------------------------ rules

    def rule_merge(self, actor: int, peer: int) -> bool:
        """Fuse the two trees rooted at adjacent token holders.

        The activated vertex keeps its token; the peer is relabeled N, its
        token is destroyed, and the shared edge becomes a tree edge oriented
        toward the survivor.  Returns False when the preconditions fail.
        """
        g = self.graph
        if actor not in g or peer not in g:
            return False
        if g.label(actor) is not VertexLabel.T or g.label(peer) is not VertexLabel.T:
            return False
        if not g.has_edge(actor, peer) or g.port(actor, peer) is not Port.NONE:
            return False
        absorbed = self._token_at.pop(peer)
        absorbed.position = None
        self.tokens.remove(absorbed)
        g.set_label(peer, VertexLabel.N)
        g.set_tree_edge(actor, peer)
        survivor = self._token_at[actor]
        survivor.memory = None
        return True

    def rule_circulate(self, actor: int, target: int) -> bool:
        """Pass the token from ``actor`` to tree neighbor ``target``."""
        g = self.graph
        if actor not in g or target not in g:
            return False
        if g.label(actor) is not VertexLabel.T or g.label(target) is not VertexLabel.N:
            return False
        if not g.has_edge(actor, target):
            return False
        if g.port(actor, target) is not Port.AWAY or g.port(target, actor) is not Port.TOWARD:
            return False
        g.set_label(actor, VertexLabel.N)
        g.set_label(target, VertexLabel.T)
        g.set_tree_edge(target, actor)
        token = self._token_at.pop(actor)
        token.position = target
        token.memory = actor
        self._token_at[target] = token
        return True

    def rule_regenerate(self, v: int, record: EdgeRemoval) -> bool:
        """Create a fresh token at the orphaned side of a lost tree edge.

        Applies when ``v`` lost the edge that carried its TOWARD port, i.e.
        its only route to the vanished token.
        """
        if v not in record.endpoints():
            return False
        if record.port_at(v) is not Port.TOWARD:
            return False
        g = self.graph
        if g.label(v) is not VertexLabel.N:
            return False
        g.set_label(v, VertexLabel.T)
        token = Token(v)
        self.tokens.append(token)
        self._token_at[v] = token
        return True

    def rule_cleanup(self, v: int, record: EdgeRemoval) -> bool:
        """Drop the local state of a lost non-TOWARD edge; label unchanged.

        The graph already purged the port entries with the edge, so this is
        the bookkeeping acknowledgement that no regeneration is due at ``v``.
        """
        if v not in record.endpoints():
            return False
        if record.port_at(v) is Port.TOWARD:
            return False
        return True

    # ------------------------------------------------------------------ walk

    def choose_move(self, token: Token, policy: WalkPolicy, rng: random.Random) -> Optional[int]:
        """Pick the token's next destination among tree neighbors.

        Uniform policy draws equiprobably.  The non-backtracking policy
        excludes the remembered previous vertex unless it is the only tree
        neighbor (a leaf may turn around).  Returns None when the token's
        tree is a singleton.
        """
        if token.position is None:
            return None
        nbrs = self.tree_neighbors(token.position)
        if not nbrs:
            return None
        if policy is WalkPolicy.NON_BACKTRACKING and len(nbrs) > 1:
            mem = token.memory
            if mem is not None and mem in nbrs:
                nbrs = [u for u in nbrs if u != mem]
        if len(nbrs) == 1:
            return nbrs[0]
        return nbrs[rng.randrange(len(nbrs))]

    # ------------------------------------------------------------------ scheduling

    def step(self, policy: WalkPolicy, rng: random.Random) -> StepReport:
        """Activate every live token once, in a uniformly shuffled order.

        An activated token merges with one eligible adjacent token holder if
        any exists (merging outranks walking), otherwise it walks.  Merge
        applicability is evaluated against the live state, so tokens
        absorbed earlier in the same step are skipped.
        """
        order = list(self.tokens)
        rng.shuffle(order)
        report = StepReport()
        for token in order:
            actor = token.position
            if actor is None:
                continue
            candidates = self.merge_candidates(actor)
            if candidates:
                if len(candidates) > 1:
                    peer = candidates[rng.randrange(len(candidates))]
                else:
                    peer = candidates[0]
                self.rule_merge(actor, peer)
                report.merges.append((actor, peer))
            else:
                target = self.choose_move(token, policy, rng)
                if target is not None:
                    self.rule_circulate(actor, target)
                    report.moves.append((actor, target))
        return report

    def apply_topology_event(self, record: EdgeRemoval | EdgeAddition) -> list[tuple[str, int]]:
        """Fire the loss rules for a removal record, atomically per endpoint.

        Edge additions never trigger a rule.  Returns the applied rules as
        (name, vertex) pairs.
        """
        if not isinstance(record, EdgeRemoval):
            return []
        applied: list[tuple[str, int]] = []
        for w in record.endpoints():
            if self.rule_regenerate(w, record):
                applied.append(("regenerate", w))
            elif self.rule_cleanup(w, record):
                applied.append(("cleanup", w))
        # A token remembering the lost edge may no longer backtrack over it.
        for side, other in ((record.u, record.v), (record.v, record.u)):
            token = self._token_at.get(side)
            if token is not None and token.memory == other:
                token.memory = None
        return applied

    def add_edge(self, u: int, v: int) -> EdgeAddition:
        self.graph.add_edge(u, v)
        return EdgeAddition(u, v, self.graph.tick)

    def remove_edge(self, u: int, v: int) -> tuple[EdgeRemoval, list[tuple[str, int]]]:
        """Remove an edge and fire the loss rules in one atomic operation."""
        record = self.graph.remove_edge(u, v)
        return record, self.apply_topology_event(record)

    # ------------------------------------------------------------------ setup helpers

    def install_tree(self, edges: Iterable[tuple[int, int]], root: int) -> None:
        """Wire an already-present edge set into an oriented tree.

        Simulation-owner surgery for building scenarios and tests: all
        involved vertices must still be fresh singleton trees.  Ports are
        oriented toward ``root``, which keeps its token; every other
        vertex's token is withdrawn.
        """
        g = self.graph
        edge_list = [tuple(e) for e in edges]
        vertices = {root}
        for u, v in edge_list:
            vertices.add(u)
            vertices.add(v)
        if len(edge_list) != len(vertices) - 1:
            raise ValueError("edge set does not form a tree over its vertices")
        adjacency: dict[int, list[int]] = {w: [] for w in vertices}
        for u, v in edge_list:
            if not g.has_edge(u, v) or g.port(u, v) is not Port.NONE:
                raise ValueError(f"edge ({u}, {v}) absent or already in a tree")
            adjacency[u].append(v)
            adjacency[v].append(u)
        for w in vertices:
            if g.label(w) is not VertexLabel.T or self._token_at.get(w) is None:
                raise ValueError("install_tree requires fresh singleton vertices")
        parent: dict[int, int] = {}
        seen = {root}
        frontier = [root]
        while frontier:
            nxt = []
            for w in frontier:
                for z in adjacency[w]:
                    if z not in seen:
                        seen.add(z)
                        parent[z] = w
                        nxt.append(z)
            frontier = nxt
        if seen != vertices:
            raise ValueError("edge set does not connect all its vertices")
        for child, par in parent.items():
            g.set_tree_edge(par, child)
            g.set_label(child, VertexLabel.N)
            token = self._token_at.pop(child)
            token.position = None
            self.tokens.remove(token)

    # ------------------------------------------------------------------ derived structure

    def forest_view(self) -> ForestView:
        """Scan the tree edges into components, each with its token vertex."""
        g = self.graph
        index: dict[int, int] = {}
        trees: list[TreeComponent] = []
        for v in g.vertices():
            if v in index:
                continue
            comp_vertices = [v]
            comp_edges: list[tuple[int, int]] = []
            index[v] = len(trees)
            frontier = [v]
            while frontier:
                nxt = []
                for w in frontier:
                    for u, port_here, _ in g.neighbors(w):
                        if port_here is Port.NONE:
                            continue
                        if u not in index:
                            index[u] = len(trees)
                            comp_vertices.append(u)
                            nxt.append(u)
                        if port_here is Port.AWAY:
                            comp_edges.append((w, u))
                frontier = nxt
            roots = [w for w in comp_vertices if g.label(w) is VertexLabel.T]
            trees.append(
                TreeComponent(tuple(comp_vertices), tuple(comp_edges), roots[0] if len(roots) == 1 else None)
            )
        return ForestView(tuple(trees), index)

    # ------------------------------------------------------------------ invariants

    def audit(self) -> list[str]:
        """Exhaustively re-derive the forest structure and list violations.

        This is the independent oracle used by the safety tests: it never
        consults incremental state beyond labels and ports.
        """
        g = self.graph
        problems = g.port_violations()
        view = self.forest_view()
        for i, tree in enumerate(view.trees):
            t_vertices = [w for w in tree.vertices if g.label(w) is VertexLabel.T]
            if len(t_vertices) != 1:
                problems.append(f"tree {i} holds {len(t_vertices)} T vertices")
                continue
            root = t_vertices[0]
            if len(tree.edges) != tree.size - 1:
                problems.append(
                    f"tree {i} has {len(tree.edges)} tree edges for {tree.size} vertices"
                )
            if self._token_at.get(root) is None:
                problems.append(f"tree {i} root {root} holds no registered token")
            for w in tree.vertices:
                toward = [u for u, port_here, _ in g.neighbors(w) if port_here is Port.TOWARD]
                if g.label(w) is VertexLabel.T:
                    if toward:
                        problems.append(f"T vertex {w} carries a TOWARD port")
                    continue
                if len(toward) != 1:
                    problems.append(f"N vertex {w} carries {len(toward)} TOWARD ports")
                    continue
                hops = 0
                cursor = w
                while g.label(cursor) is not VertexLabel.T:
                    ups = [u for u, port_here, _ in g.neighbors(cursor) if port_here is Port.TOWARD]
                    if len(ups) != 1:
                        problems.append(f"orientation chain from {w} breaks at {cursor}")
                        break
                    cursor = ups[0]
                    hops += 1
                    if hops >= tree.size:
                        problems.append(f"orientation chain from {w} cycles")
                        break
                else:
                    if cursor != root:
                        problems.append(f"orientation chain from {w} ends off-root at {cursor}")
        positions = self.token_positions()
        if len(set(positions)) != len(positions):
            problems.append("two tokens share a vertex")
        for token in self.tokens:
            v = token.position
            if v is None:
                problems.append("absorbed token still registered")
                continue
            if g.label(v) is not VertexLabel.T:
                problems.append(f"token parked on non-T vertex {v}")
            if token.memory is not None and token.memory not in self.tree_neighbors(v):
                problems.append(f"token at {v} remembers non-tree-neighbor {token.memory}")
        if set(self._token_at) != set(positions):
            problems.append("token registry out of sync with token list")
        return problems
