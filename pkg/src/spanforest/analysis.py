"""Closed-form meeting quantities and an exact first-meeting oracle.

The walking token's long-run location on a tree is degree-proportional,
which gives a closed form for the probability that two tokens in bridged
trees sit on adjacent vertices, and hence for the mean recurrence of that
event.  The oracle in this module computes the expected first meeting
exactly, by solving the absorbing product chain of the two walks under the
same interleaved activation discipline the scheduler uses.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import spsolve

from spanforest.graph import Port
from spanforest.protocol import ForestView, ForestWorld, TreeComponent

#: Largest product state space the first-meeting oracle accepts.
ORACLE_STATE_LIMIT = 10_000


class MeetingUnreachableError(ValueError):
    """No bridge-adjacent configuration is reachable from the given starts."""


class TreeSnapshot:
    """Immutable labeled tree on vertices ``0 .. n-1``."""

    __slots__ = ("n", "edges", "degrees", "_adjacency")

    def __init__(self, n: int, edges: Iterable[tuple[int, int]]) -> None:
        if n < 1:
            raise ValueError("a tree needs at least one vertex")
        edge_list = tuple((int(u), int(v)) for u, v in edges)
        if len(edge_list) != n - 1:
            raise ValueError(f"{n}-vertex tree needs {n - 1} edges, got {len(edge_list)}")
        degrees = [0] * n
        adjacency: list[list[int]] = [[] for _ in range(n)]
        for u, v in edge_list:
            if not (0 <= u < n and 0 <= v < n) or u == v:
                raise ValueError(f"bad edge ({u}, {v})")
            if v in adjacency[u]:
                raise ValueError(f"duplicate edge ({u}, {v})")
            adjacency[u].append(v)
            adjacency[v].append(u)
            degrees[u] += 1
            degrees[v] += 1
        if n > 1:
            seen = {0}
            frontier = [0]
            while frontier:
                frontier = [
                    z for w in frontier for z in adjacency[w] if z not in seen and not seen.add(z)
                ]
            if len(seen) != n:
                raise ValueError("edge set is not connected")
        self.n = n
        self.edges = edge_list
        self.degrees = tuple(degrees)
        self._adjacency = tuple(tuple(nbrs) for nbrs in adjacency)

    def adjacency(self) -> tuple[tuple[int, ...], ...]:
        return self._adjacency

    def edge_key(self) -> frozenset:
        """Canonical identity of the labeled tree, for counting tests."""
        return frozenset(frozenset(e) for e in self.edges)

    @classmethod
    def path(cls, n: int) -> "TreeSnapshot":
        return cls(n, [(i, i + 1) for i in range(n - 1)])

    @classmethod
    def star(cls, n: int) -> "TreeSnapshot":
        return cls(n, [(0, i) for i in range(1, n)])

    def __repr__(self) -> str:
        return f"TreeSnapshot(n={self.n}, edges={self.edges!r})"


def stationary_prob(tree: TreeSnapshot, v: int) -> Fraction:
    """Long-run probability that the walking token sits on ``v``.

    Equals deg(v) / (2 (n - 1)); undefined on a singleton tree where the
    token cannot walk.
    """
    if tree.n < 2:
        raise ValueError("stationary law undefined on a singleton tree")
    if not 0 <= v < tree.n:
        raise ValueError(f"vertex {v} not in tree")
    return Fraction(tree.degrees[v], 2 * (tree.n - 1))


def _check_bridges(t1: TreeSnapshot, t2: TreeSnapshot, bridges: Sequence[tuple[int, int]]) -> None:
    seen = set()
    for u, v in bridges:
        if not 0 <= u < t1.n:
            raise ValueError(f"bridge endpoint {u} not in first tree")
        if not 0 <= v < t2.n:
            raise ValueError(f"bridge endpoint {v} not in second tree")
        if (u, v) in seen:
            raise ValueError(f"duplicate bridge ({u}, {v})")
        seen.add((u, v))


def fusion_probability(
    t1: TreeSnapshot, t2: TreeSnapshot, bridges: Sequence[tuple[int, int]]
) -> Fraction:
    """Probability that two independently-placed stationary tokens are bridge-adjacent.

    Sums deg(u) deg(v) / (4 (n1-1)(n2-1)) over the bridge endpoints; exact
    rational arithmetic throughout.
    """
    if t1.n < 2 or t2.n < 2:
        raise ValueError("both trees need at least two vertices")
    _check_bridges(t1, t2, bridges)
    numerator = sum(t1.degrees[u] * t2.degrees[v] for u, v in bridges)
    return Fraction(numerator, 4 * (t1.n - 1) * (t2.n - 1))


def expected_fusion_time(
    t1: TreeSnapshot, t2: TreeSnapshot, bridges: Sequence[tuple[int, int]]
) -> Optional[Fraction]:
    """Mean number of token moves between meetings; None when no bridge exists."""
    p = fusion_probability(t1, t2, bridges)
    if p == 0:
        return None
    return 1 / p


def enumerate_bridges(
    world: ForestWorld, view: ForestView, tree_a: int, tree_b: int
) -> list[tuple[int, int]]:
    """All non-tree edges crossing two distinct trees of the forest.

    Pairs are returned with the ``tree_a`` endpoint first, in edge
    insertion order.
    """
    if tree_a == tree_b:
        raise ValueError("bridges are defined between two distinct trees")
    n_trees = len(view.trees)
    if not (0 <= tree_a < n_trees and 0 <= tree_b < n_trees):
        raise ValueError("tree index out of range")
    bridges = []
    for u, v, pu, _ in world.graph.edges():
        if pu is not Port.NONE:
            continue
        iu, iv = view.tree_of(u), view.tree_of(v)
        if (iu, iv) == (tree_a, tree_b):
            bridges.append((u, v))
        elif (iu, iv) == (tree_b, tree_a):
            bridges.append((v, u))
    return bridges


def tree_snapshot_of(
    world: ForestWorld, component: TreeComponent
) -> tuple[TreeSnapshot, dict[int, int]]:
    """Convert a live tree component into a snapshot plus handle-to-index map."""
    index = {v: i for i, v in enumerate(component.vertices)}
    edges = [(index[u], index[v]) for u, v in component.edges]
    return TreeSnapshot(len(component.vertices), edges), index


def exact_first_meeting(
    t1: TreeSnapshot,
    t2: TreeSnapshot,
    bridges: Sequence[tuple[int, int]],
    start1: int,
    start2: int,
    discipline: str = "interleaved",
) -> float:
    """Expected number of token moves until the two walks are bridge-adjacent.

    Solves the absorbing product chain of the two uniform walks exactly.
    Under the ``interleaved`` discipline each round draws a uniformly random
    activation order, adjacency is checked before every individual move, and
    moves are counted one per activation, matching the simulator.  The
    ``synchronous`` discipline moves both tokens at once and checks only
    between rounds; on bipartite trees that can make absorption unreachable,
    which raises :class:`MeetingUnreachableError`.
    """
    if t1.n < 2 or t2.n < 2:
        raise ValueError("both trees need at least two vertices")
    if not 0 <= start1 < t1.n or not 0 <= start2 < t2.n:
        raise ValueError("start vertex out of range")
    n1, n2 = t1.n, t2.n
    if n1 * n2 > ORACLE_STATE_LIMIT:
        raise ValueError(f"product state space {n1 * n2} exceeds {ORACLE_STATE_LIMIT}")
    _check_bridges(t1, t2, bridges)
    absorbed = set((int(u), int(v)) for u, v in bridges)
    if not absorbed:
        raise MeetingUnreachableError("no bridges, meeting impossible")
    if (start1, start2) in absorbed:
        return 0.0
    if discipline == "interleaved":
        return _solve_interleaved(t1, t2, absorbed, start1, start2)
    if discipline == "synchronous":
        return _solve_synchronous(t1, t2, absorbed, start1, start2)
    raise ValueError(f"unknown activation discipline {discipline!r}")


def _solve_interleaved(
    t1: TreeSnapshot, t2: TreeSnapshot, absorbed: set, start1: int, start2: int
) -> float:
    n1, n2 = t1.n, t2.n
    a1, a2 = t1.adjacency(), t2.adjacency()
    size = n1 * n2
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    b = np.zeros(size)
    for x in range(n1):
        wx = 0.5 / len(a1[x])
        for y in range(n2):
            s = x * n2 + y
            rows.append(s)
            cols.append(s)
            vals.append(1.0)
            if (x, y) in absorbed:
                continue
            wy = 0.5 / len(a2[y])
            w_pair = wx / len(a2[y])
            # First mover is the tree-1 token: its move costs 1; if the new
            # pair is adjacent the meeting is caught at the partner's
            # activation, otherwise the partner moves too (second unit).
            for x2 in a1[x]:
                if (x2, y) in absorbed:
                    b[s] += wx
                else:
                    b[s] += 2.0 * wx
                    base = x2 * n2
                    for y2 in a2[y]:
                        rows.append(s)
                        cols.append(base + y2)
                        vals.append(-w_pair)
            # Mirror branch: the tree-2 token moves first.
            w_pair2 = wy / len(a1[x])
            for y2 in a2[y]:
                if (x, y2) in absorbed:
                    b[s] += wy
                else:
                    b[s] += 2.0 * wy
                    for x2 in a1[x]:
                        rows.append(s)
                        cols.append(x2 * n2 + y2)
                        vals.append(-w_pair2)
    matrix = coo_matrix((vals, (rows, cols)), shape=(size, size)).tocsr()
    solution = spsolve(matrix, b)
    value = solution[start1 * n2 + start2]
    if not np.isfinite(value) or value < 0:
        raise MeetingUnreachableError("absorbing system is singular from this start")
    return float(value)


def _solve_synchronous(
    t1: TreeSnapshot, t2: TreeSnapshot, absorbed: set, start1: int, start2: int
) -> float:
    n1, n2 = t1.n, t2.n
    a1, a2 = t1.adjacency(), t2.adjacency()
    # Both tokens move each round, so the pair's bipartition parity is locked;
    # restrict the system to the class actually reachable from the start.
    reachable = {(start1, start2)}
    frontier = [(start1, start2)]
    hit_absorbing = False
    while frontier:
        nxt = []
        for x, y in frontier:
            if (x, y) in absorbed:
                hit_absorbing = True
                continue
            for x2 in a1[x]:
                for y2 in a2[y]:
                    if (x2, y2) not in reachable:
                        reachable.add((x2, y2))
                        nxt.append((x2, y2))
        frontier = nxt
    if not hit_absorbing:
        raise MeetingUnreachableError(
            "synchronous walks never become bridge-adjacent from this start"
        )
    states = sorted(reachable)
    index = {s: i for i, s in enumerate(states)}
    size = len(states)
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    b = np.zeros(size)
    for (x, y), i in index.items():
        rows.append(i)
        cols.append(i)
        vals.append(1.0)
        if (x, y) in absorbed:
            continue
        b[i] = 2.0
        w = 1.0 / (len(a1[x]) * len(a2[y]))
        for x2 in a1[x]:
            for y2 in a2[y]:
                rows.append(i)
                cols.append(index[(x2, y2)])
                vals.append(-w)
    matrix = coo_matrix((vals, (rows, cols)), shape=(size, size)).tocsr()
    solution = spsolve(matrix, b)
    value = solution[index[(start1, start2)]]
    if not np.isfinite(value) or value < 0:
        raise MeetingUnreachableError("absorbing system is singular from this start")
    return float(value)
