"""Main-branch / dangling-branch classification and the dangling mass ratio.

Boundary atoms (atoms bonded into a neighbouring cell) are joined pairwise by
one shortest path each through bonds that stay inside the cell. The union of
those paths plus the boundary atoms forms the main branch. A ring holding more
than three main-branch atoms is rigid and joins the main branch as a whole.
Everything else dangles; hydrogens get their own label.
"""
from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass


from .bondgraph import BondGraph, boundary_atoms
from .structio import Structure

DEFAULT_MAX_RING = 8
RIGID_RING_MIN_MAIN = 4  # "more than three" main-branch atoms


class Branch(enum.IntEnum):
    MAIN = 0
    DANGLING = 1
    DANGLING_H = 2

    @property
    def tag(self) -> str:
        return self.name.lower()


class TopologyError(ValueError):
    """Graph cannot be classified (no boundary atoms or disconnected)."""


Node = tuple[int, tuple[int, int, int]]
_ZERO = (0, 0, 0)


def _add(a, b):
    return (a[0] + b[0], a[1] + b[1], a[2] + b[2])


def _sub(a, b):
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def _canonical_cycle(nodes: list[Node]) -> tuple[Node, ...]:
    k = len(nodes)
    best = None
    for seq in (nodes, nodes[::-1]):
        for r in range(k):
            rot = seq[r:] + seq[:r]
            base = rot[0][1]
            cand = tuple((a, _sub(s, base)) for a, s in rot)
            if best is None or cand < best:
                best = cand
    return best


def _adjacency(g: BondGraph) -> list[list[tuple[int, tuple[int, int, int]]]]:
    return [[(j, s) for j, s, _ in g.edges(i)] for i in range(g.n_atoms)]


def find_periodic_rings(g: BondGraph, max_size: int = DEFAULT_MAX_RING) -> list[tuple[Node, ...]]:
    """Rings as cycles of ``(atom, image)`` nodes with zero net translation.

    For every bond the smallest ring through it is found by a breadth-first
    search that may not reuse the bond; rings are then deduplicated up to
    rotation, reflection and lattice translation.
    """
    if not 3 <= max_size <= 12:
        raise ValueError(f"max_size must lie in [3, 12], got {max_size}")
    adj = _adjacency(g)
    seen: dict[tuple[Node, ...], None] = {}
    for u, v, s, _ in g.undirected():
        start: Node = (v, s)
        goal: Node = (u, _ZERO)
        forbidden = {(goal, start), (start, goal)}
        parent: dict[Node, Node | None] = {start: None}
        depth = {start: 0}
        queue = deque([start])
        found = False
        while queue and not found:
            node = queue.popleft()
            if depth[node] >= max_size - 1:
                continue
            a, t = node
            for b, sigma in adj[a]:
                nxt = (b, _add(t, sigma))
                if nxt in parent or (node, nxt) in forbidden:
                    continue
                parent[nxt] = node
                depth[nxt] = depth[node] + 1
                if nxt == goal:
                    found = True
                    break
                queue.append(nxt)
        if not found:
            continue
        path = []
        node = goal
        while node is not None:
            path.append(node)
            node = parent[node]
        # path runs goal -> ... -> start; the closing bond is start -> goal
        seen.setdefault(_canonical_cycle(path[::-1]), None)
    return list(seen)


def find_rings(g: BondGraph, max_size: int = DEFAULT_MAX_RING) -> list[tuple[int, ...]]:
    """Smallest rings covering every bond that lies on a ring of ``max_size`` or fewer atoms."""
    return [tuple(a for a, _ in ring) for ring in find_periodic_rings(g, max_size)]


def _components(n: int, adj) -> int:
    comp = [-1] * n
    c = 0
    for root in range(n):
        if comp[root] >= 0:
            continue
        comp[root] = c
        stack = [root]
        while stack:
            a = stack.pop()
            for b, _ in adj[a]:
                if comp[b] < 0:
                    comp[b] = c
                    stack.append(b)
        c += 1
    return c


def _bfs(n: int, adj_in: list[list[int]], root: int) -> list[int]:
    dist = [-1] * n
    dist[root] = 0
    queue = deque([root])
    while queue:
        a = queue.popleft()
        for b in adj_in[a]:
            if dist[b] < 0:
                dist[b] = dist[a] + 1
                queue.append(b)
    return dist


def main_branch_paths(g: BondGraph) -> set[int]:
    """Boundary atoms plus one shortest in-cell path per boundary pair.

    Among equally short paths the lexicographically smallest atom sequence
    (starting at the lower-indexed endpoint) is taken. Pairs that are not
    connected inside the cell contribute no path.
    """
    n = g.n_atoms
    adj_in = [sorted({j for j, s, _ in g.edges(i) if s == _ZERO}) for i in range(n)]
    bounds = sorted(boundary_atoms(g))
    main = set(bounds)
    dist = {b: _bfs(n, adj_in, b) for b in bounds}
    for x, i in enumerate(bounds):
        for j in bounds[x + 1 :]:
            dj = dist[j]
            if dj[i] < 0:
                continue
            cur = i
            while cur != j:
                want = dj[cur] - 1
                cur = next(b for b in adj_in[cur] if dj[b] == want)
                main.add(cur)
    return main


@dataclass(frozen=True)
class BranchLabeling:
    labels: tuple[Branch, ...]
    dmr: float
    main_branch_atom_count: int
    dangling_mass: float
    total_mass: float

    def counts(self) -> dict[str, int]:
        out = {b.tag: 0 for b in Branch}
        for lab in self.labels:
            out[lab.tag] += 1
        return out

    def to_dict(self) -> dict:
        return {
            "dmr": self.dmr,
            "counts": self.counts(),
            "main_branch_atom_count": self.main_branch_atom_count,
            "dangling_mass": self.dangling_mass,
            "total_mass": self.total_mass,
            "labels": [lab.tag for lab in self.labels],
        }


def compute_dmr(labels, s: Structure, exclude_h: bool = False) -> float:
    """Dangling mass over total mass.

    With ``exclude_h`` dangling hydrogens are left out of the numerator.
    """
    labels = [Branch(x) for x in labels]
    if len(labels) != s.n_atoms:
        raise ValueError(f"{len(labels)} labels for {s.n_atoms} atoms")
    masses = s.masses
    total = math.fsum(masses)
    if total <= 0:
        raise ValueError("total mass is zero")
    counted = {Branch.DANGLING} if exclude_h else {Branch.DANGLING, Branch.DANGLING_H}
    dangling = math.fsum(m for m, lab in zip(masses, labels) if lab in counted)
    return dangling / total


def classify_branches(
    g: BondGraph,
    s: Structure,
    max_ring: int = DEFAULT_MAX_RING,
    exclude_h: bool = False,
) -> BranchLabeling:
    if g.n_atoms != s.n_atoms:
        raise ValueError(f"graph has {g.n_atoms} atoms, structure has {s.n_atoms}")
    if not boundary_atoms(g):
        raise TopologyError("no boundary atoms: the structure is not periodically bonded")
    if _components(g.n_atoms, _adjacency(g)) != 1:
        raise TopologyError("bond graph is disconnected even with periodic images identified")

    path_main = main_branch_paths(g)
    main = set(path_main)
    for ring in find_periodic_rings(g, max_ring):
        if sum(a in path_main for a, _ in ring) >= RIGID_RING_MIN_MAIN:
            main.update(a for a, _ in ring)

    labels = []
    for i, el in enumerate(s.elements):
        if i in main:
            labels.append(Branch.MAIN)
        elif el == "H":
            labels.append(Branch.DANGLING_H)
        else:
            labels.append(Branch.DANGLING)
    masses = s.masses
    dangling_mass = math.fsum(m for m, lab in zip(masses, labels) if lab is not Branch.MAIN)
    return BranchLabeling(
        labels=tuple(labels),
        dmr=compute_dmr(labels, s, exclude_h=exclude_h),
        main_branch_atom_count=len(main),
        dangling_mass=dangling_mass,
        total_mass=math.fsum(masses),
    )
