"""Directed navigation meshes and multi-step reachability.

Vertices are 0-based internally. The edge-list file format and every
human-facing label are 1-based (``v1 .. vN``).
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .errors import MeshError

__all__ = [
    "NavMesh",
    "ReachabilityIndex",
    "build_grid_mesh",
    "build_reachability",
    "load_mesh",
    "serialize_mesh",
]


class NavMesh:
    """Directed graph of candidate sensor locations.

    Arcs are stored sorted lexicographically, which makes the outgoing arcs
    of vertex ``i`` the contiguous slice ``indptr[i]:indptr[i + 1]`` of
    ``arcs``. The position of an arc in that order is its *arc id*; policy
    parameters for transitions are laid out by arc id.
    """

    def __init__(self, num_vertices: int, arcs: Iterable[tuple[int, int]],
                 coordinates=None, grid_cells=None):
        if int(num_vertices) < 1:
            raise MeshError("mesh must have at least one vertex")
        self.num_vertices = n = int(num_vertices)
        arc_set = set()
        for i, j in arcs:
            i, j = int(i), int(j)
            if not (0 <= i < n and 0 <= j < n):
                raise MeshError(f"arc ({i + 1}, {j + 1}) out of range 1..{n}")
            if i == j:
                raise MeshError(f"self-loop at v{i + 1}")
            arc_set.add((i, j))
        self.arcs: tuple[tuple[int, int], ...] = tuple(sorted(arc_set))
        self.tails = np.array([a[0] for a in self.arcs], dtype=np.int64)
        self.heads = np.array([a[1] for a in self.arcs], dtype=np.int64)
        self.indptr = np.searchsorted(self.tails, np.arange(n + 1), side="left")
        self.out_neighbors: tuple[tuple[int, ...], ...] = tuple(
            tuple(int(h) for h in self.heads[self.indptr[i]:self.indptr[i + 1]])
            for i in range(n)
        )
        self.arc_index = {arc: e for e, arc in enumerate(self.arcs)}
        if coordinates is not None:
            coordinates = np.asarray(coordinates, dtype=float)
            if coordinates.shape != (n, 2):
                raise MeshError("coordinates must have shape (num_vertices, 2)")
        self.coordinates = coordinates
        self.grid_cells = None if grid_cells is None else tuple(
            (int(r), int(c)) for r, c in grid_cells)

    @property
    def num_arcs(self) -> int:
        return len(self.arcs)

    def out_arcs(self, vertex: int) -> range:
        """Arc ids leaving ``vertex``, aligned with ``out_neighbors[vertex]``."""
        return range(int(self.indptr[vertex]), int(self.indptr[vertex + 1]))

    def has_arc(self, i: int, j: int) -> bool:
        return (i, j) in self.arc_index

    def adjacency(self) -> np.ndarray:
        """Dense 0/1 adjacency matrix (for small meshes and tests)."""
        a = np.zeros((self.num_vertices, self.num_vertices), dtype=np.int64)
        if self.arcs:
            a[self.tails, self.heads] = 1
        return a

    def __eq__(self, other):
        if not isinstance(other, NavMesh):
            return NotImplemented
        return self.num_vertices == other.num_vertices and self.arcs == other.arcs

    def __hash__(self):
        return hash((self.num_vertices, self.arcs))

    def __repr__(self):
        return f"NavMesh(num_vertices={self.num_vertices}, num_arcs={self.num_arcs})"


def build_grid_mesh(rows: int, cols: int,
                    holes: Sequence[tuple[int, int, int, int]] = ()) -> NavMesh:
    """4-connected grid graph with rectangular holes removed.

    Parameters
    ----------
    rows, cols : int
        Number of grid points along each axis.
    holes : sequence of (row_lo, col_lo, row_hi, col_hi)
        Inclusive, 0-based cell rectangles whose grid points are removed.

    Vertices are numbered row-major over the remaining cells; coordinates
    lie on the unit square with ``x`` along columns and ``y`` along rows.
    """
    rows, cols = int(rows), int(cols)
    if rows < 1 or cols < 1:
        raise MeshError(f"grid dimensions must be positive, got {rows}x{cols}")
    removed = set()
    for hole in holes:
        if len(hole) != 4:
            raise MeshError(f"hole {hole!r} must be (row_lo, col_lo, row_hi, col_hi)")
        r0, c0, r1, c1 = (int(h) for h in hole)
        if not (0 <= r0 <= r1 < rows and 0 <= c0 <= c1 < cols):
            raise MeshError(f"hole {hole!r} outside the {rows}x{cols} grid")
        removed.update((r, c) for r in range(r0, r1 + 1) for c in range(c0, c1 + 1))

    cells = [(r, c) for r in range(rows) for c in range(cols) if (r, c) not in removed]
    if not cells:
        raise MeshError("grid is empty after removing holes")
    index = {cell: v for v, cell in enumerate(cells)}
    arcs = []
    for (r, c), v in index.items():
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            u = index.get((r + dr, c + dc))
            if u is not None:
                arcs.append((v, u))
    sx = 1.0 / (cols - 1) if cols > 1 else 0.0
    sy = 1.0 / (rows - 1) if rows > 1 else 0.0
    coords = [(c * sx if cols > 1 else 0.5, r * sy if rows > 1 else 0.5) for r, c in cells]
    return NavMesh(len(cells), arcs, coordinates=coords, grid_cells=cells)


def load_mesh(text: str) -> NavMesh:
    """Parse the 1-based edge-list format.

    The first non-comment line holds the vertex count; each further line is
    ``i j`` for a directed arc. Lines starting with ``#`` and blank lines are
    ignored.
    """
    num_vertices = None
    arcs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if num_vertices is None:
            if len(fields) != 1:
                raise MeshError(f"expected vertex count, got {line!r}", line=lineno)
            try:
                num_vertices = int(fields[0])
            except ValueError:
                raise MeshError(f"invalid vertex count {fields[0]!r}", line=lineno) from None
            if num_vertices < 1:
                raise MeshError("vertex count must be positive", line=lineno)
            continue
        if len(fields) != 2:
            raise MeshError(f"expected 'i j', got {line!r}", line=lineno)
        try:
            i, j = int(fields[0]), int(fields[1])
        except ValueError:
            raise MeshError(f"non-integer vertex in {line!r}", line=lineno) from None
        if not (1 <= i <= num_vertices and 1 <= j <= num_vertices):
            raise MeshError(f"vertex index out of range 1..{num_vertices}", line=lineno)
        if i == j:
            raise MeshError(f"self-loop at v{i}", line=lineno)
        arcs.append((i - 1, j - 1))
    if num_vertices is None:
        raise MeshError("missing vertex count")
    return NavMesh(num_vertices, arcs)


def serialize_mesh(mesh: NavMesh) -> str:
    lines = [str(mesh.num_vertices)]
    lines += [f"{i + 1} {j + 1}" for i, j in mesh.arcs]
    return "\n".join(lines) + "\n"


class ReachabilityIndex:
    """Walks of exactly ``r`` arcs between vertex pairs, for ``r = 1..order``.

    ``walks(r, i)`` maps each reachable ``j`` to the tuple of walks
    ``(i, k_1, ..., k_{r-1}, j)`` realizing it. Walks are kept explicitly
    because multi-step transition gradients sum over them.
    """

    def __init__(self, mesh: NavMesh, order: int):
        self.mesh = mesh
        self.order = order
        # _walks[r - 1][i] : dict j -> tuple of walks
        self._walks: list[list[dict[int, tuple[tuple[int, ...], ...]]]] = []

    def walks(self, r: int, i: int) -> dict[int, tuple[tuple[int, ...], ...]]:
        if not 1 <= r <= self.order:
            raise ValueError(f"step {r} outside 1..{self.order}")
        return self._walks[r - 1][i]

    def step_paths(self, r: int, i: int) -> list[int]:
        """Sorted vertices reachable from ``i`` by a walk of exactly ``r`` arcs."""
        return sorted(self.walks(r, i))


def build_reachability(mesh: NavMesh, order: int) -> ReachabilityIndex:
    order = int(order)
    if order < 1:
        raise ValueError("order must be >= 1")
    index = ReachabilityIndex(mesh, order)
    prev = [{j: ((i, j),) for j in mesh.out_neighbors[i]} for i in range(mesh.num_vertices)]
    index._walks.append(prev)
    for _ in range(2, order + 1):
        cur = []
        for i in range(mesh.num_vertices):
            table: dict[int, list[tuple[int, ...]]] = {}
            for walks in prev[i].values():
                for walk in walks:
                    for j in mesh.out_neighbors[walk[-1]]:
                        table.setdefault(j, []).append(walk + (j,))
            cur.append({j: tuple(w) for j, w in sorted(table.items())})
        index._walks.append(cur)
        prev = cur
    return index
