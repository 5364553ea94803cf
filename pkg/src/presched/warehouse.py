"""Two-level warehouse representation.

The low level is the roadmap ``G = (V, E)`` robots drive on. The high level
is a weighted directed graph over sectors (contiguous groups of roadmap
vertices) which the forecaster convolves over.
"""

from __future__ import annotations

import json
import warnings
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

UNREACHABLE = float("inf")
MAP_FORMAT_VERSION = 1


class MalformedIncidenceError(ValueError):
    pass


@dataclass(frozen=True)
class Edge:
    source: int
    target: int
    length: float
    directed: bool = True
    kind: str = "road"


class Roadmap:
    """Topology graph with a total vertex -> sector assignment.

    Undirected edges are stored as two arcs. Vertex ids are arbitrary
    integers; internally every vertex gets a dense index in sorted-id order.
    """

    def __init__(
        self,
        vertices,
        edges,
        sector_of: dict[int, int],
        coords: dict[int, tuple[float, float]] | None = None,
        sector_types: dict[int, str] | None = None,
        depots=(),
    ) -> None:
        self.vertices: tuple[int, ...] = tuple(sorted(int(v) for v in vertices))
        if len(set(self.vertices)) != len(self.vertices):
            raise ValueError("duplicate vertex ids")
        self.index = {v: i for i, v in enumerate(self.vertices)}
        self.edges: tuple[Edge, ...] = tuple(edges)
        for e in self.edges:
            if e.source not in self.index or e.target not in self.index:
                raise ValueError(f"edge {e.source}->{e.target} references an unknown vertex")
            if not e.length > 0:
                raise ValueError(f"edge {e.source}->{e.target} has non-positive length {e.length}")
        missing = [v for v in self.vertices if v not in sector_of]
        if missing:
            raise ValueError(f"vertices without a sector: {missing[:5]}")
        self.sector_of = {int(v): int(s) for v, s in sector_of.items() if v in self.index}
        self.sectors: tuple[int, ...] = tuple(sorted(set(self.sector_of.values())))
        self.members: dict[int, tuple[int, ...]] = {s: () for s in self.sectors}
        for v in self.vertices:
            self.members[self.sector_of[v]] += (v,)
        self.coords = dict(coords or {})
        self.sector_types = {s: (sector_types or {}).get(s, "default") for s in self.sectors}
        self.depots: tuple[int, ...] = tuple(int(d) for d in depots)
        for d in self.depots:
            if d not in self.index:
                raise ValueError(f"depot {d} is not a vertex")

        n = len(self.vertices)
        arcs: dict[tuple[int, int], float] = {}
        for e in self.edges:
            pairs = [(e.source, e.target)] if e.directed else [(e.source, e.target), (e.target, e.source)]
            for a, b in pairs:
                key = (self.index[a], self.index[b])
                arcs[key] = min(arcs.get(key, np.inf), float(e.length))
        keys = sorted(arcs)
        rows = np.array([k[0] for k in keys], dtype=np.int64)
        cols = np.array([k[1] for k in keys], dtype=np.int64)
        vals = np.array([arcs[k] for k in keys], dtype=np.float64)
        self.graph = csr_matrix((vals, (rows, cols)), shape=(n, n))
        self.graph.sort_indices()
        self._reverse = self.graph.T.tocsr()
        self._reverse.sort_indices()
        self.arc_count = len(keys)
        self._to = lru_cache(maxsize=4096)(self._dist_to)
        self._from = lru_cache(maxsize=512)(self._dist_from)

    def __len__(self) -> int:
        return len(self.vertices)

    def check_vertex(self, v: int) -> int:
        try:
            return self.index[int(v)]
        except (KeyError, TypeError, ValueError):
            raise ValueError(f"unknown vertex {v!r}") from None

    def _dist_to(self, target_idx: int) -> np.ndarray:
        d = dijkstra(self._reverse, directed=True, indices=target_idx)
        d.setflags(write=False)
        return d

    def _dist_from(self, source_idx: int) -> np.ndarray:
        d = dijkstra(self.graph, directed=True, indices=source_idx)
        d.setflags(write=False)
        return d

    def distances_to(self, target: int) -> np.ndarray:
        """Shortest-path length from every vertex (dense index) to ``target``."""
        return self._to(self.check_vertex(target))

    def distances_from(self, source: int) -> np.ndarray:
        return self._from(self.check_vertex(source))

    def distance(self, u: int, v: int) -> float:
        return float(self.distances_to(v)[self.check_vertex(u)])

    def next_hop(self, u: int, target: int) -> tuple[int, float] | None:
        """First arc of a shortest path ``u -> target`` (smallest id on ties)."""
        ui = self.check_vertex(u)
        dist = self.distances_to(target)
        if ui == self.index[target] or not np.isfinite(dist[ui]):
            return None
        start, stop = self.graph.indptr[ui], self.graph.indptr[ui + 1]
        nbrs = self.graph.indices[start:stop]
        lengths = self.graph.data[start:stop]
        totals = lengths + dist[nbrs]
        best = np.flatnonzero(np.isclose(totals, totals.min(), rtol=1e-12, atol=1e-9))
        # nbrs are sorted, so the first hit has the smallest vertex id
        j = best[0]
        return self.vertices[nbrs[j]], float(lengths[j])

    def shortest_path(self, u: int, v: int) -> tuple[float, list[int]]:
        cost = self.distance(u, v)
        if not np.isfinite(cost):
            return UNREACHABLE, []
        path = [u]
        while path[-1] != v:
            hop = self.next_hop(path[-1], v)
            path.append(hop[0])
        return cost, path

    def edge_kind_between_sectors(self) -> dict[tuple[int, int], str]:
        """Most frequent low-level edge kind crossing from sector i to sector j."""
        counts: dict[tuple[int, int], Counter] = {}
        for e in self.edges:
            pairs = [(e.source, e.target)] if e.directed else [(e.source, e.target), (e.target, e.source)]
            for a, b in pairs:
                si, sj = self.sector_of[a], self.sector_of[b]
                if si != sj:
                    counts.setdefault((si, sj), Counter())[e.kind] += 1
        return {k: sorted(c.items(), key=lambda kv: (-kv[1], kv[0]))[0][0] for k, c in counts.items()}


def shortest_path_cost(roadmap: Roadmap, u: int, v: int) -> tuple[float, list[int]]:
    """Minimal directed path length ``u -> v`` and one such path.

    Unreachable pairs give ``(inf, [])``.
    """
    roadmap.check_vertex(u)
    roadmap.check_vertex(v)
    return roadmap.shortest_path(u, v)


def sector_center(roadmap: Roadmap, sector: int) -> int:
    """Medoid of a sector: the member with least total distance to the others."""
    members = roadmap.members.get(sector, ())
    if not members:
        raise ValueError(f"sector {sector!r} is empty or unknown")
    if len(members) == 1:
        return members[0]
    idx = np.array([roadmap.index[m] for m in members])
    d = dijkstra(roadmap.graph, directed=True, indices=idx)[:, idx]
    unreachable = (~np.isfinite(d)).sum(axis=1)
    totals = np.where(np.isfinite(d), d, 0.0).sum(axis=1)
    best = min(range(len(members)), key=lambda i: (unreachable[i], totals[i], members[i]))
    return members[best]


def build_sector_adjacency(pairwise_dist, sigma: float, epsilon: float = 0.1) -> np.ndarray:
    """Thresholded Gaussian kernel over sector distances.

    ``A_ij = exp(-d_ij^2 / sigma^2)`` if that is at least ``epsilon`` and
    ``i != j``, otherwise 0.
    """
    d = np.asarray(pairwise_dist, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError("pairwise distances must be a square matrix")
    if np.any(d < 0):
        raise ValueError("distances must be nonnegative")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if epsilon >= 1:
        warnings.warn("epsilon >= 1 zeroes every off-diagonal entry", RuntimeWarning, stacklevel=2)
    with np.errstate(over="ignore", invalid="ignore"):
        k = np.exp(-(d**2) / sigma**2)
    k = np.where(np.isfinite(d), k, 0.0)
    a = np.where(k >= epsilon, k, 0.0)
    np.fill_diagonal(a, 0.0)
    return a


@dataclass
class SectorGraph:
    """High-level directed graph over sectors plus its hypergraph incidence."""

    adjacency: np.ndarray  # (n_sectors, n_sectors)
    edges: list[tuple[int, int]]  # high-level arcs as (row, col) indices
    dist: np.ndarray  # per high-level arc, meters
    incidence: np.ndarray  # (n_sectors, n_edges), binary
    sectors: list[int]  # sector id of each row
    centers: dict[int, int]
    node_types: dict[int, str]
    edge_types: list[str]
    pairwise: np.ndarray = field(repr=False, default=None)
    sigma: float = 0.0
    epsilon: float = 0.1

    @property
    def n_sectors(self) -> int:
        return len(self.sectors)

    @property
    def n_edges(self) -> int:
        return len(self.edges)


def incidence_from_edges(n: int, edges) -> np.ndarray:
    H = np.zeros((n, len(edges)))
    for k, (i, j) in enumerate(edges):
        H[i, k] = 1.0
        H[j, k] = 1.0
    return H


def build_sector_graph(roadmap: Roadmap, sigma: float | None = None, epsilon: float = 0.1) -> SectorGraph:
    sectors = list(roadmap.sectors)
    centers = {s: sector_center(roadmap, s) for s in sectors}
    n = len(sectors)
    pairwise = np.zeros((n, n))
    for i, s in enumerate(sectors):
        dfrom = roadmap.distances_from(centers[s])
        for j, t in enumerate(sectors):
            pairwise[i, j] = dfrom[roadmap.index[centers[t]]]
    if sigma is None:
        off = pairwise[~np.eye(n, dtype=bool) & np.isfinite(pairwise)]
        sigma = float(off.std()) if off.size and off.std() > 0 else float(max(off.max(initial=1.0), 1.0))
    A = build_sector_adjacency(pairwise, sigma, epsilon)
    edges = [(i, j) for i in range(n) for j in range(n) if A[i, j] > 0]
    kinds = roadmap.edge_kind_between_sectors()
    edge_types = [kinds.get((sectors[i], sectors[j]), "remote") for i, j in edges]
    return SectorGraph(
        adjacency=A,
        edges=edges,
        dist=np.array([pairwise[i, j] for i, j in edges]),
        incidence=incidence_from_edges(n, edges),
        sectors=sectors,
        centers=centers,
        node_types={i: roadmap.sector_types[s] for i, s in enumerate(sectors)},
        edge_types=edge_types,
        pairwise=pairwise,
        sigma=float(sigma),
        epsilon=epsilon,
    )


@dataclass
class TaskFlowTensor:
    """Per-sector task counts, shape ``(n_sectors, n_frames, n_features)``."""

    data: np.ndarray
    frame_interval: float = 30.0

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim == 2:
            self.data = self.data[:, :, None]
        if self.data.ndim != 3:
            raise ValueError("task flow must be (sectors, frames, features)")
        if np.any(self.data < 0):
            raise ValueError("task flow entries must be nonnegative")
        if not self.frame_interval > 0:
            raise ValueError("frame_interval must be positive")

    @property
    def n_sectors(self) -> int:
        return self.data.shape[0]

    @property
    def n_frames(self) -> int:
        return self.data.shape[1]


# ---------------------------------------------------------------- map files


def roadmap_to_dict(roadmap: Roadmap) -> dict:
    return {
        "format": "presched-map",
        "version": MAP_FORMAT_VERSION,
        "vertices": [
            {"id": v, "x": roadmap.coords.get(v, (0.0, 0.0))[0], "y": roadmap.coords.get(v, (0.0, 0.0))[1]}
            for v in roadmap.vertices
        ],
        "edges": [
            {"from": e.source, "to": e.target, "length": e.length, "type": e.kind, "directed": e.directed}
            for e in roadmap.edges
        ],
        "sectors": [
            {"id": s, "members": list(roadmap.members[s]), "type": roadmap.sector_types[s]} for s in roadmap.sectors
        ],
        "depots": list(roadmap.depots),
    }


def roadmap_from_dict(doc: dict) -> Roadmap:
    if doc.get("format") != "presched-map":
        raise ValueError("not a presched map document")
    if int(doc.get("version", 0)) != MAP_FORMAT_VERSION:
        raise ValueError(f"unsupported map version {doc.get('version')}")
    coords = {int(v["id"]): (float(v.get("x", 0.0)), float(v.get("y", 0.0))) for v in doc["vertices"]}
    edges = [
        Edge(int(e["from"]), int(e["to"]), float(e["length"]), bool(e.get("directed", True)), str(e.get("type", "road")))
        for e in doc["edges"]
    ]
    sector_of: dict[int, int] = {}
    types = {}
    for s in doc["sectors"]:
        sid = int(s["id"])
        types[sid] = str(s.get("type", "default"))
        for m in s["members"]:
            if int(m) in sector_of:
                raise ValueError(f"vertex {m} belongs to two sectors")
            sector_of[int(m)] = sid
    return Roadmap(list(coords), edges, sector_of, coords, types, doc.get("depots", ()))


def save_map(roadmap: Roadmap, path) -> None:
    Path(path).write_text(json.dumps(roadmap_to_dict(roadmap), separators=(",", ":")))


def load_map(path) -> Roadmap:
    return roadmap_from_dict(json.loads(Path(path).read_text()))
