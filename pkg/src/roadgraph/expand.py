"""Iterative graph expansion from degree-1 frontier vertices.

Each iteration queries the predictor at every frontier vertex with the
elevated validity threshold, suppresses predictions that double back onto an
already-incident edge direction, then either merges a predicted point into a
nearby existing vertex or inserts it as a new vertex with a connecting edge.
Mutations are visible within the pass: a vertex inserted earlier in the same
iteration is a legal merge target. Newly inserted vertices join the frontier
on the next iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .adjacency import filter_valid
from .errors import ValidationError
from .graph import PlanarGraph


@dataclass(frozen=True)
class ExpandParams:
    merge_radius: float = 10.0  # D_merge: predicted points this close join an existing vertex
    t_valid_expand: float = 0.7
    iterations: int = 3
    include_isolated: bool = False  # seed from degree-0 vertices too (expand-only mode)
    back_angle_deg: float = 15.0  # suppress predictions within this angle of an incident edge

    def __post_init__(self):
        if self.merge_radius <= 0:
            raise ValidationError("merge_radius must be positive")
        if not 0.0 < self.t_valid_expand <= 1.0:
            raise ValidationError("t_valid_expand must be in (0, 1]")
        if self.iterations < 0:
            raise ValidationError("iterations must be >= 0")
        if not 0.0 <= self.back_angle_deg < 180.0:
            raise ValidationError("back_angle_deg must be in [0, 180)")


@dataclass(frozen=True)
class IterationStats:
    frontier: int
    insertions: int
    merges: int

    @property
    def changes(self) -> int:
        return self.insertions + self.merges


def frontier(g: PlanarGraph, include_isolated: bool = False) -> list[int]:
    """Degree-1 vertices in ascending index order; degree-0 too when
    include_isolated is set (needed to grow from an edgeless initial graph)."""
    deg = g.degrees()
    mask = deg == 1
    if include_isolated:
        mask |= deg == 0
    return np.nonzero(mask)[0].tolist()


class _WorkingGraph:
    """Mutable vertex/edge state for one or more expansion passes."""

    def __init__(self, g: PlanarGraph):
        self.positions = [tuple(p) for p in g.vertices]
        self._pos_arr = np.asarray(g.vertices, dtype=np.float64).reshape(-1, 2).copy()
        self.edges = {tuple(e) for e in np.sort(g.edges, axis=1).tolist()} if g.num_edges else set()
        self.adjacency: dict[int, set[int]] = {i: set() for i in range(len(self.positions))}
        for i, j in self.edges:
            self.adjacency[i].add(j)
            self.adjacency[j].add(i)

    def nearest_other(self, p, radius: float, exclude: int):
        """Nearest vertex index != exclude within radius, ties to lowest index."""
        if len(self.positions) == 0:
            return None
        d = np.hypot(self._pos_arr[:, 0] - p[0], self._pos_arr[:, 1] - p[1])
        d[exclude] = np.inf
        best = int(np.argmin(d))  # argmin takes the lowest index on ties
        if d[best] > radius:
            return None
        return best

    def add_vertex(self, p) -> int:
        idx = len(self.positions)
        self.positions.append((float(p[0]), float(p[1])))
        self._pos_arr = np.vstack([self._pos_arr, [p]])
        self.adjacency[idx] = set()
        return idx

    def add_edge(self, i: int, j: int) -> bool:
        key = (min(i, j), max(i, j))
        if key in self.edges:
            return False
        self.edges.add(key)
        self.adjacency[i].add(j)
        self.adjacency[j].add(i)
        return True

    def to_graph(self) -> PlanarGraph:
        return PlanarGraph(self.positions, sorted(self.edges))


def _suppressed(p, origin, incident_dirs, cos_limit: float) -> bool:
    """True when p's direction from origin lies within the back-angle cone of
    any incident edge direction."""
    vx, vy = p[0] - origin[0], p[1] - origin[1]
    nv = math.hypot(vx, vy)
    if nv == 0.0:
        return True  # predicting the frontier vertex itself is never useful
    for dx, dy in incident_dirs:
        nd = math.hypot(dx, dy)
        if nd == 0.0:
            continue
        if (vx * dx + vy * dy) / (nv * nd) > cos_limit:
            return True
    return False


def _run_iteration(work: _WorkingGraph, predictor, params: ExpandParams) -> IterationStats:
    deg = {i: len(nbrs) for i, nbrs in work.adjacency.items()}
    front = [i for i in sorted(work.adjacency) if deg[i] == 1 or (params.include_isolated and deg[i] == 0)]
    if not front:
        return IterationStats(frontier=0, insertions=0, merges=0)

    predictions = predictor.predict([work.positions[v] for v in front])
    cos_limit = math.cos(math.radians(params.back_angle_deg))
    insertions = merges = 0
    for v, pred in zip(front, predictions):
        origin = work.positions[v]
        points = filter_valid(pred, params.t_valid_expand)
        incident = [
            (work.positions[u][0] - origin[0], work.positions[u][1] - origin[1])
            for u in sorted(work.adjacency[v])
        ]
        for p in points:
            if incident and _suppressed(p, origin, incident, cos_limit):
                continue
            hit = work.nearest_other(p, params.merge_radius, exclude=v)
            if hit is not None:
                if work.add_edge(v, hit):
                    merges += 1
            else:
                new = work.add_vertex(p)
                work.add_edge(v, new)
                insertions += 1
    return IterationStats(frontier=len(front), insertions=insertions, merges=merges)


def expand_once(g: PlanarGraph, predictor, params: ExpandParams | None = None):
    """One expansion pass. Returns (new graph, stats for the pass)."""
    params = params or ExpandParams()
    work = _WorkingGraph(g)
    stats = _run_iteration(work, predictor, params)
    return work.to_graph(), stats


def expand(g: PlanarGraph, predictor, params: ExpandParams | None = None):
    """Run up to params.iterations expansion passes, stopping early once a
    pass makes no changes. Returns (final graph, per-pass stats list)."""
    params = params or ExpandParams()
    work = _WorkingGraph(g)
    history: list[IterationStats] = []
    for _ in range(params.iterations):
        stats = _run_iteration(work, predictor, params)
        history.append(stats)
        if stats.changes == 0:
            break
    return work.to_graph(), history
