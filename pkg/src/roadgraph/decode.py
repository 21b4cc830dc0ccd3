"""Initial graph construction by bidirectional discrepancy-minimizing matching.

A link between candidates requires mutual constitution: each endpoint must
own a valid prediction landing within the match radius of the other. Links
are ranked by the discrepancy

    d = l + w * (1 - cos(theta1)) + w * (1 - cos(theta2))

where l sums both directional endpoint misses and the thetas measure how far
each prediction's direction deviates from the actual partner direction.
Greedy ascending-d acceptance with per-slot consumption turns the ranked
links into a graph; candidates without accepted links stay isolated (they
become expansion seeds).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .adjacency import AdjacencyPrediction, filter_valid, valid_slots
from .detect import candidate_positions
from .errors import ValidationError
from .graph import PlanarGraph


@dataclass(frozen=True)
class DecodeParams:
    angle_weight: float = 10.0  # w in the discrepancy; 10 converts radians-scale misses to pixels
    match_radius: float = 15.0  # r: how far a prediction may land from its matched candidate
    t_valid: float = 0.5

    def __post_init__(self):
        if self.angle_weight <= 0:
            raise ValidationError("angle_weight must be positive")
        if self.match_radius <= 0:
            raise ValidationError("match_radius must be positive")
        if not 0.0 < self.t_valid <= 1.0:
            raise ValidationError("t_valid must be in (0, 1]")


@dataclass(frozen=True)
class LinkCandidate:
    source: int
    target: int
    forward_slot: int
    reverse_slot: int
    discrepancy: float


def _cos_between(a, b) -> float:
    # zero-length direction vectors contribute no angle penalty
    na = math.hypot(a[0], a[1])
    nb = math.hypot(b[0], b[1])
    if na == 0.0 or nb == 0.0:
        return 1.0
    c = (a[0] * b[0] + a[1] * b[1]) / (na * nb)
    return max(-1.0, min(1.0, c))


def discrepancy(v_n, u_n, v_c, u_c, angle_weight: float = 10.0) -> float:
    """Mutual-constitution discrepancy between candidates v_n and v_c given
    their respective predictions u_n (from v_n) and u_c (from v_c)."""
    v_n = np.asarray(v_n, dtype=np.float64)
    u_n = np.asarray(u_n, dtype=np.float64)
    v_c = np.asarray(v_c, dtype=np.float64)
    u_c = np.asarray(u_c, dtype=np.float64)
    l = math.hypot(*(u_n - v_c)) + math.hypot(*(u_c - v_n))
    cos1 = _cos_between(u_n - v_n, v_c - v_n)
    cos2 = _cos_between(u_c - v_c, v_n - v_c)
    return l + angle_weight * (1.0 - cos1) + angle_weight * (1.0 - cos2)


def enumerate_links(candidates, predictions, params: DecodeParams | None = None):
    """All mutually-constituted links. Each unordered candidate pair appears
    at most once, in its minimal-discrepancy orientation."""
    params = params or DecodeParams()
    if len(candidates) != len(predictions):
        raise ValidationError(
            f"{len(candidates)} candidates but {len(predictions)} prediction records"
        )
    n = len(candidates)
    if n == 0:
        return []
    pos = candidate_positions(candidates)
    tree = cKDTree(pos)
    r = params.match_radius

    slots = []
    points = []
    for pred in predictions:
        s = valid_slots(pred, params.t_valid)
        slots.append(s)
        points.append(filter_valid(pred, params.t_valid))

    best: dict[tuple[int, int], LinkCandidate] = {}
    for v_n in range(n):
        for slot_f, u_n in zip(slots[v_n], points[v_n]):
            for v_c in sorted(tree.query_ball_point(u_n, r=r)):
                if v_c == v_n:
                    continue
                if len(points[v_c]) == 0:
                    continue
                back = np.hypot(*(points[v_c] - pos[v_n]).T)
                k = int(np.argmin(back))  # ties: argmin takes the lowest slot position
                if back[k] > r:
                    continue
                slot_r = int(slots[v_c][k])
                d = discrepancy(pos[v_n], u_n, pos[v_c], points[v_c][k], params.angle_weight)
                link = LinkCandidate(
                    source=v_n,
                    target=v_c,
                    forward_slot=int(slot_f),
                    reverse_slot=slot_r,
                    discrepancy=d,
                )
                key = (min(v_n, v_c), max(v_n, v_c))
                cur = best.get(key)
                if cur is None or _link_order(link) < _link_order(cur):
                    best[key] = link
    return sorted(best.values(), key=_link_order)


def _link_order(link: LinkCandidate):
    return (link.discrepancy, link.source, link.target, link.forward_slot, link.reverse_slot)


def decode_initial_graph(candidates, predictions, params: DecodeParams | None = None) -> PlanarGraph:
    """Greedy ascending-discrepancy link acceptance with slot consumption.

    Every candidate becomes a vertex; isolated candidates are retained."""
    params = params or DecodeParams()
    links = enumerate_links(candidates, predictions, params)
    used_slots: set[tuple[int, int]] = set()
    edges: set[tuple[int, int]] = set()
    for link in links:
        fkey = (link.source, link.forward_slot)
        rkey = (link.target, link.reverse_slot)
        ekey = (min(link.source, link.target), max(link.source, link.target))
        if fkey in used_slots or rkey in used_slots or ekey in edges:
            continue
        used_slots.add(fkey)
        used_slots.add(rkey)
        edges.add(ekey)
    return PlanarGraph(candidate_positions(candidates), sorted(edges))
