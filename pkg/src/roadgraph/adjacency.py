"""Adjacency prediction: the per-candidate neighbor-proposal contract.

Each query point gets exactly `n_queries` prediction entries of (relative
offset, road probability), padded with zero-probability entries. Two
implementations ship here: a file-backed predictor replaying externally
produced records, and a ground-truth oracle with controllable corruption
used to close the loop in tests and synthetic pipelines.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ParseError, PredictionLookupError, ValidationError
from .graph import PlanarGraph, SpatialIndex, nearest_location_on_edges


@dataclass(frozen=True)
class PredictorConfig:
    n_queries: int = 10
    t_valid: float = 0.5
    t_valid_expand: float = 0.7
    roi_halfwidth: float = 32.0  # maximum prediction offset reach, pixels

    def __post_init__(self):
        if self.n_queries < 1:
            raise ValidationError("n_queries must be >= 1")
        if not 0.0 < self.t_valid <= self.t_valid_expand <= 1.0:
            raise ValidationError(
                "thresholds must satisfy 0 < t_valid <= t_valid_expand <= 1"
            )
        if self.roi_halfwidth <= 0:
            raise ValidationError("roi_halfwidth must be positive")


@dataclass(frozen=True)
class OracleConfig:
    noise_sigma: float = 0.0
    drop_prob: float = 0.0
    spurious_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValidationError("noise_sigma must be >= 0")
        for name in ("drop_prob", "spurious_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name} must be in [0, 1], got {v}")

    @property
    def is_clean(self) -> bool:
        return self.noise_sigma == 0 and self.drop_prob == 0 and self.spurious_prob == 0


@dataclass
class AdjacencyPrediction:
    """Exactly N (offset, p_road) entries for one query point."""

    query: tuple[float, float]
    offsets: np.ndarray  # (N, 2) relative pixels
    p_road: np.ndarray  # (N,) in [0, 1]

    def __post_init__(self):
        self.offsets = np.asarray(self.offsets, dtype=np.float64).reshape(-1, 2)
        self.p_road = np.asarray(self.p_road, dtype=np.float64).reshape(-1)
        if len(self.offsets) != len(self.p_road):
            raise ValidationError("offsets and p_road lengths differ")
        if not np.isfinite(self.offsets).all():
            raise ValidationError("prediction offsets must be finite")
        if self.p_road.size and (self.p_road.min() < 0 or self.p_road.max() > 1):
            raise ValidationError("p_road values must lie in [0, 1]")

    @property
    def n_entries(self) -> int:
        return len(self.p_road)


def pad_prediction(query, offsets, p_road, n: int) -> AdjacencyPrediction:
    """Pad (or truncate) entries to exactly n, padding with p_road = 0."""
    offsets = np.asarray(offsets, dtype=np.float64).reshape(-1, 2)[:n]
    p_road = np.asarray(p_road, dtype=np.float64).reshape(-1)[:n]
    k = len(p_road)
    if k < n:
        offsets = np.vstack([offsets, np.zeros((n - k, 2))])
        p_road = np.concatenate([p_road, np.zeros(n - k)])
    return AdjacencyPrediction(query=(float(query[0]), float(query[1])), offsets=offsets, p_road=p_road)


def filter_valid(pred: AdjacencyPrediction, threshold: float) -> np.ndarray:
    """Entries with p_road >= threshold, as absolute (x, y) points."""
    if not 0.0 < threshold <= 1.0:
        raise ValidationError(f"threshold must be in (0, 1], got {threshold}")
    sel = pred.p_road >= threshold
    return np.asarray(pred.query, dtype=np.float64) + pred.offsets[sel]


def valid_slots(pred: AdjacencyPrediction, threshold: float) -> np.ndarray:
    """Slot indices passing the validity threshold (same order as filter_valid)."""
    if not 0.0 < threshold <= 1.0:
        raise ValidationError(f"threshold must be in (0, 1], got {threshold}")
    return np.nonzero(pred.p_road >= threshold)[0]


# ---------------------------------------------------------------------------
# Ground-truth oracle
# ---------------------------------------------------------------------------


def _query_entropy(seed: int, q) -> list[int]:
    # per-query RNG stream: stable under any prediction batching/order
    xb = int(np.float64(q[0]).view(np.uint64))
    yb = int(np.float64(q[1]).view(np.uint64))
    return [int(seed) & 0xFFFFFFFFFFFFFFFF, xb, yb]


class GroundTruthPredictor:
    """Oracle standing in for a learned adjacency model.

    Queries snapping onto a graph vertex (within snap_radius) get that
    vertex's neighbors as true entries; queries near an edge interior get the
    two along-edge directions at `travel_interval` distance. True entries
    beyond the offset reach are omitted. With a fully clean OracleConfig the
    output is exact (p_road = 1); otherwise entries are dropped, jittered and
    rescored, and spurious entries fill padding slots at random.
    """

    def __init__(
        self,
        graph: PlanarGraph,
        config: PredictorConfig | None = None,
        oracle: OracleConfig | None = None,
        snap_radius: float = 4.0,
        travel_interval: float = 20.0,
    ):
        if graph.is_empty:
            raise ValidationError("oracle requires a non-empty ground-truth graph")
        self.graph = graph
        self.config = config or PredictorConfig()
        self.oracle = oracle or OracleConfig()
        self.snap_radius = float(snap_radius)
        self.travel_interval = float(travel_interval)
        self._index = SpatialIndex(graph.vertices)

    def predict(self, points) -> list[AdjacencyPrediction]:
        return [self._predict_one(np.asarray(p, dtype=np.float64)) for p in points]

    def _true_targets(self, q: np.ndarray) -> list[np.ndarray]:
        hit = self._index.nearest_within(q, self.snap_radius)
        if hit is not None:
            v = hit[0]
            return [self.graph.vertices[u] for u in self.graph.neighbors(v)]
        loc = nearest_location_on_edges(self.graph, q)
        if loc is None or loc[0] > self.snap_radius:
            return []
        _, e, off = loc
        i, j = self.graph.edges[e]
        a, b = self.graph.vertices[i], self.graph.vertices[j]
        length = float(np.hypot(*(b - a)))
        if length == 0.0:
            return []
        u = (b - a) / length
        proj = a + off * u
        return [proj + self.travel_interval * u, proj - self.travel_interval * u]

    def _predict_one(self, q: np.ndarray) -> AdjacencyPrediction:
        cfg, orc = self.config, self.oracle
        targets = self._true_targets(q)
        rng = np.random.default_rng(np.random.SeedSequence(_query_entropy(orc.seed, q)))

        offsets, probs = [], []
        for target in targets:
            off = target - q
            if np.hypot(off[0], off[1]) > cfg.roi_halfwidth:
                continue
            if orc.is_clean:
                offsets.append(off)
                probs.append(1.0)
                continue
            if rng.random() < orc.drop_prob:
                continue
            jitter = rng.normal(0.0, orc.noise_sigma, 2) if orc.noise_sigma > 0 else 0.0
            offsets.append(off + jitter)
            probs.append(rng.uniform(0.8, 1.0))

        if not orc.is_clean and orc.spurious_prob > 0:
            for _ in range(cfg.n_queries - len(offsets)):
                if rng.random() < orc.spurious_prob:
                    offsets.append(rng.uniform(-cfg.roi_halfwidth, cfg.roi_halfwidth, 2))
                    probs.append(rng.uniform(0.5, 0.9))

        return pad_prediction(q, offsets, probs, cfg.n_queries)


def oracle_predict(gt: PlanarGraph, query, cfg: OracleConfig, **kwargs) -> AdjacencyPrediction:
    """One-off oracle prediction for a single query point."""
    return GroundTruthPredictor(gt, oracle=cfg, **kwargs).predict([query])[0]


# ---------------------------------------------------------------------------
# File-backed predictor + JSONL interchange
# ---------------------------------------------------------------------------


class FilePredictor:
    """Replays stored predictions; each query must land within 1 px of a
    stored query point."""

    LOOKUP_RADIUS = 1.0

    def __init__(self, records: list[AdjacencyPrediction]):
        if records:
            ns = {r.n_entries for r in records}
            if len(ns) > 1:
                raise ValidationError(f"inconsistent entry counts across records: {sorted(ns)}")
        self.records = list(records)
        self._index = SpatialIndex([r.query for r in self.records])

    def predict(self, points) -> list[AdjacencyPrediction]:
        out = []
        for p in points:
            hit = self._index.nearest_within(p, self.LOOKUP_RADIUS) if self.records else None
            if hit is None:
                raise PredictionLookupError(
                    f"no stored prediction within 1 px of ({float(p[0])}, {float(p[1])})"
                )
            out.append(self.records[hit[0]])
        return out

    @classmethod
    def from_jsonl(cls, path) -> "FilePredictor":
        return cls(read_predictions_jsonl(path))


def write_predictions_jsonl(path, preds) -> None:
    """One object per line: {"q": [x, y], "p": [[dx, dy, prob], ...]}."""
    with open(path, "w", encoding="utf-8") as fh:
        for pred in preds:
            rec = {
                "q": [float(pred.query[0]), float(pred.query[1])],
                "p": [
                    [float(dx), float(dy), float(pr)]
                    for (dx, dy), pr in zip(pred.offsets, pred.p_road)
                ],
            }
            fh.write(json.dumps(rec, separators=(",", ":")))
            fh.write("\n")


def read_predictions_jsonl(path) -> list[AdjacencyPrediction]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid prediction JSON: {exc.msg}", line=lineno, column=exc.colno) from exc
            if not isinstance(rec, dict) or "q" not in rec or "p" not in rec:
                raise ParseError("prediction record needs 'q' and 'p'", line=lineno)
            q = rec["q"]
            entries = rec["p"]
            if len(q) != 2:
                raise ParseError(f"query must be [x, y], got {q!r}", line=lineno)
            if any(len(e) != 3 for e in entries):
                raise ParseError("each entry must be [dx, dy, prob]", line=lineno)
            try:
                records.append(
                    AdjacencyPrediction(
                        query=(float(q[0]), float(q[1])),
                        offsets=[(e[0], e[1]) for e in entries] or np.zeros((0, 2)),
                        p_road=[e[2] for e in entries] or np.zeros(0),
                    )
                )
            except ValidationError as exc:
                raise ParseError(str(exc), line=lineno) from exc
    if records:
        ns = {r.n_entries for r in records}
        if len(ns) > 1:
            raise ParseError(f"records disagree on entry count: {sorted(ns)}")
    return records
