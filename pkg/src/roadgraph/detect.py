"""Candidate vertex detection from score maps.

Three co-registered probability grids (keypoint, sampling point, road
surface) are reduced to a fused candidate set: local extrema of the
keypoint and sampling channels, plus thresholded road-surface pixels as a
lower-precedence supplement, all cleaned up by non-maximum suppression.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .errors import ParseError, ValidationError

SOURCE_KEYPOINT = "keypoint"
SOURCE_SAMPLING = "sampling"
SOURCE_ROAD = "road"
_SOURCE_RANK = {SOURCE_KEYPOINT: 0, SOURCE_SAMPLING: 1, SOURCE_ROAD: 2}

SCOREMAP_MAGIC = b"RGF1"


@dataclass
class ScoreMaps:
    """Keypoint / sampling-point / road-surface probability grids, H x W each."""

    keypoint: np.ndarray
    sampling: np.ndarray
    road: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.keypoint, dtype=np.float64)
        s = np.asarray(self.sampling, dtype=np.float64)
        r = np.asarray(self.road, dtype=np.float64)
        if k.ndim != 2:
            raise ValidationError("score maps must be 2-D grids")
        if k.shape != s.shape or k.shape != r.shape:
            raise ValidationError(
                f"score map shapes differ: {k.shape}, {s.shape}, {r.shape}"
            )
        for name, arr in (("keypoint", k), ("sampling", s), ("road", r)):
            if arr.size and (not np.isfinite(arr).all() or arr.min() < 0 or arr.max() > 1):
                raise ValidationError(f"{name} map values must lie in [0, 1]")
        self.keypoint, self.sampling, self.road = k, s, r

    @property
    def shape(self) -> tuple[int, int]:
        return self.keypoint.shape

    @property
    def channels(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (self.keypoint, self.sampling, self.road)

    def crop(self, x0: int, y0: int, x1: int, y1: int) -> "ScoreMaps":
        return ScoreMaps(
            keypoint=self.keypoint[y0:y1, x0:x1],
            sampling=self.sampling[y0:y1, x0:x1],
            road=self.road[y0:y1, x0:x1],
        )


@dataclass(frozen=True)
class Candidate:
    x: float
    y: float
    score: float
    source: str

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


def candidate_positions(cands) -> np.ndarray:
    if not cands:
        return np.zeros((0, 2), dtype=np.float64)
    return np.array([[c.x, c.y] for c in cands], dtype=np.float64)


@dataclass(frozen=True)
class DetectionConfig:
    """Thresholds and radii for candidate detection.

    The road channel is a supplement only, so it gets a stricter probability
    gate and always ranks below keypoint/sampling candidates in the final
    suppression pass. The NMS radius stays below the expansion merge radius
    so detection never pre-merges vertices that expansion should arbitrate.
    """

    keypoint_threshold: float = 0.5
    sampling_threshold: float = 0.5
    road_threshold: float = 0.8
    window: int = 5
    nms_radius: float = 6.0

    def __post_init__(self):
        for name in ("keypoint_threshold", "sampling_threshold", "road_threshold"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name} must be in [0, 1], got {v}")
        if self.window < 3 or self.window % 2 == 0:
            raise ValidationError(f"window must be odd and >= 3, got {self.window}")
        if self.nms_radius <= 0:
            raise ValidationError("nms_radius must be positive")


def local_extrema(grid, prob_threshold: float, window: int, source: str = SOURCE_KEYPOINT):
    """Pixels that are >= prob_threshold and the strict maximum of their window.

    Plateaus are broken deterministically: among equal-valued pixels sharing a
    window, only the lexicographically smallest (row, then column) survives.
    Windows are clipped at the grid border.
    """
    if window < 3 or window % 2 == 0:
        raise ValidationError(f"window must be odd and >= 3, got {window}")
    arr = np.asarray(grid, dtype=np.float64)
    if arr.size == 0:
        return []
    footprint_max = ndimage.maximum_filter(arr, size=window, mode="constant", cval=-np.inf)
    ys, xs = np.nonzero((arr >= prob_threshold) & (arr >= footprint_max))
    reach = window // 2
    h, w = arr.shape
    out = []
    for y, x in zip(ys.tolist(), xs.tolist()):
        v = arr[y, x]
        y0, y1 = max(0, y - reach), min(h, y + reach + 1)
        x0, x1 = max(0, x - reach), min(w, x + reach + 1)
        ty, tx = np.nonzero(arr[y0:y1, x0:x1] == v)
        if (y0 + ty.min(), x0 + tx[ty == ty.min()].min()) != (y, x):
            continue
        out.append(Candidate(x=float(x), y=float(y), score=float(v), source=source))
    return out


def _greedy_suppress(cands, radius: float, order):
    """Exact greedy NMS over a precomputed processing order (list of indices)."""
    if not cands:
        return []
    pos = candidate_positions(cands)
    tree = cKDTree(pos)
    suppressed = np.zeros(len(cands), dtype=bool)
    keep = []
    for i in order:
        if suppressed[i]:
            continue
        keep.append(cands[i])
        suppressed[tree.query_ball_point(pos[i], r=radius)] = True
    return keep


def nms_points(cands, radius: float):
    """Greedy score-descending suppression: keep the best candidate, drop all
    others within `radius`, repeat. Score ties break on (x, y) position, then
    source rank. Survivors come back sorted by the same greedy order."""
    if radius <= 0:
        raise ValidationError("radius must be positive")
    order = sorted(
        range(len(cands)),
        key=lambda i: (-cands[i].score, cands[i].x, cands[i].y, _SOURCE_RANK.get(cands[i].source, 9)),
    )
    return _greedy_suppress(cands, radius, order)


def final_fuse(cands, radius: float):
    """Final cross-source NMS. Road-surface candidates are a supplement: every
    keypoint/sampling candidate outranks every road candidate regardless of
    score."""
    if radius <= 0:
        raise ValidationError("radius must be positive")
    order = sorted(
        range(len(cands)),
        key=lambda i: (
            1 if cands[i].source == SOURCE_ROAD else 0,
            -cands[i].score,
            cands[i].x,
            cands[i].y,
            _SOURCE_RANK.get(cands[i].source, 9),
        ),
    )
    return _greedy_suppress(cands, radius, order)


def road_supplement(road_map, threshold: float, source: str = SOURCE_ROAD):
    """Every road-surface pixel above threshold, as raw candidates (pre-NMS)."""
    arr = np.asarray(road_map, dtype=np.float64)
    ys, xs = np.nonzero(arr >= threshold)
    return [
        Candidate(x=float(x), y=float(y), score=float(arr[y, x]), source=source)
        for y, x in zip(ys.tolist(), xs.tolist())
    ]


def per_source_candidates(maps: ScoreMaps, cfg: DetectionConfig):
    """Detection + per-source NMS for each channel, before cross-source fusion."""
    kp = nms_points(
        local_extrema(maps.keypoint, cfg.keypoint_threshold, cfg.window, SOURCE_KEYPOINT),
        cfg.nms_radius,
    )
    sp = nms_points(
        local_extrema(maps.sampling, cfg.sampling_threshold, cfg.window, SOURCE_SAMPLING),
        cfg.nms_radius,
    )
    rd = nms_points(road_supplement(maps.road, cfg.road_threshold), cfg.nms_radius)
    return kp, sp, rd


def fuse_candidates(maps: ScoreMaps, cfg: DetectionConfig | None = None):
    """Full candidate detection: per-source extrema + NMS, road supplement,
    then a final NMS over the union."""
    cfg = cfg or DetectionConfig()
    kp, sp, rd = per_source_candidates(maps, cfg)
    return final_fuse(kp + sp + rd, cfg.nms_radius)


# ---------------------------------------------------------------------------
# Score map files
# ---------------------------------------------------------------------------


def write_scoremaps(path, maps: ScoreMaps) -> None:
    """Binary tensor format: 16-byte header (magic 'RGF1', u32 height, u32
    width, u32 channels=3) then per-plane row-major little-endian float32."""
    h, w = maps.shape
    with open(path, "wb") as fh:
        fh.write(SCOREMAP_MAGIC)
        fh.write(struct.pack("<III", h, w, 3))
        for plane in maps.channels:
            fh.write(np.ascontiguousarray(plane, dtype="<f4").tobytes())


def read_scoremaps(path) -> ScoreMaps:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16 or blob[:4] != SCOREMAP_MAGIC:
        raise ParseError(f"not a score-map tensor file (bad magic in {path})")
    h, w, ch = struct.unpack("<III", blob[4:16])
    if ch != 3:
        raise ParseError(f"expected 3 channels, file declares {ch}")
    expected = 16 + 4 * h * w * 3
    if len(blob) != expected:
        raise ParseError(f"truncated tensor file: {len(blob)} bytes, expected {expected}")
    data = np.frombuffer(blob, dtype="<f4", offset=16).astype(np.float64)
    planes = data.reshape(3, h, w)
    return ScoreMaps(keypoint=planes[0], sampling=planes[1], road=planes[2])


def read_grayscale_maps(keypoint_path, sampling_path, road_path) -> ScoreMaps:
    """Three single-channel 8-bit grayscale images, values scaled by 1/255."""
    from PIL import Image

    def load(p):
        with Image.open(p) as img:
            return np.asarray(img.convert("L"), dtype=np.float64) / 255.0

    return ScoreMaps(
        keypoint=load(keypoint_path),
        sampling=load(sampling_path),
        road=load(road_path),
    )
