"""Detection metrics: 2D-AP, nuScenes-style 3D-mAP, AOS, 3D IoU and distance error.

Matching is greedy in descending score (ties go to the lower detection
index), per image and per class, and each ground-truth box is used at most
once. AP is the area under the all-points interpolated precision/recall
curve. AOS follows the KITTI definition: precision is replaced by the
running sum of ``(1 + cos(dyaw)) / 2`` over true positives divided by the
number of detections so far.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from fisheye3d.box3d import Box2D, Box3D, corners, project_box
from fisheye3d.camera_models import CameraModel
from fisheye3d.errors import NotVisibleError

DIST_THRESHOLDS = (0.5, 1.0, 2.0, 4.0)
IOU2D_THRESHOLD = 0.5


# -- overlaps ---------------------------------------------------------------

def iou_2d(a: Box2D, b: Box2D) -> float:
    iw = min(a.u_max, b.u_max) - max(a.u_min, b.u_min)
    ih = min(a.v_max, b.v_max) - max(a.v_min, b.v_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a.width * a.height + b.width * b.height - inter
    return float(inter / union) if union > 0 else 0.0


def bev_polygon(b: Box3D) -> np.ndarray:
    """Footprint in the (x, z) plane, counter-clockwise, shape ``[4, 2]``."""
    return corners(b)[:4][:, [0, 2]]


def _clip(subject: List[np.ndarray], a: np.ndarray, b: np.ndarray) -> List[np.ndarray]:
    # Keep the part of ``subject`` left of the directed line a -> b.
    def side(p):
        return (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])

    out = []
    n = len(subject)
    for i in range(n):
        p, q = subject[i], subject[(i + 1) % n]
        sp, sq = side(p), side(q)
        if sp >= 0:
            out.append(p)
        if (sp >= 0) != (sq >= 0):
            t = sp / (sp - sq)
            out.append(p + t * (q - p))
    return out


def polygon_area(poly) -> float:
    if len(poly) < 3:
        return 0.0
    p = np.asarray(poly)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def convex_intersection_area(p: np.ndarray, q: np.ndarray) -> float:
    """Area of the intersection of two counter-clockwise convex polygons."""
    poly = [np.asarray(v, dtype=float) for v in p]
    m = len(q)
    for i in range(m):
        if not poly:
            return 0.0
        poly = _clip(poly, q[i], q[(i + 1) % m])
    return max(polygon_area(poly), 0.0)


def iou_3d(a: Box3D, b: Box3D) -> float:
    """Volumetric IoU of two yaw-rotated boxes (BEV clipping times vertical overlap)."""
    ha, hb = a.dims[1] / 2, b.dims[1] / 2
    dy = min(a.center[1] + ha, b.center[1] + hb) - max(a.center[1] - ha, b.center[1] - hb)
    if dy <= 0:
        return 0.0
    area = convex_intersection_area(bev_polygon(a), bev_polygon(b))
    inter = area * dy
    union = a.volume + b.volume - inter
    return float(min(max(inter / union, 0.0), 1.0)) if union > 0 else 0.0


def center_distance(a: Box3D, b: Box3D) -> float:
    return float(np.linalg.norm(a.center - b.center))


def bev_center_distance(a: Box3D, b: Box3D) -> float:
    d = a.center - b.center
    return float(math.hypot(d[0], d[2]))


def yaw_difference(a: float, b: float) -> float:
    d = (a - b + math.pi) % (2 * math.pi) - math.pi
    return abs(d)


# -- matching ---------------------------------------------------------------

@dataclass(frozen=True)
class Matcher:
    """Match criterion: ``"iou2d"`` (value > threshold) or ``"center_dist"`` (value < threshold)."""

    kind: str
    threshold: float

    def __post_init__(self):
        if self.kind not in ("iou2d", "center_dist"):
            raise ValueError(f"unknown matcher kind {self.kind!r}")

    @classmethod
    def iou2d(cls, threshold: float = IOU2D_THRESHOLD) -> "Matcher":
        return cls("iou2d", threshold)

    @classmethod
    def center_dist(cls, threshold: float) -> "Matcher":
        return cls("center_dist", threshold)


@dataclass
class MatchResult:
    pairs: List[Tuple[int, int]] = field(default_factory=list)
    values: List[float] = field(default_factory=list)
    unmatched_dets: List[int] = field(default_factory=list)
    unmatched_gts: List[int] = field(default_factory=list)
    # Detection indices in the order they were processed (descending score).
    order: List[int] = field(default_factory=list)

    def tp_flags(self) -> np.ndarray:
        """True-positive flag per detection, in processing order."""
        matched = {d for d, _ in self.pairs}
        return np.array([d in matched for d in self.order], dtype=bool)

    @property
    def precision(self) -> float:
        n = len(self.order)
        return len(self.pairs) / n if n else float("nan")

    @property
    def recall(self) -> float:
        n = len(self.pairs) + len(self.unmatched_gts)
        return len(self.pairs) / n if n else float("nan")


def _box2d_of(b: Box3D, model: Optional[CameraModel]) -> Optional[Box2D]:
    if b.box2d is not None:
        return b.box2d
    if model is None:
        return None
    try:
        return project_box(b, model)
    except NotVisibleError:
        return None


def score_order(dets: Sequence[Box3D]) -> List[int]:
    """Detection indices by descending score, ties broken by lower index."""
    return sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))


def match_and_score(
    dets: Sequence[Box3D],
    gts: Sequence[Box3D],
    matcher: Matcher,
    model: Optional[CameraModel] = None,
) -> MatchResult:
    """Greedy score-ordered matching within each (image, class) group.

    Args:
        dets: Detections with scores.
        gts: Ground-truth boxes.
        matcher: Criterion; ``iou2d`` uses each box's ``box2d`` or, when that
            is missing, its projection into ``model``.
        model: Camera used to derive missing 2D boxes.

    Returns:
        A :class:`MatchResult` whose ``values`` hold the IoU or distance of
        each pair.
    """
    res = MatchResult(order=score_order(dets))
    taken = np.zeros(len(gts), dtype=bool)
    groups: Dict[tuple, List[int]] = defaultdict(list)
    for j, g in enumerate(gts):
        groups[(g.image_id, g.class_id)].append(j)
    groups = {k: np.array(v) for k, v in groups.items()}

    if matcher.kind == "iou2d":
        det2d = [_box2d_of(d, model) for d in dets]
        gt2d = np.array(
            [(b.as_list() if b is not None else [np.nan] * 4) for b in (_box2d_of(g, model) for g in gts)]
        ).reshape(-1, 4)
    else:
        gt_xz = np.array([[g.center[0], g.center[2]] for g in gts]).reshape(-1, 2)

    for i in res.order:
        d = dets[i]
        idx = groups.get((d.image_id, d.class_id))
        if idx is None:
            res.unmatched_dets.append(i)
            continue
        idx = idx[~taken[idx]]
        best = -1
        if idx.size:
            if matcher.kind == "iou2d":
                v = _iou_2d_many(det2d[i], gt2d[idx])
                ok = v > matcher.threshold
                if np.any(ok):
                    # argmax returns the first maximum, i.e. the lowest GT index.
                    best = int(np.argmax(np.where(ok, v, -np.inf)))
            else:
                v = np.hypot(gt_xz[idx, 0] - d.center[0], gt_xz[idx, 1] - d.center[2])
                ok = v < matcher.threshold
                if np.any(ok):
                    best = int(np.argmin(np.where(ok, v, np.inf)))
        if best >= 0:
            j = int(idx[best])
            taken[j] = True
            res.pairs.append((i, j))
            res.values.append(float(v[best]))
        else:
            res.unmatched_dets.append(i)
    res.unmatched_gts = [int(j) for j in np.flatnonzero(~taken)]
    return res


def _iou_2d_many(a: Optional[Box2D], bs: np.ndarray) -> np.ndarray:
    if a is None:
        return np.zeros(len(bs))
    iw = np.minimum(a.u_max, bs[:, 2]) - np.maximum(a.u_min, bs[:, 0])
    ih = np.minimum(a.v_max, bs[:, 3]) - np.maximum(a.v_min, bs[:, 1])
    inter = np.where((iw > 0) & (ih > 0), iw * ih, 0.0)
    union = a.width * a.height + (bs[:, 2] - bs[:, 0]) * (bs[:, 3] - bs[:, 1]) - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(union > 0, inter / union, 0.0)
    return np.nan_to_num(out, nan=0.0)


# -- AP ---------------------------------------------------------------------

def average_precision(tp_flags, n_gt: int, similarity=None) -> float:
    """All-points interpolated AP from score-ordered true-positive flags.

    Args:
        tp_flags: Boolean flag per detection, already sorted by descending score.
        n_gt: Number of ground-truth objects.
        similarity: Optional per-detection weight in ``[0, 1]`` used in place
            of 1 for true positives (AOS).

    Returns:
        AP in ``[0, 1]``; NaN when ``n_gt == 0``.
    """
    if n_gt == 0:
        return float("nan")
    tp = np.asarray(tp_flags, dtype=float)
    if tp.size == 0:
        return 0.0
    w = tp if similarity is None else tp * np.asarray(similarity, dtype=float)
    ranks = np.arange(1, tp.size + 1)
    recall = np.cumsum(tp) / n_gt
    precision = np.cumsum(w) / ranks
    # Precision envelope: best precision at any equal or higher recall.
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    dr = np.diff(np.concatenate([[0.0], recall]))
    return float(np.sum(dr * envelope))


def _ap_for(dets, gts, matcher, model, with_aos=False):
    m = match_and_score(dets, gts, matcher, model)
    tp = m.tp_flags()
    ap = average_precision(tp, len(gts))
    if not with_aos:
        return ap, m, None
    gt_of = dict(m.pairs)
    sim = np.array(
        [
            (1 + math.cos(yaw_difference(dets[i].yaw, gts[gt_of[i]].yaw))) / 2 if i in gt_of else 0.0
            for i in m.order
        ]
    )
    return ap, m, average_precision(tp, len(gts), sim)


def aos(dets: Sequence[Box3D], gts: Sequence[Box3D], model: Optional[CameraModel] = None,
        threshold: float = IOU2D_THRESHOLD) -> float:
    """Average orientation similarity under 2D-IoU matching."""
    return _ap_for(dets, gts, Matcher.iou2d(threshold), model, with_aos=True)[2]


def map_3d(dets: Sequence[Box3D], gts: Sequence[Box3D],
           thresholds: Sequence[float] = DIST_THRESHOLDS) -> float:
    """Mean over classes and BEV center-distance thresholds of AP."""
    per_class = _per_class_map(dets, gts, thresholds)
    vals = [v for v in per_class.values() if not math.isnan(v)]
    return float(np.mean(vals)) if vals else float("nan")


def _per_class_map(dets, gts, thresholds):
    out = {}
    for c in sorted({g.class_id for g in gts}):
        d = [x for x in dets if x.class_id == c]
        g = [x for x in gts if x.class_id == c]
        out[c] = float(np.mean([_ap_for(d, g, Matcher.center_dist(t), None)[0] for t in thresholds]))
    return out


def mean_distance_error(matches: MatchResult, dets: Sequence[Box3D], gts: Sequence[Box3D]) -> float:
    """Mean Euclidean center error over matched pairs; NaN when nothing matched."""
    if not matches.pairs:
        return float("nan")
    return float(np.mean([center_distance(dets[i], gts[j]) for i, j in matches.pairs]))


def mean_iou_3d(matches: MatchResult, dets: Sequence[Box3D], gts: Sequence[Box3D]) -> float:
    if not matches.pairs:
        return 0.0
    return float(np.mean([iou_3d(dets[i], gts[j]) for i, j in matches.pairs]))


# -- report -----------------------------------------------------------------

@dataclass
class EvalReport:
    ap2d: float
    map3d: float
    aos: float
    mean_iou3d: float
    mean_dist_err: float
    n_dets: int = 0
    n_gts: int = 0
    n_matched: int = 0
    per_class: Dict[int, Dict[str, float]] = field(default_factory=dict)
    per_threshold: Dict[float, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, float) and math.isnan(v):
                return None
            if isinstance(v, dict):
                return {str(k): clean(x) for k, x in v.items()}
            return v

        return clean(
            {
                "ap2d": self.ap2d,
                "map3d": self.map3d,
                "aos": self.aos,
                "mean_iou3d": self.mean_iou3d,
                "mean_dist_err": self.mean_dist_err,
                "n_dets": self.n_dets,
                "n_gts": self.n_gts,
                "n_matched": self.n_matched,
                "per_class": self.per_class,
                "per_threshold_ap": self.per_threshold,
            }
        )


def filter_valid_region(boxes: Sequence[Box3D], model: CameraModel, mask: np.ndarray) -> List[Box3D]:
    """Drop boxes whose center projects outside ``mask`` (e.g. a warp's sentinel region)."""
    if not boxes:
        return []
    centers = np.stack([b.center for b in boxes])
    uv, ok = model.project_points(centers)
    keep = []
    h, w = mask.shape
    for b, p, valid in zip(boxes, uv, ok):
        if not valid:
            continue
        i, j = int(math.floor(p[0])), int(math.floor(p[1]))
        if 0 <= i < w and 0 <= j < h and mask[j, i]:
            keep.append(b)
    return keep


def _class_mean(values):
    vals = [v for v in values if not math.isnan(v)]
    return float(np.mean(vals)) if vals else float("nan")


def evaluate(
    dets: Sequence[Box3D],
    gts: Sequence[Box3D],
    model: Optional[CameraModel] = None,
    iou2d_threshold: float = IOU2D_THRESHOLD,
    dist_thresholds: Sequence[float] = DIST_THRESHOLDS,
) -> EvalReport:
    """Full report over a set of images.

    2D-AP, AOS, mean 3D IoU and mean distance error all use 2D-IoU matching
    at ``iou2d_threshold``; 3D-mAP uses BEV center-distance matching.
    Aggregates are means over the classes present in ``gts``.
    """
    dets = list(dets)
    gts = list(gts)
    classes = sorted({g.class_id for g in gts})
    per_class: Dict[int, Dict[str, float]] = {}
    all_pairs_iou: List[float] = []
    all_pairs_dist: List[float] = []
    for c in classes:
        d = [x for x in dets if x.class_id == c]
        g = [x for x in gts if x.class_id == c]
        ap2, m, ao = _ap_for(d, g, Matcher.iou2d(iou2d_threshold), model, with_aos=True)
        ious = [iou_3d(d[i], g[j]) for i, j in m.pairs]
        dists = [center_distance(d[i], g[j]) for i, j in m.pairs]
        all_pairs_iou += ious
        all_pairs_dist += dists
        thr_ap = {t: _ap_for(d, g, Matcher.center_dist(t), None)[0] for t in dist_thresholds}
        per_class[c] = {
            "ap2d": ap2,
            "aos": ao,
            "map3d": float(np.mean(list(thr_ap.values()))),
            "mean_iou3d": float(np.mean(ious)) if ious else 0.0,
            "mean_dist_err": float(np.mean(dists)) if dists else float("nan"),
            **{f"ap_dist_{t:g}": v for t, v in thr_ap.items()},
        }
    per_threshold = {
        t: _class_mean([per_class[c][f"ap_dist_{t:g}"] for c in classes]) for t in dist_thresholds
    }
    return EvalReport(
        ap2d=_class_mean([per_class[c]["ap2d"] for c in classes]),
        map3d=_class_mean([per_class[c]["map3d"] for c in classes]),
        aos=_class_mean([per_class[c]["aos"] for c in classes]),
        mean_iou3d=float(np.mean(all_pairs_iou)) if all_pairs_iou else 0.0,
        mean_dist_err=float(np.mean(all_pairs_dist)) if all_pairs_dist else float("nan"),
        n_dets=len(dets),
        n_gts=len(gts),
        n_matched=len(all_pairs_dist),
        per_class=per_class,
        per_threshold=per_threshold,
    )
