"""Motion-only primitive tracker that turns unlabeled detections into pseudo tracks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assignment import hungarian
from .errors import ValidationError
from .motion import KalmanState, iou_matrix, kalman_initiate, kalman_predict, kalman_update
from .tracks import Instance, Track, group_by_frame, make_track


@dataclass(frozen=True)
class PrimitiveConfig:
    detection_threshold: float = 0.3
    iou_gate: float = 0.3
    # A track survives up to max_age consecutive unmatched frames.
    max_age: int = 30
    min_track_len: int = 2

    def __post_init__(self):
        if not 0.0 <= self.detection_threshold <= 1.0:
            raise ValidationError("detection_threshold must be in [0, 1]")
        if not 0.0 < self.iou_gate <= 1.0:
            raise ValidationError("iou_gate must be in (0, 1]")
        if self.max_age < 0 or self.min_track_len < 1:
            raise ValidationError("max_age must be >= 0 and min_track_len >= 1")


@dataclass
class _Tentative:
    id: int
    kalman: KalmanState
    members: list = field(default_factory=list)
    misses: int = 0


def motion_cost(predicted_boxes, det_boxes, iou_gate: float) -> np.ndarray:
    """``1 - IoU`` with pairs below the IoU gate marked infeasible."""
    overlap = iou_matrix(predicted_boxes, det_boxes)
    cost = 1.0 - overlap
    cost[overlap < iou_gate] = np.inf
    return cost


def pseudo_label(detections, cfg: PrimitiveConfig = PrimitiveConfig()) -> list[Track]:
    """Run the primitive tracker over frame-sorted detections.

    ``detections`` is either a flat frame-sorted list of instances or a list
    of per-frame lists. Returned tracks are ordered by id and carry
    ``source="pseudo"``.
    """
    if detections and isinstance(detections[0], Instance):
        frames = [d.frame for d in detections]
        if frames != sorted(frames):
            raise ValidationError("detections must be sorted by frame")
        per_frame = group_by_frame(detections)
    else:
        per_frame = [list(f) for f in detections]

    live: list[_Tentative] = []
    finished: list[_Tentative] = []
    next_id = 1
    for frame, dets in enumerate(per_frame):
        dets = [d for d in dets if d.confidence >= cfg.detection_threshold]
        for t in live:
            t.kalman = kalman_predict(t.kalman)
        matched_tracks: set[int] = set()
        matched_dets: set[int] = set()
        if live and dets:
            cost = motion_cost([t.kalman.box for t in live], [d.box for d in dets], cfg.iou_gate)
            for ti, di in hungarian(cost):
                t = live[ti]
                t.kalman = kalman_update(t.kalman, dets[di].box)
                t.members.append(dets[di])
                t.misses = 0
                matched_tracks.add(ti)
                matched_dets.add(di)
        survivors = []
        for ti, t in enumerate(live):
            if ti not in matched_tracks:
                t.misses += 1
            if t.misses > cfg.max_age:
                finished.append(t)
            else:
                survivors.append(t)
        live = survivors
        for di, det in enumerate(dets):
            if di in matched_dets:
                continue
            live.append(_Tentative(next_id, kalman_initiate(det.box), [det]))
            next_id += 1
    finished.extend(live)
    finished.sort(key=lambda t: t.id)
    return [
        make_track(t.id, t.members, source="pseudo")
        for t in finished
        if len(t.members) >= cfg.min_track_len
    ]
