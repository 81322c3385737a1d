"""Online tracker matching detections to live tracks by instance-to-track distance."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assignment import hungarian
from .embedding import Encoder, TrackEmbedding, encode_batch, update_track_embedding
from .errors import OutOfOrderFrame, ValidationError
from .motion import KalmanState, iou_matrix, kalman_initiate, kalman_predict, kalman_update
from .tracks import Instance, Track, group_by_frame, make_track


@dataclass(frozen=True)
class TrackerConfig:
    appearance_gate: float = 0.4
    iou_gate: float = 0.3
    max_age: int = 30
    birth_confidence: float = 0.3
    appearance_weight: float = 0.7
    # None: exact running mean; otherwise EMA weight of the newest embedding.
    embedding_decay: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.appearance_gate <= 2.0:
            raise ValidationError("appearance_gate must be in [0, 2]")
        if not 0.0 <= self.iou_gate <= 1.0:
            raise ValidationError("iou_gate must be in [0, 1]")
        if not 0.0 <= self.appearance_weight <= 1.0:
            raise ValidationError("appearance_weight must be in [0, 1]")
        if not 0.0 <= self.birth_confidence <= 1.0:
            raise ValidationError("birth_confidence must be in [0, 1]")
        if self.max_age < 0:
            raise ValidationError("max_age must be >= 0")
        if self.embedding_decay is not None and not 0.0 < self.embedding_decay <= 1.0:
            raise ValidationError("embedding_decay must be in (0, 1]")


@dataclass
class LiveTrack:
    id: int
    embedding: TrackEmbedding
    kalman: KalmanState
    last_seen: int
    history: list = field(default_factory=list)  # (frame, box)
    members: list = field(default_factory=list)

    @property
    def instance_count(self) -> int:
        return self.embedding.count


def association_cost(tracks: list[LiveTrack], detections, cfg: TrackerConfig) -> np.ndarray:
    """Fused cost ``lam * (1 - <f, g>) + (1 - lam) * (1 - IoU)``.

    ``detections`` is a list of ``(Instance, unit embedding)``. Pairs beyond
    either gate are ``inf``.
    """
    if not tracks or not detections:
        return np.zeros((len(tracks), len(detections)))
    G = np.vstack([t.embedding.values for t in tracks])
    E = np.vstack([emb for _, emb in detections])
    appearance = np.clip(1.0 - G @ E.T, 0.0, 2.0)
    overlap = iou_matrix([t.kalman.box for t in tracks], [inst.box for inst, _ in detections])
    lam = cfg.appearance_weight
    cost = lam * appearance + (1.0 - lam) * (1.0 - overlap)
    cost[(appearance > cfg.appearance_gate) | (overlap < cfg.iou_gate)] = np.inf
    return cost


class OnlineTracker:
    """Single-sequence tracker; feed frames in increasing order via :meth:`step`."""

    def __init__(self, cfg: TrackerConfig = TrackerConfig()):
        self.cfg = cfg
        self.tracks: list[LiveTrack] = []
        self.finished: list[LiveTrack] = []
        self.frame = -1
        self.next_id = 1

    def step(self, frame: int, detections) -> list[tuple[int, int, tuple]]:
        """Process one frame of ``(Instance, embedding)`` pairs.

        Returns the emitted ``(frame, track id, box)`` rows for this frame.
        """
        if frame <= self.frame:
            raise OutOfOrderFrame(f"frame {frame} after frame {self.frame}")
        gap = frame - self.frame if self.frame >= 0 else 1
        self.frame = frame
        cfg = self.cfg
        for t in self.tracks:
            for _ in range(gap):
                t.kalman = kalman_predict(t.kalman)

        rows = []
        matched_tracks: set[int] = set()
        matched_dets: set[int] = set()
        if self.tracks and detections:
            cost = association_cost(self.tracks, detections, cfg)
            for ti, di in hungarian(cost):
                inst, emb = detections[di]
                t = self.tracks[ti]
                t.kalman = kalman_update(t.kalman, inst.box)
                t.embedding = update_track_embedding(t.embedding, emb, cfg.embedding_decay)
                t.last_seen = frame
                t.history.append((frame, inst.box))
                t.members.append(inst)
                matched_tracks.add(ti)
                matched_dets.add(di)

        survivors = []
        for t in self.tracks:
            if frame - t.last_seen > cfg.max_age:
                self.finished.append(t)
            else:
                survivors.append(t)
        self.tracks = survivors

        for di, (inst, emb) in enumerate(detections):
            if di in matched_dets or inst.confidence < cfg.birth_confidence:
                continue
            emb = np.asarray(emb, dtype=np.float64)
            t = LiveTrack(
                id=self.next_id,
                embedding=TrackEmbedding(emb, 1, emb),
                kalman=kalman_initiate(inst.box),
                last_seen=frame,
                history=[(frame, inst.box)],
                members=[inst],
            )
            self.next_id += 1
            self.tracks.append(t)
        for t in sorted(self.tracks, key=lambda t: t.id):
            if t.last_seen == frame:
                rows.append((frame, t.id, t.history[-1][1]))
        return rows

    def all_tracks(self) -> list[Track]:
        everything = sorted(self.finished + self.tracks, key=lambda t: t.id)
        return [make_track(t.id, t.members, source="pseudo") for t in everything]


def run_tracker(encoder: Encoder | None, detections, frames: int | None = None, cfg: TrackerConfig = TrackerConfig(), embeddings=None) -> list[Track]:
    """Track a whole sequence of frame-sorted detections.

    Embeddings come from ``encoder`` unless precomputed ``embeddings`` (one row
    per detection) are passed.
    """
    detections = list(detections)
    if embeddings is None:
        if not detections:
            embeddings = np.zeros((0, 1))
        else:
            embeddings = encode_batch(encoder, np.vstack([d.feature for d in detections]))
    frame_ids = [d.frame for d in detections]
    if frame_ids != sorted(frame_ids):
        raise ValidationError("detections must be sorted by frame")
    tracker = OnlineTracker(cfg)
    per_frame = group_by_frame(detections, frames)
    cursor = 0
    for frame, dets in enumerate(per_frame):
        pairs = [(d, embeddings[cursor + k]) for k, d in enumerate(dets)]
        cursor += len(dets)
        tracker.step(frame, pairs)
    return tracker.all_tracks()
