"""Domain types: instances, tracks, sub-tracks, sequences and scenarios.

All types are immutable after construction. Feature vectors are stored as
read-only float64 arrays so instances can be shared freely.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence as Seq

import numpy as np

from .errors import ValidationError

Box = tuple[float, float, float, float]  # (left, top, width, height)
Source = Literal["annotated", "pseudo"]

DEFAULT_FEATURE_DIM = 16


def _frozen_array(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Instance:
    """One detected object at one frame.

    ``feature`` may be empty when a file carries boxes without an
    appearance sidecar.
    """

    frame: int
    box: Box
    confidence: float
    feature: np.ndarray = field(default_factory=lambda: _frozen_array([]))
    identity: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "frame", int(self.frame))
        object.__setattr__(self, "box", tuple(float(v) for v in self.box))
        object.__setattr__(self, "confidence", float(self.confidence))
        object.__setattr__(self, "feature", _frozen_array(self.feature))
        if self.identity is not None:
            object.__setattr__(self, "identity", int(self.identity))
        problem = instance_violation(self)
        if problem:
            raise ValidationError(problem)

    def with_identity(self, identity: int | None) -> "Instance":
        return Instance(self.frame, self.box, self.confidence, self.feature, identity)

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return (
            self.frame == other.frame
            and self.box == other.box
            and self.confidence == other.confidence
            and self.identity == other.identity
            and self.feature.shape == other.feature.shape
            and bool(np.array_equal(self.feature, other.feature))
        )

    def __hash__(self):
        return hash((self.frame, self.box, self.confidence, self.identity, self.feature.tobytes()))


def instance_violation(inst: Instance, feature_dim: int | None = None) -> str | None:
    if inst.frame < 0:
        return "negative frame index"
    if len(inst.box) != 4 or not all(np.isfinite(inst.box)):
        return "box must be four finite numbers"
    if inst.box[2] <= 0 or inst.box[3] <= 0:
        return "box width and height must be positive"
    if not 0.0 <= inst.confidence <= 1.0:
        return "confidence outside [0, 1]"
    if not np.all(np.isfinite(inst.feature)):
        return "feature has non-finite components"
    if feature_dim is not None and inst.feature.shape[0] != feature_dim:
        return f"feature dimension {inst.feature.shape[0]} != {feature_dim}"
    return None


@dataclass(frozen=True, eq=True)
class Track:
    """A temporally ordered run of instances of one identity.

    Construction does not validate; call :func:`validate_track`.
    """

    id: int
    instances: tuple[Instance, ...]
    source: Source = "annotated"

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))

    def __len__(self):
        return len(self.instances)

    @property
    def frames(self) -> list[int]:
        return [inst.frame for inst in self.instances]

    def clip(self, start: int, stop: int) -> "Track | None":
        """Restrict to frames in ``[start, stop)``; ``None`` when nothing remains."""
        kept = tuple(i for i in self.instances if start <= i.frame < stop)
        if not kept:
            return None
        return Track(self.id, kept, self.source)


@dataclass(frozen=True, eq=True)
class SubTrack:
    """A contiguous window ``parent.instances[start:start + length]``."""

    parent_id: int
    instances: tuple[Instance, ...]
    start: int = 0

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))

    def __len__(self):
        return len(self.instances)


def validate_track(track: Track, feature_dim: int | None = None) -> str | None:
    """Return the first violated invariant of ``track``, or ``None`` when valid."""
    if not track.instances:
        return "empty track"
    if track.source not in ("annotated", "pseudo"):
        return f"unknown track source {track.source!r}"
    prev = None
    for inst in track.instances:
        if inst.identity != track.id:
            return "instance identity differs from track id"
        problem = instance_violation(inst, feature_dim)
        if problem:
            return problem
        if prev is not None and inst.frame <= prev:
            return "frames not strictly increasing"
        prev = inst.frame
    return None


def validate_subtrack(sub: SubTrack, parent: Track) -> str | None:
    if not sub.instances:
        return "empty sub-track"
    if sub.parent_id != parent.id:
        return "parent id mismatch"
    n = len(sub.instances)
    if sub.start < 0 or sub.start + n > len(parent.instances):
        return "window outside parent track"
    if parent.instances[sub.start : sub.start + n] != sub.instances:
        return "not a contiguous window of the parent track"
    return None


def subtrack_window(track: Track, start: int, length: int) -> SubTrack:
    return SubTrack(track.id, track.instances[start : start + length], start)


def make_track(track_id: int, instances: Iterable[Instance], source: Source = "annotated") -> Track:
    """Build a track, stamping every instance with ``track_id``."""
    return Track(track_id, tuple(i.with_identity(track_id) for i in instances), source)


@dataclass(frozen=True, eq=True)
class Sequence:
    """Training view of one video: its tracks (annotated or pseudo) and length.

    Track identity is scoped to the sequence; ``(name, track.id)`` is global.
    """

    name: str
    frames: int
    tracks: tuple[Track, ...]

    def __post_init__(self):
        object.__setattr__(self, "tracks", tuple(self.tracks))


@dataclass(frozen=True, eq=True)
class Scenario:
    """Synthetic ground truth plus the detections a detector would emit."""

    frames: int
    gt_tracks: tuple[Track, ...]
    detections: tuple[Instance, ...]
    image_size: tuple[int, int]
    name: str = "seq"

    def __post_init__(self):
        object.__setattr__(self, "gt_tracks", tuple(self.gt_tracks))
        object.__setattr__(self, "detections", tuple(self.detections))
        object.__setattr__(self, "image_size", tuple(int(v) for v in self.image_size))

    def detections_by_frame(self) -> list[list[Instance]]:
        out: list[list[Instance]] = [[] for _ in range(self.frames)]
        for det in self.detections:
            out[det.frame].append(det)
        return out

    def labeled(self) -> Sequence:
        return Sequence(self.name, self.frames, self.gt_tracks)


def validate_scenario(s: Scenario) -> str | None:
    for t in s.gt_tracks:
        problem = validate_track(t)
        if problem:
            return f"gt track {t.id}: {problem}"
        if t.instances[-1].frame >= s.frames:
            return f"gt track {t.id} extends past frame count"
    frames = [d.frame for d in s.detections]
    if frames != sorted(frames):
        return "detections not sorted by frame"
    if frames and frames[-1] >= s.frames:
        return "detection past frame count"
    if len({t.id for t in s.gt_tracks}) != len(s.gt_tracks):
        return "duplicate gt track ids"
    return None


def group_by_frame(instances: Seq[Instance], frames: int | None = None) -> list[list[Instance]]:
    if frames is None:
        frames = max((i.frame for i in instances), default=-1) + 1
    out: list[list[Instance]] = [[] for _ in range(frames)]
    for inst in instances:
        out[inst.frame].append(inst)
    return out
