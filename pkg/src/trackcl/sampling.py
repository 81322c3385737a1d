"""Training batch construction and unlabeled-video mining.

A batch is drawn as follows: pick segments of ``segment_length`` consecutive
frames from labeled and pseudo-labeled sequences in a fixed ratio, clip every
track to its segment, sample a few contiguous sub-tracks per clipped track,
and use every instance of the clipped tracks as an anchor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .embedding import Encoder, aggregate, encode_batch
from .errors import NoTracks, ValidationError
from .losses import ContrastBatch
from .tracks import Sequence, SubTrack, Track, subtrack_window


@dataclass(frozen=True)
class SamplerConfig:
    segment_length: int = 32
    segments_labeled: int = 2
    segments_unlabeled: int = 2
    subtracks_per_track: int = 3
    subtrack_len_range: tuple[int, int] = (2, 8)
    seed: int = 0
    # Grow the batch by whole rounds of segments until this many anchors.
    anchor_target: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "subtrack_len_range", tuple(int(v) for v in self.subtrack_len_range))
        lo, hi = self.subtrack_len_range
        if self.segment_length < 1:
            raise ValidationError("segment_length must be >= 1")
        if self.subtracks_per_track < 1:
            raise ValidationError("subtracks_per_track must be >= 1")
        if not 1 <= lo <= hi:
            raise ValidationError("subtrack_len_range must satisfy 1 <= min <= max")
        if self.segments_labeled < 0 or self.segments_unlabeled < 0:
            raise ValidationError("segment counts must be non-negative")
        if self.segments_labeled + self.segments_unlabeled == 0:
            raise ValidationError("at least one segment per batch is required")


@dataclass(frozen=True)
class VideoStats:
    name: str
    track_count: int
    frame_count: int

    def __post_init__(self):
        if self.track_count < 0:
            raise ValidationError("track_count must be >= 0")


def sample_subtracks(track: Track, count: int, len_range: tuple[int, int], rng: np.random.Generator) -> list[SubTrack]:
    """Draw ``count`` contiguous windows of ``track``.

    Window length is uniform in ``[min, min(max, len(track))]``; tracks shorter
    than ``min`` yield full-track windows.
    """
    n = len(track.instances)
    lo = min(len_range[0], n)
    hi = min(len_range[1], n)
    out = []
    for _ in range(count):
        length = int(rng.integers(lo, hi + 1))
        start = int(rng.integers(0, n - length + 1))
        out.append(subtrack_window(track, start, length))
    return out


@dataclass(frozen=True, eq=False)
class SampledBatch:
    """Raw batch before embedding: anchor features and sub-track membership.

    ``subtrack_members[j]`` indexes rows of ``features``; every sub-track
    instance is also an anchor, so member embeddings are shared.
    """

    features: np.ndarray
    anchor_labels: tuple
    subtrack_members: tuple
    subtrack_labels: tuple
    segments: tuple  # (kind, sequence name, segment index)
    num_tracks: int = field(default=0)

    @property
    def num_anchors(self) -> int:
        return len(self.anchor_labels)

    @property
    def num_subtracks(self) -> int:
        return len(self.subtrack_labels)


def _segment_pool(seqs: list[Sequence], seg_len: int) -> list[tuple[int, int]]:
    pool = []
    for si, seq in enumerate(seqs):
        for k in range(max(1, -(-seq.frames // seg_len))):
            pool.append((si, k))
    return pool


def _draw_rounds(pool, per_round: int, rng: np.random.Generator):
    """Yield successive rounds of ``per_round`` segments, without replacement
    while the pool lasts; a pool smaller than one round is drawn with replacement."""
    if per_round == 0:
        while True:
            yield []
    if len(pool) < per_round:
        picks = rng.integers(0, len(pool), size=per_round)
        yield [pool[i] for i in picks]
        return
    perm = rng.permutation(len(pool))
    for r in range(len(pool) // per_round):
        yield [pool[i] for i in perm[r * per_round : (r + 1) * per_round]]


def sample_batch(labeled: list[Sequence], unlabeled: list[Sequence], cfg: SamplerConfig, rng: np.random.Generator) -> SampledBatch:
    if cfg.segments_labeled and not labeled:
        raise ValidationError("labeled segments requested but no labeled sequences given")
    if cfg.segments_unlabeled and not unlabeled:
        raise ValidationError("unlabeled segments requested but no unlabeled sequences given")
    seg_len = cfg.segment_length
    groups = [
        ("labeled", labeled, cfg.segments_labeled),
        ("unlabeled", unlabeled, cfg.segments_unlabeled),
    ]
    rounds = [
        _draw_rounds(_segment_pool(seqs, seg_len), k, rng) if k else _draw_rounds([], 0, rng)
        for _, seqs, k in groups
    ]

    features: list[np.ndarray] = []
    anchor_labels: list = []
    members: list[np.ndarray] = []
    sub_labels: list = []
    segments: list = []
    num_tracks = 0
    while True:
        try:
            picked = [next(r) for r in rounds]
        except StopIteration:
            break
        for (kind, seqs, _), chosen in zip(groups, picked):
            for si, k in chosen:
                seq = seqs[si]
                segments.append((kind, seq.name, k))
                start = k * seg_len
                for track in seq.tracks:
                    clip = track.clip(start, start + seg_len)
                    if clip is None:
                        continue
                    num_tracks += 1
                    label = (seq.name, track.id)
                    offset = len(anchor_labels)
                    for inst in clip.instances:
                        features.append(inst.feature)
                        anchor_labels.append(label)
                    for sub in sample_subtracks(clip, cfg.subtracks_per_track, cfg.subtrack_len_range, rng):
                        members.append(offset + sub.start + np.arange(len(sub.instances)))
                        sub_labels.append(label)
        if cfg.anchor_target is None or len(anchor_labels) >= cfg.anchor_target:
            break
    if num_tracks == 0:
        raise NoTracks("sampled segments contain no tracks")
    return SampledBatch(
        features=np.vstack(features),
        anchor_labels=tuple(anchor_labels),
        subtrack_members=tuple(members),
        subtrack_labels=tuple(sub_labels),
        segments=tuple(segments),
        num_tracks=num_tracks,
    )


def build_batch(labeled, unlabeled, encoder: Encoder, cfg: SamplerConfig, rng: np.random.Generator) -> ContrastBatch:
    """Sample a batch and embed it: anchors via the encoder, sub-tracks via
    encoder + mean aggregation."""
    raw = sample_batch(labeled, unlabeled, cfg, rng)
    emb = encode_batch(encoder, raw.features)
    tracks = [aggregate(emb[m]) for m in raw.subtrack_members]
    return ContrastBatch(
        anchors=emb,
        anchor_labels=raw.anchor_labels,
        subtracks=np.vstack([t.values for t in tracks]),
        subtrack_labels=raw.subtrack_labels,
        subtrack_counts=tuple(t.count for t in tracks),
    )


def mine_videos(stats: list[VideoStats], k: int, per_frame: bool = False) -> list[str]:
    """Names of the ``k`` videos with the most produced tracks.

    Ties go to the lexicographically smaller name. ``per_frame`` ranks by
    tracks per frame instead of the raw count.
    """
    if k < 0:
        raise ValidationError("k must be >= 0")

    def density(s: VideoStats) -> float:
        if per_frame:
            return s.track_count / s.frame_count if s.frame_count else 0.0
        return s.track_count

    ranked = sorted(stats, key=lambda s: (-density(s), s.name))
    return [s.name for s in ranked[:k]]
