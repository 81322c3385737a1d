"""Synthetic multi-object scenarios with latent appearance.

Each object has a latent identity vector on the unit sphere of the first half
of the feature dimensions. Per frame, its raw feature is the latent plus
identity noise, with the remaining dimensions filled by per-frame nuisance
noise, then l2-normalized. A useful encoder must learn to discard the
nuisance half.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadConfig
from .sampling import VideoStats
from .tracks import Instance, Scenario, make_track


@dataclass(frozen=True)
class SimConfig:
    num_objects: int = 20
    frames: int = 100
    image_size: tuple[int, int] = (640, 480)
    appearance_dim: int = 16
    appearance_noise_sigma: float = 0.1
    nuisance_sigma: float = 0.5
    speed_range: tuple[float, float] = (1.0, 4.0)
    direction_change_prob: float = 0.02
    occlusion_prob: float = 0.01
    occlusion_max_duration: int = 8
    miss_rate: float = 0.05
    fp_rate: float = 0.5  # expected false positives per frame
    box_jitter_sigma: float = 1.0
    width_range: tuple[float, float] = (20.0, 40.0)
    aspect_range: tuple[float, float] = (2.0, 3.0)  # height / width
    # Objects confined to disjoint horizontal bands moving only horizontally.
    lanes: bool = False
    seed: int = 0
    name: str = "sim"

    def __post_init__(self):
        for name in ("image_size", "speed_range", "width_range", "aspect_range"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        problems = []
        for name in ("direction_change_prob", "occlusion_prob", "miss_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                problems.append(f"{name} must be in [0, 1]")
        for name in ("appearance_noise_sigma", "nuisance_sigma", "box_jitter_sigma", "fp_rate"):
            if getattr(self, name) < 0:
                problems.append(f"{name} must be >= 0")
        if self.num_objects < 0 or self.frames < 1:
            problems.append("num_objects must be >= 0 and frames >= 1")
        if self.appearance_dim < 2:
            problems.append("appearance_dim must be >= 2")
        if self.occlusion_max_duration < 0:
            problems.append("occlusion_max_duration must be >= 0")
        lo, hi = self.speed_range
        if not 0 <= lo <= hi:
            problems.append("speed_range must satisfy 0 <= min <= max")
        if not 0 < self.width_range[0] <= self.width_range[1]:
            problems.append("width_range must be positive and ordered")
        if not 0 < self.aspect_range[0] <= self.aspect_range[1]:
            problems.append("aspect_range must be positive and ordered")
        W, H = self.image_size
        if self.width_range[1] >= W or self.width_range[1] * self.aspect_range[1] >= H:
            problems.append("objects must fit inside the image")
        if self.lanes and self.num_objects and self.width_range[1] * self.aspect_range[1] > H / self.num_objects:
            problems.append("lanes too narrow for the object heights")
        if problems:
            raise BadConfig("; ".join(problems))

    @property
    def identity_dim(self) -> int:
        return self.appearance_dim - self.appearance_dim // 2


def _unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def _render_feature(latent: np.ndarray, cfg: SimConfig, rng: np.random.Generator) -> np.ndarray:
    ident = latent + cfg.appearance_noise_sigma * rng.standard_normal(latent.shape[0])
    nuisance = cfg.nuisance_sigma * rng.standard_normal(cfg.appearance_dim - latent.shape[0])
    f = np.concatenate([ident, nuisance])
    norm = np.linalg.norm(f)
    return f / norm if norm > 0 else f


def _clamp_box(box, W, H):
    left, top, w, h = box
    w = min(max(w, 1.0), W)
    h = min(max(h, 1.0), H)
    left = min(max(left, 0.0), W - w)
    top = min(max(top, 0.0), H - h)
    return (left, top, w, h)


def _trajectories(cfg: SimConfig, rng: np.random.Generator):
    """Per object: list of (frame, box) for visible frames."""
    W, H = cfg.image_size
    out = []
    lane_h = H / cfg.num_objects if cfg.num_objects else H
    for k in range(cfg.num_objects):
        w = rng.uniform(*cfg.width_range)
        h = w * rng.uniform(*cfg.aspect_range)
        speed = rng.uniform(*cfg.speed_range)
        if cfg.lanes:
            x = rng.uniform(0, W - w)
            y = k * lane_h + (lane_h - h) / 2.0
            angle = 0.0 if rng.random() < 0.5 else np.pi
        else:
            x = rng.uniform(0, W - w)
            y = rng.uniform(0, H - h)
            angle = rng.uniform(0, 2 * np.pi)
        vx, vy = speed * np.cos(angle), speed * np.sin(angle)
        if cfg.lanes:
            vy = 0.0
        occluded_until = -1
        visible = []
        for frame in range(cfg.frames):
            if frame > 0:
                if rng.random() < cfg.direction_change_prob:
                    if cfg.lanes:
                        vx = -vx
                    else:
                        angle = rng.uniform(0, 2 * np.pi)
                        vx, vy = speed * np.cos(angle), speed * np.sin(angle)
                x += vx
                y += vy
                if x < 0 or x > W - w:
                    vx = -vx
                    x = min(max(x, 0.0), W - w)
                if y < 0 or y > H - h:
                    vy = -vy
                    y = min(max(y, 0.0), H - h)
            if frame > occluded_until and cfg.occlusion_max_duration > 0 and rng.random() < cfg.occlusion_prob:
                occluded_until = frame + int(rng.integers(1, cfg.occlusion_max_duration + 1)) - 1
            # Keep the first and last frames visible so each object is one gt track.
            if frame <= occluded_until and 0 < frame < cfg.frames - 1:
                continue
            visible.append((frame, _clamp_box((x, y, w, h), W, H)))
        out.append(visible)
    return out


def generate_scenario(cfg: SimConfig) -> Scenario:
    """Deterministic scenario for ``cfg`` (all randomness from ``cfg.seed``)."""
    rng = np.random.default_rng(cfg.seed)
    W, H = cfg.image_size
    d_id = cfg.identity_dim
    latents = [_unit(rng, d_id) for _ in range(cfg.num_objects)]
    paths = _trajectories(cfg, rng)

    gt_instances = []
    per_frame: list[list[Instance]] = [[] for _ in range(cfg.frames)]
    for k, path in enumerate(paths):
        items = []
        for frame, box in path:
            feature = _render_feature(latents[k], cfg, rng)
            items.append(Instance(frame, box, 1.0, feature))
            if rng.random() < cfg.miss_rate:
                continue
            if cfg.box_jitter_sigma > 0:
                jitter = cfg.box_jitter_sigma * rng.standard_normal(4)
                det_box = _clamp_box(tuple(np.add(box, jitter)), W, H)
            else:
                det_box = box
            conf = float(rng.uniform(0.5, 1.0))
            per_frame[frame].append(Instance(frame, det_box, conf, feature))
        gt_instances.append(items)

    if cfg.fp_rate > 0:
        for frame in range(cfg.frames):
            for _ in range(int(rng.poisson(cfg.fp_rate))):
                w = rng.uniform(*cfg.width_range)
                h = w * rng.uniform(*cfg.aspect_range)
                box = (rng.uniform(0, W - w), rng.uniform(0, H - h), w, h)
                feature = _render_feature(_unit(rng, d_id), cfg, rng)
                per_frame[frame].append(Instance(frame, box, float(rng.uniform(0.1, 0.6)), feature))

    gt_tracks = [make_track(k + 1, items) for k, items in enumerate(gt_instances) if items]
    detections = []
    for frame_dets in per_frame:
        detections.extend(frame_dets[i] for i in rng.permutation(len(frame_dets)))
    return Scenario(cfg.frames, gt_tracks, detections, (W, H), cfg.name)


def scenario_statistics(s: Scenario) -> VideoStats:
    return VideoStats(s.name, len(s.gt_tracks), s.frames)
