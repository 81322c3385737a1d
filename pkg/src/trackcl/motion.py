"""Box geometry and a constant-velocity Kalman filter in (cx, cy, aspect, height) space."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

# Noise standard deviations scale with box height.
STD_WEIGHT_POSITION = 1.0 / 20
STD_WEIGHT_VELOCITY = 1.0 / 160
MIN_HEIGHT = 1e-3

_F = np.eye(8)
_F[:4, 4:] = np.eye(4)
_H = np.eye(4, 8)


def iou(box_a, box_b) -> float:
    """Intersection over union of two ``(left, top, width, height)`` boxes."""
    ax, ay, aw, ah = box_a
    bx, by, bw, bh = box_b
    iw = min(ax + aw, bx + bw) - max(ax, bx)
    ih = min(ay + ah, by + bh) - max(ay, by)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    # (x + w) - x need not round to w; keep the ratio in [0, 1]
    return min(1.0, inter / (aw * ah + bw * bh - inter))


def iou_matrix(boxes_a, boxes_b) -> np.ndarray:
    a = np.asarray(boxes_a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(boxes_b, dtype=np.float64).reshape(-1, 4)
    if a.shape[0] == 0 or b.shape[0] == 0:
        return np.zeros((a.shape[0], b.shape[0]))
    left = np.maximum(a[:, None, 0], b[None, :, 0])
    top = np.maximum(a[:, None, 1], b[None, :, 1])
    right = np.minimum(a[:, None, 0] + a[:, None, 2], b[None, :, 0] + b[None, :, 2])
    bottom = np.minimum(a[:, None, 1] + a[:, None, 3], b[None, :, 1] + b[None, :, 3])
    inter = np.clip(right - left, 0, None) * np.clip(bottom - top, 0, None)
    union = (a[:, 2] * a[:, 3])[:, None] + (b[:, 2] * b[:, 3])[None, :] - inter
    return np.minimum(inter / union, 1.0)


def box_to_xyah(box) -> np.ndarray:
    left, top, w, h = box
    return np.array([left + w / 2.0, top + h / 2.0, w / h, h])


def xyah_to_box(xyah) -> tuple[float, float, float, float]:
    cx, cy, a, h = (float(v) for v in xyah[:4])
    h = max(h, MIN_HEIGHT)
    w = max(a * h, MIN_HEIGHT)
    return (cx - w / 2.0, cy - h / 2.0, w, h)


@dataclass(frozen=True, eq=False)
class KalmanState:
    mean: np.ndarray  # (8,) cx, cy, a, h, vcx, vcy, va, vh
    covariance: np.ndarray  # (8, 8)

    def __post_init__(self):
        mean = np.array(self.mean, dtype=np.float64).reshape(8)
        cov = np.array(self.covariance, dtype=np.float64).reshape(8, 8)
        if not np.allclose(cov, cov.T, atol=1e-9):
            raise ValidationError("covariance must be symmetric")
        if mean[3] <= 0:
            raise ValidationError("height must be positive")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def box(self) -> tuple[float, float, float, float]:
        return xyah_to_box(self.mean)


def kalman_initiate(box) -> KalmanState:
    z = box_to_xyah(box)
    h = z[3]
    std = np.array([
        2 * STD_WEIGHT_POSITION * h,
        2 * STD_WEIGHT_POSITION * h,
        1e-2,
        2 * STD_WEIGHT_POSITION * h,
        10 * STD_WEIGHT_VELOCITY * h,
        10 * STD_WEIGHT_VELOCITY * h,
        1e-5,
        10 * STD_WEIGHT_VELOCITY * h,
    ])
    return KalmanState(np.r_[z, np.zeros(4)], np.diag(std**2))


def kalman_predict(state: KalmanState) -> KalmanState:
    """One constant-velocity step with height-proportional process noise."""
    h = state.mean[3]
    std = np.array([
        STD_WEIGHT_POSITION * h,
        STD_WEIGHT_POSITION * h,
        1e-2,
        STD_WEIGHT_POSITION * h,
        STD_WEIGHT_VELOCITY * h,
        STD_WEIGHT_VELOCITY * h,
        1e-5,
        STD_WEIGHT_VELOCITY * h,
    ])
    mean = _F @ state.mean
    mean[3] = max(mean[3], MIN_HEIGHT)
    cov = _F @ state.covariance @ _F.T + np.diag(std**2)
    return KalmanState(mean, (cov + cov.T) / 2.0)


def kalman_update(state: KalmanState, box) -> KalmanState:
    z = box_to_xyah(box)
    h = state.mean[3]
    r = np.diag(np.array([STD_WEIGHT_POSITION * h, STD_WEIGHT_POSITION * h, 1e-1, STD_WEIGHT_POSITION * h]) ** 2)
    P = state.covariance
    S = _H @ P @ _H.T + r
    gain = np.linalg.solve(S, _H @ P).T  # P H^T S^-1, S symmetric
    mean = state.mean + gain @ (z - _H @ state.mean)
    mean[3] = max(mean[3], MIN_HEIGHT)
    cov = P - gain @ S @ gain.T
    return KalmanState(mean, (cov + cov.T) / 2.0)
