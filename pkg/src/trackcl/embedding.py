"""Embedding function, mean aggregation and the instance-to-track distance.

The encoder is a two-layer perceptron followed by l2 normalization::

    f(x) = normalize(W2 @ relu(W1 @ x + b1) + b2)

Backward passes are written by hand so every gradient can be checked
against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateAggregate, DegenerateEmbedding, ValidationError

NORM_EPS = 1e-8


@dataclass(frozen=True, eq=False)
class Encoder:
    W1: np.ndarray  # (H, D_in)
    b1: np.ndarray  # (H,)
    W2: np.ndarray  # (C, H)
    b2: np.ndarray  # (C,)

    def __post_init__(self):
        for name in ("W1", "b1", "W2", "b2"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        hidden, d_in = self.W1.shape
        if hidden < 1 or self.b1.shape != (hidden,):
            raise ValidationError("W1/b1 shapes inconsistent")
        if self.W2.ndim != 2 or self.W2.shape[1] != hidden or self.W2.shape[0] < 2:
            raise ValidationError("W2 must be (C, H) with C >= 2")
        if self.b2.shape != (self.W2.shape[0],):
            raise ValidationError("b2 shape inconsistent")
        if not all(np.all(np.isfinite(getattr(self, n))) for n in ("W1", "b1", "W2", "b2")):
            raise ValidationError("encoder parameters must be finite")

    @property
    def input_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.W1.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.W2.shape[0]

    @classmethod
    def random(cls, input_dim=16, hidden_dim=32, embed_dim=64, rng=None) -> "Encoder":
        """He-style initialization for the hidden layer, Glorot for the output."""
        rng = np.random.default_rng(rng)
        W1 = rng.standard_normal((hidden_dim, input_dim)) * np.sqrt(2.0 / input_dim)
        b1 = np.full(hidden_dim, 0.01)
        W2 = rng.standard_normal((embed_dim, hidden_dim)) * np.sqrt(2.0 / (hidden_dim + embed_dim))
        b2 = np.zeros(embed_dim)
        return cls(W1, b1, W2, b2)

    def params(self) -> dict[str, np.ndarray]:
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2}

    def replace(self, **params) -> "Encoder":
        merged = self.params()
        merged.update(params)
        return Encoder(**merged)

    def __eq__(self, other):
        if not isinstance(other, Encoder):
            return NotImplemented
        return all(np.array_equal(a, b) for a, b in zip(self.params().values(), other.params().values()))


@dataclass(frozen=True, eq=False)
class TrackEmbedding:
    """Unit-norm track embedding plus the raw mean it was normalized from.

    Keeping the raw mean lets the online tracker fold in new instances
    incrementally.
    """

    values: np.ndarray
    count: int
    mean: np.ndarray = field(default=None)

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        mean = values if self.mean is None else np.array(self.mean, dtype=np.float64)
        mean.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        if self.count < 1:
            raise ValidationError("track embedding count must be >= 1")


@dataclass
class EncodeCache:
    x: np.ndarray
    z1: np.ndarray
    h: np.ndarray
    norm: np.ndarray
    y: np.ndarray


def encode_batch(encoder: Encoder, features: np.ndarray, return_cache: bool = False):
    """Embed an ``(n, D_in)`` batch; rows of the output have unit norm."""
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if x.shape[1] != encoder.input_dim:
        raise ValidationError(f"feature dim {x.shape[1]} != encoder input dim {encoder.input_dim}")
    if not np.all(np.isfinite(x)):
        raise ValidationError("features must be finite")
    z1 = x @ encoder.W1.T + encoder.b1
    h = np.maximum(z1, 0.0)
    z2 = h @ encoder.W2.T + encoder.b2
    norm = np.sqrt(np.einsum("ij,ij->i", z2, z2))
    if x.shape[0] and norm.min() < NORM_EPS:
        raise DegenerateEmbedding("pre-normalization embedding norm below 1e-8")
    y = z2 / norm[:, None]
    if return_cache:
        return y, EncodeCache(x, z1, h, norm, y)
    return y


def encode(encoder: Encoder, feature) -> np.ndarray:
    return encode_batch(encoder, np.asarray(feature, dtype=np.float64)[None, :])[0]


def _normalize_backward(y: np.ndarray, norm: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    # d(z/|z|)^T u = (u - y (y.u)) / |z|
    radial = np.einsum("ij,ij->i", y, upstream)
    return (upstream - y * radial[:, None]) / norm[:, None]


def backward_from_cache(encoder: Encoder, cache: EncodeCache, upstream: np.ndarray) -> dict[str, np.ndarray]:
    """Parameter gradients of ``sum_i upstream[i] . f(x_i)``."""
    upstream = np.atleast_2d(np.asarray(upstream, dtype=np.float64))
    g_z2 = _normalize_backward(cache.y, cache.norm, upstream)
    g_W2 = g_z2.T @ cache.h
    g_b2 = g_z2.sum(axis=0)
    g_h = g_z2 @ encoder.W2
    g_z1 = g_h * (cache.z1 > 0)
    g_W1 = g_z1.T @ cache.x
    g_b1 = g_z1.sum(axis=0)
    return {"W1": g_W1, "b1": g_b1, "W2": g_W2, "b2": g_b2}


def encode_backward_batch(encoder: Encoder, features: np.ndarray, upstream: np.ndarray) -> dict[str, np.ndarray]:
    _, cache = encode_batch(encoder, features, return_cache=True)
    return backward_from_cache(encoder, cache, upstream)


def encode_backward(encoder: Encoder, feature, upstream_grad) -> dict[str, np.ndarray]:
    """Gradients of ``upstream_grad . encode(encoder, feature)`` w.r.t. every parameter."""
    x = np.asarray(feature, dtype=np.float64)[None, :]
    u = np.asarray(upstream_grad, dtype=np.float64)[None, :]
    return encode_backward_batch(encoder, x, u)


def _ordered_sum(vectors: np.ndarray) -> np.ndarray:
    # Canonical (lexicographic) row order makes the sum permutation-invariant bit-for-bit.
    order = np.lexsort(vectors.T[::-1])
    total = np.zeros(vectors.shape[1])
    for idx in order:
        total = total + vectors[idx]
    return total


def aggregate(embeddings) -> TrackEmbedding:
    """Mean of unit embeddings, renormalized to the unit sphere."""
    vecs = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    if vecs.shape[0] == 0 or vecs.size == 0:
        raise ValidationError("aggregate needs at least one embedding")
    mean = _ordered_sum(vecs) / vecs.shape[0]
    norm = np.linalg.norm(mean)
    if norm < NORM_EPS:
        raise DegenerateAggregate("mean embedding norm below 1e-8")
    return TrackEmbedding(mean / norm, vecs.shape[0], mean)


def aggregate_backward(embeddings, upstream) -> np.ndarray:
    """Gradient of ``upstream . aggregate(embeddings).values`` w.r.t. each member."""
    vecs = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    mean = vecs.mean(axis=0)
    norm = np.linalg.norm(mean)
    if norm < NORM_EPS:
        raise DegenerateAggregate("mean embedding norm below 1e-8")
    g = mean / norm
    u = np.asarray(upstream, dtype=np.float64)
    g_mean = (u - g * (g @ u)) / norm
    return np.tile(g_mean / vecs.shape[0], (vecs.shape[0], 1))


def instance_track_distance(inst: np.ndarray, track: TrackEmbedding | np.ndarray) -> float:
    """Cosine distance ``1 - <f(I), g>`` in ``[0, 2]``."""
    values = track.values if isinstance(track, TrackEmbedding) else np.asarray(track, dtype=np.float64)
    d = 1.0 - float(np.dot(np.asarray(inst, dtype=np.float64), values))
    return min(2.0, max(0.0, d))


def update_track_embedding(track: TrackEmbedding, new: np.ndarray, decay: float | None = None) -> TrackEmbedding:
    """Fold one instance embedding into a running aggregate.

    With ``decay=None`` this is the exact count-weighted mean; otherwise an
    exponential moving average with weight ``decay`` on the new embedding.
    """
    new = np.asarray(new, dtype=np.float64)
    n = track.count
    if decay is None:
        mean = (track.mean * n + new) / (n + 1)
    else:
        mean = (1.0 - decay) * track.mean + decay * new
    norm = np.linalg.norm(mean)
    if norm < NORM_EPS:
        raise DegenerateAggregate("running mean embedding norm below 1e-8")
    return TrackEmbedding(mean / norm, n + 1, mean)
