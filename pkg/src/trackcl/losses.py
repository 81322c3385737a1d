"""Embedding losses with analytic gradients.

Every loss returns gradients with respect to the embeddings it was given;
chaining into encoder parameters happens in the trainer.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np

from .errors import BadLabel, EmptyBatch, ValidationError


@dataclass(frozen=True)
class LossConfig:
    temperature: float = 0.07
    margin: float = 1.0
    num_classes: int | None = None
    # Evaluate the softmax ratio without the log; comparison only.
    literal_form: bool = False

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValidationError("temperature must be positive")
        if not self.margin > 0:
            raise ValidationError("margin must be positive")
        if self.num_classes is not None and self.num_classes < 1:
            raise ValidationError("num_classes must be >= 1")


def _label_codes(labels_a: Sequence[Hashable], labels_b: Sequence[Hashable]) -> tuple[np.ndarray, np.ndarray]:
    table: dict = {}
    codes_a = np.array([table.setdefault(x, len(table)) for x in labels_a], dtype=np.int64)
    codes_b = np.array([table.setdefault(x, len(table)) for x in labels_b], dtype=np.int64)
    return codes_a, codes_b


@dataclass(frozen=True, eq=False)
class ContrastBatch:
    """N anchor embeddings against L sub-track embeddings.

    ``positive_sets[i]`` holds the sub-track indices whose parent label equals
    anchor ``i``'s label.
    """

    anchors: np.ndarray  # (N, C)
    anchor_labels: tuple
    subtracks: np.ndarray  # (L, C)
    subtrack_labels: tuple
    subtrack_counts: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "anchors", np.atleast_2d(np.asarray(self.anchors, dtype=np.float64)))
        object.__setattr__(self, "subtracks", np.atleast_2d(np.asarray(self.subtracks, dtype=np.float64)))
        object.__setattr__(self, "anchor_labels", tuple(self.anchor_labels))
        object.__setattr__(self, "subtrack_labels", tuple(self.subtrack_labels))
        if not self.subtrack_counts:
            object.__setattr__(self, "subtrack_counts", (1,) * len(self.subtrack_labels))
        if len(self.anchor_labels) != self.anchors.shape[0]:
            raise ValidationError("one label per anchor required")
        if len(self.subtrack_labels) != self.subtracks.shape[0]:
            raise ValidationError("one label per sub-track required")

    @property
    def num_anchors(self) -> int:
        return len(self.anchor_labels)

    @property
    def num_subtracks(self) -> int:
        return len(self.subtrack_labels)

    def positive_mask(self) -> np.ndarray:
        a, s = _label_codes(self.anchor_labels, self.subtrack_labels)
        return a[:, None] == s[None, :]

    @property
    def positive_sets(self) -> list[np.ndarray]:
        return [np.flatnonzero(row) for row in self.positive_mask()]


def _logsumexp_rows(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=1, keepdims=True)
    return (m + np.log(np.exp(x - m).sum(axis=1, keepdims=True)))[:, 0]


def tcl_loss(batch: ContrastBatch, cfg: LossConfig = LossConfig()):
    """Instance-to-track contrastive loss.

    ``loss = sum_i 1/|S(i)| sum_{j in S(i)} -log softmax_j(a_i . g / tau)``,
    summed over anchors with a non-empty positive set.

    Returns ``(loss, grad_anchors, grad_subtracks)``.
    """
    if batch.num_anchors == 0 or batch.num_subtracks == 0:
        raise EmptyBatch("tcl_loss needs N >= 1 anchors and L >= 1 sub-tracks")
    tau = cfg.temperature
    A, G = batch.anchors, batch.subtracks
    pos = batch.positive_mask().astype(np.float64)
    n_pos = pos.sum(axis=1)
    valid = n_pos > 0
    weights = np.zeros_like(pos)
    weights[valid] = pos[valid] / n_pos[valid, None]

    logits = A @ G.T / tau
    lse = _logsumexp_rows(logits)
    log_prob = logits - lse[:, None]
    prob = np.exp(log_prob)

    if cfg.literal_form:
        per_anchor = -(weights * prob).sum(axis=1)
        wp = weights * prob
        d_logits = -(wp - prob * wp.sum(axis=1, keepdims=True))
    else:
        per_anchor = -(weights * log_prob).sum(axis=1)
        d_logits = prob * valid[:, None] - weights
    loss = 0.0
    for i in np.flatnonzero(valid):
        loss += per_anchor[i]
    grad_A = d_logits @ G / tau
    grad_G = d_logits.T @ A / tau
    return float(loss), grad_A, grad_G


def scl_loss(embeddings, labels, cfg: LossConfig = LossConfig(), contrast=None, contrast_labels=None):
    """Supervised instance-to-instance contrastive loss.

    Without ``contrast`` the anchors double as the contrast set and each
    anchor is excluded from its own denominator; ``grad_contrast`` is then
    ``None`` and ``grad_anchors`` carries both roles. With an explicit
    contrast set nothing is excluded.

    Returns ``(loss, grad_anchors, grad_contrast)``.
    """
    E = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    labels = list(labels)
    self_contrast = contrast is None
    if self_contrast:
        if len(labels) < 2:
            raise EmptyBatch("scl_loss needs at least two instances")
        K, klabels = E, labels
    else:
        K = np.atleast_2d(np.asarray(contrast, dtype=np.float64))
        klabels = list(contrast_labels)
        if len(labels) == 0 or len(klabels) == 0:
            raise EmptyBatch("scl_loss needs anchors and contrast elements")
    if len(labels) != E.shape[0] or len(klabels) != K.shape[0]:
        raise ValidationError("label count mismatch")
    tau = cfg.temperature
    codes_e, codes_k = _label_codes(labels, klabels)
    sims = E @ K.T / tau
    include = np.ones(sims.shape, dtype=bool)
    if self_contrast:
        np.fill_diagonal(include, False)
    pos = (codes_e[:, None] == codes_k[None, :]) & include
    n_pos = pos.sum(axis=1)
    valid = n_pos > 0

    masked = np.where(include, sims, -np.inf)
    top = masked.max(axis=1, keepdims=True)
    log_norm = top[:, 0] + np.log(np.where(include, np.exp(masked - top), 0.0).sum(axis=1))
    pos_mean = np.where(pos, sims, 0.0).sum(axis=1) / np.maximum(n_pos, 1)
    terms = np.where(valid, log_norm - pos_mean, 0.0)
    loss = float(np.sum(terms))

    probs = np.where(include, np.exp(masked - log_norm[:, None]), 0.0)
    coef = (probs - pos / np.maximum(n_pos, 1)[:, None]) * valid[:, None]
    grad_E = coef @ K / tau
    grad_K = coef.T @ E / tau
    if self_contrast:
        return loss, grad_E + grad_K, None
    return loss, grad_E, grad_K


def ce_loss(logits, label: int):
    """Softmax cross-entropy for one instance. Returns ``(loss, grad_logits)``."""
    z = np.asarray(logits, dtype=np.float64)
    if not 0 <= label < z.shape[0]:
        raise BadLabel(f"label {label} outside [0, {z.shape[0]})")
    top = z.max()
    log_norm = top + np.log(np.exp(z - top).sum())
    prob = np.exp(z - log_norm)
    grad = prob.copy()
    grad[label] -= 1.0
    return float(log_norm - z[label]), grad


def ce_loss_batch(logits: np.ndarray, labels: np.ndarray):
    """Summed cross-entropy over rows of ``logits``."""
    z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= z.shape[1]):
        raise BadLabel("label out of range")
    lse = _logsumexp_rows(z)
    rows = np.arange(z.shape[0])
    prob = np.exp(z - lse[:, None])
    grad = prob
    grad[rows, labels] -= 1.0
    return float(np.sum(lse - z[rows, labels])), grad


def margin_loss(emb_a, emb_b, same_identity: bool, cfg: LossConfig = LossConfig()):
    """Contrastive margin loss on one pair. Returns ``(loss, grad_a, grad_b)``."""
    d = np.asarray(emb_a, dtype=np.float64) - np.asarray(emb_b, dtype=np.float64)
    dist2 = float(d @ d)
    if same_identity:
        return dist2, 2.0 * d, -2.0 * d
    gap = cfg.margin - dist2
    if gap <= 0.0:
        return 0.0, np.zeros_like(d), np.zeros_like(d)
    return gap, -2.0 * d, 2.0 * d


def margin_loss_batch(embeddings: np.ndarray, labels: Sequence[Hashable], cfg: LossConfig = LossConfig()):
    """Margin loss summed over all unordered pairs. Returns ``(loss, grad, num_pairs)``."""
    E = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    codes, _ = _label_codes(labels, [])
    n = E.shape[0]
    same = codes[:, None] == codes[None, :]
    sq = np.einsum("ij,ij->i", E, E)
    dist2 = sq[:, None] + sq[None, :] - 2.0 * E @ E.T
    upper = np.triu(np.ones((n, n), dtype=bool), k=1)
    hinge = (cfg.margin - dist2) > 0
    pair_loss = np.where(same, dist2, np.where(hinge, cfg.margin - dist2, 0.0))
    # d(dist2_ij)/dE_i = 2 (E_i - E_j); coefficient per pair is +1 (same), -1 (active hinge)
    coef = np.where(same, 1.0, np.where(hinge, -1.0, 0.0)) * upper
    coef = coef + coef.T
    grad = 2.0 * (coef.sum(axis=1)[:, None] * E - coef @ E)
    return float(pair_loss[upper].sum()), grad, int(upper.sum())
