"""Training loop: sample batch, embed, loss forward/backward, SGD with momentum."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .config import to_dict
from .embedding import NORM_EPS, Encoder, backward_from_cache, encode_batch
from .errors import DegenerateAggregate, DivergenceDetected, ValidationError
from .io import Checkpoint
from .losses import ContrastBatch, LossConfig, ce_loss_batch, margin_loss_batch, scl_loss, tcl_loss
from .pseudo_label import PrimitiveConfig, pseudo_label
from .sampling import SampledBatch, SamplerConfig, VideoStats, mine_videos, sample_batch
from .tracks import Scenario, Sequence

log = logging.getLogger(__name__)

LOSSES = ("tcl", "scl", "ce", "margin")


@dataclass(frozen=True)
class TrainConfig:
    loss: str = "tcl"
    epochs: int = 10
    steps_per_epoch: int = 20
    batch_anchor_target: int | None = 144
    lr_initial: float = 1e-3
    lr_final: float = 1e-4
    # Defaults to 200/220 of the epochs (200 epochs, drop, 20 more), but never
    # before the first epoch ends.
    lr_drop_epoch: int | None = None
    momentum: float = 0.9
    seed: int = 0
    feature_dim: int = 16
    hidden_dim: int = 32
    embed_dim: int = 64
    # Divide the summed loss by the number of contributing anchors (or pairs).
    mean_reduction: bool = True
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    loss_cfg: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ValidationError(f"loss must be one of {LOSSES}")
        if self.epochs < 1 or self.steps_per_epoch < 1:
            raise ValidationError("epochs and steps_per_epoch must be >= 1")
        if not (self.lr_initial > 0 and self.lr_final > 0):
            raise ValidationError("learning rates must be positive")
        if not 0 <= self.momentum < 1:
            raise ValidationError("momentum must be in [0, 1)")
        if self.lr_drop_epoch is not None and self.lr_drop_epoch < 0:
            raise ValidationError("lr_drop_epoch must be >= 0")

    @property
    def drop_epoch(self) -> int:
        if self.lr_drop_epoch is not None:
            return self.lr_drop_epoch
        return max(1, int(self.epochs * 200 / 220))

    def lr_at(self, epoch: int) -> float:
        return self.lr_initial if epoch < self.drop_epoch else self.lr_final


@dataclass(frozen=True)
class DatasetSpec:
    """Labeled sequences (V_A), the unlabeled pool (V_U) and the mined subset (V_R)."""

    labeled: tuple[Sequence, ...]
    unlabeled_pool: tuple[str, ...] = ()
    mined: tuple[Sequence, ...] = ()
    mining_k: int = 0
    pool_stats: tuple[VideoStats, ...] = ()

    def __post_init__(self):
        for name in ("labeled", "unlabeled_pool", "mined", "pool_stats"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        pool = set(self.unlabeled_pool)
        if any(s.name not in pool for s in self.mined):
            raise ValidationError("mined sequences must come from the unlabeled pool")


def pseudo_sequence(s: Scenario, cfg: PrimitiveConfig = PrimitiveConfig()) -> Sequence:
    return Sequence(s.name, s.frames, tuple(pseudo_label(list(s.detections), cfg)))


def assemble_dataset(labeled: list[Scenario], unlabeled: list[Scenario], mining_k: int | None = None, primitive: PrimitiveConfig = PrimitiveConfig(), selection: str = "mined", rng=None) -> DatasetSpec:
    """Pseudo-label the unlabeled pool and keep ``mining_k`` videos.

    ``selection="mined"`` ranks by produced track count; ``"random"`` draws
    the same number uniformly (for the mining ablation).
    """
    pseudo = {s.name: pseudo_sequence(s, primitive) for s in unlabeled}
    stats = [VideoStats(s.name, len(pseudo[s.name].tracks), s.frames) for s in unlabeled]
    k = len(unlabeled) if mining_k is None else mining_k
    if selection == "mined":
        names = mine_videos(stats, k)
    elif selection == "random":
        rng = np.random.default_rng(rng)
        order = rng.permutation(len(unlabeled))[: min(k, len(unlabeled))]
        names = [unlabeled[i].name for i in sorted(order)]
    else:
        raise ValidationError(f"unknown selection {selection!r}")
    return DatasetSpec(
        labeled=tuple(s.labeled() for s in labeled),
        unlabeled_pool=tuple(s.name for s in unlabeled),
        mined=tuple(pseudo[n] for n in names),
        mining_k=k,
        pool_stats=tuple(stats),
    )


def ce_logit_scale(num_classes: int) -> float:
    """Scale applied to unit embeddings before the identity head."""
    return math.sqrt(2.0) * math.log(max(num_classes - 1, 2))


def _subtrack_forward(emb: np.ndarray, members):
    means = np.vstack([emb[m].mean(axis=0) for m in members])
    norms = np.linalg.norm(means, axis=1)
    if norms.min() < NORM_EPS:
        raise DegenerateAggregate("sub-track mean embedding vanished")
    return means / norms[:, None], norms


def _subtrack_backward(G, norms, members, grad_G, grad_emb):
    radial = np.einsum("ij,ij->i", G, grad_G)
    g_mean = (grad_G - G * radial[:, None]) / norms[:, None]
    for j, m in enumerate(members):
        np.add.at(grad_emb, m, g_mean[j] / len(m))


def batch_loss(raw: SampledBatch, encoder: Encoder, cfg: TrainConfig, head=None, class_of=None):
    """Loss and parameter gradients for one sampled batch.

    Returns ``(loss, grads, head_grad)``; ``head_grad`` is only set for CE.
    """
    emb, cache = encode_batch(encoder, raw.features, return_cache=True)
    grad_emb = np.zeros_like(emb)
    head_grad = None
    count = raw.num_anchors
    if cfg.loss == "tcl":
        G, norms = _subtrack_forward(emb, raw.subtrack_members)
        batch = ContrastBatch(emb, raw.anchor_labels, G, raw.subtrack_labels)
        loss, g_a, g_g = tcl_loss(batch, cfg.loss_cfg)
        count = int(batch.positive_mask().any(axis=1).sum())
        grad_emb += g_a
        _subtrack_backward(G, norms, raw.subtrack_members, g_g, grad_emb)
    elif cfg.loss == "scl":
        idx = np.concatenate(raw.subtrack_members)
        labels = [lab for lab, m in zip(raw.subtrack_labels, raw.subtrack_members) for _ in m]
        loss, g_a, g_k = scl_loss(emb, raw.anchor_labels, cfg.loss_cfg, contrast=emb[idx], contrast_labels=labels)
        pos = set(labels)
        count = sum(1 for lab in raw.anchor_labels if lab in pos)
        grad_emb += g_a
        np.add.at(grad_emb, idx, g_k)
    elif cfg.loss == "ce":
        classes = np.array([class_of[lab] for lab in raw.anchor_labels])
        s = ce_logit_scale(head.shape[0])
        logits = s * emb @ head.T
        loss, g_logits = ce_loss_batch(logits, classes)
        grad_emb += s * g_logits @ head
        head_grad = s * g_logits.T @ emb
    else:
        loss, g, count = margin_loss_batch(emb, raw.anchor_labels, cfg.loss_cfg)
        grad_emb += g
    scale = 1.0 / max(count, 1) if cfg.mean_reduction else 1.0
    loss *= scale
    grad_emb *= scale
    if head_grad is not None:
        head_grad *= scale
    grads = backward_from_cache(encoder, cache, grad_emb)
    return loss, grads, head_grad


def train(data: DatasetSpec, cfg: TrainConfig, encoder: Encoder | None = None) -> Checkpoint:
    """Train an encoder on labeled plus mined pseudo-labeled sequences."""
    if not data.labeled and cfg.sampler.segments_labeled:
        raise ValidationError("training needs labeled sequences")
    sampler = replace(cfg.sampler, anchor_target=cfg.batch_anchor_target)
    if not data.mined and sampler.segments_unlabeled:
        sampler = replace(sampler, segments_unlabeled=0)
    rng = np.random.default_rng(cfg.seed)
    if encoder is None:
        encoder = Encoder.random(cfg.feature_dim, cfg.hidden_dim, cfg.embed_dim, rng)
    params = {k: v.copy() for k, v in encoder.params().items()}
    velocity = {k: np.zeros_like(v) for k, v in params.items()}

    head = class_of = head_vel = None
    if cfg.loss == "ce":
        labels = sorted({(s.name, t.id) for s in (*data.labeled, *data.mined) for t in s.tracks})
        class_of = {lab: i for i, lab in enumerate(labels)}
        bound = 1.0 / math.sqrt(cfg.embed_dim)
        head = rng.uniform(-bound, bound, (len(labels), cfg.embed_dim))
        head_vel = np.zeros_like(head)

    history = []
    epoch_losses: list[float] = []
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        epoch_losses = []
        for _ in range(cfg.steps_per_epoch):
            raw = sample_batch(list(data.labeled), list(data.mined), sampler, rng)
            loss, grads, head_grad = batch_loss(raw, Encoder(**params), cfg, head, class_of)
            if not math.isfinite(loss):
                raise DivergenceDetected(f"non-finite loss at epoch {epoch}")
            for k in params:
                velocity[k] = cfg.momentum * velocity[k] + grads[k]
                params[k] = params[k] - lr * velocity[k]
            if head is not None:
                head_vel = cfg.momentum * head_vel + head_grad
                head = head - lr * head_vel
            history.append(loss)
            epoch_losses.append(loss)
        log.debug("epoch %d lr %.2e loss %.6f", epoch, lr, float(np.mean(epoch_losses)))
    return Checkpoint(
        encoder=Encoder(**params),
        config=to_dict(cfg),
        rng_state=to_dict(rng.bit_generator.state),
        epoch=cfg.epochs,
        running_loss=float(np.mean(epoch_losses)),
        loss_history=tuple(history),
    )
