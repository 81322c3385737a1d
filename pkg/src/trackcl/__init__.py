"""Tracklet-level contrastive appearance embeddings for multi-object tracking.

The package covers the track data model, a numpy MLP encoder with analytic
gradients, contrastive and baseline losses, batch sampling, a motion-only
pseudo-labeler, an online appearance+motion tracker, CLEAR-MOT/IDF1
metrics, a synthetic scenario generator and the training/CLI pipeline.
"""

from .embedding import Encoder, aggregate, encode, encode_backward
from .errors import TrackCLError
from .losses import LossConfig, ce_loss, margin_loss, scl_loss, tcl_loss
from .metrics import MetricsReport, evaluate
from .simgen import SimConfig, generate_scenario
from .tracks import Instance, Scenario, Sequence, SubTrack, Track

__version__ = "0.1.0"

__all__ = [
    "Encoder", "Instance", "LossConfig", "MetricsReport", "Scenario", "Sequence",
    "SimConfig", "SubTrack", "Track", "TrackCLError", "aggregate", "ce_loss",
    "encode", "encode_backward", "evaluate", "generate_scenario", "margin_loss",
    "scl_loss", "tcl_loss",
]
