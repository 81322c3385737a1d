"""File formats: MOT text rows, feature sidecars, scenario directories, checkpoints.

MOT rows are ``frame,id,bb_left,bb_top,bb_width,bb_height,conf,x,y,z`` with
1-based frames on disk and 0-based frames in memory. ``id == -1`` marks an
unassociated detection. Floats are written with ``repr`` so values round-trip
exactly; a file written by :func:`format_mot` is canonical.

Feature sidecars are text files::

    # trackcl-features v1 dim=<D>
    <frame>,<index>,<v_1>,...,<v_D>

where ``frame`` is 1-based and ``index`` is the row's position among the
MOT rows of that frame.
"""

from __future__ import annotations

import json
import struct
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embedding import Encoder
from .errors import ParseError, ValidationError
from .tracks import Instance, Scenario, Track, make_track

FEATURES_HEADER = "# trackcl-features v1"
SCENARIO_FORMAT = "trackcl-scenario"
SCENARIO_VERSION = 1
CHECKPOINT_MAGIC = b"TRACKCL-CKPT\n"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class MotRow:
    frame: int  # 0-based
    id: int
    box: tuple[float, float, float, float]
    conf: float
    extra: tuple[str, ...] = ("-1", "-1", "-1")


def _read_text(source) -> tuple[str, object]:
    if isinstance(source, Path) or (isinstance(source, str) and source and "\n" not in source and Path(source).exists()):
        path = Path(source)
        try:
            return path.read_text(), path
        except OSError as exc:
            raise OSError(f"cannot read {path}: {exc}") from exc
    return str(source), None


def parse_mot(source) -> list[MotRow]:
    """Parse MOT text (a path or the text itself) into rows, in file order."""
    text, path = _read_text(source)
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) < 7:
            raise ParseError(f"expected at least 7 fields, got {len(parts)}", lineno, path)
        try:
            frame = int(float(parts[0]))
            track_id = int(float(parts[1]))
            box = tuple(float(p) for p in parts[2:6])
            conf = float(parts[6])
        except ValueError as exc:
            raise ParseError(f"malformed number ({exc})", lineno, path) from None
        if frame < 1:
            raise ParseError("frames are 1-based", lineno, path)
        if box[2] <= 0 or box[3] <= 0:
            raise ParseError("box width and height must be positive", lineno, path)
        rows.append(MotRow(frame - 1, track_id, box, conf, tuple(p.strip() for p in parts[7:])))
    return rows


def format_mot(rows) -> str:
    out = []
    for r in rows:
        fields_ = [str(r.frame + 1), str(r.id), *(repr(float(v)) for v in r.box), repr(float(r.conf)), *r.extra]
        out.append(",".join(fields_))
    return "".join(line + "\n" for line in out)


def write_mot(path, rows) -> None:
    Path(path).write_text(format_mot(rows))


def tracks_to_rows(tracks) -> list[MotRow]:
    """Rows sorted by (frame, id)."""
    rows = [
        MotRow(inst.frame, t.id, inst.box, inst.confidence)
        for t in tracks
        for inst in t.instances
    ]
    return sorted(rows, key=lambda r: (r.frame, r.id))


def detections_to_rows(detections) -> list[MotRow]:
    return [MotRow(d.frame, -1, d.box, d.confidence) for d in detections]


def _frame_index(rows):
    counter: dict[int, int] = defaultdict(int)
    keys = []
    for r in rows:
        keys.append((r.frame, counter[r.frame]))
        counter[r.frame] += 1
    return keys


def rows_to_instances(rows, features: dict | None = None) -> list[Instance]:
    """Instances in row order; identity ``None`` for ``id == -1``."""
    out = []
    for (frame, idx), r in zip(_frame_index(rows), rows):
        feat = features.get((frame, idx), np.zeros(0)) if features else np.zeros(0)
        try:
            out.append(Instance(r.frame, r.box, r.conf, feat, None if r.id == -1 else r.id))
        except ValidationError as exc:
            raise ParseError(f"row for frame {frame + 1}: {exc}") from None
    return out


def rows_to_tracks(rows, features: dict | None = None, source="annotated") -> list[Track]:
    """Group associated rows by id; tracks sorted by id, instances by frame."""
    grouped: dict[int, list[Instance]] = defaultdict(list)
    for inst in rows_to_instances(rows, features):
        if inst.identity is not None:
            grouped[inst.identity].append(inst)
    return [
        make_track(tid, sorted(grouped[tid], key=lambda i: i.frame), source)
        for tid in sorted(grouped)
    ]


def format_features(rows, vectors) -> str:
    vectors = [np.asarray(v, dtype=np.float64) for v in vectors]
    dim = vectors[0].shape[0] if vectors else 0
    lines = [f"{FEATURES_HEADER} dim={dim}"]
    for (frame, idx), v in zip(_frame_index(rows), vectors):
        lines.append(",".join([str(frame + 1), str(idx), *(repr(float(x)) for x in v)]))
    return "\n".join(lines) + "\n"


def parse_features(source) -> dict[tuple[int, int], np.ndarray]:
    text, path = _read_text(source)
    lines = text.splitlines()
    if not lines or not lines[0].startswith(FEATURES_HEADER):
        raise ParseError("missing feature sidecar header", 1, path)
    try:
        dim = int(lines[0].split("dim=")[1])
    except (IndexError, ValueError):
        raise ParseError("header lacks dim=<D>", 1, path) from None
    out = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != dim + 2:
            raise ParseError(f"expected {dim + 2} fields, got {len(parts)}", lineno, path)
        try:
            key = (int(parts[0]) - 1, int(parts[1]))
            out[key] = np.array([float(p) for p in parts[2:]])
        except ValueError as exc:
            raise ParseError(f"malformed number ({exc})", lineno, path) from None
    return out


# --- scenario directories -------------------------------------------------

def save_scenario(s: Scenario, directory) -> Path:
    """Write ``gt.txt``, ``det.txt``, their feature sidecars and ``meta.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    gt_rows = tracks_to_rows(s.gt_tracks)
    by_key = {(inst.frame, t.id): inst for t in s.gt_tracks for inst in t.instances}
    gt_feats = [by_key[(r.frame, r.id)].feature for r in gt_rows]
    det_rows = detections_to_rows(s.detections)
    write_mot(d / "gt.txt", gt_rows)
    write_mot(d / "det.txt", det_rows)
    (d / "gt.features").write_text(format_features(gt_rows, gt_feats))
    (d / "det.features").write_text(format_features(det_rows, [x.feature for x in s.detections]))
    dim = s.detections[0].feature.shape[0] if s.detections else (
        s.gt_tracks[0].instances[0].feature.shape[0] if s.gt_tracks else 0)
    meta = {
        "format": SCENARIO_FORMAT,
        "version": SCENARIO_VERSION,
        "name": s.name,
        "frames": s.frames,
        "image_size": list(s.image_size),
        "feature_dim": dim,
    }
    (d / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return d


def read_meta(directory) -> dict:
    path = Path(directory) / "meta.json"
    try:
        meta = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON ({exc})", None, path) from None
    if meta.get("format") != SCENARIO_FORMAT:
        raise ParseError("not a scenario directory", None, path)
    return meta


def load_detections(directory) -> list[Instance]:
    d = Path(directory)
    feats = parse_features(d / "det.features") if (d / "det.features").exists() else None
    return rows_to_instances(parse_mot(d / "det.txt"), feats)


def load_scenario(directory) -> Scenario:
    d = Path(directory)
    meta = read_meta(d)
    gt_feats = parse_features(d / "gt.features") if (d / "gt.features").exists() else None
    gt = rows_to_tracks(parse_mot(d / "gt.txt"), gt_feats)
    return Scenario(meta["frames"], gt, load_detections(d), tuple(meta["image_size"]), meta["name"])


def save_pseudo_tracks(tracks, directory, name: str, frames: int) -> Path:
    """Write ``pseudo.txt``/``pseudo.features`` plus a provenance sidecar."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    rows = tracks_to_rows(tracks)
    by_key = {(inst.frame, t.id): inst for t in tracks for inst in t.instances}
    write_mot(d / "pseudo.txt", rows)
    (d / "pseudo.features").write_text(format_features(rows, [by_key[(r.frame, r.id)].feature for r in rows]))
    meta = {"name": name, "frames": frames, "source": "pseudo", "tracks": len(tracks)}
    (d / "pseudo.meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return d


# --- checkpoints -----------------------------------------------------------

_PARAM_ORDER = ("W1", "b1", "W2", "b2")


@dataclass(frozen=True, eq=False)
class Checkpoint:
    encoder: Encoder
    config: dict = field(default_factory=dict)
    rng_state: dict = field(default_factory=dict)
    epoch: int = 0
    running_loss: float = float("nan")
    loss_history: tuple = ()


def checkpoint_bytes(ckpt: Checkpoint) -> bytes:
    enc = ckpt.encoder
    header = {
        "version": CHECKPOINT_VERSION,
        "dims": {"D_in": enc.input_dim, "H": enc.hidden_dim, "C": enc.embed_dim},
        "dtype": "<f8",
        "params": [[name, list(getattr(enc, name).shape)] for name in _PARAM_ORDER],
        "config": ckpt.config,
        "rng_state": ckpt.rng_state,
        "epoch": ckpt.epoch,
        "running_loss": ckpt.running_loss,
        "loss_history": list(ckpt.loss_history),
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    body = b"".join(np.ascontiguousarray(getattr(enc, n), dtype="<f8").tobytes() for n in _PARAM_ORDER)
    return CHECKPOINT_MAGIC + struct.pack("<Q", len(blob)) + blob + body


def checkpoint_from_bytes(data: bytes, path=None) -> Checkpoint:
    if not data.startswith(CHECKPOINT_MAGIC):
        raise ParseError("not a checkpoint file", None, path)
    off = len(CHECKPOINT_MAGIC)
    (n,) = struct.unpack_from("<Q", data, off)
    off += 8
    header = json.loads(data[off : off + n])
    off += n
    if header.get("version") != CHECKPOINT_VERSION:
        raise ParseError(f"unsupported checkpoint version {header.get('version')}", None, path)
    params = {}
    for name, shape in header["params"]:
        count = int(np.prod(shape))
        params[name] = np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape(shape).astype(np.float64)
        off += 8 * count
    if off != len(data):
        raise ParseError("trailing bytes after parameters", None, path)
    return Checkpoint(
        encoder=Encoder(**params),
        config=header["config"],
        rng_state=header["rng_state"],
        epoch=header["epoch"],
        running_loss=header["running_loss"],
        loss_history=tuple(header["loss_history"]),
    )


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    Path(path).write_bytes(checkpoint_bytes(ckpt))


def load_checkpoint(path) -> Checkpoint:
    return checkpoint_from_bytes(Path(path).read_bytes(), path)
