"""Command-line entry point: ``trackcl <command> [--config FILE] [--seed N] [--out PATH]``.

Exit codes: 0 on success, 1 on validation errors (bad config, bad arguments,
invalid domain objects), 2 on I/O errors (missing or malformed files).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import ablation, io
from .config import from_dict, load_config, to_dict
from .errors import ParseError, TrackCLError, ValidationError
from .metrics import evaluate, format_report
from .pseudo_label import PrimitiveConfig, pseudo_label
from .sampling import VideoStats, mine_videos
from .simgen import SimConfig, generate_scenario
from .tracker import TrackerConfig, run_tracker
from .train import TrainConfig, assemble_dataset, train
from .tracks import Scenario

log = logging.getLogger("trackcl")

SECTIONS = ("sim", "sampler", "loss", "train", "primitive", "tracker", "bench", "seed")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _overlay(base, data: dict | None):
    """Apply a config section on top of an existing dataclass instance."""
    merged = to_dict(base)
    merged.update(data or {})
    return from_dict(type(base), merged)


def _read_config(args) -> dict:
    raw = load_config(args.config) if args.config else {}
    unknown = sorted(set(raw) - set(SECTIONS))
    if unknown:
        raise ValidationError(f"unknown config sections: {', '.join(unknown)}")
    return raw


def _seed(args, raw) -> int:
    if args.seed is not None:
        return args.seed
    return int(raw.get("seed", 0))


def _train_config(raw, seed: int, base: TrainConfig | None = None) -> TrainConfig:
    section = dict(raw.get("train", {}))
    if "sampler" in raw:
        section["sampler"] = raw["sampler"]
    if "loss" in raw:
        section["loss_cfg"] = raw["loss"]
    section["seed"] = seed
    return _overlay(base or TrainConfig(), section)


def _log_resolved(command: str, seed: int, resolved) -> None:
    log.info("command: %s", command)
    log.info("seed: %d", seed)
    log.info("resolved config: %s", json.dumps(to_dict(resolved), sort_keys=True))


def _require_out(args) -> Path:
    if not args.out:
        raise ValidationError("--out is required")
    return Path(args.out)


def _load_unlabeled(directory) -> Scenario:
    meta = io.read_meta(directory)
    return Scenario(meta["frames"], (), io.load_detections(directory), tuple(meta["image_size"]), meta["name"])


def cmd_simulate(args, raw) -> int:
    seed = _seed(args, raw)
    cfg = _overlay(SimConfig(), {**raw.get("sim", {}), "seed": seed})
    _log_resolved("simulate", seed, {"sim": cfg})
    out = io.save_scenario(generate_scenario(cfg), _require_out(args))
    print(out)
    return 0


def cmd_pseudo_label(args, raw) -> int:
    cfg = _overlay(PrimitiveConfig(), raw.get("primitive"))
    _log_resolved("pseudo-label", _seed(args, raw), {"primitive": cfg})
    s = _load_unlabeled(args.detections)
    tracks = pseudo_label(list(s.detections), cfg)
    io.save_pseudo_tracks(tracks, _require_out(args), s.name, s.frames)
    print(f"{s.name}: {len(tracks)} pseudo tracks")
    return 0


def _read_stats(path) -> list[VideoStats]:
    out = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].startswith("#"):
                continue
            if lineno == 1 and row[0].strip().lower() == "name":
                continue
            try:
                frames = int(row[2]) if len(row) > 2 else 1
                out.append(VideoStats(row[0].strip(), int(row[1]), frames))
            except (IndexError, ValueError) as exc:
                raise ParseError(f"bad stats row ({exc})", lineno, path) from None
    return out


def cmd_mine(args, raw) -> int:
    seed = _seed(args, raw)
    _log_resolved("mine", seed, {"k": args.k, "per_frame": args.per_frame})
    names = mine_videos(_read_stats(args.stats), args.k, per_frame=args.per_frame)
    text = "".join(n + "\n" for n in names)
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_train(args, raw) -> int:
    seed = _seed(args, raw)
    cfg = _train_config(raw, seed)
    primitive = _overlay(PrimitiveConfig(), raw.get("primitive"))
    _log_resolved("train", seed, {"train": cfg, "primitive": primitive, "k": args.k})
    labeled = [io.load_scenario(d) for d in args.labeled]
    unlabeled = [_load_unlabeled(d) for d in args.unlabeled]
    data = assemble_dataset(labeled, unlabeled, args.k, primitive)
    log.info("mined: %s", ", ".join(s.name for s in data.mined) or "(none)")
    ckpt = train(data, cfg)
    out = _require_out(args)
    io.save_checkpoint(ckpt, out)
    print(f"{out}: final loss {ckpt.running_loss:.6f}")
    return 0


def cmd_track(args, raw) -> int:
    cfg = _overlay(TrackerConfig(), raw.get("tracker"))
    _log_resolved("track", _seed(args, raw), {"tracker": cfg})
    encoder = io.load_checkpoint(args.checkpoint).encoder
    s = _load_unlabeled(args.detections)
    tracks = run_tracker(encoder, list(s.detections), s.frames, cfg)
    io.write_mot(_require_out(args), io.tracks_to_rows(tracks))
    print(f"{s.name}: {len(tracks)} tracks")
    return 0


def cmd_eval(args, raw) -> int:
    _log_resolved("eval", _seed(args, raw), {"iou_threshold": args.iou})
    gt = io.rows_to_tracks(io.parse_mot(Path(args.gt)))
    pred = io.rows_to_tracks(io.parse_mot(Path(args.pred)))
    report = evaluate(gt, pred, args.iou)
    text = format_report(report)
    if args.out:
        Path(args.out).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    sys.stdout.write(text)
    return 0


def cmd_ablate(args, raw) -> int:
    seed = _seed(args, raw)
    opts = dict(raw.get("bench", {}))
    num_seeds = int(opts.pop("num_seeds", 5))
    bench = ablation.Benchmark()
    bench = replace(
        bench,
        sim=_overlay(bench.sim, raw.get("sim")),
        train=_train_config(raw, seed, bench.train),
        tracker=_overlay(bench.tracker, raw.get("tracker")),
        primitive=_overlay(bench.primitive, raw.get("primitive")),
        seeds=tuple(range(seed, seed + num_seeds)),
        **opts,
    )
    _log_resolved("ablate", seed, {"ablation": args.name, "bench": bench})
    result = ablation.run_ablation(args.name, _require_out(args), bench)
    sys.stdout.write(result.table())
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--out", help="output file or directory")

    p = _Parser(prog="trackcl", description="Tracklet contrastive embedding toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common], help="generate a synthetic scenario directory")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("pseudo-label", parents=[common], help="run the motion-only tracker on detections")
    s.add_argument("detections", help="scenario directory with det.txt")
    s.set_defaults(func=cmd_pseudo_label)

    s = sub.add_parser("mine", parents=[common], help="top-K videos by track count")
    s.add_argument("stats", help="CSV rows: name,track_count[,frame_count]")
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--per-frame", action="store_true", help="rank by tracks per frame")
    s.set_defaults(func=cmd_mine)

    s = sub.add_parser("train", parents=[common], help="train an encoder checkpoint")
    s.add_argument("--labeled", nargs="+", required=True, help="labeled scenario directories")
    s.add_argument("--unlabeled", nargs="*", default=[], help="unlabeled scenario directories")
    s.add_argument("--k", type=int, help="number of unlabeled videos to mine (default all)")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("track", parents=[common], help="track detections with a checkpoint")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("detections", help="scenario directory with det.txt")
    s.set_defaults(func=cmd_track)

    s = sub.add_parser("eval", parents=[common], help="score MOT results against ground truth")
    s.add_argument("gt")
    s.add_argument("pred")
    s.add_argument("--iou", type=float, default=0.5)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("ablate", parents=[common], help="run a named ablation")
    s.add_argument("name", help=", ".join(ablation.ABLATIONS))
    s.set_defaults(func=cmd_ablate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args, _read_config(args))
    except (OSError, ParseError) as exc:
        print(f"trackcl: I/O error: {exc}", file=sys.stderr)
        return 2
    except (TrackCLError, ValueError) as exc:
        print(f"trackcl: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
