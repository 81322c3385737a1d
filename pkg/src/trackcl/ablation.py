"""Ablation runners on synthetic benchmark suites.

Every ablation trains encoders over a fixed step budget, tracks a held-out
suite of scenarios with the online tracker and reports the median IDF1,
MOTA and IDS over training seeds. Runs are deterministic given the seeds.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from statistics import median

import numpy as np

from .embedding import Encoder
from .errors import UnknownAblation
from .metrics import MetricsReport, evaluate, merge_reports
from .pseudo_label import PrimitiveConfig
from .sampling import SamplerConfig
from .simgen import SimConfig, generate_scenario
from .tracker import TrackerConfig, run_tracker
from .train import TrainConfig, assemble_dataset, train
from .tracks import Scenario

log = logging.getLogger(__name__)

ABLATIONS = ("loss-comparison", "batch-size", "unlabeled-volume", "mining-vs-random", "ce-vs-tcl-semi")

# Moderate-noise scene used for held-out evaluation and labeled training data.
BENCH_SIM = SimConfig(num_objects=20, frames=100)
TEST_SEED_BASE = 10_000


@dataclass(frozen=True)
class Benchmark:
    sim: SimConfig = BENCH_SIM
    test_scenarios: int = 10
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(
        epochs=10, steps_per_epoch=20, lr_initial=1e-2, lr_final=1e-3, lr_drop_epoch=8,
    ))
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    primitive: PrimitiveConfig = field(default_factory=PrimitiveConfig)


@dataclass
class Row:
    name: str
    reports: list[MetricsReport]

    @property
    def idf1(self) -> float:
        return median(r.IDF1 for r in self.reports)

    @property
    def mota(self) -> float:
        return median(r.MOTA for r in self.reports)

    @property
    def ids(self) -> float:
        return median(r.IDS for r in self.reports)


@dataclass
class AblationResult:
    name: str
    rows: list[Row]

    def row(self, name: str) -> Row:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def table(self) -> str:
        width = max(len(r.name) for r in self.rows)
        lines = [f"{'':<{width}}  {'IDF1':>6}  {'MOTA':>6}  {'IDS':>6}"]
        for r in self.rows:
            lines.append(f"{r.name:<{width}}  {100 * r.idf1:6.1f}  {100 * r.mota:6.1f}  {r.ids:6.0f}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "ablation": self.name,
            "rows": [
                {
                    "name": r.name,
                    "IDF1": r.idf1,
                    "MOTA": r.mota,
                    "IDS": r.ids,
                    "per_seed": [{"IDF1": x.IDF1, "MOTA": x.MOTA, "IDS": x.IDS} for x in r.reports],
                }
                for r in self.rows
            ],
        }


def make_scenarios(base: SimConfig, seeds, prefix: str, **overrides) -> list[Scenario]:
    return [generate_scenario(replace(base, seed=s, name=f"{prefix}{s}", **overrides)) for s in seeds]


def test_suite(bench: Benchmark) -> list[Scenario]:
    return make_scenarios(bench.sim, range(TEST_SEED_BASE, TEST_SEED_BASE + bench.test_scenarios), "test")


def evaluate_encoder(encoder: Encoder, scenarios: list[Scenario], cfg: TrackerConfig = TrackerConfig()) -> MetricsReport:
    """Track every scenario and merge the per-sequence metrics."""
    reports = [evaluate(s.gt_tracks, run_tracker(encoder, s.detections, s.frames, cfg)) for s in scenarios]
    return merge_reports(reports)


def _run_rows(variants, bench: Benchmark, tests: list[Scenario]) -> list[Row]:
    """``variants`` maps row name to ``(dataset or None, TrainConfig)``; ``None``
    means an untrained encoder."""
    rows = []
    for name, (data, cfg) in variants.items():
        reports = []
        for seed in bench.seeds:
            if data is None:
                enc = Encoder.random(cfg.feature_dim, cfg.hidden_dim, cfg.embed_dim, np.random.default_rng(seed))
            else:
                enc = train(data, replace(cfg, seed=seed)).encoder
            rep = evaluate_encoder(enc, tests, bench.tracker)
            log.info("%s seed %d: IDF1 %.4f MOTA %.4f IDS %d", name, seed, rep.IDF1, rep.MOTA, rep.IDS)
            reports.append(rep)
        rows.append(Row(name, reports))
    return rows


def loss_comparison(bench: Benchmark = Benchmark()) -> AblationResult:
    labeled = make_scenarios(bench.sim, range(3), "lab")
    data = assemble_dataset(labeled, [])
    variants = {"random": (None, bench.train)}
    for loss in ("ce", "scl", "tcl"):
        variants[loss] = (data, replace(bench.train, loss=loss))
    return AblationResult("loss-comparison", _run_rows(variants, bench, test_suite(bench)))


def batch_size(bench: Benchmark = Benchmark()) -> AblationResult:
    """Anchor targets 144/96/32 with 2-frame segments so the target binds."""
    labeled = make_scenarios(bench.sim, range(3), "lab")
    data = assemble_dataset(labeled, [])
    sampler = SamplerConfig(segment_length=2, segments_labeled=1, segments_unlabeled=0, subtrack_len_range=(1, 2))
    variants = {
        f"tcl-b{b}": (data, replace(bench.train, batch_anchor_target=b, sampler=sampler))
        for b in (144, 96, 32)
    }
    return AblationResult("batch-size", _run_rows(variants, bench, test_suite(bench)))


# Semi-supervised setting: scarce labels (one small labeled video), plentiful
# unlabeled videos of the benchmark scene.
SEMI_LABELED = dict(num_objects=4, frames=64)
UNLABELED_BLOCK = 2


def _semi_data(bench: Benchmark, volumes, selection="mined", pool=None, rng=0):
    labeled = make_scenarios(bench.sim, [0], "lab", **SEMI_LABELED)
    out = {"labeled-only": assemble_dataset(labeled, [])}
    for v in volumes:
        if pool is None:
            unl = make_scenarios(bench.sim, range(100, 100 + UNLABELED_BLOCK * v), "unl")
            out[f"+U{v}"] = assemble_dataset(labeled, unl, None, bench.primitive)
        else:
            out[f"{selection}-{v}"] = assemble_dataset(labeled, pool, v, bench.primitive, selection, rng)
    return out


def unlabeled_volume(bench: Benchmark = Benchmark()) -> AblationResult:
    datasets = _semi_data(bench, (1, 2, 3))
    variants = {name: (d, replace(bench.train, loss="tcl")) for name, d in datasets.items()}
    return AblationResult("unlabeled-volume", _run_rows(variants, bench, test_suite(bench)))


def mining_pool(bench: Benchmark) -> list[Scenario]:
    """Unlabeled pool with widely varying object density."""
    counts = [2, 3, 4, 5, 6, 8, 10, 12, 16, 20]
    return [
        generate_scenario(replace(bench.sim, num_objects=n, seed=200 + i, name=f"pool{i:02d}"))
        for i, n in enumerate(counts)
    ]


def mining_vs_random(bench: Benchmark = Benchmark(), volumes=(2, 4)) -> AblationResult:
    pool = mining_pool(bench)
    variants = {}
    for v in volumes:
        for selection in ("mined", "random"):
            data = _semi_data(bench, [v], selection, pool, rng=v)[f"{selection}-{v}"]
            variants[f"{selection}-{v}"] = (data, replace(bench.train, loss="tcl"))
    return AblationResult("mining-vs-random", _run_rows(variants, bench, test_suite(bench)))


def ce_vs_tcl_semi(bench: Benchmark = Benchmark()) -> AblationResult:
    datasets = _semi_data(bench, (1, 2))
    variants = {}
    for loss in ("ce", "tcl"):
        for name, d in datasets.items():
            variants[f"{loss} {name}"] = (d, replace(bench.train, loss=loss))
    return AblationResult("ce-vs-tcl-semi", _run_rows(variants, bench, test_suite(bench)))


RUNNERS = {
    "loss-comparison": loss_comparison,
    "batch-size": batch_size,
    "unlabeled-volume": unlabeled_volume,
    "mining-vs-random": mining_vs_random,
    "ce-vs-tcl-semi": ce_vs_tcl_semi,
}


def run_ablation(name: str, out_dir=None, bench: Benchmark = Benchmark()) -> AblationResult:
    if name not in RUNNERS:
        raise UnknownAblation(f"unknown ablation {name!r}; choose from {', '.join(ABLATIONS)}")
    result = RUNNERS[name](bench)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{name}.txt").write_text(result.table())
        (out / f"{name}.json").write_text(json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n")
    return result
