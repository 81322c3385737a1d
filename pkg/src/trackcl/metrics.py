"""CLEAR-MOT and identity (IDF1) metrics over box tracks."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .assignment import hungarian
from .motion import iou_matrix
from .tracks import Track

# Keys written by to_dict in this order.
COUNT_FIELDS = (
    "GT", "PRED", "GT_TRACKS", "MATCHES", "FP", "FN", "IDS", "Frag",
    "MT", "ML", "IDTP", "IDFP", "IDFN",
)


@dataclass(frozen=True)
class MetricsReport:
    MOTA: float = float("nan")
    IDF1: float = float("nan")
    IDS: int = 0
    Frag: int = 0
    FP: int = 0
    FN: int = 0
    IDTP: int = 0
    IDFP: int = 0
    IDFN: int = 0
    MT: int = 0
    ML: int = 0
    GT: int = 0  # total gt boxes
    PRED: int = 0  # total predicted boxes
    GT_TRACKS: int = 0
    MATCHES: int = 0

    def recomputed(self) -> "MetricsReport":
        """Ratios recomputed from the counts."""
        mota = 1.0 - (self.FN + self.FP + self.IDS) / self.GT if self.GT else float("nan")
        denom = 2 * self.IDTP + self.IDFP + self.IDFN
        idf1 = 2 * self.IDTP / denom if denom else float("nan")
        return replace(self, MOTA=mota, IDF1=idf1)

    def to_dict(self) -> dict:
        d = asdict(self)
        return {"MOTA": d["MOTA"], "IDF1": d["IDF1"], **{k: d[k] for k in COUNT_FIELDS}}


def merge_reports(reports) -> MetricsReport:
    """Sum counts over sequences, then recompute MOTA and IDF1."""
    totals = {f.name: 0 for f in fields(MetricsReport) if f.name not in ("MOTA", "IDF1")}
    for r in reports:
        for k in totals:
            totals[k] += getattr(r, k)
    return MetricsReport(**totals).recomputed()


def _by_frame(tracks: list[Track]) -> dict[int, dict[int, tuple]]:
    out: dict[int, dict[int, tuple]] = defaultdict(dict)
    for t in tracks:
        for inst in t.instances:
            out[inst.frame][t.id] = inst.box
    return out


def clear_mot(gt: list[Track], pred: list[Track], iou_threshold: float = 0.5) -> MetricsReport:
    """CLEAR-MOT counts: FP, FN, IDS, Frag, MT, ML and MOTA.

    Matches from the previous frame are kept while their IoU stays at or above
    the threshold; the remaining pairs are solved with the Hungarian method on
    ``1 - IoU``.
    """
    gt_frames = _by_frame(gt)
    pred_frames = _by_frame(pred)
    prev: dict[int, int] = {}
    last_match: dict[int, int] = {}
    covered: dict[int, list[bool]] = defaultdict(list)
    fp = fn = ids = matches = 0
    n_gt = n_pred = 0
    for frame in sorted(set(gt_frames) | set(pred_frames)):
        gts = gt_frames.get(frame, {})
        preds = pred_frames.get(frame, {})
        g_ids = sorted(gts)
        p_ids = sorted(preds)
        n_gt += len(g_ids)
        n_pred += len(p_ids)
        overlap = iou_matrix([gts[g] for g in g_ids], [preds[p] for p in p_ids])
        g_index = {g: i for i, g in enumerate(g_ids)}
        p_index = {p: j for j, p in enumerate(p_ids)}

        match: dict[int, int] = {}
        for g in g_ids:
            p = prev.get(g)
            if p is not None and p in p_index and overlap[g_index[g], p_index[p]] >= iou_threshold:
                match[g] = p
        rest_g = [g for g in g_ids if g not in match]
        taken = set(match.values())
        rest_p = [p for p in p_ids if p not in taken]
        if rest_g and rest_p:
            sub = overlap[np.ix_([g_index[g] for g in rest_g], [p_index[p] for p in rest_p])]
            cost = np.where(sub >= iou_threshold, 1.0 - sub, np.inf)
            for r, c in hungarian(cost):
                g, p = rest_g[r], rest_p[c]
                if g in last_match and last_match[g] != p:
                    ids += 1
                match[g] = p
        for g in g_ids:
            covered[g].append(g in match)
        for g, p in match.items():
            last_match[g] = p
        matches += len(match)
        fp += len(p_ids) - len(match)
        fn += len(g_ids) - len(match)
        prev = match

    frag = mt = ml = 0
    for g, cov in covered.items():
        frag += sum(1 for a, b in zip(cov, cov[1:]) if a and not b)
        ratio = sum(cov) / len(cov)
        if ratio >= 0.8:
            mt += 1
        if ratio <= 0.2:
            ml += 1
    report = MetricsReport(
        IDS=ids, Frag=frag, FP=fp, FN=fn, MT=mt, ML=ml,
        GT=n_gt, PRED=n_pred, GT_TRACKS=len(covered), MATCHES=matches,
    )
    return report.recomputed()


def id_overlap(gt: list[Track], pred: list[Track], iou_threshold: float = 0.5):
    """Per (gt id, pred id) count of frames where both boxes overlap at the threshold.

    Returns ``(gt_ids, pred_ids, overlap, gt_lengths, pred_lengths)``.
    """
    gt_ids = sorted({t.id for t in gt})
    pred_ids = sorted({t.id for t in pred})
    gi = {g: i for i, g in enumerate(gt_ids)}
    pi = {p: j for j, p in enumerate(pred_ids)}
    counts = np.zeros((len(gt_ids), len(pred_ids)), dtype=np.int64)
    gt_len = np.zeros(len(gt_ids), dtype=np.int64)
    pred_len = np.zeros(len(pred_ids), dtype=np.int64)
    for t in gt:
        gt_len[gi[t.id]] += len(t.instances)
    for t in pred:
        pred_len[pi[t.id]] += len(t.instances)
    gt_frames = _by_frame(gt)
    pred_frames = _by_frame(pred)
    for frame in sorted(set(gt_frames) & set(pred_frames)):
        gts, preds = gt_frames[frame], pred_frames[frame]
        g_ids, p_ids = sorted(gts), sorted(preds)
        ov = iou_matrix([gts[g] for g in g_ids], [preds[p] for p in p_ids]) >= iou_threshold
        rows, cols = np.nonzero(ov)
        for r, c in zip(rows, cols):
            counts[gi[g_ids[r]], pi[p_ids[c]]] += 1
    return gt_ids, pred_ids, counts, gt_len, pred_len


def global_id_mapping(counts: np.ndarray, gt_len: np.ndarray, pred_len: np.ndarray) -> list[tuple[int, int]]:
    """Optimal one-to-one gt/pred id mapping minimizing IDFP + IDFN.

    Every real id gets a dummy partner so leaving it unmapped is an option.
    """
    G, P = counts.shape
    n = G + P
    cost = np.full((n, n), np.inf)
    cost[:G, :P] = gt_len[:, None] + pred_len[None, :] - 2 * counts
    cost[np.arange(G), P + np.arange(G)] = gt_len
    cost[G + np.arange(P), np.arange(P)] = pred_len
    cost[G:, P:] = 0.0
    return [(r, c) for r, c in hungarian(cost) if r < G and c < P]


def idf1(gt: list[Track], pred: list[Track], iou_threshold: float = 0.5) -> MetricsReport:
    gt_ids, pred_ids, counts, gt_len, pred_len = id_overlap(gt, pred, iou_threshold)
    idtp = int(sum(counts[r, c] for r, c in global_id_mapping(counts, gt_len, pred_len)))
    report = MetricsReport(
        IDTP=idtp,
        IDFN=int(gt_len.sum()) - idtp,
        IDFP=int(pred_len.sum()) - idtp,
        GT=int(gt_len.sum()),
        PRED=int(pred_len.sum()),
        GT_TRACKS=len(gt_ids),
    )
    return report.recomputed()


def evaluate(gt: list[Track], pred: list[Track], iou_threshold: float = 0.5) -> MetricsReport:
    """CLEAR-MOT and identity metrics in one report."""
    clear = clear_mot(gt, pred, iou_threshold)
    ident = idf1(gt, pred, iou_threshold)
    return replace(clear, IDTP=ident.IDTP, IDFP=ident.IDFP, IDFN=ident.IDFN).recomputed()


def format_report(report: MetricsReport) -> str:
    """One ``NAME value`` line per metric; floats to 3 decimals."""
    lines = []
    for k, v in report.to_dict().items():
        value = f"{v:.3f}" if isinstance(v, float) else str(v)
        lines.append(f"{k} {value}")
    return "\n".join(lines) + "\n"
