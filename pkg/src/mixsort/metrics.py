"""Tracking evaluation: HOTA family, CLEAR-MOT and identity (IDF1) metrics.

Sequences are given as ``{frame: {id: BoundingBox}}`` for both ground truth
and predictions. Every per-sequence report keeps the raw counts it was
computed from, so :func:`aggregate` can pool counts across sequences
instead of averaging ratios.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .association import SimilarityMatrix, linear_assignment, solve_assignment
from .geometry import BoundingBox, iou_matrix

__all__ = [
    "HOTA_THRESHOLDS",
    "MetricsReport",
    "frame_matching",
    "clear_mot",
    "idf1",
    "identity_counts",
    "hota",
    "evaluate",
    "aggregate",
    "report_to_json",
    "reports_to_csv",
]

Frames = Mapping[int, Mapping[int, BoundingBox]]

HOTA_THRESHOLDS = np.round(np.arange(0.05, 0.96, 0.05), 2)
_EPS = np.finfo(float).eps


def _sorted_frame(frames: Frames, f: int):
    items = sorted(frames.get(f, {}).items())
    return [k for k, _ in items], [b for _, b in items]


def _all_frames(gt: Frames, pred: Frames) -> list[int]:
    return sorted(set(gt) | set(pred))


def frame_matching(gt_boxes: Sequence[BoundingBox], pred_boxes: Sequence[BoundingBox],
                   iou_threshold: float = 0.5) -> list[tuple[int, int, float]]:
    """Maximum-total-IoU one-to-one matching; pairs under the threshold are dropped.

    Returns (gt index, pred index, iou) triples.
    """
    if not 0.0 < iou_threshold < 1.0 + 1e-12:
        raise ValueError(f"iou_threshold must lie in (0, 1], got {iou_threshold}")
    if not gt_boxes or not pred_boxes:
        return []
    sim = iou_matrix(gt_boxes, pred_boxes)
    gated = np.where(sim >= iou_threshold - _EPS, sim, 0.0)
    res = solve_assignment(SimilarityMatrix.from_array(gated))
    return [(r, c, float(sim[r, c])) for r, c in res.matches if gated[r, c] > 0.0]


def clear_mot(gt: Frames, pred: Frames, iou_threshold: float = 0.5) -> dict:
    """CLEAR-MOT counts and MOTA.

    Matching keeps last frame's correspondences whenever they still clear
    the threshold. An identity switch is a ground-truth object matched to
    a different prediction id than at its previous match; a fragmentation
    is a resumption of coverage after an interruption.
    """
    num_gt = tp = fp = fn = idsw = 0
    prev_match: dict[int, int] = {}      # gt id -> pred id at previous frame
    last_match: dict[int, int] = {}      # gt id -> last pred id ever matched
    starts: dict[int, int] = {}          # gt id -> number of coverage (re)starts
    covered_prev: set[int] = set()
    for f in _all_frames(gt, pred):
        gids, gboxes = _sorted_frame(gt, f)
        pids, pboxes = _sorted_frame(pred, f)
        num_gt += len(gids)
        covered_now: set[int] = set()
        matches = []
        if gids and pids:
            sim = iou_matrix(gboxes, pboxes)
            score = np.where(sim >= iou_threshold - _EPS, sim, 0.0)
            for r, g in enumerate(gids):
                if g in prev_match and prev_match[g] in pids:
                    c = pids.index(prev_match[g])
                    if score[r, c] > 0:
                        score[r, c] += 1000.0
            for r, c in linear_assignment(-score):
                if score[r, c] > 0:
                    matches.append((gids[r], pids[c]))
        prev_match = {}
        for g, p in matches:
            if g in last_match and last_match[g] != p:
                idsw += 1
            last_match[g] = p
            prev_match[g] = p
            covered_now.add(g)
            if g not in covered_prev:
                starts[g] = starts.get(g, 0) + 1
        tp += len(matches)
        fn += len(gids) - len(matches)
        fp += len(pids) - len(matches)
        covered_prev = covered_now
    frag = sum(n - 1 for n in starts.values() if n > 0)
    mota = (num_gt - fn - fp - idsw) / max(1, num_gt)
    return {"mota": mota, "id_switches": idsw, "fragmentations": frag,
            "tp": tp, "fp": fp, "fn": fn, "num_gt": num_gt}


def identity_counts(gt: Frames, pred: Frames, iou_threshold: float = 0.5) -> dict:
    """IDTP / IDFP / IDFN under the best one-to-one trajectory correspondence."""
    gt_ids = sorted({g for f in gt.values() for g in f})
    pr_ids = sorted({p for f in pred.values() for p in f})
    gi = {g: i for i, g in enumerate(gt_ids)}
    pi = {p: j for j, p in enumerate(pr_ids)}
    overlap = np.zeros((len(gt_ids), len(pr_ids)))
    gt_count = np.zeros(len(gt_ids))
    pr_count = np.zeros(len(pr_ids))
    for f in _all_frames(gt, pred):
        gids, gboxes = _sorted_frame(gt, f)
        pids, pboxes = _sorted_frame(pred, f)
        for g in gids:
            gt_count[gi[g]] += 1
        for p in pids:
            pr_count[pi[p]] += 1
        if gids and pids:
            ok = iou_matrix(gboxes, pboxes) >= iou_threshold - _EPS
            for r, c in zip(*np.nonzero(ok)):
                overlap[gi[gids[r]], pi[pids[c]]] += 1
    idtp = 0.0
    if overlap.size:
        idtp = float(sum(overlap[r, c] for r, c in linear_assignment(-overlap)))
    idfn = float(gt_count.sum() - idtp)
    idfp = float(pr_count.sum() - idtp)
    return {"idtp": idtp, "idfp": idfp, "idfn": idfn}


def _idf1_from(c: Mapping) -> float:
    return 2 * c["idtp"] / max(1.0, 2 * c["idtp"] + c["idfp"] + c["idfn"])


def idf1(gt: Frames, pred: Frames, iou_threshold: float = 0.5) -> float:
    return _idf1_from(identity_counts(gt, pred, iou_threshold))


def hota_counts(gt: Frames, pred: Frames) -> dict:
    """Raw per-threshold HOTA counts.

    Matching in each frame maximizes IoU weighted by the global alignment
    score of each (gt id, pred id) pair, so pairs that co-occur more often
    across the sequence win ties; matched pairs below a threshold are then
    discarded for that threshold only.
    """
    n_a = len(HOTA_THRESHOLDS)
    gt_ids = sorted({g for f in gt.values() for g in f})
    pr_ids = sorted({p for f in pred.values() for p in f})
    gi = {g: i for i, g in enumerate(gt_ids)}
    pi = {p: j for j, p in enumerate(pr_ids)}
    gt_count = np.zeros(len(gt_ids))
    pr_count = np.zeros(len(pr_ids))
    potential = np.zeros((len(gt_ids), len(pr_ids)))
    frames = _all_frames(gt, pred)
    cache = {}
    for f in frames:
        gids, gboxes = _sorted_frame(gt, f)
        pids, pboxes = _sorted_frame(pred, f)
        rows = np.array([gi[g] for g in gids], dtype=int)
        cols = np.array([pi[p] for p in pids], dtype=int)
        gt_count[rows] += 1
        pr_count[cols] += 1
        sim = iou_matrix(gboxes, pboxes)
        cache[f] = (rows, cols, sim)
        if sim.size:
            denom = sim.sum(0, keepdims=True) + sim.sum(1, keepdims=True) - sim
            norm = np.divide(sim, denom, out=np.zeros_like(sim), where=denom > _EPS)
            potential[np.ix_(rows, cols)] += norm
    glob = potential / np.maximum(1e-12, gt_count[:, None] + pr_count[None, :] - potential)

    tp = np.zeros(n_a)
    fn = np.zeros(n_a)
    fp = np.zeros(n_a)
    loc = np.zeros(n_a)
    pair_matches = np.zeros((n_a, len(gt_ids), len(pr_ids)))
    for f in frames:
        rows, cols, sim = cache[f]
        if sim.size == 0:
            fn += len(rows)
            fp += len(cols)
            continue
        score = glob[np.ix_(rows, cols)] * sim
        pairs = linear_assignment(-score)
        mr = np.array([r for r, _ in pairs], dtype=int)
        mc = np.array([c for _, c in pairs], dtype=int)
        msim = sim[mr, mc] if len(pairs) else np.zeros(0)
        for a, alpha in enumerate(HOTA_THRESHOLDS):
            ok = (msim >= alpha - _EPS) & (score[mr, mc] > 0) if len(pairs) else np.zeros(0, bool)
            k = int(ok.sum())
            tp[a] += k
            fn[a] += len(rows) - k
            fp[a] += len(cols) - k
            if k:
                loc[a] += float(msim[ok].sum())
                np.add.at(pair_matches[a], (rows[mr[ok]], cols[mc[ok]]), 1)
    ass = np.zeros(n_a)
    for a in range(n_a):
        m = pair_matches[a]
        ass_pair = m / np.maximum(1.0, gt_count[:, None] + pr_count[None, :] - m)
        ass[a] = float((m * ass_pair).sum())
    return {"tp": tp, "fn": fn, "fp": fp, "ass_sum": ass, "loc_sum": loc}


def _hota_from(c: Mapping) -> dict:
    tp, fn, fp = (np.asarray(c[k], float) for k in ("tp", "fn", "fp"))
    deta = tp / np.maximum(1.0, tp + fn + fp)
    assa = np.asarray(c["ass_sum"], float) / np.maximum(1.0, tp)
    loca = np.where(tp > 0, np.asarray(c["loc_sum"], float) / np.maximum(1.0, tp), 0.0)
    hota_a = np.sqrt(deta * assa)
    return {"hota": float(hota_a.mean()), "deta": float(deta.mean()), "assa": float(assa.mean()),
            "loca": float(loca.mean()), "hota_per_alpha": hota_a, "deta_per_alpha": deta,
            "assa_per_alpha": assa}


def hota(gt: Frames, pred: Frames) -> dict:
    """HOTA, DetA, AssA, LocA (averaged over 19 IoU thresholds) plus per-threshold arrays."""
    out = _hota_from(hota_counts(gt, pred))
    out["per_alpha"] = [(float(t), float(d), float(a)) for t, d, a in
                        zip(HOTA_THRESHOLDS, out["deta_per_alpha"], out["assa_per_alpha"])]
    return out


@dataclass
class MetricsReport:
    hota: float
    deta: float
    assa: float
    loca: float
    idf1: float
    mota: float
    id_switches: int
    fragmentations: int
    per_alpha: list = field(default_factory=list)
    name: str = ""
    counts: dict = field(default_factory=dict, repr=False)

    def summary(self) -> dict:
        return {k: getattr(self, k) for k in
                ("hota", "deta", "assa", "loca", "idf1", "mota", "id_switches", "fragmentations")}


def _report_from_counts(counts: dict, name: str = "") -> MetricsReport:
    h = _hota_from(counts["hota"])
    cl = counts["clear"]
    mota = (cl["num_gt"] - cl["fn"] - cl["fp"] - cl["id_switches"]) / max(1, cl["num_gt"])
    return MetricsReport(
        hota=h["hota"], deta=h["deta"], assa=h["assa"], loca=h["loca"],
        idf1=_idf1_from(counts["identity"]), mota=mota,
        id_switches=int(cl["id_switches"]), fragmentations=int(cl["fragmentations"]),
        per_alpha=[(float(t), float(d), float(a)) for t, d, a in
                   zip(HOTA_THRESHOLDS, h["deta_per_alpha"], h["assa_per_alpha"])],
        name=name, counts=counts,
    )


def evaluate(gt: Frames, pred: Frames, iou_threshold: float = 0.5, name: str = "") -> MetricsReport:
    """All metrics for one sequence."""
    counts = {
        "hota": hota_counts(gt, pred),
        "clear": clear_mot(gt, pred, iou_threshold),
        "identity": identity_counts(gt, pred, iou_threshold),
    }
    return _report_from_counts(counts, name)


def aggregate(reports: Sequence[MetricsReport], name: str = "COMBINED") -> MetricsReport:
    """Dataset-level report from pooled raw counts."""
    if not reports:
        raise ValueError("nothing to aggregate")
    h = {k: sum(np.asarray(r.counts["hota"][k], float) for r in reports)
         for k in ("tp", "fn", "fp", "ass_sum", "loc_sum")}
    clear = {k: sum(r.counts["clear"][k] for r in reports)
             for k in ("tp", "fp", "fn", "num_gt", "id_switches", "fragmentations")}
    ident = {k: sum(r.counts["identity"][k] for r in reports) for k in ("idtp", "idfp", "idfn")}
    return _report_from_counts({"hota": h, "clear": clear, "identity": ident}, name)


def report_to_json(reports: Sequence[MetricsReport], combined: Optional[MetricsReport] = None) -> str:
    def one(r):
        d = r.summary()
        d["name"] = r.name
        d["per_alpha"] = [{"threshold": t, "deta": dd, "assa": a} for t, dd, a in r.per_alpha]
        return d

    doc = {"sequences": [one(r) for r in reports]}
    if combined is not None:
        doc["combined"] = one(combined)
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


CSV_FIELDS = ("name", "hota", "deta", "assa", "loca", "idf1", "mota", "id_switches", "fragmentations")


def reports_to_csv(reports: Sequence[MetricsReport], combined: Optional[MetricsReport] = None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for r in [*reports, *([combined] if combined is not None else [])]:
        writer.writerow([r.name] + [
            f"{getattr(r, k):.6f}" if isinstance(getattr(r, k), float) else getattr(r, k)
            for k in CSV_FIELDS[1:]
        ])
    return buf.getvalue()
