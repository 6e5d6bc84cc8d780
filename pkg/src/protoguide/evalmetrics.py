"""Scoring of reconstructed sessions against gold annotations.

Two axes: temporal-IoU matching of step segments, and center-distance
matching of deviation events; both fold into a 0-5 composite.  The 0-5
number is an explicit computable proxy for expert rubric grading, not a
reproduction of it.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

from .monitor import KINDS


@dataclass(frozen=True)
class SegmentLabel:
    step_id: str
    t_start_ms: int
    t_end_ms: int


@dataclass(frozen=True)
class ErrorEvent:
    kind: str
    t_start_ms: int
    t_end_ms: int
    step_ref: int | None = None

    @property
    def center(self) -> float:
        return (self.t_start_ms + self.t_end_ms) / 2.0


@dataclass
class GoldAnnotation:
    segments: list[SegmentLabel] = field(default_factory=list)
    errors: list[ErrorEvent] = field(default_factory=list)
    parameters: list[dict] = field(default_factory=list)


@dataclass
class ScoreReport:
    seg_precision: float
    seg_recall: float
    seg_f1: float
    order_concordance: float
    err_precision: float
    err_recall: float
    err_f1: float
    rubric_0_5: float
    segment_matches: list[tuple[int, int, float]]  # (pred idx, gold idx, IoU)
    error_matches: list[tuple[int, int, float]]    # (pred idx, gold idx, |dt|)

    def to_json(self) -> dict:
        return {
            "seg_precision": self.seg_precision,
            "seg_recall": self.seg_recall,
            "seg_f1": self.seg_f1,
            "order_concordance": self.order_concordance,
            "err_precision": self.err_precision,
            "err_recall": self.err_recall,
            "err_f1": self.err_f1,
            "rubric_0_5": self.rubric_0_5,
            "segment_matches": [
                {"pred": p, "gold": g, "iou": v}
                for p, g, v in self.segment_matches
            ],
            "error_matches": [
                {"pred": p, "gold": g, "center_dist_ms": v}
                for p, g, v in self.error_matches
            ],
        }

    def table(self) -> str:
        rows = [
            ("segments", self.seg_precision, self.seg_recall, self.seg_f1),
            ("errors", self.err_precision, self.err_recall, self.err_f1),
        ]
        lines = [f"{'':12s} {'P':>7s} {'R':>7s} {'F1':>7s}"]
        for name, p, r, f1 in rows:
            lines.append(f"{name:12s} {p:7.3f} {r:7.3f} {f1:7.3f}")
        lines.append(f"{'order tau':12s} {self.order_concordance:7.3f}")
        lines.append(f"{'rubric 0-5':12s} {self.rubric_0_5:7.2f}")
        return "\n".join(lines)


def temporal_iou(a_start, a_end, b_start, b_end) -> float:
    inter = min(a_end, b_end) - max(a_start, b_start)
    if inter <= 0:
        return 0.0
    union = max(a_end, b_end) - min(a_start, b_start)
    return inter / union


def _prf(n_match: int, n_pred: int, n_gold: int) -> tuple[float, float, float]:
    if n_pred == 0:
        p = 1.0 if n_gold == 0 else 0.0
    else:
        p = n_match / n_pred
    if n_gold == 0:
        r = 1.0 if n_pred == 0 else 0.0
    else:
        r = n_match / n_gold
    f1 = 0.0 if p + r == 0 else 2 * p * r / (p + r)
    return p, r, f1


def match_segments(pred: list[SegmentLabel], gold: list[SegmentLabel],
                   iou_threshold: float = 0.5):
    """Greedy one-to-one matching by descending IoU, same step id required.

    Returns (matches, precision, recall, f1); matches are
    (pred idx, gold idx, IoU) triples.
    """
    candidates = []
    for i, ps in enumerate(pred):
        for j, gs in enumerate(gold):
            if ps.step_id != gs.step_id:
                continue
            iou = temporal_iou(ps.t_start_ms, ps.t_end_ms,
                               gs.t_start_ms, gs.t_end_ms)
            if iou >= iou_threshold and iou > 0:
                candidates.append((i, j, iou))
    candidates.sort(key=lambda c: (-c[2], c[0], c[1]))
    used_p, used_g = set(), set()
    matches = []
    for i, j, iou in candidates:
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        matches.append((i, j, iou))
    p, r, f1 = _prf(len(matches), len(pred), len(gold))
    return matches, p, r, f1


def order_concordance(matches, pred: list[SegmentLabel],
                      gold: list[SegmentLabel]) -> float:
    """Kendall-tau-style concordance of matched step order, in [0, 1]."""
    pairs = sorted(matches, key=lambda m: pred[m[0]].t_start_ms)
    gold_rank = [sorted(matches, key=lambda m: gold[m[1]].t_start_ms)
                 .index(m) for m in pairs]
    n = len(gold_rank)
    if n < 2:
        return 1.0
    concordant = discordant = 0
    for a in range(n):
        for b in range(a + 1, n):
            if gold_rank[a] < gold_rank[b]:
                concordant += 1
            else:
                discordant += 1
    return concordant / (concordant + discordant)


def score_errors(pred: list[ErrorEvent], gold: list[ErrorEvent],
                 window_ms: int = 10000):
    """Greedy one-to-one matching by center distance; kinds must agree.

    Returns (matches, precision, recall, f1).
    """
    candidates = []
    for i, pe in enumerate(pred):
        for j, ge in enumerate(gold):
            if pe.kind != ge.kind:
                continue
            dist = abs(pe.center - ge.center)
            if dist <= window_ms:
                candidates.append((i, j, dist))
    candidates.sort(key=lambda c: (c[2], c[0], c[1]))
    used_p, used_g = set(), set()
    matches = []
    for i, j, dist in candidates:
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        matches.append((i, j, dist))
    p, r, f1 = _prf(len(matches), len(pred), len(gold))
    return matches, p, r, f1


def rubric_score(seg_f1: float, err_f1: float) -> float:
    """0-5 composite: equal weights on segmentation and error detection."""
    return 5.0 * (0.5 * seg_f1 + 0.5 * err_f1)


def score_session(pred_segments: list[SegmentLabel],
                  pred_errors: list[ErrorEvent],
                  gold: GoldAnnotation,
                  iou_threshold: float = 0.5,
                  window_ms: int = 10000) -> ScoreReport:
    seg_matches, sp, sr, sf1 = match_segments(pred_segments, gold.segments,
                                              iou_threshold)
    err_matches, ep, er, ef1 = score_errors(pred_errors, gold.errors,
                                            window_ms)
    return ScoreReport(
        seg_precision=sp, seg_recall=sr, seg_f1=sf1,
        order_concordance=order_concordance(seg_matches, pred_segments,
                                            gold.segments),
        err_precision=ep, err_recall=er, err_f1=ef1,
        rubric_0_5=rubric_score(sf1, ef1),
        segment_matches=seg_matches,
        error_matches=err_matches,
    )


def load_gold(text: str) -> GoldAnnotation:
    """NDJSON gold file: lines typed 'segment', 'error' or 'parameter'."""
    gold = GoldAnnotation()
    for i, ln in enumerate(text.splitlines()):
        if not ln.strip():
            continue
        rec = json.loads(ln)
        typ = rec.get("type")
        if typ == "segment":
            gold.segments.append(SegmentLabel(
                rec["step_id"], int(rec["t_start_ms"]), int(rec["t_end_ms"])))
        elif typ == "error":
            if rec["kind"] not in KINDS:
                raise ValueError(f"line {i + 1}: unknown kind '{rec['kind']}'")
            gold.errors.append(ErrorEvent(
                rec["kind"], int(rec["t_start_ms"]), int(rec["t_end_ms"]),
                rec.get("step_ref")))
        elif typ == "parameter":
            gold.parameters.append(rec)
        else:
            raise ValueError(f"line {i + 1}: unknown record type '{typ}'")
    return gold
