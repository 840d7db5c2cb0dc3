"""
Boundary matching under a tolerance window and the usual segmentation scores.

Times are compared on an integer grid of 0.1 microseconds so that window
edges and midpoints are decided exactly: TIMIT sample times (multiples of
62.5 us) and frame times both land on that grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .segmenter import BoundarySet, ErrorSignal, detect_boundaries

CROPPED = "cropped"
OVERLAPPING = "overlapping"
_TICKS_PER_SECOND = 10_000_000


@dataclass(frozen=True)
class MatchResult:
    n_gold: int
    n_hyp: int
    n_hit: int
    mode: str = CROPPED
    tolerance_ms: float = 20.0


@dataclass(frozen=True)
class EvaluationReport:
    precision: float
    recall: float
    f_score: float
    over_segmentation: float
    r_value: float

    def as_percent(self) -> dict:
        return {
            "P": 100 * self.precision,
            "R": 100 * self.recall,
            "F": 100 * self.f_score,
            "OS": 100 * self.over_segmentation,
            "R-value": 100 * self.r_value,
        }


def _ticks(times) -> np.ndarray:
    if isinstance(times, BoundarySet):
        times = times.seconds
    return np.rint(np.asarray(times, dtype=np.float64) * _TICKS_PER_SECOND).astype(np.int64)


def cropped_windows(gold_ticks: np.ndarray, tol: int):
    """
    Per-gold window edges after cropping overlaps at the midpoint.

    Returns ``(lo2, hi2, hi_closed)`` with edges doubled so that midpoints
    stay integral. A hypothesis ``h`` lies in window ``i`` when
    ``lo2[i] <= 2h`` and ``2h < hi2[i]`` (``<=`` where ``hi_closed[i]``).
    A shared midpoint goes to the right-hand window.
    """
    g = gold_ticks
    lo2 = 2 * (g - tol)
    hi2 = 2 * (g + tol)
    n = len(g)
    hi_closed = np.ones(n, dtype=bool)
    if n > 1:
        mids2 = g[:-1] + g[1:]
        touching = (g[1:] - g[:-1]) <= 2 * tol
        lo2[1:] = np.where(touching, mids2, lo2[1:])
        hi2[:-1] = np.where(touching, mids2, hi2[:-1])
        hi_closed[:-1] = ~touching
    return lo2, hi2, hi_closed


def _check_sorted(ticks: np.ndarray, name: str) -> None:
    if len(ticks) > 1 and np.any(np.diff(ticks) < 0):
        raise ValueError(f"{name} boundaries are not sorted")


def match_boundaries(gold, hyp, tolerance_ms: float = 20.0, mode: str = CROPPED) -> MatchResult:
    """Count gold boundaries detected by at least one hypothesis.

    In cropped mode each hypothesis can serve only the gold boundary whose
    (cropped) window contains it, so matching is one-to-one. In overlapping
    mode a hypothesis may count for every gold boundary within the tolerance.
    """
    if mode not in (CROPPED, OVERLAPPING):
        raise ValueError(f"unknown matching mode {mode!r}")
    g, h = _ticks(gold), _ticks(hyp)
    _check_sorted(g, "gold")
    _check_sorted(h, "hypothesis")
    tol = int(round(tolerance_ms * _TICKS_PER_SECOND / 1000))

    if mode == OVERLAPPING:
        left = np.searchsorted(h, g - tol, side="left")
        right = np.searchsorted(h, g + tol, side="right")
        n_hit = int(np.count_nonzero(right > left))
    else:
        lo2, hi2, hi_closed = cropped_windows(g, tol)
        h2 = 2 * h
        left = np.searchsorted(h2, lo2, side="left")
        right = np.where(hi_closed,
                         np.searchsorted(h2, hi2, side="right"),
                         np.searchsorted(h2, hi2, side="left"))
        n_hit = int(np.count_nonzero(right > left))
    return MatchResult(n_gold=len(g), n_hyp=len(h), n_hit=n_hit, mode=mode,
                       tolerance_ms=tolerance_ms)


def r_value(precision: float, recall: float) -> float:
    """R-value from precision and recall, using the signed second term ``(-OS + R - 1)/sqrt(2)``."""
    os_ = recall / precision - 1
    r1 = math.sqrt((1 - recall) ** 2 + os_ ** 2)
    r2 = (-os_ + recall - 1) / math.sqrt(2)
    return 1 - (abs(r1) + abs(r2)) / 2


def r_value_variant(precision: float, recall: float) -> float:
    """
    R-value with ``(R + 1 - OS)/sqrt(2)`` as the second term.

    Kept only for comparison: it does not reproduce published reference
    numbers (0.236 instead of 0.469 at P=0.575, R=0.910).
    """
    os_ = recall / precision - 1
    r1 = math.sqrt((1 - recall) ** 2 + os_ ** 2)
    r2 = (recall + 1 - os_) / math.sqrt(2)
    return 1 - (abs(r1) + abs(r2)) / 2


def metrics_from_pr(precision: float, recall: float, over_segmentation: float | None = None) -> EvaluationReport:
    f = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    os_ = recall / precision - 1 if over_segmentation is None else over_segmentation
    r1 = math.sqrt((1 - recall) ** 2 + os_ ** 2)
    r2 = (-os_ + recall - 1) / math.sqrt(2)
    return EvaluationReport(precision=precision, recall=recall, f_score=f,
                            over_segmentation=os_, r_value=1 - (abs(r1) + abs(r2)) / 2)


def compute_metrics(m: MatchResult) -> EvaluationReport:
    if m.n_gold == 0:
        raise ValueError("cannot score against an empty gold set")
    if m.n_hyp == 0:
        precision = 1.0 if m.n_hit == 0 else math.nan
    else:
        precision = m.n_hit / m.n_hyp
    recall = m.n_hit / m.n_gold
    # R/P == n_hyp/n_gold whenever both are defined; the count form also covers P == 0
    return metrics_from_pr(precision, recall, over_segmentation=m.n_hyp / m.n_gold - 1)


def aggregate(results) -> MatchResult:
    """Pool counts across utterances; scores are then computed on the pooled counts."""
    results = list(results)
    if not results:
        raise ValueError("nothing to aggregate")
    modes = {(r.mode, r.tolerance_ms) for r in results}
    if len(modes) > 1:
        raise ValueError(f"cannot aggregate mixed modes/tolerances: {sorted(modes)}")
    mode, tol = modes.pop()
    return MatchResult(n_gold=sum(r.n_gold for r in results),
                       n_hyp=sum(r.n_hyp for r in results),
                       n_hit=sum(r.n_hit for r in results),
                       mode=mode, tolerance_ms=tol)


def trim_gold(gold: BoundarySet, duration: float, drop_initial: bool = False,
              drop_final: bool = False, eps: float = 1e-9) -> BoundarySet:
    """Optionally remove the utterance-initial (t=0) and utterance-final gold boundaries."""
    s = gold.seconds
    keep = np.ones(len(s), dtype=bool)
    if drop_initial:
        keep &= s > eps
    if drop_final:
        keep &= s < duration - eps
    return BoundarySet(seconds=s[keep], kind=gold.kind, utterance_id=gold.utterance_id)


def evaluate_corpus(hyps, golds, tolerance_ms: float = 20.0, mode: str = CROPPED):
    """Pooled match counts and scores for paired per-utterance boundary sets."""
    pooled = aggregate(match_boundaries(g, h, tolerance_ms, mode) for g, h in zip(golds, hyps, strict=True))
    return pooled, compute_metrics(pooled)


def sweep_threshold(errors: list[ErrorSignal], gold: list[BoundarySet], deltas,
                    tolerance_ms: float = 20.0, mode: str = CROPPED, reset: str = "local"):
    """Score peak detection at every ``delta``; rows come back sorted by delta."""
    deltas = sorted(float(d) for d in deltas)
    if not deltas:
        raise ValueError("no thresholds to sweep")
    rows = []
    for delta in deltas:
        hyps = [detect_boundaries(e, delta, reset=reset) for e in errors]
        pooled, report = evaluate_corpus(hyps, gold, tolerance_ms, mode)
        rows.append((delta, report, pooled))
    return rows


REPORT_COLUMNS = ("P", "R", "F", "OS", "R-value")


def format_report_rows(rows, key: str = "delta") -> str:
    """CSV text with percentages to one decimal; ``rows`` are ``(key_value, EvaluationReport)``."""
    lines = [",".join((key,) + REPORT_COLUMNS)]
    for value, report in rows:
        pct = report.as_percent()
        lines.append(",".join([f"{value:g}"] + [f"{pct[c]:.1f}" for c in REPORT_COLUMNS]))
    return "\n".join(lines) + "\n"


def format_table(rows, key: str = "delta") -> str:
    header = f"{key:>12} " + " ".join(f"{c:>8}" for c in REPORT_COLUMNS)
    out = [header, "-" * len(header)]
    for value, report in rows:
        pct = report.as_percent()
        label = value if isinstance(value, str) else f"{value:g}"
        out.append(f"{label:>12} " + " ".join(f"{pct[c]:8.1f}" for c in REPORT_COLUMNS))
    return "\n".join(out) + "\n"
