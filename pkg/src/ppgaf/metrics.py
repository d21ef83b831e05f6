"""Window- and episode-level evaluation metrics.

Precision/recall/F1 at a fixed decision threshold, area under the
precision-recall curve via step-wise average precision (ties grouped, no
interpolation), quality gating, episode sensitivity, and the false-positive
rate over AF-free subjects.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DataError, MetricUndefinedError
from .labels import Quality, Rhythm

AF_INDEX = Rhythm.AF.index
DEFAULT_THRESHOLD = 0.5


@dataclass
class EvalRecord:
    window_id: str
    subject_id: str
    true_rhythm: Rhythm
    rhythm_probs: np.ndarray  # [P(sinus), P(AF)]
    qa_probs: Optional[np.ndarray] = None  # [P(excellent), P(acceptable), P(poor)]
    true_qa: Optional[Quality] = None
    episode_id: Optional[str] = None

    @property
    def af_score(self) -> float:
        return float(self.rhythm_probs[AF_INDEX])


@dataclass
class MetricsReport:
    precision: float
    recall: float
    f1: float
    auprc: float
    tp: int
    fp: int
    fn: int
    tn: int
    n_windows: int
    n_gated_out: int
    episode_sensitivity: Optional[float] = None
    false_positive_rate: Optional[float] = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "auprc": self.auprc,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "tn": self.tn,
            "n_windows": self.n_windows,
            "n_gated_out": self.n_gated_out,
        }
        if self.episode_sensitivity is not None:
            out["episode_sensitivity"] = self.episode_sensitivity
        if self.false_positive_rate is not None:
            out["false_positive_rate"] = self.false_positive_rate
        out.update(self.extra)
        return out


def _predicted_af(record: EvalRecord, threshold: float) -> bool:
    return record.af_score >= threshold


def prf1(records, positive: Rhythm = Rhythm.AF, threshold: float = DEFAULT_THRESHOLD):
    """Precision, recall, F1 and the confusion counts at one threshold.

    Degenerate denominators yield 0 rather than an error.
    """
    if not records:
        raise DataError("prf1 needs at least one record")
    tp = fp = fn = tn = 0
    for r in records:
        actual = r.true_rhythm is positive
        predicted = _predicted_af(r, threshold) if positive is Rhythm.AF else not _predicted_af(r, threshold)
        if predicted and actual:
            tp += 1
        elif predicted and not actual:
            fp += 1
        elif not predicted and actual:
            fn += 1
        else:
            tn += 1
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1, {"tp": tp, "fp": fp, "fn": fn, "tn": tn}


def pr_curve(scores: np.ndarray, labels: np.ndarray):
    """Precision/recall points over descending unique score thresholds.

    Tied scores collapse into a single threshold. Returns (precision,
    recall, thresholds) arrays of equal length.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(np.int64)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise DataError("scores and labels must be equal-length 1-D arrays")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricUndefinedError("PR curve undefined for single-class labels")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = labels[order]
    # last index of each tie group
    last = np.nonzero(np.append(s[:-1] != s[1:], True))[0]
    tp = np.cumsum(y)[last]
    pp = last + 1.0
    precision = tp / pp
    recall = tp / n_pos
    return precision, recall, s[last]


def auprc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Step-wise average precision: sum of P_i * (R_i - R_{i-1})."""
    precision, recall, _ = pr_curve(scores, labels)
    prev = np.concatenate(([0.0], recall[:-1]))
    return float(np.sum((recall - prev) * precision))


def qa_gate(records, level: Quality = Quality.EXCELLENT):
    """Keep records whose predicted quality argmax equals `level`.

    Returns (retained records, number gated out). Rhythm predictions of
    retained records are untouched.
    """
    retained = []
    gated_out = 0
    for r in records:
        if r.qa_probs is None:
            raise DataError(f"record {r.window_id} has no quality probabilities")
        if int(np.argmax(r.qa_probs)) == level.index:
            retained.append(r)
        else:
            gated_out += 1
    return retained, gated_out


def episode_sensitivity(records, threshold: float = DEFAULT_THRESHOLD):
    """Fraction of AF episodes with at least one AF-predicted window.

    Returns (sensitivity, detected, total AF episodes). Episodes inherit
    the AF label when any member window is truly AF.
    """
    episodes: dict = {}
    for r in records:
        if not r.episode_id:
            raise DataError(f"record {r.window_id} has no episode id")
        entry = episodes.setdefault(r.episode_id, {"af": False, "detected": False})
        if r.true_rhythm is Rhythm.AF:
            entry["af"] = True
        if _predicted_af(r, threshold):
            entry["detected"] = True
    af_episodes = [e for e in episodes.values() if e["af"]]
    if not af_episodes:
        raise MetricUndefinedError("no AF episodes present")
    detected = sum(1 for e in af_episodes if e["detected"])
    return detected / len(af_episodes), detected, len(af_episodes)


def false_positive_rate(records, threshold: float = DEFAULT_THRESHOLD):
    """AF-prediction rate over windows that are all truly non-AF.

    Returns (rate, n_false_alarms, n_windows).
    """
    if not records:
        raise MetricUndefinedError("no records left to compute a false-positive rate")
    for r in records:
        if r.true_rhythm is Rhythm.AF:
            raise DataError("false_positive_rate expects only AF-free records")
    n_fp = sum(1 for r in records if _predicted_af(r, threshold))
    return n_fp / len(records), n_fp, len(records)
