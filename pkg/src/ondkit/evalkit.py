"""Scoring baselines, learned-model scoring, and the two ND metrics.

Baselines score id-ness straight from the detector logits (max softmax
probability, max logit, log-sum-exp energy); the learned model scores with
its sigmoid output.  Metrics are FPR at a fixed 95% TPR and AUROC in its
rank-sum (Mann-Whitney) form with ties half-credited.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import ndnet

MSP = "msp"
MAXLOGIT = "maxlogit"
ENERGY = "energy"

HIST_BINS = 50


class ScoreError(ValueError):
    pass


@dataclass
class ScoreSet:
    id_scores: np.ndarray
    ood_scores: np.ndarray
    method: str = ""
    group: str = ""

    def __post_init__(self):
        self.id_scores = np.asarray(self.id_scores, dtype=float)
        self.ood_scores = np.asarray(self.ood_scores, dtype=float)

    def validate(self):
        if len(self.id_scores) == 0 or len(self.ood_scores) == 0:
            raise ScoreError("both id and ood score lists must be non-empty")
        if not (np.all(np.isfinite(self.id_scores)) and np.all(np.isfinite(self.ood_scores))):
            raise ScoreError("scores must be finite")


@dataclass
class EvalReport:
    fpr_at_95: float
    auroc: float
    n_id: int
    n_ood: int
    threshold: float
    method: str = ""
    group: str = ""

    def as_row(self) -> dict:
        return {"method": self.method, "group": self.group,
                "fpr95": self.fpr_at_95, "auroc": self.auroc,
                "n_id": self.n_id, "n_ood": self.n_ood,
                "threshold": self.threshold}


def msp_score(logits) -> float:
    """Max softmax probability, max-shifted for stability."""
    logits = np.asarray(logits, dtype=float)
    if logits.size == 0:
        raise ScoreError("empty logits")
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return float(e.max() / e.sum())


def maxlogit_score(logits) -> float:
    logits = np.asarray(logits, dtype=float)
    if logits.size == 0:
        raise ScoreError("empty logits")
    return float(logits.max())


def energy_score(logits, T: float = 1.0) -> float:
    """Negative energy T*logsumexp(logits/T); higher means more id."""
    logits = np.asarray(logits, dtype=float)
    if logits.size == 0:
        raise ScoreError("empty logits")
    if T <= 0:
        raise ScoreError("temperature must be > 0")
    scaled = logits / T
    m = scaled.max()
    return float(T * (m + math.log(np.exp(scaled - m).sum())))


_BASELINES = {MSP: msp_score, MAXLOGIT: maxlogit_score, ENERGY: energy_score}


def baseline_score_set(records, method: str, group: str = "") -> ScoreSet:
    fn = _BASELINES[method]
    id_s = [fn(r.logits) for r in records if r.is_id]
    ood_s = [fn(r.logits) for r in records if not r.is_id]
    return ScoreSet(np.array(id_s), np.array(ood_s), method=method, group=group)


def model_score(model, records, group: str = "", method: str = "model") -> ScoreSet:
    """Eval-mode forward over the records, split by the is_id flag."""
    X = np.stack([r.feature for r in records]).astype(float)
    fwd, _ = ndnet.forward(model, X, mode="eval")
    is_id = np.array([r.is_id for r in records])
    ss = ScoreSet(fwd.nu[is_id], fwd.nu[~is_id], method=method, group=group)
    ss.validate()
    return ss


def fpr_at_tpr(scores: ScoreSet, tpr_target: float = 0.95):
    """FPR at the largest threshold keeping TPR >= tpr_target.

    The rule is score >= threshold => id; the threshold is the
    ceil(tpr_target * n_id)-th largest id score.  Returns (fpr, threshold).
    """
    scores.validate()
    n_id = len(scores.id_scores)
    k = math.ceil(tpr_target * n_id)
    threshold = float(np.sort(scores.id_scores)[::-1][k - 1])
    fpr = float(np.mean(scores.ood_scores >= threshold))
    return fpr, threshold


def auroc(scores: ScoreSet) -> float:
    """P(id score > ood score) with ties half-credited, via rank sums."""
    scores.validate()
    id_s, ood_s = scores.id_scores, scores.ood_scores
    n_id, n_ood = len(id_s), len(ood_s)
    pooled = np.concatenate([id_s, ood_s])
    order = np.argsort(pooled, kind="mergesort")
    ranks = np.empty(len(pooled))
    sorted_vals = pooled[order]
    # midranks for ties
    i = 0
    while i < len(pooled):
        j = i
        while j + 1 < len(pooled) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    rank_sum_id = ranks[:n_id].sum()
    u = rank_sum_id - n_id * (n_id + 1) / 2.0
    return float(u / (n_id * n_ood))


def evaluate(scores: ScoreSet, tpr_target: float = 0.95) -> EvalReport:
    fpr, thr = fpr_at_tpr(scores, tpr_target)
    return EvalReport(fpr_at_95=fpr, auroc=auroc(scores),
                      n_id=len(scores.id_scores), n_ood=len(scores.ood_scores),
                      threshold=thr, method=scores.method, group=scores.group)


def export_scores(scores: ScoreSet, path, bins: int = HIST_BINS):
    """Two-column (score, is_id) text plus a shared-bin histogram block."""
    scores.validate()
    all_scores = np.concatenate([scores.id_scores, scores.ood_scores])
    lo, hi = float(all_scores.min()), float(all_scores.max())
    if lo == hi:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    id_hist, _ = np.histogram(scores.id_scores, bins=edges)
    ood_hist, _ = np.histogram(scores.ood_scores, bins=edges)
    lines = [f"# method={scores.method} group={scores.group} "
             f"n_id={len(scores.id_scores)} n_ood={len(scores.ood_scores)}",
             "# score\tis_id"]
    for s in scores.id_scores:
        lines.append(f"{float(s)!r}\t1")
    for s in scores.ood_scores:
        lines.append(f"{float(s)!r}\t0")
    lines.append(f"# histogram bins={bins} lo={lo!r} hi={hi!r}")
    for b in range(bins):
        lines.append(f"# bin\t{float(edges[b])!r}\t{float(edges[b + 1])!r}"
                     f"\t{id_hist[b]}\t{ood_hist[b]}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def load_exported_scores(path) -> ScoreSet:
    id_s, ood_s = [], []
    with open(path) as f:
        for line in f:
            if line.startswith("#") or not line.strip():
                continue
            val, flag = line.split("\t")
            (id_s if int(flag) else ood_s).append(float(val))
    return ScoreSet(np.array(id_s), np.array(ood_s))


def histogram_payload(scores: ScoreSet, bins: int = HIST_BINS) -> dict:
    """Binned id/ood score counts for the API and charts."""
    scores.validate()
    all_scores = np.concatenate([scores.id_scores, scores.ood_scores])
    lo, hi = float(all_scores.min()), float(all_scores.max())
    if lo == hi:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    id_hist, _ = np.histogram(scores.id_scores, bins=edges)
    ood_hist, _ = np.histogram(scores.ood_scores, bins=edges)
    return {"method": scores.method, "group": scores.group,
            "edges": [float(e) for e in edges],
            "id_counts": [int(c) for c in id_hist],
            "ood_counts": [int(c) for c in ood_hist]}
