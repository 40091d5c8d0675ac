"""Score baselines and metric oracles (exhaustive-threshold FPR, all-pairs AUROC)."""

import math

import numpy as np
import pytest

from ondkit import evalkit
from ondkit.evalkit import (ScoreSet, ScoreError, auroc, energy_score,
                            evaluate, export_scores, fpr_at_tpr,
                            load_exported_scores, histogram_payload,
                            maxlogit_score, msp_score)

from conftest import random_model


def fpr_oracle(id_s, ood_s, target=0.95):
    """Brute-force sweep: largest threshold among id scores keeping TPR >= target."""
    best = None
    for t in np.unique(id_s):
        if np.mean(id_s >= t) >= target and (best is None or t > best):
            best = t
    return float(np.mean(ood_s >= best)), float(best)


def auroc_oracle(id_s, ood_s):
    gt = (id_s[:, None] > ood_s[None, :]).sum()
    eq = (id_s[:, None] == ood_s[None, :]).sum()
    return (gt + 0.5 * eq) / (len(id_s) * len(ood_s))


# --- baseline scores ----------------------------------------------------------


def test_msp_uniform():
    assert msp_score([1.0, 1.0, 1.0, 1.0]) == pytest.approx(0.25, abs=1e-12)


def test_msp_peaked():
    assert msp_score([10.0, 0.0, 0.0]) == pytest.approx(
        math.exp(10) / (math.exp(10) + 2), abs=1e-9)


def test_msp_shift_invariant(rng):
    logits = rng.normal(size=7)
    assert msp_score(logits + 123.4) == pytest.approx(msp_score(logits), abs=1e-12)


def test_maxlogit():
    assert maxlogit_score([3.2, -1.0, 0.5]) == 3.2
    assert maxlogit_score([2.0, 2.0]) == 2.0


def test_maxlogit_shift_adds_constant(rng):
    logits = rng.normal(size=5)
    assert maxlogit_score(logits + 4.0) == pytest.approx(maxlogit_score(logits) + 4.0)


def test_energy_single_logit():
    assert energy_score([1.7]) == pytest.approx(1.7, abs=1e-12)


def test_energy_two_zeros():
    assert energy_score([0.0, 0.0]) == pytest.approx(math.log(2.0), abs=1e-12)


def test_energy_no_overflow():
    assert energy_score([1000.0, 0.0]) == pytest.approx(1000.0, abs=1e-6)


def test_energy_approaches_maxlogit_at_low_temperature(rng):
    logits = rng.normal(size=6)
    assert energy_score(logits, T=1e-4) == pytest.approx(maxlogit_score(logits), abs=1e-3)


def test_baseline_errors():
    for fn in (msp_score, maxlogit_score, energy_score):
        with pytest.raises(ScoreError):
            fn([])
    with pytest.raises(ScoreError):
        energy_score([1.0], T=0.0)


def test_model_score_constant_scorer(rng):
    from ondkit import featurestore
    model = random_model(rng)
    model.w[:] = 0.0
    recs = []
    for i in range(10):
        recs.append(featurestore.FeatureRecord(
            i, np.zeros(4, np.float32), int(i < 5), i < 5,
            rng.normal(size=16).astype(np.float32),
            rng.normal(size=2).astype(np.float32)))
    ss = evalkit.model_score(model, recs)
    assert np.all(ss.id_scores == 0.5) and np.all(ss.ood_scores == 0.5)
    fpr, _ = fpr_at_tpr(ss)
    assert fpr == 1.0


# --- metric edge cases ----------------------------------------------------------


def test_fpr_fully_separated():
    ss = ScoreSet([0.9, 0.8, 0.7], [0.1, 0.2])
    fpr, thr = fpr_at_tpr(ss)
    assert (fpr, thr) == (0.0, 0.7)
    assert auroc(ss) == 1.0


def test_identical_constants():
    ss = ScoreSet([0.5] * 4, [0.5] * 6)
    fpr, _ = fpr_at_tpr(ss)
    assert fpr == 1.0
    assert auroc(ss) == 0.5


def test_auroc_swapped_is_zero():
    ss = ScoreSet([0.1, 0.2], [0.8, 0.9])
    assert auroc(ss) == 0.0


def test_empty_side_rejected():
    with pytest.raises(ScoreError):
        fpr_at_tpr(ScoreSet([], [0.1]))
    with pytest.raises(ScoreError):
        auroc(ScoreSet([0.1], []))
    with pytest.raises(ScoreError):
        ScoreSet([0.1, np.inf], [0.2]).validate()


# --- oracle agreement ------------------------------------------------------------


def test_metrics_match_oracles_on_random_sets():
    rng = np.random.default_rng(7)
    for trial in range(200):
        n_id = int(rng.integers(5, 501))
        n_ood = int(rng.integers(5, 501))
        id_s = rng.normal(size=n_id)
        ood_s = rng.normal(loc=-0.5, size=n_ood)
        if trial % 3 == 0:  # inject heavy ties
            id_s = np.round(id_s, 1)
            ood_s = np.round(ood_s, 1)
        ss = ScoreSet(id_s, ood_s)
        fpr, thr = fpr_at_tpr(ss)
        ofpr, othr = fpr_oracle(id_s, ood_s)
        assert abs(fpr - ofpr) <= 1e-9 and abs(thr - othr) <= 1e-9
        assert abs(auroc(ss) - auroc_oracle(id_s, ood_s)) <= 1e-9


def test_metrics_monotone_transform_invariant(rng):
    id_s = rng.normal(size=40)
    ood_s = rng.normal(size=60)
    base_fpr, _ = fpr_at_tpr(ScoreSet(id_s, ood_s))
    base_auroc = auroc(ScoreSet(id_s, ood_s))
    warped = ScoreSet(np.exp(id_s), np.exp(ood_s))  # strictly increasing map
    fpr, _ = fpr_at_tpr(warped)
    assert fpr == pytest.approx(base_fpr, abs=1e-12)
    assert auroc(warped) == pytest.approx(base_auroc, abs=1e-12)


def test_evaluate_report_fields():
    rep = evaluate(ScoreSet([0.9, 0.8, 0.7], [0.1, 0.2], method="msp", group="holdout"))
    row = rep.as_row()
    assert row["method"] == "msp" and row["group"] == "holdout"
    assert row["n_id"] == 3 and row["n_ood"] == 2
    assert row["fpr95"] == 0.0 and row["auroc"] == 1.0


# --- export ----------------------------------------------------------------------


def test_export_round_trip(tmp_path, rng):
    ss = ScoreSet(rng.normal(size=30), rng.normal(size=45), method="m", group="holdout")
    path = tmp_path / "scores.tsv"
    export_scores(ss, path)
    loaded = load_exported_scores(path)
    assert np.array_equal(np.sort(loaded.id_scores), np.sort(ss.id_scores))
    assert np.array_equal(np.sort(loaded.ood_scores), np.sort(ss.ood_scores))
    text = path.read_text()
    assert "histogram bins=50" in text
    assert text.count("# bin\t") == 50


def test_export_refuses_empty_side(tmp_path):
    with pytest.raises(ScoreError):
        export_scores(ScoreSet([0.1], []), tmp_path / "nope.tsv")


def test_histogram_payload_counts(rng):
    ss = ScoreSet(rng.normal(size=25), rng.normal(size=35))
    payload = histogram_payload(ss, bins=10)
    assert len(payload["edges"]) == 11
    assert sum(payload["id_counts"]) == 25
    assert sum(payload["ood_counts"]) == 35
