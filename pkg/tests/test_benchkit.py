"""Benchmark partitioning: shares, disjointness, manifests and digests."""

import numpy as np
import pytest

from ondkit import benchkit, featurestore
from ondkit.benchkit import (BenchmarkError, build_benchmark,
                             filter_classes_by_frequency, split_shares)


def _clustered_records(n_id_classes, n_ood_classes, per_class, seed=0, D=4):
    cfg = featurestore.SyntheticConfig(
        D=D, id_cluster_count=n_id_classes, ood_cluster_count=n_ood_classes,
        samples_per_cluster=per_class, seed=seed)
    return featurestore.generate_synthetic(cfg)


def test_split_shares_examples():
    assert split_shares(30, 5) == [6, 6, 6, 6, 6]
    assert split_shares(48, 5) == [10, 10, 10, 9, 9]


def test_split_shares_even_property(rng):
    for _ in range(50):
        total = int(rng.integers(1, 200))
        parts = int(rng.integers(1, 20))
        shares = split_shares(total, parts)
        assert sum(shares) == total and len(shares) == parts
        assert max(shares) - min(shares) <= 1
        assert shares == sorted(shares, reverse=True)  # larger shares first


@pytest.mark.parametrize("n_ood,g0,expect", [
    (60, 30, [30, 6, 6, 6, 6, 6]),
    (96, 48, [48, 10, 10, 10, 9, 9]),
])
def test_benchmark_class_shares(n_ood, g0, expect):
    cfg_ids = featurestore.SyntheticConfig(
        D=2, id_cluster_count=3, ood_cluster_count=n_ood,
        samples_per_cluster=2, id_samples_per_cluster=8, seed=0)
    header, records = featurestore.generate_synthetic(cfg_ids)
    bench = build_benchmark(records, {0, 1, 2}, set(range(3, 3 + n_ood)), 5, g0, seed=0)
    shares = [len(g.ood_classes) for g in bench.all_groups]
    assert shares == expect
    assert len(bench.all_groups) == 6
    assert bench.holdout.index == benchkit.HOLDOUT


def test_disjointness_over_seeds():
    header, records = _clustered_records(3, 13, 4)
    id_classes, ood_classes = set(range(3)), set(range(3, 16))
    for seed in range(100):
        bench = build_benchmark(records, id_classes, ood_classes, 4, 5, seed)
        groups = bench.all_groups
        for i in range(len(groups)):
            for j in range(i + 1, len(groups)):
                assert not (groups[i].ood_classes & groups[j].ood_classes)
                imgs_i = {records[k].image_id for k in groups[i].indices}
                imgs_j = {records[k].image_id for k in groups[j].indices}
                assert not (imgs_i & imgs_j)


def test_benchmark_deterministic():
    header, records = _clustered_records(2, 9, 3)
    b1 = build_benchmark(records, {0, 1}, set(range(2, 11)), 3, 3, seed=7)
    b2 = build_benchmark(records, {0, 1}, set(range(2, 11)), 3, 3, seed=7)
    assert benchkit.benchmark_manifest(b1) == benchkit.benchmark_manifest(b2)
    assert b1.manifest_digest == b2.manifest_digest


def test_manifest_reports_groups_and_digest():
    header, records = _clustered_records(2, 9, 3)
    bench = build_benchmark(records, {0, 1}, set(range(2, 11)), 3, 3, seed=7)
    text = benchkit.benchmark_manifest(bench)
    assert "groups=4" in text
    assert "holdout" in text
    assert bench.manifest_digest in text


def test_digest_changes_when_record_moves():
    header, records = _clustered_records(2, 9, 3)
    bench = build_benchmark(records, {0, 1}, set(range(2, 11)), 3, 3, seed=7)
    before = benchkit._digest(bench)
    moved = bench.groups[0].ood_indices.pop()
    bench.groups[1].ood_indices.append(moved)
    assert benchkit._digest(bench) != before


def test_filter_classes_by_frequency(rng):
    header, records = _clustered_records(2, 3, 4)
    classes = {r.class_id for r in records}
    assert filter_classes_by_frequency(records, 1) == classes
    assert filter_classes_by_frequency(records, 5) == set()
    ten = [r for r in records if r.class_id == 0] * 3  # class 0 now 12 records
    three = [r for r in records if r.class_id == 1][:3]
    assert filter_classes_by_frequency(ten + three, 5) == {0}
    with pytest.raises(ValueError):
        filter_classes_by_frequency(records, 0)


def test_build_benchmark_errors():
    header, records = _clustered_records(2, 4, 3)
    with pytest.raises(BenchmarkError, match="overlap"):
        build_benchmark(records, {0, 1}, {1, 2, 3}, 2, 1, 0)
    with pytest.raises(BenchmarkError):
        build_benchmark(records, {0, 1}, {2, 3, 4, 5}, 2, 4, 0)  # g0 eats everything
    with pytest.raises(BenchmarkError):
        build_benchmark(records, {0, 1}, {2, 3, 4, 5}, 0, 1, 0)


def test_save_load_round_trip(tmp_path):
    header, records = _clustered_records(2, 9, 3)
    bench = build_benchmark(records, {0, 1}, set(range(2, 11)), 3, 3, seed=7)
    path = tmp_path / "bench.json"
    benchkit.save_benchmark(bench, path)
    loaded = benchkit.load_benchmark(path)
    assert loaded.manifest_digest == bench.manifest_digest
    assert benchkit.benchmark_manifest(loaded) == benchkit.benchmark_manifest(bench)
    assert [g.indices for g in loaded.all_groups] == [g.indices for g in bench.all_groups]
