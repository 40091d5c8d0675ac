"""Test-domain incremental benchmark construction.

Partitions one dataset into session groups G_0..G_{S-1} plus a holdout
group, with pairwise-disjoint ood class sets and pairwise-disjoint image
sets.  Groups reference records by index into the dataset.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

HOLDOUT = "holdout"


class BenchmarkError(ValueError):
    pass


@dataclass
class Group:
    index: int | str                      # 0..S-1 or "holdout"
    id_indices: list[int]                 # record indices into the dataset
    ood_indices: list[int]
    ood_classes: set[int] = field(default_factory=set)

    @property
    def indices(self) -> list[int]:
        return self.id_indices + self.ood_indices


@dataclass
class Benchmark:
    groups: list[Group]                   # trainable G_0..G_{S-1}
    holdout: Group
    id_classes: set[int]
    seed: int
    manifest_digest: str = ""

    @property
    def all_groups(self) -> list[Group]:
        return self.groups + [self.holdout]


def filter_classes_by_frequency(records, min_count: int) -> set[int]:
    """Classes with at least min_count records."""
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts = Counter(r.class_id for r in records)
    return {c for c, n in counts.items() if n >= min_count}


def split_shares(total: int, parts: int) -> list[int]:
    """Split `total` into `parts` integers as evenly as possible, larger first."""
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def build_benchmark(records, id_classes, ood_classes, session_count: int,
                    g0_class_count: int, seed: int) -> Benchmark:
    """Build the S+1 group layout: G_0 gets g0_class_count ood classes, the
    remaining ood classes are split evenly into S partitions (larger shares
    first) of which the last becomes the holdout; id images are spread
    uniformly at random so group image sets are disjoint.
    """
    id_classes, ood_classes = set(id_classes), set(ood_classes)
    if id_classes & ood_classes:
        raise BenchmarkError("id and ood class sets overlap")
    if session_count < 1:
        raise BenchmarkError("session_count must be >= 1")
    if g0_class_count >= len(ood_classes):
        raise BenchmarkError("g0_class_count must leave ood classes for later groups")

    rng = np.random.default_rng(seed)
    shuffled = sorted(ood_classes)
    rng.shuffle(shuffled)
    class_sets = [set(shuffled[:g0_class_count])]
    rest = shuffled[g0_class_count:]
    off = 0
    for share in split_shares(len(rest), session_count):
        class_sets.append(set(rest[off:off + share]))
        off += share
    if any(not s for s in class_sets):
        raise BenchmarkError("not enough ood classes to populate every group")
    n_groups = len(class_sets)            # session_count + 1, last is holdout

    class_to_group = {c: g for g, cs in enumerate(class_sets) for c in cs}

    # ood records follow their class; an image is claimed by the first group
    # that touches it so image sets stay disjoint.
    image_owner: dict[int, int] = {}
    ood_idx: list[list[int]] = [[] for _ in range(n_groups)]
    for i, rec in enumerate(records):
        if rec.class_id in class_to_group:
            g = class_to_group[rec.class_id]
            owner = image_owner.setdefault(rec.image_id, g)
            if owner == g:
                ood_idx[g].append(i)

    # id images split uniformly across all groups
    id_images = sorted({rec.image_id for rec in records
                        if rec.is_id and rec.class_id in id_classes
                        and rec.image_id not in image_owner})
    rng.shuffle(id_images)
    id_image_group = {}
    for j, img in enumerate(id_images):
        id_image_group[img] = j % n_groups
    id_idx: list[list[int]] = [[] for _ in range(n_groups)]
    for i, rec in enumerate(records):
        if rec.is_id and rec.class_id in id_classes and rec.image_id in id_image_group:
            id_idx[id_image_group[rec.image_id]].append(i)

    groups = []
    for g in range(n_groups):
        trainable = g < n_groups - 1
        if trainable and (not id_idx[g] or not ood_idx[g]):
            raise BenchmarkError(f"group {g} has an empty id or ood side")
        groups.append(Group(index=g if trainable else HOLDOUT,
                            id_indices=id_idx[g], ood_indices=ood_idx[g],
                            ood_classes=class_sets[g]))
    bench = Benchmark(groups=groups[:-1], holdout=groups[-1],
                      id_classes=id_classes, seed=seed)
    bench.manifest_digest = _digest(bench)
    return bench


def _digest(bench: Benchmark) -> str:
    payload = {
        "seed": bench.seed,
        "id_classes": sorted(bench.id_classes),
        "groups": [{
            "index": str(g.index),
            "ood_classes": sorted(g.ood_classes),
            "id_indices": g.id_indices,
            "ood_indices": g.ood_indices,
        } for g in bench.all_groups],
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def benchmark_manifest(bench: Benchmark) -> str:
    """Stable, human-readable listing of the benchmark layout."""
    lines = [f"benchmark seed={bench.seed} groups={len(bench.all_groups)}",
             f"id_classes: {sorted(bench.id_classes)}"]
    for g in bench.all_groups:
        lines.append(
            f"group {g.index}: ood_classes={sorted(g.ood_classes)} "
            f"n_id={len(g.id_indices)} n_ood={len(g.ood_indices)}")
    lines.append(f"digest: {bench.manifest_digest}")
    return "\n".join(lines) + "\n"


def save_benchmark(bench: Benchmark, path):
    payload = {
        "seed": bench.seed,
        "id_classes": sorted(bench.id_classes),
        "digest": bench.manifest_digest,
        "groups": [{
            "index": g.index,
            "ood_classes": sorted(g.ood_classes),
            "id_indices": g.id_indices,
            "ood_indices": g.ood_indices,
        } for g in bench.all_groups],
    }
    with open(path, "w") as f:
        json.dump(payload, f, indent=1)


def load_benchmark(path) -> Benchmark:
    with open(path) as f:
        payload = json.load(f)
    groups = [Group(index=g["index"], id_indices=list(g["id_indices"]),
                    ood_indices=list(g["ood_indices"]),
                    ood_classes=set(g["ood_classes"]))
              for g in payload["groups"]]
    bench = Benchmark(groups=groups[:-1], holdout=groups[-1],
                      id_classes=set(payload["id_classes"]), seed=payload["seed"],
                      manifest_digest=payload["digest"])
    return bench
