"""Proposal-feature records, the ONDF on-disk formats, and a synthetic generator.

A record is one detected object proposal: the frozen detector's feature
vector plus its class logits, a class label and an id/ood flag.  Datasets
are written either as ONDF binary (canonical, bit-exact round trip) or as
JSONL (one record object per line, debug-friendly).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

ONDF_MAGIC = b"ONDF"
ONDF_VERSION = 1


class FormatError(ValueError):
    """Raised when a dataset file violates the ONDF/JSONL contract."""


@dataclass
class FeatureRecord:
    image_id: int
    bbox: np.ndarray          # (4,) float32, (x, y, w, h) in pixels
    class_id: int
    is_id: bool
    feature: np.ndarray       # (D,) float32
    logits: np.ndarray        # (K,) float32, background class excluded

    def __eq__(self, other):
        if not isinstance(other, FeatureRecord):
            return NotImplemented
        return (
            self.image_id == other.image_id
            and self.class_id == other.class_id
            and self.is_id == other.is_id
            and np.array_equal(self.bbox, other.bbox)
            and np.array_equal(self.feature, other.feature)
            and np.array_equal(self.logits, other.logits)
        )


@dataclass
class DatasetHeader:
    D: int
    K: int
    record_count: int
    id_class_set: list[int] = field(default_factory=list)
    version: int = ONDF_VERSION

    def validate(self):
        if self.D < 1 or self.K < 1:
            raise FormatError(f"header requires D >= 1 and K >= 1, got D={self.D} K={self.K}")
        if not self.id_class_set:
            raise FormatError("id_class_set must be non-empty")
        if len(set(self.id_class_set)) != len(self.id_class_set):
            raise FormatError("id_class_set contains duplicates")


def validate_record(rec: FeatureRecord, header: DatasetHeader, index: int | None = None):
    where = "" if index is None else f" (record {index})"
    if rec.feature.shape != (header.D,):
        raise FormatError(f"feature length {len(rec.feature)} != header D={header.D}{where}")
    if rec.logits.shape != (header.K,):
        raise FormatError(f"logits length {len(rec.logits)} != header K={header.K}{where}")
    in_id_set = rec.class_id in header.id_class_set
    if rec.is_id != in_id_set:
        raise FormatError(
            f"is_id={rec.is_id} inconsistent with class_id={rec.class_id} "
            f"membership in id_class_set{where}"
        )


# --- ONDF binary -----------------------------------------------------------
#
# Header: magic(4) | version u16 | D u32 | K u32 | record_count u64
#         | n_id_classes u32 | id classes i32 * n   (all little-endian)
# Record: image_id u64 | bbox f32*4 | class_id i32 | is_id u8
#         | feature f32*D | logits f32*K

_HDR_FIX = struct.Struct("<4sHIIQI")
_REC_FIX = struct.Struct("<Q4fiB")


def _encode_header(header: DatasetHeader) -> bytes:
    ids = sorted(header.id_class_set)
    return _HDR_FIX.pack(
        ONDF_MAGIC, header.version, header.D, header.K, header.record_count, len(ids)
    ) + struct.pack(f"<{len(ids)}i", *ids)


def _encode_record(rec: FeatureRecord) -> bytes:
    return (
        _REC_FIX.pack(rec.image_id, *np.asarray(rec.bbox, dtype=np.float32), rec.class_id,
                      int(rec.is_id))
        + np.ascontiguousarray(rec.feature, dtype=np.float32).tobytes()
        + np.ascontiguousarray(rec.logits, dtype=np.float32).tobytes()
    )


def record_payload_size(header: DatasetHeader) -> int:
    return _REC_FIX.size + 4 * header.D + 4 * header.K


def write_dataset(records, header: DatasetHeader, path, format: str = "binary") -> int:
    """Write a dataset; returns the number of bytes written."""
    header = DatasetHeader(header.D, header.K, len(records), sorted(header.id_class_set),
                           header.version)
    header.validate()
    for i, rec in enumerate(records):
        validate_record(rec, header, i)
    if format == "binary":
        blob = _encode_header(header) + b"".join(_encode_record(r) for r in records)
        with open(path, "wb") as f:
            f.write(blob)
        return len(blob)
    elif format == "jsonl":
        lines = [json.dumps({
            "magic": ONDF_MAGIC.decode(), "version": header.version, "D": header.D,
            "K": header.K, "record_count": header.record_count,
            "id_class_set": header.id_class_set,
        })]
        for rec in records:
            lines.append(json.dumps({
                "image_id": rec.image_id,
                "bbox": [float(v) for v in np.asarray(rec.bbox, dtype=np.float32)],
                "class_id": rec.class_id,
                "is_id": rec.is_id,
                "feature": [float(v) for v in np.asarray(rec.feature, dtype=np.float32)],
                "logits": [float(v) for v in np.asarray(rec.logits, dtype=np.float32)],
            }))
        text = "\n".join(lines) + "\n"
        with open(path, "w") as f:
            f.write(text)
        return len(text.encode())
    raise ValueError(f"unknown format {format!r}")


def load_dataset(path, format: str = "binary"):
    """Load a dataset, validating header invariants and per-record lengths."""
    if format == "binary":
        with open(path, "rb") as f:
            blob = f.read()
        if len(blob) < _HDR_FIX.size:
            raise FormatError("file too short for ONDF header")
        magic, version, D, K, count, n_ids = _HDR_FIX.unpack_from(blob, 0)
        if magic != ONDF_MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {ONDF_MAGIC!r}")
        if version != ONDF_VERSION:
            raise FormatError(f"unsupported version {version}")
        off = _HDR_FIX.size
        if len(blob) < off + 4 * n_ids:
            raise FormatError("truncated id_class_set")
        ids = list(struct.unpack_from(f"<{n_ids}i", blob, off))
        off += 4 * n_ids
        header = DatasetHeader(D, K, count, ids, version)
        header.validate()
        rec_size = record_payload_size(header)
        records = []
        for i in range(count):
            if len(blob) < off + rec_size:
                raise FormatError(f"file truncated mid-record at record {i}")
            image_id, bx, by, bw, bh, class_id, is_id = _REC_FIX.unpack_from(blob, off)
            p = off + _REC_FIX.size
            feature = np.frombuffer(blob, dtype="<f4", count=D, offset=p).astype(np.float32)
            logits = np.frombuffer(blob, dtype="<f4", count=K, offset=p + 4 * D).astype(np.float32)
            rec = FeatureRecord(image_id, np.array([bx, by, bw, bh], dtype=np.float32),
                                class_id, bool(is_id), feature, logits)
            validate_record(rec, header, i)
            records.append(rec)
            off += rec_size
        return header, records
    elif format == "jsonl":
        with open(path) as f:
            lines = [ln for ln in f.read().splitlines() if ln.strip()]
        if not lines:
            raise FormatError("empty JSONL dataset")
        head = json.loads(lines[0])
        if head.get("magic") != ONDF_MAGIC.decode():
            raise FormatError(f"bad magic {head.get('magic')!r}")
        header = DatasetHeader(head["D"], head["K"], head["record_count"],
                               list(head["id_class_set"]), head.get("version", ONDF_VERSION))
        header.validate()
        if len(lines) - 1 != header.record_count:
            raise FormatError(
                f"record_count={header.record_count} but file holds {len(lines) - 1} records")
        records = []
        for i, ln in enumerate(lines[1:]):
            obj = json.loads(ln)
            rec = FeatureRecord(
                obj["image_id"], np.asarray(obj["bbox"], dtype=np.float32),
                obj["class_id"], bool(obj["is_id"]),
                np.asarray(obj["feature"], dtype=np.float32),
                np.asarray(obj["logits"], dtype=np.float32),
            )
            validate_record(rec, header, i)
            records.append(rec)
        return header, records
    raise ValueError(f"unknown format {format!r}")


# --- synthetic generator ---------------------------------------------------


@dataclass
class SyntheticConfig:
    D: int = 64
    id_cluster_count: int = 5
    ood_cluster_count: int = 27
    samples_per_cluster: int = 50
    id_samples_per_cluster: int | None = None   # default: same as ood clusters
    cluster_center_scale: float = 4.0
    noise_sigma: float = 1.0
    logit_sharpness: float = 1.0
    logit_noise_sigma: float = 0.5
    seed: int = 0

    def validate(self):
        if min(self.D, self.id_cluster_count, self.ood_cluster_count,
               self.samples_per_cluster) < 1:
            raise ValueError("all counts must be >= 1")
        if self.noise_sigma < 0 or self.logit_noise_sigma < 0:
            raise ValueError("noise sigmas must be >= 0")
        if self.logit_sharpness <= 0:
            raise ValueError("logit_sharpness must be > 0")


def generate_synthetic(cfg: SyntheticConfig):
    """Draw a clustered synthetic dataset, deterministic in cfg.seed.

    id clusters take class ids 0..K_c-1, ood clusters K_c..K_c+J_c-1.  Logits
    mimic a detector trained on the id clusters only:
    logit_k = -sharpness * ||x - center_k|| + noise.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    K_c, J_c = cfg.id_cluster_count, cfg.ood_cluster_count
    n_clusters = K_c + J_c
    centers = rng.uniform(-cfg.cluster_center_scale, cfg.cluster_center_scale,
                          size=(n_clusters, cfg.D))
    records = []
    image_id = 0
    for c in range(n_clusters):
        is_id = c < K_c
        n_samples = (cfg.id_samples_per_cluster if is_id and
                     cfg.id_samples_per_cluster is not None
                     else cfg.samples_per_cluster)
        for _ in range(n_samples):
            x = centers[c] + rng.normal(0.0, cfg.noise_sigma, size=cfg.D)
            dists = np.linalg.norm(x[None, :] - centers[:K_c], axis=1)
            logits = (-cfg.logit_sharpness * dists
                      + rng.normal(0.0, cfg.logit_noise_sigma, size=K_c))
            records.append(FeatureRecord(
                image_id=image_id,
                bbox=np.array([0.0, 0.0, 32.0, 32.0], dtype=np.float32),
                class_id=c,
                is_id=is_id,
                feature=x.astype(np.float32),
                logits=logits.astype(np.float32),
            ))
            image_id += 1
    header = DatasetHeader(cfg.D, K_c, len(records), list(range(K_c)))
    return header, records
