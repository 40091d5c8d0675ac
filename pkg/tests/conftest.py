"""Shared fixtures and small builders used across the test modules."""

import numpy as np
import pytest

from ondkit import featurestore, ndnet


def make_records(rng, n, D=6, K=3, id_classes=(0, 1)):
    """Random but internally consistent FeatureRecords."""
    records = []
    for i in range(n):
        class_id = int(rng.integers(0, K + 2))
        records.append(featurestore.FeatureRecord(
            image_id=i,
            bbox=rng.normal(size=4).astype(np.float32),
            class_id=class_id,
            is_id=class_id in id_classes,
            feature=rng.normal(size=D).astype(np.float32),
            logits=rng.normal(size=K).astype(np.float32),
        ))
    return records


def make_header(records, D=6, K=3, id_classes=(0, 1)):
    return featurestore.DatasetHeader(D, K, len(records), sorted(id_classes))


def random_model(rng, D=16, widths=(8, 8, 8, 4)):
    """Small random net with nonzero biases so relu units stay alive."""
    model = ndnet.init_model(D, widths=list(widths), seed=int(rng.integers(1 << 30)))
    for b in model.biases:
        b += rng.uniform(0.05, 0.3, size=b.shape)
    return model


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
