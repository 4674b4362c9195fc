"""Shared builders for test data."""

import numpy as np

from featedit.store import Dataset, FeatureMap, LabeledSample


def random_feature_map(rng, channels=4, spatial=6):
    return FeatureMap(rng.normal(size=(channels, spatial, spatial)))


def random_box(rng, f32=True):
    x1 = rng.uniform(0.0, 50.0)
    y1 = rng.uniform(0.0, 50.0)
    w = rng.uniform(1.0, 40.0)
    h = rng.uniform(1.0, 40.0)
    box = (x1, y1, x1 + w, y1 + h)
    if f32:
        box = tuple(float(np.float32(v)) for v in box)
    return box


def random_dataset(rng, n=10, num_classes=3, channels=4, spatial=6, balanced=True):
    """Random dataset; balanced=True guarantees every class has a sample."""
    samples = []
    for i in range(n):
        class_id = i % num_classes if balanced else int(rng.integers(num_classes))
        samples.append(
            LabeledSample(
                feature=random_feature_map(rng, channels, spatial),
                class_id=class_id,
                box=random_box(rng),
                image_id=int(rng.integers(100)),
                difficult=bool(rng.random() < 0.1),
            )
        )
    return Dataset(samples=samples, num_classes=num_classes)
