"""
Synthetic structural causal benchmark.

Every class is bound to a distinct combination of task-relevant factor
directions. Task-irrelevant factors load on every sample; on base splits
their loadings lean towards a per-class signature (the confounder), on the
new split they are independent of the class.

All images also share a style direction that the hand-crafted anchors carry
only partially, with a weight that varies from class to class, and every
anchor leans slightly on its own class signature. Both are invisible to a
model that only looks at base classes and both bias its new-class scores.
"""

import math
from collections import defaultdict
from typing import Optional, Sequence

import numpy as np

from python_cdc_decoupling.classes.config import ScmConfig
from python_cdc_decoupling.classes.dataset import EmbeddingDataset
from python_cdc_decoupling.classes.enums import SplitTag
from python_cdc_decoupling.numerics import NORM_EPSILON, Rng, l2_normalize, orthonormal_rows
from python_cdc_decoupling.tools.logger import logger


class DatagenError(Exception):
    pass


class DimensionTooSmall(DatagenError):
    pass


class UnknownClass(DatagenError):
    pass


def class_name(index: int) -> str:
    return f"class_{index:02d}"


def orthonormal_factors(count: int, dim: int, rng: Rng) -> np.ndarray:
    if count > dim:
        raise DimensionTooSmall(f"Cannot fit {count} orthonormal factors in dimension {dim}")
    return orthonormal_rows(count, dim, rng)


def _class_factor_sets(cfg: ScmConfig, rng: Rng) -> list[tuple[int, ...]]:
    seen: set[tuple[int, ...]] = set()
    subsets = []
    while len(subsets) < cfg.num_classes:
        subset = tuple(rng.choice(cfg.n_relevant, cfg.factors_per_class))
        if subset not in seen:
            seen.add(subset)
            subsets.append(subset)
    return subsets


def _random_direction(rng: Rng, dim: int) -> np.ndarray:
    vector = rng.normal_array(dim)
    norm = float(np.linalg.norm(vector))
    return vector / norm if norm > NORM_EPSILON else np.zeros(dim)


def _anchor(cfg: ScmConfig, c: int, prototype: np.ndarray, signature: np.ndarray, style: np.ndarray) -> np.ndarray:
    rng = Rng.derive(cfg.seed, "anchor", c)
    vector = prototype + cfg.anchor_noise * _random_direction(rng, cfg.d)
    vector = vector + (cfg.anchor_style_mean + cfg.anchor_style_spread * rng.normal()) * style
    if cfg.n_irrelevant:
        vector = vector + cfg.anchor_signature / math.sqrt(cfg.n_irrelevant) * signature
    return l2_normalize(vector)


def generate_scm_dataset(cfg: ScmConfig) -> EmbeddingDataset:
    needed = cfg.n_relevant + cfg.n_irrelevant + 1
    if cfg.d < needed:
        raise DimensionTooSmall(f"d={cfg.d} is smaller than n_relevant + n_irrelevant + 1 = {needed}")
    factors = orthonormal_factors(needed, cfg.d, Rng.derive(cfg.seed, "factors"))
    relevant = factors[: cfg.n_relevant]
    irrelevant = factors[cfg.n_relevant: cfg.n_relevant + cfg.n_irrelevant]
    style = factors[-1]
    subsets = _class_factor_sets(cfg, Rng.derive(cfg.seed, "classes"))

    prototypes = np.stack([relevant[list(s)].sum(axis=0) / math.sqrt(cfg.factors_per_class) for s in subsets])
    signatures = np.stack([Rng.derive(cfg.seed, "signature", c).normal_array(cfg.n_irrelevant)
                           for c in range(cfg.num_classes)])
    anchors = np.stack([
        _anchor(cfg, c, prototypes[c], signatures[c] @ irrelevant, style) for c in range(cfg.num_classes)
    ])

    plan = []
    for c in range(cfg.c_base):
        plan += [(c, SplitTag.BASE_TRAIN)] * cfg.shots + [(c, SplitTag.BASE_TEST)] * cfg.test_shots
    for c in range(cfg.c_base, cfg.num_classes):
        plan += [(c, SplitTag.NEW_TEST)] * cfg.test_shots

    rho = cfg.confound_strength
    features = np.zeros((len(plan), cfg.d))
    for i, (c, tag) in enumerate(plan):
        rng = Rng.derive(cfg.seed, "sample", i)
        loadings = rng.normal_array(cfg.n_irrelevant)
        if tag.is_base:
            loadings = rho * signatures[c] + math.sqrt(1.0 - rho * rho) * loadings
        x = prototypes[c] + cfg.irrelevant_scale * (loadings @ irrelevant) + cfg.style_strength * style
        features[i] = l2_normalize(x + cfg.noise_sigma * rng.normal_array(cfg.d))

    dataset = EmbeddingDataset(
        dim=cfg.d,
        num_classes=cfg.num_classes,
        class_names=[class_name(c) for c in range(cfg.num_classes)],
        features=features,
        labels=[c for c, _ in plan],
        tags=[tag for _, tag in plan],
        anchors=anchors,
    )
    logger.info("Generated SCM dataset d=%d C=%d with counts %s", cfg.d, cfg.num_classes, dataset.counts())
    return dataset


def split_base_new(
        ds: EmbeddingDataset, base_classes: Sequence[int], shots: Optional[int] = None, seed: int = 0
) -> EmbeddingDataset:
    """
    Re-tags `ds` for the base-to-new protocol. Train samples of base classes
    stay base-train (subsampled to `shots` per class when asked), test samples
    of base classes become base-test, test samples of the other classes become
    new-test and train samples of the other classes are dropped.
    """
    unknown = sorted({int(c) for c in base_classes if not 0 <= int(c) < ds.num_classes})
    if unknown:
        raise UnknownClass(f"Classes {unknown} are outside [0, {ds.num_classes})")
    base = {int(c) for c in base_classes}

    train_by_class = defaultdict(list)
    for i, (label, tag) in enumerate(zip(ds.labels, ds.tags)):
        if int(label) in base and not tag.is_test:
            train_by_class[int(label)].append(i)

    retained = set()
    for c, members in sorted(train_by_class.items()):
        if shots is None or shots >= len(members):
            if shots is not None and shots > len(members):
                logger.warning("Class %d has %d train samples, fewer than %d shots", c, len(members), shots)
            retained.update(members)
        else:
            picked = Rng.derive(seed, "shots", c).choice(len(members), shots)
            retained.update(members[k] for k in picked)

    index, tags = [], []
    for i, (label, tag) in enumerate(zip(ds.labels, ds.tags)):
        if int(label) in base:
            if tag.is_test:
                index.append(i)
                tags.append(SplitTag.BASE_TEST)
            elif i in retained:
                index.append(i)
                tags.append(SplitTag.BASE_TRAIN)
        elif tag.is_test:
            index.append(i)
            tags.append(SplitTag.NEW_TEST)

    result = ds.select(index, tags)
    if not result.indices(SplitTag.NEW_TEST):
        logger.warning("Split leaves the new partition empty")
    return result


def _nearest(features: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    distances = np.sum((features[:, None, :] - centroids[None, :, :]) ** 2, axis=-1)
    return np.argmin(distances, axis=1)


def _accuracy(features: np.ndarray, labels: np.ndarray, classes: list[int], centroids: np.ndarray) -> float:
    if not len(labels):
        return 0.0
    predicted = np.array(classes)[_nearest(features, centroids)]
    return 100.0 * float(np.mean(predicted == labels))


def centroid_transfer_gap(ds: EmbeddingDataset) -> tuple[float, float, float]:
    """
    Nearest-centroid measure of the confounder. Base centroids come from
    base-train; a new class is placed at its anchor plus the mean base
    (centroid - anchor) offset. Returns (base accuracy, new accuracy, gap).
    """
    if ds.anchors is None:
        raise DatagenError("centroid_transfer_gap needs anchor rows")
    train_x, train_y = ds.partition(SplitTag.BASE_TRAIN)
    centroids = {c: train_x[train_y == c].mean(axis=0) for c in sorted(set(int(y) for y in train_y))}
    offset = np.mean([centroids[c] - ds.anchors[c] for c in centroids], axis=0) if centroids else np.zeros(ds.dim)

    def placed(c: int) -> np.ndarray:
        return centroids[c] if c in centroids else ds.anchors[c] + offset

    base_classes, new_classes = ds.base_classes, ds.new_classes
    base_x, base_y = ds.partition(SplitTag.BASE_TEST)
    new_x, new_y = ds.partition(SplitTag.NEW_TEST)
    base_accuracy = _accuracy(base_x, base_y, base_classes, np.stack([placed(c) for c in base_classes])) \
        if base_classes else 0.0
    new_accuracy = _accuracy(new_x, new_y, new_classes, np.stack([ds.anchors[c] + offset for c in new_classes])) \
        if new_classes else 0.0
    return base_accuracy, new_accuracy, base_accuracy - new_accuracy
