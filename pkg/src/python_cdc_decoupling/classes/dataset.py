from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from python_cdc_decoupling.classes.enums import SplitTag

UNIT_NORM_TOLERANCE = 1e-6


class DatasetInvariantError(ValueError):
    """Shapes disagree, a feature row is off the unit sphere, or base and new partitions share a class."""

    pass


@dataclass
class EmbeddingDataset:
    """
    Labeled feature vectors with their base-to-new split tags.
    Every feature row has unit L2 norm (within UNIT_NORM_TOLERANCE).
    `anchors` holds one frozen hand-crafted embedding per class, if known.
    """

    dim: int
    num_classes: int
    class_names: list[str]
    features: np.ndarray
    labels: np.ndarray
    tags: list[SplitTag]
    anchors: Optional[np.ndarray] = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64).reshape(-1, self.dim)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        self.tags = list(self.tags)
        if len(self.class_names) != self.num_classes:
            raise DatasetInvariantError(
                f"{len(self.class_names)} class names for {self.num_classes} classes"
            )
        if not (len(self.features) == len(self.labels) == len(self.tags)):
            raise DatasetInvariantError("features, labels and tags differ in length")
        off_unit = np.flatnonzero(np.abs(np.linalg.norm(self.features, axis=1) - 1.0) > UNIT_NORM_TOLERANCE)
        if off_unit.size:
            raise DatasetInvariantError(f"Feature rows {off_unit[:5].tolist()} are not unit norm")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise DatasetInvariantError(f"Labels must lie in [0, {self.num_classes})")
        if self.anchors is not None:
            self.anchors = np.asarray(self.anchors, dtype=np.float64)
            if self.anchors.shape != (self.num_classes, self.dim):
                raise DatasetInvariantError(
                    f"Anchors have shape {self.anchors.shape}, expected {(self.num_classes, self.dim)}"
                )
        overlap = set(self.base_classes) & set(self.new_classes)
        if overlap:
            raise DatasetInvariantError(f"Classes {sorted(overlap)} appear in both base and new partitions")

    def __len__(self) -> int:
        return len(self.labels)

    def indices(self, *tags: SplitTag) -> list[int]:
        return [i for i, tag in enumerate(self.tags) if tag in tags]

    def partition(self, *tags: SplitTag) -> tuple[np.ndarray, np.ndarray]:
        index = self.indices(*tags)
        return self.features[index], self.labels[index]

    @property
    def base_classes(self) -> list[int]:
        return sorted({int(label) for label, tag in zip(self.labels, self.tags) if tag.is_base})

    @property
    def new_classes(self) -> list[int]:
        return sorted({int(label) for label, tag in zip(self.labels, self.tags) if tag == SplitTag.NEW_TEST})

    def counts(self) -> dict[str, int]:
        return {tag.value: self.tags.count(tag) for tag in SplitTag}

    def select(self, index: Sequence[int], tags: Optional[Sequence[SplitTag]] = None) -> "EmbeddingDataset":
        """Copy restricted to `index`, optionally re-tagged."""
        index = list(index)
        return EmbeddingDataset(
            dim=self.dim,
            num_classes=self.num_classes,
            class_names=list(self.class_names),
            features=self.features[index].copy(),
            labels=self.labels[index].copy(),
            tags=list(tags) if tags is not None else [self.tags[i] for i in index],
            anchors=None if self.anchors is None else self.anchors.copy(),
        )

    def equals(self, other: "EmbeddingDataset") -> bool:
        """Exact equality of every field, sample order included."""
        if not isinstance(other, EmbeddingDataset):
            return False
        same_anchors = (self.anchors is None and other.anchors is None) or (
            self.anchors is not None and other.anchors is not None and np.array_equal(self.anchors, other.anchors)
        )
        return (
            self.dim == other.dim
            and self.num_classes == other.num_classes
            and self.class_names == other.class_names
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and self.tags == other.tags
            and same_anchors
        )
