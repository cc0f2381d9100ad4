from enum import Enum
from typing import Optional


class SplitTag(str, Enum):
    """Partition of a sample under the base-to-new protocol."""

    BASE_TRAIN = "base-train"
    BASE_TEST = "base-test"
    NEW_TEST = "new-test"

    @classmethod
    def from_value(cls, value: str) -> Optional["SplitTag"]:
        """Looks a tag up by its file value, None when unknown."""
        for member in cls:
            if member.value == value:
                return member
        return None

    @property
    def is_base(self) -> bool:
        return self in (SplitTag.BASE_TRAIN, SplitTag.BASE_TEST)

    @property
    def is_test(self) -> bool:
        return self in (SplitTag.BASE_TEST, SplitTag.NEW_TEST)


class ChannelKind(str, Enum):
    IDENTITY = "identity"
    GAUSSIAN_JITTER = "gaussian-jitter"
    COORDINATE_MASK = "coordinate-mask"
    SUBSPACE_ROTATION = "subspace-rotation"
    SCALE_JITTER = "scale-jitter"


class ClassifierMode(str, Enum):
    # trusted cross-entropy training, Dempster fusion at test time
    DSTC = "dstc"
    # conventional cross-entropy, mean of per-template softmax
    AVERAGE = "average"
