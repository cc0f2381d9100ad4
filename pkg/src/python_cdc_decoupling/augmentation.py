"""
Embedding-space augmentation channels, one pipeline per template.

Channel specs are written `kind[:param[:param]]`, stages of one template are
joined with `+` and templates are separated with `;`, e.g.
`gaussian-jitter:0.05;coordinate-mask:0.1+scale-jitter:0.2`.
"""

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from python_cdc_decoupling.classes.config import ConfigError
from python_cdc_decoupling.classes.enums import ChannelKind
from python_cdc_decoupling.numerics import NORM_EPSILON, ArrayLike, Rng

# Expected parameter count per kind.
_ARITY = {
    ChannelKind.IDENTITY: 0,
    ChannelKind.GAUSSIAN_JITTER: 1,
    ChannelKind.COORDINATE_MASK: 1,
    ChannelKind.SUBSPACE_ROTATION: 2,
    ChannelKind.SCALE_JITTER: 1,
}

STANDARD_STAGES = (
    "gaussian-jitter:0.05",
    "coordinate-mask:0.1",
    "subspace-rotation:0.3:4",
    "scale-jitter:0.2",
)
SHARED_MASK_STAGE = "coordinate-mask:0.1"


@dataclass(frozen=True)
class AugmentationChannel:
    """
    One augmentation stage.
    gaussian-jitter(σ), coordinate-mask(drop rate), subspace-rotation(max
    angle in radians, number of coordinate planes), scale-jitter(relative
    range r, factors drawn from [1 - r, 1 + r]).
    """

    kind: ChannelKind
    params: tuple[float, ...] = ()

    def __post_init__(self):
        if len(self.params) != _ARITY[self.kind]:
            raise ConfigError(f"{self.kind.value} takes {_ARITY[self.kind]} parameter(s), got {len(self.params)}")
        if any(p < 0 for p in self.params):
            raise ConfigError(f"{self.kind.value} parameters must be nonnegative: {self.params}")
        if self.kind in (ChannelKind.COORDINATE_MASK, ChannelKind.SCALE_JITTER) and self.params[0] >= 1:
            raise ConfigError(f"{self.kind.value} parameter must be below 1, got {self.params[0]}")
        if self.kind == ChannelKind.SUBSPACE_ROTATION and (self.params[1] < 1 or self.params[1] != int(self.params[1])):
            raise ConfigError(f"subspace-rotation needs a positive integer plane count, got {self.params[1]}")

    @classmethod
    def parse(cls, text: str) -> "AugmentationChannel":
        name, *raw = text.strip().split(":")
        try:
            kind = ChannelKind(name)
        except ValueError:
            raise ConfigError(f"Unknown augmentation channel '{name}'")
        try:
            params = tuple(float(value) for value in raw)
        except ValueError:
            raise ConfigError(f"Channel parameters must be numbers: '{text}'")
        return cls(kind, params)

    def describe(self) -> str:
        return ":".join([self.kind.value] + [f"{p:g}" for p in self.params])


IDENTITY = AugmentationChannel(ChannelKind.IDENTITY)
Pipeline = Sequence[AugmentationChannel]


def _parse_pipeline(text: str) -> tuple[AugmentationChannel, ...]:
    return tuple(AugmentationChannel.parse(stage) for stage in text.split("+") if stage.strip())


def resolve_channels(spec: str, m: int) -> list[tuple[AugmentationChannel, ...]]:
    """
    Expands a preset name (`standard`, `shared-mask`, `identity`) or an
    explicit spec into exactly `m` pipelines, cycling when fewer are given.
    """
    spec = spec.strip()
    if spec == "identity":
        pipelines = [(IDENTITY,)]
    elif spec == "standard":
        pipelines = [_parse_pipeline(stage) for stage in STANDARD_STAGES]
    elif spec == "shared-mask":
        pipelines = [_parse_pipeline(f"{SHARED_MASK_STAGE}+{stage}") for stage in STANDARD_STAGES]
    else:
        pipelines = [_parse_pipeline(part) for part in spec.split(";") if part.strip()]
    if not pipelines or any(not p for p in pipelines):
        raise ConfigError(f"Empty augmentation spec '{spec}'")
    return [pipelines[i % len(pipelines)] for i in range(m)]


def describe_pipeline(pipeline: Pipeline) -> str:
    return "+".join(stage.describe() for stage in pipeline)


def _renormalized(candidate: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(candidate))
    if norm <= NORM_EPSILON:
        return fallback
    return candidate / norm


def _apply_stage(x: np.ndarray, channel: AugmentationChannel, rng: Rng) -> np.ndarray:
    kind, params = channel.kind, channel.params
    if kind == ChannelKind.IDENTITY or (params and params[0] == 0):
        return x
    dim = x.size
    if kind == ChannelKind.GAUSSIAN_JITTER:
        return _renormalized(x + params[0] * rng.normal_array(dim), x)
    if kind == ChannelKind.COORDINATE_MASK:
        keep = rng.uniform_array(dim) >= params[0]
        return _renormalized(x * keep, x)
    if kind == ChannelKind.SCALE_JITTER:
        factors = 1.0 + params[0] * (2.0 * rng.uniform_array(dim) - 1.0)
        return _renormalized(x * factors, x)

    # subspace rotation: random coordinate planes, angle uniform in [-a, a]
    rotated = x.copy()
    if dim < 2:
        return rotated
    for _ in range(int(params[1])):
        i = rng.integer(dim)
        j = (i + 1 + rng.integer(dim - 1)) % dim
        angle = params[0] * (2.0 * rng.uniform() - 1.0)
        cos, sin = math.cos(angle), math.sin(angle)
        rotated[i], rotated[j] = cos * rotated[i] - sin * rotated[j], sin * rotated[i] + cos * rotated[j]
    return _renormalized(rotated, x)


def apply_augmentation(x: ArrayLike, ch: Union[AugmentationChannel, Pipeline], rng: Rng) -> np.ndarray:
    """Runs one channel or a pipeline of channels; identity returns `x` unchanged."""
    result = np.asarray(x, dtype=np.float64)
    stages = [ch] if isinstance(ch, AugmentationChannel) else list(ch)
    for stage in stages:
        result = _apply_stage(result, stage, rng)
    return result
