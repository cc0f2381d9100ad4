import math
from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Mapping, Optional

from python_cdc_decoupling.classes.enums import ClassifierMode


class ConfigError(Exception):
    """Invalid or unknown configuration value."""

    pass


def _unknown_keys(cls, mapping: Mapping[str, Any]) -> list[str]:
    known = {f.name for f in fields(cls)}
    return sorted(key for key in mapping if key not in known)


@dataclass(frozen=True)
class TrainConfig:
    m: int = 4
    epochs: int = 50
    batch_size: int = 4
    learning_rate: float = 0.035
    tau: float = 0.01
    evidence_tau: float = 0.1
    decoupling_tau: float = 0.1
    beta: float = 5.0
    gamma: float = 0.01
    clamp: float = 1e6
    seed: int = 0
    template_dim: int = 64
    init_scale: float = 0.02
    projection_scale: float = 0.3
    channels: str = "standard"
    classifier: str = ClassifierMode.DSTC.value
    image_branch: bool = True
    literal_strength: bool = False
    shots: Optional[int] = None

    def __post_init__(self):
        if self.m < 1:
            raise ConfigError(f"m must be at least 1, got {self.m}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be nonnegative, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be nonnegative, got {self.learning_rate}")
        if not (self.tau > 0 and self.evidence_tau > 0 and self.decoupling_tau > 0):
            raise ConfigError(
                f"tau, evidence_tau and decoupling_tau must be positive, "
                f"got {self.tau}, {self.evidence_tau}, {self.decoupling_tau}"
            )
        if self.beta < 0 or self.gamma < 0:
            raise ConfigError(f"beta and gamma must be nonnegative, got {self.beta}, {self.gamma}")
        if not self.clamp > 0:
            raise ConfigError(f"clamp must be positive, got {self.clamp}")
        if self.template_dim < 1:
            raise ConfigError(f"template_dim must be at least 1, got {self.template_dim}")
        if not self.projection_scale > 0:
            raise ConfigError(f"projection_scale must be positive, got {self.projection_scale}")
        if self.shots is not None and self.shots < 1:
            raise ConfigError(f"shots must be at least 1, got {self.shots}")
        if self.classifier not in {mode.value for mode in ClassifierMode}:
            raise ConfigError(f"Unknown classifier '{self.classifier}'")

    @property
    def classifier_mode(self) -> ClassifierMode:
        return ClassifierMode(self.classifier)

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any]) -> "TrainConfig":
        unknown = _unknown_keys(cls, mapping)
        if unknown:
            raise ConfigError(f"Unknown training keys: {', '.join(unknown)}")
        return cls(**dict(mapping))

    def replace(self, **changes) -> "TrainConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ScmConfig:
    """Knobs of the synthetic structural causal benchmark."""

    d: int = 64
    c_base: int = 5
    c_new: int = 5
    n_relevant: int = 12
    n_irrelevant: int = 8
    factors_per_class: int = 3
    noise_sigma: float = 0.1
    irrelevant_scale: float = 1.2
    confound_strength: float = 0.8
    anchor_noise: float = 0.3
    style_strength: float = 1.2
    anchor_style_mean: float = 0.4
    anchor_style_spread: float = 0.5
    anchor_signature: float = 0.15
    shots: int = 16
    test_shots: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.d < 2:
            raise ConfigError(f"d must be at least 2, got {self.d}")
        if self.c_base < 1 or self.c_new < 0:
            raise ConfigError(f"Need at least one base class, got c_base={self.c_base}, c_new={self.c_new}")
        if self.n_relevant < 1 or self.n_irrelevant < 0:
            raise ConfigError("n_relevant must be positive and n_irrelevant nonnegative")
        if not 1 <= self.factors_per_class <= self.n_relevant:
            raise ConfigError(
                f"factors_per_class must lie in [1, {self.n_relevant}], got {self.factors_per_class}"
            )
        if not 0.0 <= self.confound_strength <= 1.0:
            raise ConfigError(f"confound_strength must lie in [0, 1], got {self.confound_strength}")
        if min(self.noise_sigma, self.irrelevant_scale, self.anchor_noise) < 0:
            raise ConfigError("noise_sigma, irrelevant_scale and anchor_noise must be nonnegative")
        if min(self.style_strength, self.anchor_style_spread, self.anchor_signature) < 0:
            raise ConfigError("style_strength, anchor_style_spread and anchor_signature must be nonnegative")
        if self.shots < 1 or self.test_shots < 0:
            raise ConfigError("shots must be positive and test_shots nonnegative")
        if math.comb(self.n_relevant, self.factors_per_class) < self.num_classes:
            raise ConfigError(
                f"{self.n_relevant} relevant factors taken {self.factors_per_class} at a time "
                f"cannot give {self.num_classes} distinct classes"
            )

    @property
    def num_classes(self) -> int:
        return self.c_base + self.c_new

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any]) -> "ScmConfig":
        unknown = _unknown_keys(cls, mapping)
        if unknown:
            raise ConfigError(f"Unknown generator keys: {', '.join(unknown)}")
        return cls(**dict(mapping))

    def replace(self, **changes) -> "ScmConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)


# Base-to-new uses the dataclass defaults; the OOD setting raises the
# template count and lowers the decoupling weight.
PRESETS: dict[str, dict[str, Any]] = {
    "base-to-new": {},
    "ood": {"beta": 3.0, "gamma": 0.01, "m": 8},
}

# Sweep rows of the ablation axis. "dstc+text" and "full" keep the run's
# beta and gamma, the other rows switch the decoupling losses off.
ABLATIONS: dict[str, dict[str, Any]] = {
    "single": {"m": 1, "classifier": "average", "channels": "identity", "beta": 0.0, "gamma": 0.0},
    "none": {"classifier": "average", "image_branch": False, "beta": 0.0, "gamma": 0.0},
    "dstc": {"classifier": "dstc", "image_branch": False, "beta": 0.0, "gamma": 0.0},
    "dstc+image": {"classifier": "dstc", "image_branch": True, "beta": 0.0, "gamma": 0.0},
    "dstc+text": {"classifier": "dstc", "image_branch": False},
    "full": {"classifier": "dstc", "image_branch": True},
}
