from dataclasses import dataclass, field

import numpy as np

NORMALIZATION_TOLERANCE = 1e-8


class FusionError(Exception):
    """Base class for evidence and opinion failures."""

    pass


class InvalidOpinion(FusionError):
    pass


@dataclass(frozen=True)
class EvidenceVector:
    """Nonnegative per-class evidence e^m produced by one template."""

    evidence: np.ndarray
    template_index: int = 0

    def __post_init__(self):
        values = np.asarray(self.evidence, dtype=np.float64)
        if values.ndim != 1 or values.size == 0:
            raise InvalidOpinion(f"Evidence must be a non-empty vector, got shape {values.shape}")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise InvalidOpinion(f"Evidence must be finite and nonnegative: {values}")
        object.__setattr__(self, "evidence", values)

    @property
    def num_classes(self) -> int:
        return int(self.evidence.size)

    @property
    def alpha(self) -> np.ndarray:
        """Dirichlet parameters α_c = e_c + 1."""
        return self.evidence + 1.0


@dataclass(frozen=True)
class DirichletOpinion:
    """
    Belief masses plus uncertainty derived from a Dirichlet.
    `literal` marks opinions built with the printed strength Σe + 1, which do
    not sum to one and are exempt from the normalization check.
    """

    beliefs: np.ndarray
    uncertainty: float
    strength: float
    literal: bool = False

    def __post_init__(self):
        beliefs = np.asarray(self.beliefs, dtype=np.float64)
        if beliefs.ndim != 1 or beliefs.size == 0:
            raise InvalidOpinion(f"Beliefs must be a non-empty vector, got shape {beliefs.shape}")
        if np.any(beliefs < -1e-12) or self.uncertainty < -1e-12:
            raise InvalidOpinion("Belief masses and uncertainty must be nonnegative")
        if not self.literal:
            total = float(np.sum(beliefs)) + float(self.uncertainty)
            if abs(total - 1.0) > NORMALIZATION_TOLERANCE:
                raise InvalidOpinion(f"Beliefs plus uncertainty sum to {total!r}, expected 1")
        object.__setattr__(self, "beliefs", beliefs)
        object.__setattr__(self, "uncertainty", float(self.uncertainty))

    @classmethod
    def vacuous(cls, num_classes: int) -> "DirichletOpinion":
        return cls(np.zeros(num_classes), 1.0, float(num_classes))

    @property
    def num_classes(self) -> int:
        return int(self.beliefs.size)

    @property
    def mass(self) -> float:
        return float(np.sum(self.beliefs)) + self.uncertainty


@dataclass(frozen=True)
class FusedPrediction:
    """Fused beliefs B^M, uncertainty U^M and the front-door class probabilities."""

    beliefs: np.ndarray
    uncertainty: float
    probabilities: np.ndarray
    fused_count: int
    vacuous: bool = False
    literal: bool = field(default=False, compare=False)

    @property
    def predicted_class(self) -> int:
        return int(np.argmax(self.probabilities))

    def to_dict(self) -> dict:
        return {
            "beliefs": [float(b) for b in self.beliefs],
            "uncertainty": float(self.uncertainty),
            "probabilities": [float(p) for p in self.probabilities],
            "fused_count": self.fused_count,
            "vacuous": self.vacuous,
        }
