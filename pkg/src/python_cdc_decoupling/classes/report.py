from dataclasses import asdict, dataclass, field
from typing import Optional


@dataclass(frozen=True)
class LossBreakdown:
    """Components of L = L_tce + β·L_de + γ·L_con, kept with their weights."""

    trusted_ce: float
    decoupling: float
    consistency: float
    total: float
    beta: float
    gamma: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: LossBreakdown
    iterations: int

    def to_dict(self) -> dict:
        return {"epoch": self.epoch, "iterations": self.iterations, **self.loss.to_dict()}


@dataclass
class TrainingHistory:
    epochs: list[EpochRecord] = field(default_factory=list)

    def append(self, record: EpochRecord):
        self.epochs.append(record)

    @property
    def totals(self) -> list[float]:
        return [record.loss.total for record in self.epochs]

    def to_dict(self) -> list[dict]:
        return [record.to_dict() for record in self.epochs]


@dataclass(frozen=True)
class EvalReport:
    """Accuracies are percentages in [0, 100]."""

    base_accuracy: float
    new_accuracy: float
    harmonic_mean: float
    per_template_accuracy: list[float]
    per_template_base: list[float]
    per_template_new: list[float]
    mean_uncertainty: float
    vacuous_count: int
    conflict_count: int = 0
    base_count: int = 0
    new_count: int = 0
    classifier: Optional[str] = None

    def to_dict(self) -> dict:
        return asdict(self)
