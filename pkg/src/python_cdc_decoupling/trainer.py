"""
Training and fused inference over a bank of prompt-like templates.

`train` runs minibatch SGD on the base-train partition, one joint step over
every θ^m per minibatch. `predict` folds the per-template Dirichlet opinions
of one sample and `evaluate` scores the base-test and new-test partitions,
each within its own label space.
"""

from typing import Optional, Sequence

import numpy as np

from python_cdc_decoupling.augmentation import IDENTITY, apply_augmentation, resolve_channels
from python_cdc_decoupling.classes.config import TrainConfig
from python_cdc_decoupling.classes.dataset import EmbeddingDataset
from python_cdc_decoupling.classes.enums import ClassifierMode, ChannelKind, SplitTag
from python_cdc_decoupling.classes.opinion import FusedPrediction
from python_cdc_decoupling.classes.report import EpochRecord, EvalReport, LossBreakdown, TrainingHistory
from python_cdc_decoupling.fusion import TotalConflict, evidence_from_similarity, evidence_map, fuse_sequence, \
    opinion_from_evidence
from python_cdc_decoupling.numerics import NORM_EPSILON, ArrayLike, Rng, ZeroVector, l2_normalize, softmax
from python_cdc_decoupling.objectives import Batch, NonFiniteLoss, gradients, total_loss
from python_cdc_decoupling.templates import TemplateBank, check_compatible, materialize
from python_cdc_decoupling.tools.logger import logger


class TrainingError(Exception):
    pass


class EmptyDataset(TrainingError):
    pass


class EmptyPartition(TrainingError):
    pass


class MissingAnchors(TrainingError):
    pass


def harmonic_mean(base: float, new: float) -> float:
    """HM = 2·Base·New / (Base + New); 0 when either accuracy is 0."""
    if base <= 0.0 or new <= 0.0:
        return 0.0
    return 2.0 * base * new / (base + new)


def unit_rows(features: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    norms = np.linalg.norm(features, axis=1, keepdims=True)
    if np.any(norms <= NORM_EPSILON):
        raise ZeroVector("Dataset contains a zero feature vector")
    return features / norms


def initialize_bank(dataset: EmbeddingDataset, config: TrainConfig) -> TemplateBank:
    if dataset.anchors is None:
        raise MissingAnchors("Dataset carries no anchor rows, cannot build templates")
    template_dim = config.template_dim
    if template_dim > dataset.dim:
        logger.warning("template_dim=%d exceeds d=%d, using p=%d", template_dim, dataset.dim, dataset.dim)
        template_dim = dataset.dim
    return TemplateBank.initialize(
        dataset.anchors, config.m, template_dim, config.seed, config.init_scale, config.projection_scale
    )


def training_pipelines(config: TrainConfig) -> list[tuple]:
    if not config.image_branch:
        return [(IDENTITY,)] * config.m
    return resolve_channels(config.channels, config.m)


def _is_identity(pipeline) -> bool:
    return all(stage.kind == ChannelKind.IDENTITY for stage in pipeline)


def augment_batch(
        features: np.ndarray, sample_ids: Sequence[int], pipelines: Sequence, seed: int, epoch: int
) -> np.ndarray:
    """Views (M, B, d); sample `i` under template `m` uses the stream (seed, epoch, i, m)."""
    views = np.empty((len(pipelines), len(sample_ids), features.shape[1]))
    for m, pipeline in enumerate(pipelines):
        for b, sample in enumerate(sample_ids):
            if _is_identity(pipeline):
                views[m, b] = features[sample]
            else:
                rng = Rng.derive(seed, "augment", epoch, sample, m)
                views[m, b] = apply_augmentation(features[sample], pipeline, rng)
    return views


def _mean_breakdown(records: list[LossBreakdown], config: TrainConfig) -> LossBreakdown:
    return total_loss(
        float(np.mean([r.trusted_ce for r in records])),
        float(np.mean([r.decoupling for r in records])),
        float(np.mean([r.consistency for r in records])),
        config.beta,
        config.gamma,
    )


def train(
        dataset: EmbeddingDataset, config: TrainConfig, bank: Optional[TemplateBank] = None
) -> tuple[TemplateBank, TrainingHistory]:
    train_index = dataset.indices(SplitTag.BASE_TRAIN)
    if not train_index:
        raise EmptyDataset("No base-train samples to learn from")
    if bank is None:
        bank = initialize_bank(dataset, config)
    check_compatible(bank, dataset.dim, dataset.num_classes)

    class_indices = dataset.base_classes
    position = {c: i for i, c in enumerate(class_indices)}
    features = unit_rows(dataset.features[train_index])
    labels = np.array([position[int(c)] for c in dataset.labels[train_index]], dtype=np.int64)
    pipelines = training_pipelines(config)

    if config.m < 2 and config.beta > 0:
        logger.warning("Decoupling term is inactive with a single template (beta=%s ignored)", config.beta)

    history = TrainingHistory()
    count = len(train_index)
    for epoch in range(config.epochs):
        order = Rng.derive(config.seed, "epoch", epoch).permutation(count)
        records = []
        for iteration, start in enumerate(range(0, count, config.batch_size)):
            chunk = order[start: start + config.batch_size]
            batch = Batch(augment_batch(features, chunk, pipelines, config.seed, epoch), labels[chunk])
            try:
                breakdown, grads = gradients(bank, batch, config, class_indices)
            except NonFiniteLoss as e:
                raise NonFiniteLoss(f"Epoch {epoch}, iteration {iteration}: {e}") from e
            bank.theta -= config.learning_rate * grads.theta
            records.append(breakdown)

        record = EpochRecord(epoch=epoch, loss=_mean_breakdown(records, config), iterations=len(records))
        history.append(record)
        logger.info(
            "Epoch %d: total=%.6f tce=%.6f de=%.6f con=%.6f",
            epoch, record.loss.total, record.loss.trusted_ce, record.loss.decoupling, record.loss.consistency,
        )
    return bank, history


def _opinions(sims: np.ndarray, config: TrainConfig) -> list:
    return [
        opinion_from_evidence(
            evidence_from_similarity(sims[m], config.evidence_tau, config.clamp, m), config.literal_strength
        )
        for m in range(sims.shape[0])
    ]


def _restricted_rows(bank: TemplateBank, class_indices: Optional[Sequence[int]]) -> np.ndarray:
    rows = materialize(bank)
    return rows if class_indices is None else rows[:, list(class_indices)]


def predict(
        x: ArrayLike, bank: TemplateBank, config: TrainConfig, class_indices: Optional[Sequence[int]] = None
) -> FusedPrediction:
    """Identity channels at test time: each template only differs by its rows W^m."""
    sims = _restricted_rows(bank, class_indices) @ l2_normalize(x)
    return fuse_sequence(_opinions(sims, config))


def predict_averaged(
        x: ArrayLike, bank: TemplateBank, config: TrainConfig, class_indices: Optional[Sequence[int]] = None
) -> np.ndarray:
    """Mean of the per-template softmax(sim / τ), the DSTC-off classifier."""
    sims = _restricted_rows(bank, class_indices) @ l2_normalize(x)
    return np.mean(softmax(sims, config.tau), axis=0)


class _PartitionScore:
    def __init__(self, m: int):
        self.correct = 0
        self.scored = 0
        self.template_correct = np.zeros(m, dtype=np.int64)
        self.samples = 0
        self.uncertainties: list[float] = []
        self.vacuous = 0
        self.conflicts = 0

    @staticmethod
    def percent(hits: int, total: int) -> float:
        return 100.0 * hits / total if total else 0.0

    @property
    def accuracy(self) -> float:
        return self.percent(self.correct, self.scored)

    def template_accuracy(self) -> list[float]:
        return [self.percent(int(hits), self.samples) for hits in self.template_correct]


def _score_partition(
        features: np.ndarray, labels: np.ndarray, rows: np.ndarray, classes: list[int], config: TrainConfig
) -> _PartitionScore:
    position = {c: i for i, c in enumerate(classes)}
    score = _PartitionScore(rows.shape[0])
    for x, label in zip(features, labels):
        target = position[int(label)]
        sims = rows @ x
        evidence, _ = evidence_map(sims, config.evidence_tau, config.clamp)
        score.samples += 1
        score.template_correct += np.argmax(evidence, axis=1) == target
        if config.classifier_mode == ClassifierMode.AVERAGE:
            predicted = int(np.argmax(np.mean(softmax(sims, config.tau), axis=0)))
        else:
            try:
                fused = fuse_sequence(_opinions(sims, config))
            except TotalConflict as e:
                score.conflicts += 1
                logger.warning("Skipping sample with label %d: %s", int(label), e)
                continue
            score.uncertainties.append(fused.uncertainty)
            score.vacuous += int(fused.vacuous)
            predicted = fused.predicted_class
        score.scored += 1
        score.correct += int(predicted == target)
    return score


def evaluate(dataset: EmbeddingDataset, bank: TemplateBank, config: TrainConfig) -> EvalReport:
    check_compatible(bank, dataset.dim, dataset.num_classes)
    partitions = {}
    for tag, classes in ((SplitTag.BASE_TEST, dataset.base_classes), (SplitTag.NEW_TEST, dataset.new_classes)):
        index = dataset.indices(tag)
        if not index:
            raise EmptyPartition(f"Partition {tag.value} has no samples")
        partitions[tag] = (index, classes)

    all_rows = materialize(bank)
    scores = {}
    for tag, (index, classes) in partitions.items():
        scores[tag] = _score_partition(
            unit_rows(dataset.features[index]), dataset.labels[index], all_rows[:, classes], classes, config
        )

    base, new = scores[SplitTag.BASE_TEST], scores[SplitTag.NEW_TEST]
    uncertainties = base.uncertainties + new.uncertainties
    samples = base.samples + new.samples
    report = EvalReport(
        base_accuracy=base.accuracy,
        new_accuracy=new.accuracy,
        harmonic_mean=harmonic_mean(base.accuracy, new.accuracy),
        per_template_accuracy=[
            _PartitionScore.percent(int(hits), samples) for hits in base.template_correct + new.template_correct
        ],
        per_template_base=base.template_accuracy(),
        per_template_new=new.template_accuracy(),
        mean_uncertainty=float(np.mean(uncertainties)) if uncertainties else 0.0,
        vacuous_count=base.vacuous + new.vacuous,
        conflict_count=base.conflicts + new.conflicts,
        base_count=base.samples,
        new_count=new.samples,
        classifier=config.classifier,
    )
    logger.info(
        "Evaluation: base=%.2f new=%.2f HM=%.2f (skipped %d conflicting samples)",
        report.base_accuracy, report.new_accuracy, report.harmonic_mean, report.conflict_count,
    )
    return report


def template_similarity_matrix(bank: TemplateBank) -> np.ndarray:
    """Entry (m, n) is the mean over classes of cos(w_c^m, w_c^n)."""
    rows = materialize(bank)
    return np.einsum("mcd,ncd->mn", rows, rows) / bank.num_classes


def mean_cross_template_similarity(bank: TemplateBank) -> Optional[float]:
    """Mean off-template same-class cosine; None with a single template."""
    if bank.m < 2:
        return None
    matrix = template_similarity_matrix(bank)
    off_diagonal = ~np.eye(bank.m, dtype=bool)
    return float(np.mean(matrix[off_diagonal]))
