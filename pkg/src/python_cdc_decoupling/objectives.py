"""
Training objectives and their hand-derived gradients.

All gradients are first taken with respect to the materialized class rows
W^m and then chained down to θ^m by `templates.backprop_rows`.
"""

from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from python_cdc_decoupling.classes.config import TrainConfig
from python_cdc_decoupling.classes.enums import ClassifierMode
from python_cdc_decoupling.classes.opinion import EvidenceVector
from python_cdc_decoupling.classes.report import LossBreakdown
from python_cdc_decoupling.fusion import evidence_map
from python_cdc_decoupling.numerics import ArrayLike, digamma, log_softmax, softmax, trigamma
from python_cdc_decoupling.templates import TemplateBank, backprop_rows, materialize_with_norms

FINITE_DIFFERENCE_STEP = 1e-5


class ObjectiveError(Exception):
    pass


class TooFewTemplates(ObjectiveError):
    pass


class NonFiniteLoss(ObjectiveError):
    pass


@dataclass(frozen=True)
class Batch:
    """
    One minibatch as seen by the templates.
    `views[m, b]` is sample b after template m's augmentation (unit norm),
    `labels[b]` its position in the active class list.
    """

    views: np.ndarray
    labels: np.ndarray

    @property
    def size(self) -> int:
        return int(self.labels.size)


@dataclass(frozen=True)
class GradientBundle:
    theta: np.ndarray

    @property
    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.theta)))


def cross_template_classify(w_query: ArrayLike, W_bank: ArrayLike, tau: float) -> np.ndarray:
    """P(c̄ | w, W): softmax over the similarities of a unit query to unit bank rows."""
    return softmax(np.asarray(W_bank, dtype=np.float64) @ np.asarray(w_query, dtype=np.float64), tau)


def decoupling_loss_and_grad(banks: np.ndarray, tau: float) -> tuple[float, np.ndarray]:
    """
    Mean over ordered template pairs (m, m'), m != m', and classes c of
    Σ_c̄ P log P, where P classifies w_c^m with the rows of W^m'.
    """
    banks = np.asarray(banks, dtype=np.float64)
    m, num_classes, _ = banks.shape
    if m < 2:
        raise TooFewTemplates(f"Decoupling needs at least two templates, got {m}")

    sims = np.einsum("mcd,nkd->mnck", banks, banks)
    log_p = log_softmax(sims, tau)
    p = np.exp(log_p)
    neg_entropy = np.sum(p * log_p, axis=-1)
    pairs = 1.0 - np.eye(m)
    scale = 1.0 / (m * (m - 1) * num_classes)
    value = float(np.sum(neg_entropy * pairs[:, :, None]) * scale)

    grad_sims = p * (log_p - neg_entropy[..., None]) / tau
    grad_sims *= pairs[:, :, None, None] * scale
    grad = np.einsum("mnck,nkd->mcd", grad_sims, banks) + np.einsum("mnck,mcd->nkd", grad_sims, banks)
    return value, grad


def decoupling_loss(banks: np.ndarray, tau: float) -> float:
    return decoupling_loss_and_grad(banks, tau)[0]


def consistency_loss_and_grad(banks: np.ndarray, anchors: np.ndarray, tau: float) -> tuple[float, np.ndarray]:
    """-(1/C) Σ_m Σ_c log P(c | w_c^m, W^0); anchors receive no gradient."""
    banks = np.asarray(banks, dtype=np.float64)
    anchors = np.asarray(anchors, dtype=np.float64)
    num_classes = banks.shape[1]
    log_p = log_softmax(np.einsum("mcd,kd->mck", banks, anchors), tau)
    diagonal = np.arange(num_classes)
    value = -float(np.sum(log_p[:, diagonal, diagonal])) / num_classes
    grad_sims = (np.exp(log_p) - np.eye(num_classes)[None]) / (tau * num_classes)
    return value, np.einsum("mck,kd->mcd", grad_sims, anchors)


def consistency_loss(banks: np.ndarray, anchors: np.ndarray, tau: float) -> float:
    return consistency_loss_and_grad(banks, anchors, tau)[0]


def trusted_ce(evidences: Union[Sequence[EvidenceVector], np.ndarray], y: int) -> float:
    """Σ_m ψ(A^m) - ψ(α_y^m) with α = e + 1 and A^m = Σ_c α_c^m; `y` is 0-based."""
    if isinstance(evidences, np.ndarray):
        alpha = np.atleast_2d(evidences) + 1.0
    else:
        alpha = np.stack([e.alpha for e in evidences])
    return float(np.sum(digamma(np.sum(alpha, axis=1)) - digamma(alpha[:, y])))


def trusted_ce_batch_and_grad(
        sims: np.ndarray, labels: np.ndarray, evidence_tau: float, clamp: float
) -> tuple[float, np.ndarray]:
    """Batch mean of the trusted cross-entropy for sims (M, B, C) and its gradient."""
    evidence, active = evidence_map(sims, evidence_tau, clamp)
    alpha = evidence + 1.0
    strength = np.sum(alpha, axis=-1)
    batch = np.arange(labels.size)
    alpha_true = alpha[:, batch, labels]
    value = float(np.sum(digamma(strength) - digamma(alpha_true))) / labels.size

    grad_evidence = np.repeat(trigamma(strength)[..., None], alpha.shape[-1], axis=-1)
    grad_evidence[:, batch, labels] -= trigamma(alpha_true)
    grad_evidence /= labels.size
    return value, grad_evidence * np.where(active, evidence / evidence_tau, 0.0)


def cross_entropy(similarities: ArrayLike, y: int, tau: float) -> float:
    """Conventional cross-entropy of softmax(sim / τ), summed over templates."""
    log_p = log_softmax(np.atleast_2d(np.asarray(similarities, dtype=np.float64)), tau)
    return -float(np.sum(log_p[:, y]))


def cross_entropy_batch_and_grad(sims: np.ndarray, labels: np.ndarray, tau: float) -> tuple[float, np.ndarray]:
    log_p = log_softmax(sims, tau)
    batch = np.arange(labels.size)
    value = -float(np.sum(log_p[:, batch, labels])) / labels.size
    grad = np.exp(log_p)
    grad[:, batch, labels] -= 1.0
    return value, grad / (tau * labels.size)


def total_loss(trusted_ce: float, decoupling: float, consistency: float, beta: float, gamma: float) -> LossBreakdown:
    if beta < 0 or gamma < 0:
        raise ObjectiveError(f"Loss weights must be nonnegative, got beta={beta}, gamma={gamma}")
    return LossBreakdown(
        trusted_ce=trusted_ce,
        decoupling=decoupling,
        consistency=consistency,
        total=trusted_ce + beta * decoupling + gamma * consistency,
        beta=beta,
        gamma=gamma,
    )


def gradients(
        bank: TemplateBank, batch: Batch, config: TrainConfig, class_indices: Sequence[int]
) -> tuple[LossBreakdown, GradientBundle]:
    """
    L_CDC on one minibatch and its analytic gradient with respect to every θ^m.
    The classification term is the trusted cross-entropy in dstc mode and
    the conventional cross-entropy in average mode. The decoupling term runs
    at `decoupling_tau` and is reported as 0 with fewer than two templates;
    the consistency term runs at `tau`.
    """
    all_rows, all_norms = materialize_with_norms(bank, in_place=True)
    rows = all_rows[:, class_indices]
    norms = all_norms[:, class_indices]
    anchors = bank.anchors[class_indices]

    sims = np.einsum("mbd,mcd->mbc", batch.views, rows)
    if not np.all(np.isfinite(sims)):
        raise NonFiniteLoss("Similarities are not finite")
    if config.classifier_mode == ClassifierMode.DSTC:
        classification, grad_sims = trusted_ce_batch_and_grad(sims, batch.labels, config.evidence_tau, config.clamp)
    else:
        classification, grad_sims = cross_entropy_batch_and_grad(sims, batch.labels, config.tau)
    grad_rows = np.einsum("mbc,mbd->mcd", grad_sims, batch.views)

    decoupling = 0.0
    if bank.m >= 2:
        decoupling, grad_de = decoupling_loss_and_grad(rows, config.decoupling_tau)
        grad_rows += config.beta * grad_de
    consistency, grad_con = consistency_loss_and_grad(rows, anchors, config.tau)
    grad_rows += config.gamma * grad_con

    breakdown = total_loss(classification, decoupling, consistency, config.beta, config.gamma)
    if not np.isfinite(breakdown.total):
        raise NonFiniteLoss(f"Loss is not finite: {breakdown}")
    bundle = GradientBundle(backprop_rows(bank, rows, norms, grad_rows))
    if not bundle.is_finite:
        raise NonFiniteLoss("Gradient has non-finite coordinates")
    return breakdown, bundle


def numerical_gradient(fn: Callable[[np.ndarray], float], theta: np.ndarray, step: float = FINITE_DIFFERENCE_STEP) -> np.ndarray:
    """Central finite differences of `fn` at `theta`, one coordinate at a time."""
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.zeros_like(theta)
    for index in np.ndindex(theta.shape):
        shifted = theta.copy()
        shifted[index] = theta[index] + step
        upper = fn(shifted)
        shifted[index] = theta[index] - step
        lower = fn(shifted)
        grad[index] = (upper - lower) / (2.0 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-4) -> np.ndarray:
    """|a - n| / max(|a|, |n|, floor), coordinatewise."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale
