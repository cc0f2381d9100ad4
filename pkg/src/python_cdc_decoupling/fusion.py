"""
Dirichlet opinions and their reduced Dempster combination.

Each template turns cosine similarities into evidence, evidence into a
subjective-logic opinion, and the opinions of all templates are folded in
index order. The fused beliefs, renormalised over classes, give the
front-door class probabilities.
"""

from typing import Sequence

import numpy as np

from python_cdc_decoupling.classes.opinion import (DirichletOpinion, EvidenceVector, FusedPrediction,
                                                   FusionError, InvalidOpinion)
from python_cdc_decoupling.numerics import ArrayLike, DimensionMismatch, NonPositiveTemperature

DEFAULT_CLAMP = 1e6
CONFLICT_EPSILON = 1e-12


class TotalConflict(FusionError):
    """Two opinions are certain and contradictory, 1 - K vanishes."""

    def __init__(self, message: str, pair_index: int = 1):
        super().__init__(message)
        self.pair_index = pair_index


def evidence_map(sims: ArrayLike, tau: float, clamp: float = DEFAULT_CLAMP) -> tuple[np.ndarray, np.ndarray]:
    """
    Elementwise h(s) = min(exp(s / tau), clamp).
    Returns the evidence and a mask of the entries below the clamp, where
    the derivative is e / tau (it is zero elsewhere).
    """
    if not tau > 0:
        raise NonPositiveTemperature(f"Evidence temperature must be positive, got {tau}")
    if not clamp > 0:
        raise ValueError(f"Evidence clamp must be positive, got {clamp}")
    with np.errstate(over="ignore"):
        raw = np.exp(np.asarray(sims, dtype=np.float64) / tau)
    active = raw < clamp
    return np.where(active, raw, clamp), active


def evidence_from_similarity(
        sims: ArrayLike, tau: float, clamp: float = DEFAULT_CLAMP, template_index: int = 0
) -> EvidenceVector:
    evidence, _ = evidence_map(sims, tau, clamp)
    return EvidenceVector(evidence, template_index)


def opinion_from_evidence(e: EvidenceVector, literal_strength: bool = False) -> DirichletOpinion:
    """
    b_c = e_c / S and u = C / S with S = Σe + C.
    `literal_strength` uses S = Σe + 1 instead (opinion no longer sums to one).
    """
    num_classes = e.num_classes
    total = float(np.sum(e.evidence))
    strength = total + (1.0 if literal_strength else float(num_classes))
    return DirichletOpinion(
        beliefs=e.evidence / strength,
        uncertainty=num_classes / strength,
        strength=strength,
        literal=literal_strength,
    )


def conflict(o1: DirichletOpinion, o2: DirichletOpinion) -> float:
    """K = Σ_{i≠j} b_i b'_j."""
    return float(np.sum(o1.beliefs) * np.sum(o2.beliefs) - np.dot(o1.beliefs, o2.beliefs))


def fuse_pair(o1: DirichletOpinion, o2: DirichletOpinion) -> DirichletOpinion:
    if o1.num_classes != o2.num_classes:
        raise DimensionMismatch(
            f"Cannot fuse opinions over {o1.num_classes} and {o2.num_classes} classes"
        )
    normalizer = 1.0 - conflict(o1, o2)
    if normalizer < CONFLICT_EPSILON:
        raise TotalConflict(f"Opinions are in total conflict (1 - K = {normalizer:.3e})")

    b1, b2 = o1.beliefs, o2.beliefs
    u1, u2 = o1.uncertainty, o2.uncertainty
    beliefs = (b1 * b2 + b1 * u2 + b2 * u1) / normalizer
    uncertainty = u1 * u2 / normalizer
    strength = o1.num_classes / uncertainty if uncertainty > 0 else float("inf")
    return DirichletOpinion(beliefs, uncertainty, strength, literal=o1.literal or o2.literal)


def frontdoor_probabilities(beliefs: ArrayLike, uncertainty: float) -> tuple[np.ndarray, bool]:
    """
    P(ŷ = c) = B_c / Σ B. A fully vacuous opinion (Σ B = 0) yields the
    uniform distribution and a raised vacuous flag.
    """
    masses = np.asarray(beliefs, dtype=np.float64)
    total = float(np.sum(masses))
    if total <= 0.0 or not np.isfinite(total):
        return np.full(masses.size, 1.0 / masses.size), True
    return masses / total, False


def fuse_sequence(opinions: Sequence[DirichletOpinion]) -> FusedPrediction:
    """Left fold of `fuse_pair` over templates m = 1..M."""
    if not opinions:
        raise InvalidOpinion("fuse_sequence requires at least one opinion")

    fused = opinions[0]
    for index in range(1, len(opinions)):
        try:
            fused = fuse_pair(fused, opinions[index])
        except TotalConflict as e:
            raise TotalConflict(f"Total conflict when fusing template {index}: {e}", pair_index=index)

    probabilities, vacuous = frontdoor_probabilities(fused.beliefs, fused.uncertainty)
    return FusedPrediction(
        beliefs=fused.beliefs,
        uncertainty=fused.uncertainty,
        probabilities=probabilities,
        fused_count=len(opinions),
        vacuous=vacuous,
        literal=fused.literal,
    )
