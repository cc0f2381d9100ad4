from dataclasses import dataclass

import numpy as np

from python_cdc_decoupling.classes.config import ConfigError
from python_cdc_decoupling.numerics import NORM_EPSILON, Rng, ZeroVector, orthonormal_rows
from python_cdc_decoupling.tools.logger import logger

CHECKPOINT_MAGIC = b"CDC1"
REJITTER_SCALE = 1e-6


class TemplateError(Exception):
    pass


class MalformedCheckpoint(TemplateError):
    pass


class IncompatibleCheckpoint(TemplateError):
    pass


@dataclass
class TemplateBank:
    """
    M learnable parameter vectors θ^m over frozen class anchors.
    Template m embeds class c as normalize(anchor_c + projection·θ^m): the
    offset is shared by all classes of a template, like shared prompt tokens.
    """

    theta: np.ndarray
    anchors: np.ndarray
    projection: np.ndarray
    seed: int = 0

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        self.anchors = np.asarray(self.anchors, dtype=np.float64)
        self.projection = np.asarray(self.projection, dtype=np.float64)
        if self.theta.ndim != 2 or self.anchors.ndim != 2 or self.projection.ndim != 2:
            raise TemplateError("theta, anchors and projection must be matrices")
        if self.projection.shape != (self.dim, self.template_dim):
            raise TemplateError(
                f"Projection has shape {self.projection.shape}, expected {(self.dim, self.template_dim)}"
            )

    @property
    def m(self) -> int:
        return self.theta.shape[0]

    @property
    def template_dim(self) -> int:
        return self.theta.shape[1]

    @property
    def num_classes(self) -> int:
        return self.anchors.shape[0]

    @property
    def dim(self) -> int:
        return self.anchors.shape[1]

    @classmethod
    def initialize(
            cls,
            anchors: np.ndarray,
            m: int,
            template_dim: int,
            seed: int = 0,
            init_scale: float = 0.02,
            projection_scale: float = 0.3,
    ) -> "TemplateBank":
        """
        Random θ near zero and a fixed projection, both seeded. The projection
        columns are orthonormal directions of R^d scaled by `projection_scale`,
        so |P·θ| = projection_scale·|θ| and p may not exceed d.
        """
        anchors = np.asarray(anchors, dtype=np.float64)
        norms = np.linalg.norm(anchors, axis=1, keepdims=True)
        if np.any(norms <= NORM_EPSILON):
            raise ZeroVector("Anchor embeddings must be nonzero")
        dim = anchors.shape[1]
        if template_dim > dim:
            raise ConfigError(f"template_dim={template_dim} exceeds the embedding dimension {dim}")
        projection = projection_scale * orthonormal_rows(template_dim, dim, Rng.derive(seed, "projection")).T
        theta = Rng.derive(seed, "theta").normal_array(m, template_dim) * init_scale
        return cls(theta=theta, anchors=anchors / norms, projection=projection, seed=seed)

    def copy(self) -> "TemplateBank":
        return TemplateBank(self.theta.copy(), self.anchors.copy(), self.projection.copy(), self.seed)

    def offsets(self) -> np.ndarray:
        return self.theta @ self.projection.T


def _rows_and_norms(bank: TemplateBank) -> tuple[np.ndarray, np.ndarray]:
    raw = bank.anchors[None, :, :] + bank.offsets()[:, None, :]
    return raw, np.linalg.norm(raw, axis=-1)


def materialize_with_norms(bank: TemplateBank, in_place: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """
    Unit rows W^m (M, C, d) and the pre-normalization norms (M, C).
    A template with a zero class embedding is re-jittered; only `in_place`
    (the training step) writes the jittered θ back into `bank`.
    """
    raw, norms = _rows_and_norms(bank)
    degenerate = sorted({int(m) for m in np.argwhere(norms <= NORM_EPSILON)[:, 0]})
    if degenerate:
        target = bank if in_place else bank.copy()
        for m in degenerate:
            jitter = Rng.derive(bank.seed, "rejitter", m).normal_array(bank.template_dim)
            target.theta[m] += REJITTER_SCALE * jitter
            logger.warning("Template %d produced a zero class embedding, re-jittering theta", m)
        raw, norms = _rows_and_norms(target)
        if np.any(norms <= NORM_EPSILON):
            raise ZeroVector("Template embedding stays degenerate after re-jitter")
    return raw / norms[..., None], norms


def materialize(bank: TemplateBank) -> np.ndarray:
    return materialize_with_norms(bank)[0]


def backprop_rows(bank: TemplateBank, rows: np.ndarray, norms: np.ndarray, grad_rows: np.ndarray) -> np.ndarray:
    """
    Chains dL/dw (M, C', d) through w = z / |z|, z = anchor + P·θ down to
    dL/dθ (M, p). Any subset of class rows may be passed.
    """
    radial = np.sum(grad_rows * rows, axis=-1, keepdims=True)
    grad_raw = (grad_rows - radial * rows) / norms[..., None]
    grad_offsets = np.sum(grad_raw, axis=1)
    return grad_offsets @ bank.projection


def check_compatible(bank: TemplateBank, dim: int, num_classes: int):
    if bank.dim != dim or bank.num_classes != num_classes:
        raise IncompatibleCheckpoint(
            f"Checkpoint has d={bank.dim}, C={bank.num_classes} but dataset has d={dim}, C={num_classes}"
        )


def save_checkpoint(bank: TemplateBank, path: str):
    """
    Writes b"CDC1" followed by little-endian float64 values:
    M, C, d, p, projection (row-major), anchors, theta.
    """
    header = np.array([bank.m, bank.num_classes, bank.dim, bank.template_dim], dtype=np.float64)
    payload = np.concatenate([header, bank.projection.ravel(), bank.anchors.ravel(), bank.theta.ravel()])
    with open(path, "wb") as handle:
        handle.write(CHECKPOINT_MAGIC)
        handle.write(payload.astype("<f8").tobytes())
    logger.info("Checkpoint written to %s (M=%d, C=%d, d=%d, p=%d)", path, *header.astype(int))


def load_checkpoint(path: str, seed: int = 0) -> TemplateBank:
    """The file carries no seed; `seed` keys the re-jitter stream of the loaded bank."""
    with open(path, "rb") as handle:
        blob = handle.read()
    if blob[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise MalformedCheckpoint(f"{path}: missing CDC1 magic bytes")
    body = blob[len(CHECKPOINT_MAGIC):]
    if len(body) % 8 or len(body) < 32:
        raise MalformedCheckpoint(f"{path}: payload of {len(body)} bytes is not a float64 array")
    values = np.frombuffer(body, dtype="<f8").astype(np.float64)
    header = values[:4]
    if np.any(header < 1) or np.any(header != np.floor(header)):
        raise MalformedCheckpoint(f"{path}: invalid header {header.tolist()}")
    m, num_classes, dim, template_dim = (int(v) for v in header)
    expected = 4 + dim * template_dim + num_classes * dim + m * template_dim
    if values.size != expected:
        raise MalformedCheckpoint(f"{path}: expected {expected} values, found {values.size}")
    offset = 4
    projection = values[offset: offset + dim * template_dim].reshape(dim, template_dim)
    offset += dim * template_dim
    anchors = values[offset: offset + num_classes * dim].reshape(num_classes, dim)
    offset += num_classes * dim
    theta = values[offset:].reshape(m, template_dim)
    return TemplateBank(theta=theta.copy(), anchors=anchors.copy(), projection=projection.copy(), seed=seed)
