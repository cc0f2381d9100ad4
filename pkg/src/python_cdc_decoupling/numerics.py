import hashlib
import math
from typing import Optional, Sequence, Union

import numpy as np

ArrayLike = Union[Sequence[float], np.ndarray]

NORM_EPSILON = 1e-12
SIMPLEX_TOLERANCE = 1e-6
DIGAMMA_SHIFT = 6.0
TRIGAMMA_SHIFT = 10.0
MASK64 = (1 << 64) - 1


class NumericsError(Exception):
    """Base class for numerical precondition failures."""

    pass


class ZeroVector(NumericsError):
    pass


class DimensionMismatch(NumericsError):
    pass


class NonPositiveTemperature(NumericsError):
    pass


class InvalidSimplex(NumericsError):
    pass


class DomainError(NumericsError):
    pass


def l2_normalize(v: ArrayLike) -> np.ndarray:
    """Returns `v` scaled to unit L2 norm."""
    vector = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(vector))
    if norm <= NORM_EPSILON:
        raise ZeroVector(f"Cannot normalize a vector of norm {norm:.3e}")
    return vector / norm


def cosine_sim(u: ArrayLike, v: ArrayLike) -> float:
    left = np.asarray(u, dtype=np.float64)
    right = np.asarray(v, dtype=np.float64)
    if left.shape != right.shape:
        raise DimensionMismatch(f"Vectors have shapes {left.shape} and {right.shape}")
    left_norm = float(np.linalg.norm(left))
    right_norm = float(np.linalg.norm(right))
    if left_norm <= NORM_EPSILON or right_norm <= NORM_EPSILON:
        raise ZeroVector("Cosine similarity is undefined for a zero vector")
    value = float(np.dot(left, right)) / (left_norm * right_norm)
    return min(1.0, max(-1.0, value))


def _check_temperature(tau: float):
    if not tau > 0:
        raise NonPositiveTemperature(f"Temperature must be positive, got {tau}")


def softmax(scores: ArrayLike, tau: float = 1.0) -> np.ndarray:
    """
    Temperature softmax over the last axis.
    Scores are shifted by their maximum before exponentiation.
    """
    _check_temperature(tau)
    logits = np.asarray(scores, dtype=np.float64) / tau
    if logits.shape[-1] == 0:
        raise ValueError("softmax needs at least one score")
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    weights = np.exp(shifted)
    return weights / np.sum(weights, axis=-1, keepdims=True)


def log_softmax(scores: ArrayLike, tau: float = 1.0) -> np.ndarray:
    _check_temperature(tau)
    logits = np.asarray(scores, dtype=np.float64) / tau
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def entropy(p: ArrayLike) -> float:
    """Shannon entropy in nats, with 0·log 0 taken as 0."""
    probs = np.asarray(p, dtype=np.float64)
    total = float(np.sum(probs))
    if abs(total - 1.0) > SIMPLEX_TOLERANCE or np.any(probs < -SIMPLEX_TOLERANCE):
        raise InvalidSimplex(f"Not a probability vector (sum={total!r})")
    positive = probs[probs > 0]
    return float(-np.sum(positive * np.log(positive)))


def _as_positive_array(x) -> np.ndarray:
    values = np.array(x, dtype=np.float64, copy=True)
    if np.any(~(values > 0)):
        raise DomainError(f"Argument must be strictly positive, got {x!r}")
    return values


def _unwrap(values: np.ndarray, original):
    return float(values) if np.ndim(original) == 0 else values


def digamma(x):
    """
    ψ(x) for x > 0, scalar or array.
    Shifts x upward with ψ(x) = ψ(x+1) - 1/x until x >= 6, then applies the
    asymptotic series up to the x^-10 term.
    """
    values = _as_positive_array(x)
    result = np.zeros_like(values)
    mask = values < DIGAMMA_SHIFT
    while np.any(mask):
        result[mask] -= 1.0 / values[mask]
        values[mask] += 1.0
        mask = values < DIGAMMA_SHIFT
    inv = 1.0 / values
    inv2 = inv * inv
    series = inv2 * (
        1.0 / 12.0
        - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0))))
    )
    result += np.log(values) - 0.5 * inv - series
    return _unwrap(result, x)


def trigamma(x):
    """ψ'(x) for x > 0, same shift-then-series scheme as `digamma`."""
    values = _as_positive_array(x)
    result = np.zeros_like(values)
    mask = values < TRIGAMMA_SHIFT
    while np.any(mask):
        result[mask] += 1.0 / (values[mask] * values[mask])
        values[mask] += 1.0
        mask = values < TRIGAMMA_SHIFT
    inv = 1.0 / values
    inv2 = inv * inv
    series = inv * (
        1.0
        + inv * (0.5 + inv * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0 - inv2 * 5.0 / 66.0)))))
    )
    result += series
    return _unwrap(result, x)


def _splitmix64(value: int) -> int:
    value = (value + 0x9E3779B97F4A7C15) & MASK64
    value = ((value ^ (value >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    value = ((value ^ (value >> 27)) * 0x94D049BB133111EB) & MASK64
    return value ^ (value >> 31)


def _key_to_int(key: Union[int, str]) -> int:
    if isinstance(key, str):
        return int.from_bytes(hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest(), "little")
    return int(key) & MASK64


class Rng:
    """
    xorshift64* generator seeded through splitmix64.
    Pure integer arithmetic, so a seed yields the same stream everywhere.
    An instance is owned by a single caller; use `derive` for keyed substreams.
    """

    algorithm = "xorshift64*"

    def __init__(self, seed: int = 0):
        self.seed = int(seed)
        self.__state = _splitmix64(self.seed & MASK64) or 0x9E3779B97F4A7C15
        self.__spare: Optional[float] = None

    @classmethod
    def derive(cls, seed: int, *keys: Union[int, str]) -> "Rng":
        """Child stream fully determined by (seed, keys)."""
        mixed = _splitmix64(int(seed) & MASK64)
        for key in keys:
            mixed = _splitmix64(mixed ^ _key_to_int(key))
        return cls(mixed)

    @property
    def state(self) -> int:
        return self.__state

    def next_u64(self) -> int:
        x = self.__state
        x ^= x >> 12
        x ^= (x << 25) & MASK64
        x ^= x >> 27
        self.__state = x
        return (x * 0x2545F4914F6CDD1D) & MASK64

    def uniform(self) -> float:
        """Uniform float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def normal(self) -> float:
        if self.__spare is not None:
            value, self.__spare = self.__spare, None
            return value
        radius = math.sqrt(-2.0 * math.log(1.0 - self.uniform()))
        angle = 2.0 * math.pi * self.uniform()
        self.__spare = radius * math.sin(angle)
        return radius * math.cos(angle)

    def normal_array(self, *shape: int) -> np.ndarray:
        size = int(np.prod(shape)) if shape else 1
        return np.array([self.normal() for _ in range(size)], dtype=np.float64).reshape(shape)

    def uniform_array(self, *shape: int) -> np.ndarray:
        size = int(np.prod(shape)) if shape else 1
        return np.array([self.uniform() for _ in range(size)], dtype=np.float64).reshape(shape)

    def integer(self, n: int) -> int:
        if n <= 0:
            raise ValueError(f"Upper bound must be positive, got {n}")
        return self.next_u64() % n

    def permutation(self, n: int) -> list[int]:
        items = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.integer(i + 1)
            items[i], items[j] = items[j], items[i]
        return items

    def choice(self, n: int, k: int) -> list[int]:
        """`k` distinct indices out of `n`, returned in increasing order."""
        if not 0 <= k <= n:
            raise ValueError(f"Cannot choose {k} items out of {n}")
        return sorted(self.permutation(n)[:k])


def orthonormal_rows(count: int, dim: int, rng: Rng, redraws: int = 8) -> np.ndarray:
    """`count` orthonormal rows in R^dim, modified Gram-Schmidt on gaussian draws."""
    if count > dim:
        raise DimensionMismatch(f"Cannot fit {count} orthonormal rows in dimension {dim}")
    rows = np.zeros((count, dim))
    for i in range(count):
        for _ in range(redraws):
            vector = rng.normal_array(dim)
            for j in range(i):
                vector -= np.dot(rows[j], vector) * rows[j]
            norm = float(np.linalg.norm(vector))
            if norm > 1e-8:
                rows[i] = vector / norm
                break
        else:
            raise ZeroVector(f"Row {i} stayed degenerate after {redraws} draws")
    return rows
