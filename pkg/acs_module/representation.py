"""
Token representations, cosine similarity and the degeneration penalty of
contrastive search.
"""
import math
from dataclasses import dataclass

import numpy as np

from acs_module.errors import ValidationError

UNIT_NORM_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Representation:
    """Dense vector for one token in context (a hidden state)."""
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size < 1:
            raise ValidationError(f"representation must be a non-empty 1-D vector, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValidationError("representation contains non-finite entries")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return int(self.values.size)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def normalized(self) -> "Representation":
        norm = self.norm
        if norm == 0.0:
            raise ValidationError("cannot normalize a zero vector")
        return Representation(self.values / norm)


class ContextRepresentations:
    """
    Representations of the context tokens x_1 ... x_{t-1}, prompt included.

    Unit-normalized copies are kept in a growing matrix so that the penalty
    of many candidates can be computed with one matrix product.
    """

    def __init__(self, items=(), dim=None):
        self.items = []
        self.dim = dim
        self._unit = None
        self._size = 0
        for item in items:
            self.append(item)

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def append(self, rep: Representation) -> None:
        if self.dim is None:
            self.dim = rep.dim
        elif rep.dim != self.dim:
            raise ValidationError(f"context representation has dim {rep.dim}, expected {self.dim}")
        unit = rep.normalized().values
        if self._unit is None:
            self._unit = np.empty((16, self.dim), dtype=np.float64)
        elif self._size == self._unit.shape[0]:
            grown = np.empty((2 * self._size, self.dim), dtype=np.float64)
            grown[:self._size] = self._unit
            self._unit = grown
        self._unit[self._size] = unit
        self._size += 1
        self.items.append(rep)

    def unit_matrix(self) -> np.ndarray:
        """Row-normalized context matrix, one row per context token."""
        if self._unit is None:
            return np.empty((0, self.dim or 0), dtype=np.float64)
        return self._unit[:self._size]

    def max_similarities(self, candidates: np.ndarray) -> np.ndarray:
        """
        Degeneration penalty of several candidates at once.

        Args:
            candidates (numpy.ndarray): (n, dim) matrix, one candidate per row.

        Returns:
            numpy.ndarray: Max cosine similarity to the context per candidate
            (0 for an empty context).
        """
        candidates = np.atleast_2d(np.asarray(candidates, dtype=np.float64))
        if self._size == 0:
            return np.zeros(candidates.shape[0])
        norms = np.linalg.norm(candidates, axis=1)
        if np.any(norms == 0.0):
            raise ValidationError("candidate representation is a zero vector")
        cosine = (candidates / norms[:, None]) @ self.unit_matrix().T
        return np.clip(cosine.max(axis=1), -1.0, 1.0)


def cosine_similarity(a: Representation, b: Representation) -> float:
    """
    Cosine similarity h_a . h_b / (|h_a| |h_b|), clipped to [-1, 1].
    """
    if a.dim != b.dim:
        raise ValidationError(f"dimension mismatch: {a.dim} vs {b.dim}")
    norm_a, norm_b = a.norm, b.norm
    if norm_a == 0.0 or norm_b == 0.0:
        raise ValidationError("cosine similarity is undefined for a zero vector")
    value = float(np.dot(a.values, b.values)) / (norm_a * norm_b)
    return min(max(value, -1.0), 1.0)


def degeneration_penalty(candidate: Representation, context: ContextRepresentations) -> float:
    """
    Maximum cosine similarity between a candidate and any context token.

    This is the reference (pairwise) form; decoders use
    ContextRepresentations.max_similarities, which agrees to rounding error.

    Args:
        candidate (Representation): Representation of the candidate token in context.
        context (ContextRepresentations): Representations of the previous tokens.

    Returns:
        float: The penalty, or 0.0 when the context is empty.
    """
    if len(context) == 0:
        return 0.0
    return max(cosine_similarity(candidate, item) for item in context)


def tikhonov_identity_check(a: Representation, b: Representation) -> tuple:
    """
    For unit vectors, |a - b|^2 = 2 - 2 s(a, b); returns both sides of
    s(a, b) = 1 - |a - b|^2 / 2 so callers can check they agree.

    Returns:
        tuple[float, float]: (cosine, 1 - |a - b|^2 / 2).
    """
    for name, rep in (("a", a), ("b", b)):
        if abs(rep.norm - 1.0) > UNIT_NORM_TOLERANCE:
            raise ValidationError(f"{name} is not unit-normalized (norm {rep.norm!r})")
    diff = a.values - b.values
    distance_form = 1.0 - float(np.dot(diff, diff)) / 2.0
    return cosine_similarity(a, b), distance_form


def unit_representation(values) -> Representation:
    """Convenience: Representation of values / |values|."""
    values = np.asarray(values, dtype=np.float64)
    norm = math.sqrt(float(np.dot(values, values)))
    if norm == 0.0:
        raise ValidationError("cannot normalize a zero vector")
    return Representation(values / norm)
