"""Dense embedding math: normalization, cosine logits, temperature softmax,
zero-shot prototype construction and prediction.

All internal math runs in float64; embedding tables store float32 rows to
match the interchange layout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, EmptyClassTexts, NormTooSmall

# Guard below which a vector is considered unnormalizable.
EPS_NORM = 1e-12

# Fallback temperature when a model does not declare one.
DEFAULT_TEMPERATURE = 0.01

# Row-norm tolerance for stored embedding tables.
ROW_NORM_TOL = 1e-5


def l2_normalize(v: np.ndarray, eps: float = EPS_NORM) -> np.ndarray:
    """Scale ``v`` to unit L2 norm, preserving direction.

    Raises NormTooSmall if the norm is at or below ``eps``.
    """
    v = np.asarray(v, dtype=np.float64)
    n = float(np.linalg.norm(v))
    if n <= eps:
        raise NormTooSmall(f"norm {n!r} <= {eps!r}")
    return v / n


def logsumexp(z: np.ndarray, axis: int = -1) -> np.ndarray:
    """Stable log(sum(exp(z))) with max subtraction."""
    z = np.asarray(z, dtype=np.float64)
    m = np.max(z, axis=axis, keepdims=True)
    out = m.squeeze(axis) + np.log(np.sum(np.exp(z - m), axis=axis))
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    """Temperature-free softmax over the last axis, computed with max
    subtraction. Rejects non-finite input."""
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError("softmax requires finite logits")
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError("log_softmax requires finite logits")
    return z - logsumexp(z, axis=-1)[..., None]


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class EmbeddingTable:
    """L2-normalized visual embeddings with integer labels.

    vectors: (N, D) float32, rows unit norm within ROW_NORM_TOL.
    labels:  (N,) int64 in {0..num_classes-1}.
    """

    vectors: np.ndarray
    labels: np.ndarray
    num_classes: int

    @classmethod
    def create(cls, vectors: np.ndarray, labels: np.ndarray, num_classes: int) -> "EmbeddingTable":
        vectors = np.ascontiguousarray(vectors, dtype=np.float32)
        labels = np.ascontiguousarray(labels, dtype=np.int64)
        if vectors.ndim != 2:
            raise DimensionMismatch(f"vectors must be 2-D, got shape {vectors.shape}")
        if labels.shape != (vectors.shape[0],):
            raise DimensionMismatch(
                f"{labels.shape[0] if labels.ndim == 1 else labels.shape} labels for {vectors.shape[0]} rows"
            )
        if num_classes <= 0:
            raise ValueError("num_classes must be positive")
        if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
            raise ValueError("labels must lie in {0..num_classes-1}")
        if vectors.shape[0]:
            norms = np.linalg.norm(vectors.astype(np.float64), axis=1)
            worst = float(np.max(np.abs(norms - 1.0)))
            if worst > ROW_NORM_TOL:
                raise NormTooSmall(f"row norms deviate from 1 by up to {worst:.3g}")
        return cls(_freeze(vectors), _freeze(labels), int(num_classes))

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def take(self, indices: np.ndarray) -> "EmbeddingTable":
        """Row subset without re-validation (rows come from a validated table)."""
        idx = np.asarray(indices, dtype=np.int64)
        return EmbeddingTable(
            _freeze(np.ascontiguousarray(self.vectors[idx])),
            _freeze(np.ascontiguousarray(self.labels[idx])),
            self.num_classes,
        )

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes).astype(np.int64)


@dataclass(frozen=True)
class TextPrototypeSet:
    """Per-class text embeddings and their averaged class prototypes.

    per_class_texts: tuple of (J_c, D) float64 arrays, rows unit norm.
    prototypes:      (C, D) float64; by default the re-normalized per-class mean.
    """

    per_class_texts: tuple
    prototypes: np.ndarray
    temperature: float
    renormalized: bool = True

    @classmethod
    def from_texts(
        cls,
        per_class_texts,
        temperature: float = DEFAULT_TEMPERATURE,
        renormalize: bool = True,
    ) -> "TextPrototypeSet":
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        cleaned = []
        for c, texts in enumerate(per_class_texts):
            t = np.atleast_2d(np.asarray(texts, dtype=np.float64))
            if t.shape[0] == 0:
                raise EmptyClassTexts(f"class {c} has no text embeddings")
            norms = np.linalg.norm(t, axis=1)
            if np.max(np.abs(norms - 1.0)) > ROW_NORM_TOL:
                raise NormTooSmall(f"class {c} text rows are not unit norm")
            cleaned.append(_freeze(np.ascontiguousarray(t)))
        dims = {t.shape[1] for t in cleaned}
        if len(dims) != 1:
            raise DimensionMismatch(f"inconsistent text dims {sorted(dims)}")
        protos = np.stack([t.mean(axis=0) for t in cleaned])
        if renormalize:
            protos = np.stack([l2_normalize(p) for p in protos])
        return cls(tuple(cleaned), _freeze(protos), float(temperature), renormalize)

    @property
    def num_classes(self) -> int:
        return len(self.per_class_texts)

    @property
    def dim(self) -> int:
        return self.prototypes.shape[1]


@dataclass(frozen=True)
class ClassifierHead:
    """Class weight matrix plus temperature. Rows need not be unit norm:
    trained or solved heads may leave the sphere."""

    weights: np.ndarray
    temperature: float

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        if w.ndim != 2:
            raise DimensionMismatch(f"weights must be 2-D, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("head weights must be finite")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        object.__setattr__(self, "weights", _freeze(w))

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def logits(self, vectors: np.ndarray) -> np.ndarray:
        """Batch cosine logits: (N, C) = vectors @ W.T / temperature."""
        v = np.asarray(vectors, dtype=np.float64)
        if v.shape[-1] != self.dim:
            raise DimensionMismatch(f"vector dim {v.shape[-1]} vs head dim {self.dim}")
        return v @ self.weights.T / self.temperature


def cosine_logits(v: np.ndarray, head: ClassifierHead) -> np.ndarray:
    """Scaled similarities v.w_c / temperature for a single embedding."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != head.dim:
        raise DimensionMismatch(f"vector shape {v.shape} vs head dim {head.dim}")
    return head.weights @ v / head.temperature


def build_zeroshot_head(texts: TextPrototypeSet, renormalize: bool | None = None) -> ClassifierHead:
    """Zero-shot head: per-class mean of text embeddings, re-normalized by
    default (configurable off to keep the raw average)."""
    if renormalize is None or renormalize == texts.renormalized:
        return ClassifierHead(texts.prototypes.copy(), texts.temperature)
    protos = np.stack([t.mean(axis=0) for t in texts.per_class_texts])
    if renormalize:
        protos = np.stack([l2_normalize(p) for p in protos])
    return ClassifierHead(protos, texts.temperature)


def predict(table: EmbeddingTable, head) -> tuple[np.ndarray, np.ndarray]:
    """Probabilities and argmax labels for every row of ``table``.

    ``head`` is anything exposing ``logits(vectors)``; ties break to the
    lowest class index. N = 0 yields empty outputs.
    """
    if table.n == 0:
        c = head.num_classes if hasattr(head, "num_classes") else 0
        return np.zeros((0, c)), np.zeros(0, dtype=np.int64)
    z = head.logits(table.vectors.astype(np.float64))
    probs = softmax(z)
    return probs, np.argmax(z, axis=1).astype(np.int64)
