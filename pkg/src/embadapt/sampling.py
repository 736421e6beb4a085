"""Support-set construction under the standard / relaxed / realistic
scenarios, plus label-marginal estimation.

Sampling is integer-only on top of a PCG64 stream: bounded draws use
64-bit multiply-shift and label draws use inverse-CDF over exact integer
cumulative weights, so index sets are identical across platforms.
"""

from __future__ import annotations

import hashlib
from bisect import bisect_right
from dataclasses import dataclass
from itertools import accumulate

import numpy as np

from .core import EmbeddingTable
from .errors import EmptyLabelList, InsufficientClassSamples

SCENARIOS = ("standard", "relaxed", "realistic")

# Default shot grid for benchmark sweeps; arbitrary K is accepted.
DEFAULT_SHOT_GRID = (1, 2, 4, 8, 16)

# Fixed-point scale when converting a float marginal to integer weights.
_WEIGHT_SCALE = 1 << 53


def derive_seed(*parts) -> int:
    """Stable 64-bit run seed from heterogeneous parts (SHA-256 based)."""
    key = "\x1f".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little")


@dataclass(frozen=True)
class LabelMarginal:
    """Class-frequency distribution m over C classes; sums to 1."""

    m: np.ndarray

    @classmethod
    def create(cls, m: np.ndarray) -> "LabelMarginal":
        m = np.ascontiguousarray(m, dtype=np.float64)
        if m.ndim != 1 or m.size == 0:
            raise ValueError("marginal must be a non-empty 1-D vector")
        if np.any(m < 0):
            raise ValueError("marginal entries must be non-negative")
        if abs(float(m.sum()) - 1.0) > 1e-9:
            raise ValueError(f"marginal sums to {m.sum()!r}, expected 1")
        m.setflags(write=False)
        return cls(m)

    @property
    def num_classes(self) -> int:
        return self.m.shape[0]


@dataclass(frozen=True)
class SupportSet:
    """The adaptation set: selected rows plus per-class shot counts."""

    embeddings: EmbeddingTable
    shot_counts: np.ndarray
    scenario: str
    seed: int
    indices: np.ndarray  # row indices into the source pool

    def __post_init__(self):
        k = np.ascontiguousarray(self.shot_counts, dtype=np.int64)
        idx = np.ascontiguousarray(self.indices, dtype=np.int64)
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if int(k.sum()) != self.embeddings.n:
            raise ValueError("shot counts do not sum to the number of rows")
        if not np.array_equal(k, self.embeddings.class_counts()):
            raise ValueError("shot counts inconsistent with embedded labels")
        if idx.size != self.embeddings.n or np.unique(idx).size != idx.size:
            raise ValueError("support indices must be unique, one per row")
        if self.scenario == "standard" and k.size and np.any(k != k[0]):
            raise ValueError("standard scenario requires equal shots per class")
        if self.scenario == "relaxed" and np.any(k < 1):
            raise ValueError("relaxed scenario requires at least one shot per class")
        k.setflags(write=False)
        idx.setflags(write=False)
        object.__setattr__(self, "shot_counts", k)
        object.__setattr__(self, "indices", idx)

    @property
    def n(self) -> int:
        return self.embeddings.n

    @property
    def num_classes(self) -> int:
        return self.embeddings.num_classes


def estimate_marginal(labels, num_classes: int) -> LabelMarginal:
    """Label frequencies over the given list: m_c = count(c) / total."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise EmptyLabelList("cannot estimate a marginal from zero labels")
    if labels.min() < 0 or labels.max() >= num_classes:
        raise ValueError("labels out of range")
    counts = np.bincount(labels, minlength=num_classes)
    return LabelMarginal.create(counts / counts.sum())


def _next_u64(gen: np.random.Generator) -> int:
    return int.from_bytes(gen.bytes(8), "little")


def _bounded(gen: np.random.Generator, n: int) -> int:
    """Uniform draw in [0, n) via 64-bit multiply-shift (exact big-int math)."""
    return (_next_u64(gen) * n) >> 64


def _integer_weights(m: np.ndarray) -> tuple[list[int], int]:
    w = [int(round(float(x) * _WEIGHT_SCALE)) for x in m]
    total = sum(w)
    if total <= 0:
        raise ValueError("marginal has no mass")
    return w, total


def _draw_labels(gen: np.random.Generator, marginal: LabelMarginal, n: int) -> np.ndarray:
    """n i.i.d. label draws by inverse-CDF on exact integer cumulative weights."""
    weights, total = _integer_weights(marginal.m)
    cum = list(accumulate(weights))
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        x = (_next_u64(gen) * total) >> 64
        out[i] = bisect_right(cum, x)
    return out


def _choose_within_class(gen: np.random.Generator, pool_rows: np.ndarray, k: int) -> np.ndarray:
    """k of len(pool_rows) without replacement via partial Fisher-Yates."""
    arr = pool_rows.copy()
    n = arr.shape[0]
    for i in range(k):
        j = i + _bounded(gen, n - i)
        arr[i], arr[j] = arr[j], arr[i]
    return arr[:k]


def _collect(pool: EmbeddingTable, gen: np.random.Generator, counts: np.ndarray,
             scenario: str, seed: int) -> SupportSet:
    """Draw counts[c] rows per class (uniform, without replacement), class-major order."""
    by_class = [np.flatnonzero(pool.labels == c) for c in range(pool.num_classes)]
    chosen = []
    for c, k_c in enumerate(counts):
        k_c = int(k_c)
        if k_c == 0:
            continue
        if k_c > by_class[c].shape[0]:
            raise InsufficientClassSamples(c, k_c, by_class[c].shape[0])
        chosen.append(_choose_within_class(gen, by_class[c], k_c))
    indices = np.concatenate(chosen) if chosen else np.zeros(0, dtype=np.int64)
    return SupportSet(pool.take(indices), counts.astype(np.int64), scenario, seed, indices)


def sample_standard(pool: EmbeddingTable, shots: int, seed: int) -> SupportSet:
    """Exactly ``shots`` samples per class; N = shots * C."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    gen = np.random.Generator(np.random.PCG64(seed))
    counts = np.full(pool.num_classes, shots, dtype=np.int64)
    return _collect(pool, gen, counts, "standard", seed)


def sample_realistic(pool: EmbeddingTable, shots: int, marginal: LabelMarginal,
                     seed: int) -> SupportSet:
    """N = shots * C samples, each label drawn i.i.d. from the marginal;
    per-class counts may be zero. Errors if a class is drawn more times
    than its pool size (no silent resampling)."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    if marginal.num_classes != pool.num_classes:
        raise ValueError("marginal class count does not match pool")
    gen = np.random.Generator(np.random.PCG64(seed))
    n = shots * pool.num_classes
    labels = _draw_labels(gen, marginal, n)
    counts = np.bincount(labels, minlength=pool.num_classes).astype(np.int64)
    return _collect(pool, gen, counts, "realistic", seed)


def sample_relaxed(pool: EmbeddingTable, shots: int, marginal: LabelMarginal,
                   seed: int) -> SupportSet:
    """One sample per class floor, remainder drawn i.i.d. from the marginal;
    every K_c >= 1 and N = shots * C."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    if marginal.num_classes != pool.num_classes:
        raise ValueError("marginal class count does not match pool")
    n = shots * pool.num_classes
    if n < pool.num_classes:
        raise ValueError("relaxed scenario needs N >= C")
    gen = np.random.Generator(np.random.PCG64(seed))
    extra = _draw_labels(gen, marginal, n - pool.num_classes)
    counts = 1 + np.bincount(extra, minlength=pool.num_classes).astype(np.int64)
    return _collect(pool, gen, counts, "relaxed", seed)


def sample_support(pool: EmbeddingTable, scenario: str, shots: int,
                   marginal: LabelMarginal | None, seed: int) -> SupportSet:
    """Dispatch on scenario name (the harness entry point)."""
    if scenario == "standard":
        return sample_standard(pool, shots, seed)
    if scenario == "realistic":
        if marginal is None:
            raise ValueError("realistic sampling needs a label marginal")
        return sample_realistic(pool, shots, marginal, seed)
    if scenario == "relaxed":
        if marginal is None:
            raise ValueError("relaxed sampling needs a label marginal")
        return sample_relaxed(pool, shots, marginal, seed)
    raise ValueError(f"unknown scenario {scenario!r}")
