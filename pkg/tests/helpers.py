"""Shared builders for randomized test instances."""

import numpy as np

from embadapt.core import EmbeddingTable, TextPrototypeSet
from embadapt.sampling import SupportSet


def unit_rows(gen: np.random.Generator, n: int, dim: int) -> np.ndarray:
    rows = gen.standard_normal((n, dim))
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def make_texts(gen: np.random.Generator, num_classes: int, dim: int,
               temperature: float = 0.25, per_class: int = 1) -> TextPrototypeSet:
    return TextPrototypeSet.from_texts(
        [unit_rows(gen, per_class, dim) for _ in range(num_classes)],
        temperature=temperature,
    )


def support_from(vectors: np.ndarray, labels, num_classes: int,
                 scenario: str = "realistic", seed: int = 0) -> SupportSet:
    labels = np.asarray(labels, dtype=np.int64)
    table = EmbeddingTable.create(np.asarray(vectors, dtype=np.float32), labels, num_classes)
    counts = np.bincount(labels, minlength=num_classes).astype(np.int64)
    return SupportSet(table, counts, scenario, seed, np.arange(table.n))


def random_support(gen: np.random.Generator, num_classes: int, dim: int,
                   counts, seed: int = 0) -> SupportSet:
    counts = np.asarray(counts, dtype=np.int64)
    labels = np.repeat(np.arange(num_classes), counts)
    return support_from(unit_rows(gen, int(counts.sum()), dim), labels, num_classes,
                        seed=seed)


def empty_support(num_classes: int, dim: int, seed: int = 0) -> SupportSet:
    table = EmbeddingTable.create(np.zeros((0, dim), dtype=np.float32),
                                  np.zeros(0, dtype=np.int64), num_classes)
    return SupportSet(table, np.zeros(num_classes, dtype=np.int64), "realistic", seed,
                      np.zeros(0, dtype=np.int64))


def fd_grads(fn, params, h: float = 1e-5):
    """Central finite differences of the loss part of a (loss, grads) closure."""
    out = []
    for p in params:
        g = np.zeros_like(p)
        flat = p.reshape(-1)
        gf = g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            lp, _ = fn(params)
            flat[j] = orig - h
            lm, _ = fn(params)
            flat[j] = orig
            gf[j] = (lp - lm) / (2.0 * h)
        out.append(g)
    return out


def grad_rel_err(analytic, fd) -> float:
    num = max(float(np.max(np.abs(a - f))) for a, f in zip(analytic, fd))
    den = max(max(float(np.max(np.abs(f))) for f in fd), 1e-8)
    return num / den
