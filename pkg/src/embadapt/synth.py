"""Synthetic embedding classification tasks with controllable class
separation, text-prototype fidelity, and long-tailed label marginals.

Stands in for non-distributable real embedding sets when exercising the
benchmark end to end.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DEFAULT_TEMPERATURE, EmbeddingTable, TextPrototypeSet, build_zeroshot_head
from .errors import DegenerateConfig
from .evaluation import balanced_accuracy
from .sampling import LabelMarginal, _draw_labels

# Redraw guard: max pairwise cosine between class means.
_MAX_MEAN_COSINE = 0.9
_MAX_REDRAWS = 1000


@dataclass(frozen=True)
class SynthConfig:
    num_classes: int = 10
    dim: int = 64
    n_train: int = 2000
    n_test: int = 2000
    class_sep: float = 0.6       # within-class noise scale
    text_noise: float = 0.4      # text-prototype displacement scale
    imbalance_ratio: float = 10.0  # most- / least-frequent class frequency
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2 or self.dim < 2:
            raise DegenerateConfig("need at least 2 classes and 2 dimensions")
        if self.n_train < self.num_classes or self.n_test < self.num_classes:
            raise DegenerateConfig("need at least one sample per class per split")
        if self.class_sep < 0 or self.text_noise < 0 or self.imbalance_ratio < 1:
            raise DegenerateConfig("noise scales must be >= 0 and ratio >= 1")


def geometric_marginal(num_classes: int, ratio: float) -> LabelMarginal:
    """m_c proportional to ratio**(-c / (C - 1)); ratio 1 gives uniform."""
    c = np.arange(num_classes, dtype=np.float64)
    w = ratio ** (-c / (num_classes - 1))
    return LabelMarginal.create(w / w.sum())


def _unit_rows(gen: np.random.Generator, n: int, dim: int) -> np.ndarray:
    rows = gen.standard_normal((n, dim))
    norms = np.linalg.norm(rows, axis=1)
    while np.any(norms < 1e-8):  # astronomically rare; redraw degenerate rows
        bad = norms < 1e-8
        rows[bad] = gen.standard_normal((int(bad.sum()), dim))
        norms = np.linalg.norm(rows, axis=1)
    return rows / norms[:, None]


def _class_means(gen: np.random.Generator, num_classes: int, dim: int) -> np.ndarray:
    for _ in range(_MAX_REDRAWS):
        means = _unit_rows(gen, num_classes, dim)
        cos = means @ means.T
        np.fill_diagonal(cos, -1.0)
        if cos.max() < _MAX_MEAN_COSINE:
            return means
    raise DegenerateConfig(
        f"could not separate {num_classes} means in {dim} dims below cosine {_MAX_MEAN_COSINE}"
    )


def _draw_split_labels(gen: np.random.Generator, marginal: LabelMarginal, n: int) -> np.ndarray:
    """i.i.d. labels from the marginal with every class bumped to >= 1."""
    labels = _draw_labels(gen, marginal, n)
    counts = np.bincount(labels, minlength=marginal.num_classes)
    for c in np.flatnonzero(counts == 0):
        donor = int(np.argmax(counts))
        takeover = int(np.flatnonzero(labels == donor)[0])
        labels[takeover] = c
        counts[c] += 1
        counts[donor] -= 1
    return labels


def _noisy_points(gen: np.random.Generator, means: np.ndarray, labels: np.ndarray,
                  scale: float) -> np.ndarray:
    pts = means[labels]
    if scale > 0:
        pts = pts + scale * gen.standard_normal(pts.shape)
    norms = np.linalg.norm(pts, axis=1)
    while np.any(norms < 1e-8):
        bad = norms < 1e-8
        pts[bad] = means[labels[bad]] + scale * gen.standard_normal((int(bad.sum()), pts.shape[1]))
        norms = np.linalg.norm(pts, axis=1)
    return pts / norms[:, None]


def generate_task(cfg: SynthConfig) -> tuple[EmbeddingTable, EmbeddingTable, TextPrototypeSet, np.ndarray]:
    """Build (train, test, texts, true_means) for one synthetic task.

    Class means are drawn on the unit sphere with a minimum-separation
    redraw guard; samples are Gaussian-perturbed means re-normalized onto
    the sphere; one text embedding per class is a separately perturbed mean.
    """
    gen = np.random.Generator(np.random.PCG64(cfg.seed))
    means = _class_means(gen, cfg.num_classes, cfg.dim)
    marginal = geometric_marginal(cfg.num_classes, cfg.imbalance_ratio)

    train_labels = _draw_split_labels(gen, marginal, cfg.n_train)
    test_labels = _draw_split_labels(gen, marginal, cfg.n_test)
    train_vecs = _noisy_points(gen, means, train_labels, cfg.class_sep)
    test_vecs = _noisy_points(gen, means, test_labels, cfg.class_sep)
    text_rows = _noisy_points(gen, means, np.arange(cfg.num_classes), cfg.text_noise)

    train = EmbeddingTable.create(train_vecs.astype(np.float32), train_labels, cfg.num_classes)
    test = EmbeddingTable.create(test_vecs.astype(np.float32), test_labels, cfg.num_classes)
    texts = TextPrototypeSet.from_texts([row[None, :] for row in text_rows],
                                        temperature=DEFAULT_TEMPERATURE)
    return train, test, texts, means


def oracle_aca(test: EmbeddingTable, true_means: np.ndarray,
               temperature: float = DEFAULT_TEMPERATURE) -> float:
    """Balanced accuracy of nearest-true-mean classification (reference ceiling)."""
    from .core import ClassifierHead, predict

    head = ClassifierHead(np.asarray(true_means, dtype=np.float64), temperature)
    _, pred = predict(test, head)
    aca, _ = balanced_accuracy(test.labels, pred, test.num_classes)
    return aca
