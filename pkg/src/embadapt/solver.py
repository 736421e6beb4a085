"""Training-free text-regularized linear probe.

The constrained objective couples cross-entropy on the support set with a
quadratic pull toward the text prototypes. Splitting it into a linear+
quadratic part (g1) and the log-partition part (g2) gives a closed-form
minimizer of g1: each class weight is the text prototype plus a scaled sum
of that class's support embeddings. The adaptive variant sets the pull
strength per class from its shot count and optionally post-processes the
weights by repelling each one from the mean of the others.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import EPS_NORM, ClassifierHead, TextPrototypeSet, log_softmax, logsumexp
from .errors import DimensionMismatch, EmptySupport, SingleClass
from .sampling import SupportSet

REPEL_MODES = ("off", "as_printed", "repel_plus")


@dataclass(frozen=True)
class RegularizerConfig:
    """Text-regularization setup for the closed-form solver.

    mode "global" uses one lam for every class; "adaptive" sets
    lam_c = 1 / (K_c * temperature) per class. zero_shot_fallback keeps
    w_c = t_c for classes with no support rows (always on for adaptive).
    """

    mode: str = "adaptive"
    lam: float | None = None
    repel: str = "repel_plus"
    zero_shot_fallback: bool = True

    def __post_init__(self):
        if self.mode not in ("global", "adaptive"):
            raise ValueError(f"unknown regularizer mode {self.mode!r}")
        if self.mode == "global" and (self.lam is None or self.lam <= 0):
            raise ValueError("global mode requires lam > 0")
        if self.mode == "adaptive" and not self.zero_shot_fallback:
            raise ValueError("adaptive mode always falls back to text prototypes")
        if self.repel not in REPEL_MODES:
            raise ValueError(f"unknown repel mode {self.repel!r}")


def _check_instance(weights: np.ndarray, support: SupportSet, texts: TextPrototypeSet,
                    lam) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, float]:
    w = np.asarray(weights, dtype=np.float64)
    protos = texts.prototypes
    if w.shape != protos.shape:
        raise DimensionMismatch(f"weights {w.shape} vs prototypes {protos.shape}")
    if support.embeddings.dim != texts.dim or support.num_classes != texts.num_classes:
        raise DimensionMismatch("support and text prototypes disagree")
    lam = np.broadcast_to(np.asarray(lam, dtype=np.float64), (texts.num_classes,))
    if np.any(lam <= 0):
        raise ValueError("lam entries must be positive")
    v = support.embeddings.vectors.astype(np.float64)
    return w, protos, lam, v, texts.temperature


def _penalty(w: np.ndarray, protos: np.ndarray, lam: np.ndarray) -> float:
    d = w - protos
    return float(np.sum(lam / 2.0 * np.sum(d * d, axis=1)))


def objective_full(weights: np.ndarray, support: SupportSet, texts: TextPrototypeSet,
                   lam) -> float:
    """Cross-entropy on the support plus the per-class quadratic text penalty."""
    w, protos, lam, v, tau = _check_instance(weights, support, texts, lam)
    n = support.n
    if n == 0:
        return _penalty(w, protos, lam)
    logp = log_softmax(v @ w.T / tau)
    ce = -float(np.mean(logp[np.arange(n), support.embeddings.labels]))
    return ce + _penalty(w, protos, lam)


def objective_g1(weights: np.ndarray, support: SupportSet, texts: TextPrototypeSet,
                 lam) -> float:
    """Linear correlation term plus quadratic penalty; convex in each w_c."""
    w, protos, lam, v, tau = _check_instance(weights, support, texts, lam)
    n = support.n
    linear = 0.0
    if n:
        z = v @ w.T / tau
        linear = -float(np.mean(z[np.arange(n), support.embeddings.labels]))
    return linear + _penalty(w, protos, lam)


def objective_g2(weights: np.ndarray, support: SupportSet, texts: TextPrototypeSet) -> float:
    """Mean log-partition of the scaled similarities over the support."""
    w, _, _, v, tau = _check_instance(weights, support, texts, np.ones(texts.num_classes))
    if support.n == 0:
        return 0.0
    return float(np.mean(logsumexp(v @ w.T / tau, axis=1)))


def _class_sums(support: SupportSet, dim: int) -> np.ndarray:
    """Per-class sums of support embeddings, (C, D) float64."""
    sums = np.zeros((support.num_classes, dim), dtype=np.float64)
    np.add.at(sums, support.embeddings.labels, support.embeddings.vectors.astype(np.float64))
    return sums


def sstext_solve(support: SupportSet, texts: TextPrototypeSet, lam) -> ClassifierHead:
    """Closed-form minimizer of g1: w_c = sums_c / (lam_c * N * tau) + t_c.

    Classes with no support rows keep w_c = t_c exactly (empty sum).
    """
    if support.n == 0:
        raise EmptySupport("closed-form solve needs at least one support sample")
    _, protos, lam, _, tau = _check_instance(texts.prototypes, support, texts, lam)
    sums = _class_sums(support, texts.dim)
    coeff = 1.0 / (lam * support.n * tau)
    weights = coeff[:, None] * sums + protos
    zero = support.shot_counts == 0
    if np.any(zero):
        weights[zero] = protos[zero]
    return ClassifierHead(weights, tau)


def sstext_plus_solve(support: SupportSet, texts: TextPrototypeSet,
                      cfg: RegularizerConfig | None = None) -> ClassifierHead:
    """Adaptive solver: lam_c = 1/(K_c tau) makes the visual coefficient
    collapse to K_c / N; classes with K_c = 0 keep the text prototype.
    Repulsion is applied afterwards per cfg.repel."""
    cfg = cfg or RegularizerConfig()
    if cfg.mode != "adaptive":
        raise ValueError("sstext_plus_solve requires an adaptive config")
    if support.embeddings.dim != texts.dim or support.num_classes != texts.num_classes:
        raise DimensionMismatch("support and text prototypes disagree")
    protos = texts.prototypes
    tau = texts.temperature
    k = support.shot_counts.astype(np.float64)
    if support.n == 0:
        weights = protos.copy()
    else:
        sums = _class_sums(support, texts.dim)
        coeff = k / support.n
        weights = coeff[:, None] * sums + protos
        zero = support.shot_counts == 0
        if np.any(zero):
            weights[zero] = protos[zero]
    if cfg.repel != "off":
        weights = repel_prototypes(weights, cfg.repel)
    return ClassifierHead(weights, tau)


def repel_prototypes(weights: np.ndarray, direction: str = "repel_plus") -> np.ndarray:
    """Unit-step displacement of each class weight relative to the mean of
    the other classes' weights, computed simultaneously from the input.

    "repel_plus" adds the unit direction away from the others (separation);
    "as_printed" subtracts it. Rows whose displacement direction is
    degenerate (all weights identical) pass through unchanged.
    """
    if direction not in ("as_printed", "repel_plus"):
        raise ValueError(f"unknown repel direction {direction!r}")
    w = np.asarray(weights, dtype=np.float64)
    c = w.shape[0]
    if c < 2:
        raise SingleClass("repulsion needs at least two classes")
    others_mean = (w.sum(axis=0)[None, :] - w) / (c - 1)
    g = w - others_mean
    norms = np.linalg.norm(g, axis=1)
    ok = norms > EPS_NORM
    step = np.zeros_like(w)
    step[ok] = g[ok] / norms[ok, None]
    return w + step if direction == "repel_plus" else w - step
