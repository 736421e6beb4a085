"""Validation-free gradient-trained and training-free baselines.

Every trained method runs the same fixed schedule: full-batch SGD with
momentum and cosine learning-rate decay, consuming only the support set
and text prototypes. Fit signatures never admit test or validation data.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .core import (
    ClassifierHead,
    EmbeddingTable,
    TextPrototypeSet,
    build_zeroshot_head,
    log_softmax,
    softmax,
)
from .errors import (
    DimensionMismatch,
    EmptySupport,
    MissingClassForRebalancing,
    NonFiniteGradient,
    StepOutOfRange,
    UnknownMethod,
)
from .sampling import SupportSet, derive_seed
from .solver import REPEL_MODES, RegularizerConfig, repel_prototypes, sstext_plus_solve, sstext_solve

METHODS = (
    "zero_shot",
    "zslp",
    "clap",
    "taskres",
    "crossmodal",
    "tip_free",
    "tip_ft",
    "clip_adapter",
    "sstext",
    "sstext_plus",
)

TRAINED_METHODS = ("zslp", "clap", "taskres", "crossmodal", "tip_ft", "clip_adapter")

LOSSES = ("ce", "weighted_ce", "ldam")


@dataclass(frozen=True)
class TrainConfig:
    """Fixed validation-free schedule: full-batch SGD, cosine decay."""

    steps: int = 300
    momentum: float = 0.9
    lr0: float = 0.1
    loss: str = "ce"
    ldam_margin_scale: float = 0.5

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.lr0 <= 0:
            raise ValueError("lr0 must be positive")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")


@dataclass(frozen=True)
class AdapterSpec:
    """Method selector plus its hyper-parameters (all fixed a priori)."""

    method: str
    name: str | None = None
    train: TrainConfig = field(default_factory=TrainConfig)
    alpha: float | None = None
    beta: float | None = None
    hidden_ratio: int = 4
    # sstext family
    lam: float | None = None        # absolute global lam
    lam_scale: float | None = None  # lam = lam_scale / temperature
    repel: str | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise UnknownMethod(f"unknown adapter method {self.method!r}")
        if self.repel is not None and self.repel not in REPEL_MODES:
            raise ValueError(f"unknown repel mode {self.repel!r}")

    @property
    def display_name(self) -> str:
        return self.name or self.method


@dataclass(frozen=True)
class FitResult:
    """Fitted predictor plus run flags (e.g. empty-support fallback)."""

    predictor: object
    flags: tuple = ()

    @property
    def head(self) -> ClassifierHead:
        if not isinstance(self.predictor, ClassifierHead):
            raise TypeError(f"{type(self.predictor).__name__} is not a linear head")
        return self.predictor


def cosine_lr(step: int, total_steps: int, lr0: float) -> float:
    """lr0 * (1 + cos(pi * step / total_steps)) / 2."""
    if not 0 <= step < total_steps:
        raise StepOutOfRange(f"step {step} outside [0, {total_steps})")
    return lr0 * (1.0 + np.cos(np.pi * step / total_steps)) / 2.0


def sgd_train(params_init, loss_gradient_fn, cfg: TrainConfig, loss_history=None):
    """Heavy-ball updates u <- momentum*u - lr_t*grad, theta <- theta + u.

    params_init is a list of arrays; loss_gradient_fn(params) returns
    (loss, grads). Deterministic given its inputs; aborts on non-finite
    gradients.
    """
    params = [np.array(p, dtype=np.float64) for p in params_init]
    velocity = [np.zeros_like(p) for p in params]
    for step in range(cfg.steps):
        loss, grads = loss_gradient_fn(params)
        if loss_history is not None:
            loss_history.append(float(loss))
        lr = cosine_lr(step, cfg.steps, cfg.lr0)
        for p, u, g in zip(params, velocity, grads):
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradient(f"non-finite gradient at step {step} (loss={loss!r})")
            u *= cfg.momentum
            u -= lr * g
            p += u
    return params


def _one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    out = np.zeros((labels.shape[0], num_classes), dtype=np.float64)
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def loss_value_and_grad(loss: str, logits: np.ndarray, labels: np.ndarray,
                        shot_counts: np.ndarray, margin_scale: float = 0.5):
    """Loss value and gradient w.r.t. the (temperature-scaled) logits.

    ce          mean cross-entropy.
    weighted_ce class terms weighted by N / (C * K_c).
    ldam        margin margin_scale / K_c**0.25 subtracted from the
                true-class logit before cross-entropy.
    """
    if loss not in LOSSES:
        raise ValueError(f"unknown loss {loss!r}")
    z = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, c = z.shape
    counts = np.asarray(shot_counts, dtype=np.float64)
    if loss in ("weighted_ce", "ldam") and np.any(counts < 1):
        raise MissingClassForRebalancing("re-balancing losses need every class present")
    y = _one_hot(labels, c)
    if loss == "ldam":
        margins = margin_scale / counts ** 0.25
        z = z - margins[None, :] * y
    logp = log_softmax(z)
    per_sample = -logp[np.arange(n), labels]
    p = softmax(z)
    if loss == "weighted_ce":
        w = n / (c * counts[labels])
        value = float(np.mean(w * per_sample))
        grad = (w[:, None] * (p - y)) / n
    else:
        value = float(np.mean(per_sample))
        grad = (p - y) / n
    return value, grad


class TipCachePredictor:
    """Key-value cache scoring: zero-shot logits plus affinity-weighted
    one-hot label rows."""

    def __init__(self, head: ClassifierHead, keys: np.ndarray, labels_onehot: np.ndarray,
                 alpha: float, beta: float):
        self.head = head
        self.keys = np.asarray(keys, dtype=np.float64)
        self.labels_onehot = np.asarray(labels_onehot, dtype=np.float64)
        self.alpha = float(alpha)
        self.beta = float(beta)

    @property
    def num_classes(self) -> int:
        return self.head.num_classes

    def logits(self, vectors: np.ndarray) -> np.ndarray:
        v = np.asarray(vectors, dtype=np.float64)
        affinity = np.exp(-self.beta * (1.0 - v @ self.keys.T))
        return self.head.logits(v) + self.alpha * (affinity @ self.labels_onehot)


class ClipAdapterPredictor:
    """Residual bottleneck feature transform scored against the zero-shot head."""

    def __init__(self, w1: np.ndarray, w2: np.ndarray, alpha: float, head: ClassifierHead):
        self.w1 = np.asarray(w1, dtype=np.float64)
        self.w2 = np.asarray(w2, dtype=np.float64)
        self.alpha = float(alpha)
        self.head = head

    @property
    def num_classes(self) -> int:
        return self.head.num_classes

    def transform(self, vectors: np.ndarray) -> np.ndarray:
        return np.maximum(vectors @ self.w1, 0.0) @ self.w2

    def logits(self, vectors: np.ndarray) -> np.ndarray:
        v = np.asarray(vectors, dtype=np.float64)
        mixed = self.alpha * self.transform(v) + (1.0 - self.alpha) * v
        mixed = mixed / np.linalg.norm(mixed, axis=-1, keepdims=True)
        return self.head.logits(mixed)


def tip_free_logits(v: np.ndarray, support: SupportSet, texts: TextPrototypeSet,
                    alpha: float = 1.0, beta: float = 1.0) -> np.ndarray:
    """Training-free cache logits for a single embedding."""
    if support.n == 0:
        raise EmptySupport("cache scoring needs a non-empty support")
    predictor = build_tip_predictor(support, texts, alpha, beta)
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionMismatch("tip_free_logits takes a single vector")
    return predictor.logits(v[None, :])[0]


def build_tip_predictor(support: SupportSet, texts: TextPrototypeSet,
                        alpha: float = 1.0, beta: float = 1.0) -> TipCachePredictor:
    if support.n == 0:
        raise EmptySupport("cache scoring needs a non-empty support")
    head = build_zeroshot_head(texts)
    keys = support.embeddings.vectors.astype(np.float64)
    onehot = _one_hot(support.embeddings.labels, support.num_classes)
    return TipCachePredictor(head, keys, onehot, alpha, beta)


def _linear_loss_fn(v: np.ndarray, labels: np.ndarray, counts: np.ndarray, tau: float,
                    cfg: TrainConfig, lam: np.ndarray | None = None,
                    protos: np.ndarray | None = None):
    """(loss, grad) closure for cross-entropy on logits V W^T / tau, with an
    optional per-class quadratic pull toward ``protos``."""

    def fn(params):
        (w,) = params
        z = v @ w.T / tau
        value, gz = loss_value_and_grad(cfg.loss, z, labels, counts, cfg.ldam_margin_scale)
        gw = gz.T @ v / tau
        if lam is not None:
            d = w - protos
            value += float(np.sum(lam / 2.0 * np.sum(d * d, axis=1)))
            gw = gw + lam[:, None] * d
        return value, [gw]

    return fn


def _taskres_loss_fn(v: np.ndarray, labels: np.ndarray, counts: np.ndarray, tau: float,
                     protos: np.ndarray, alpha: float, cfg: TrainConfig):
    """(loss, grad) closure over the residual matrix of W = protos + alpha*R."""

    def fn(params):
        (res,) = params
        w = protos + alpha * res
        z = v @ w.T / tau
        value, gz = loss_value_and_grad(cfg.loss, z, labels, counts, cfg.ldam_margin_scale)
        return value, [alpha * (gz.T @ v / tau)]

    return fn


def _tip_loss_fn(v: np.ndarray, labels: np.ndarray, counts: np.ndarray,
                 zs_logits: np.ndarray, onehot: np.ndarray, alpha: float, beta: float,
                 cfg: TrainConfig):
    """(loss, grad) closure over the cache key matrix; text logits stay fixed."""

    def fn(params):
        (keys,) = params
        sims = v @ keys.T
        affinity = np.exp(-beta * (1.0 - sims))
        z = zs_logits + alpha * (affinity @ onehot)
        value, gz = loss_value_and_grad(cfg.loss, z, labels, counts, cfg.ldam_margin_scale)
        d_aff = alpha * (gz @ onehot.T)
        d_sims = d_aff * affinity * beta
        return value, [d_sims.T @ v]

    return fn


def _clip_adapter_loss_fn(v: np.ndarray, labels: np.ndarray, counts: np.ndarray,
                          protos: np.ndarray, tau: float, alpha: float, cfg: TrainConfig):
    """(loss, grads) closure over the bottleneck weights; backprop runs
    through the ReLU hidden layer, the residual mix, and row normalization."""

    def fn(params):
        m1, m2 = params
        pre = v @ m1
        h = np.maximum(pre, 0.0)
        mixed = alpha * (h @ m2) + (1.0 - alpha) * v
        norms = np.linalg.norm(mixed, axis=1, keepdims=True)
        u = mixed / norms
        z = u @ protos.T / tau
        value, gz = loss_value_and_grad(cfg.loss, z, labels, counts, cfg.ldam_margin_scale)
        gu = gz @ protos / tau
        gmixed = (gu - np.sum(gu * u, axis=1, keepdims=True) * u) / norms
        ga = alpha * gmixed
        g2 = h.T @ ga
        gh = ga @ m2.T
        gh[pre <= 0.0] = 0.0
        g1 = v.T @ gh
        return value, [g1, g2]

    return fn


def _clap_lambdas(support: SupportSet, texts: TextPrototypeSet) -> np.ndarray:
    """Per-class pull strength: mean zero-shot probability mass that class c's
    own support samples assign to class c, clamped to [0, 1]. Classes with no
    support keep full pull toward their text prototype."""
    head = build_zeroshot_head(texts)
    probs = softmax(head.logits(support.embeddings.vectors.astype(np.float64)))
    lam = np.ones(support.num_classes, dtype=np.float64)
    labels = support.embeddings.labels
    for c in range(support.num_classes):
        own = probs[labels == c, c]
        if own.size:
            lam[c] = float(np.clip(own.mean(), 0.0, 1.0))
    return lam


def _fit_tip_ft(support: SupportSet, texts: TextPrototypeSet, alpha: float, beta: float,
                cfg: TrainConfig, loss_history=None) -> TipCachePredictor:
    head = build_zeroshot_head(texts)
    v = support.embeddings.vectors.astype(np.float64)
    labels = support.embeddings.labels
    onehot = _one_hot(labels, support.num_classes)
    fn = _tip_loss_fn(v, labels, support.shot_counts, head.logits(v), onehot, alpha, beta, cfg)
    (keys,) = sgd_train([v.copy()], fn, cfg, loss_history)
    return TipCachePredictor(head, keys, onehot, alpha, beta)


def fit_clip_adapter(support: SupportSet, texts: TextPrototypeSet, alpha: float = 0.2,
                     cfg: TrainConfig | None = None, hidden_ratio: int = 4,
                     loss_history=None) -> ClipAdapterPredictor:
    """Train the residual bottleneck transform (hidden layer small uniform,
    output layer zero, so the transform starts as the identity residual)."""
    cfg = cfg or TrainConfig()
    head = build_zeroshot_head(texts)
    if support.n == 0:
        raise EmptySupport("clip_adapter needs a non-empty support")
    dim = support.embeddings.dim
    hidden = max(1, dim // hidden_ratio)
    gen = np.random.Generator(np.random.PCG64(derive_seed("clip_adapter_init", support.seed)))
    w1 = gen.uniform(-1.0, 1.0, size=(dim, hidden)) / np.sqrt(dim)
    w2 = np.zeros((hidden, dim), dtype=np.float64)

    v = support.embeddings.vectors.astype(np.float64)
    fn = _clip_adapter_loss_fn(v, support.embeddings.labels, support.shot_counts,
                               head.weights, head.temperature, alpha, cfg)
    w1, w2 = sgd_train([w1, w2], fn, cfg, loss_history)
    return ClipAdapterPredictor(w1, w2, alpha, head)


def fit_probe(spec: AdapterSpec, support: SupportSet, texts: TextPrototypeSet,
              loss_history=None) -> FitResult:
    """Fit one gradient-trained baseline on the support set.

    Empty support returns the zero-shot head with a fallback flag rather
    than erroring, so realistic sweeps always complete.
    """
    cfg = spec.train
    zs_head = build_zeroshot_head(texts)
    v = support.embeddings.vectors.astype(np.float64)
    labels = support.embeddings.labels
    counts = support.shot_counts
    tau = texts.temperature
    protos = texts.prototypes

    if spec.method == "crossmodal":
        # text prototypes join the support as one extra sample per class, so
        # even an empty support leaves one text row per class to train on
        v_aug = np.concatenate([v, protos])
        labels_aug = np.concatenate([labels, np.arange(support.num_classes)])
        counts_aug = counts + 1
        fn = _linear_loss_fn(v_aug, labels_aug, counts_aug, tau, cfg)
        (w,) = sgd_train([zs_head.weights], fn, cfg, loss_history)
        flags = ("empty_support_text_only",) if support.n == 0 else ()
        return FitResult(ClassifierHead(w, tau), flags)

    if support.n == 0:
        return FitResult(zs_head, ("empty_support_zero_shot",))

    if spec.method == "zslp":
        fn = _linear_loss_fn(v, labels, counts, tau, cfg)
        (w,) = sgd_train([zs_head.weights], fn, cfg, loss_history)
        return FitResult(ClassifierHead(w, tau))

    if spec.method == "clap":
        lam = _clap_lambdas(support, texts)
        fn = _linear_loss_fn(v, labels, counts, tau, cfg, lam=lam, protos=protos)
        (w,) = sgd_train([zs_head.weights], fn, cfg, loss_history)
        return FitResult(ClassifierHead(w, tau))

    if spec.method == "taskres":
        alpha = 1.0 if spec.alpha is None else spec.alpha
        fn = _taskres_loss_fn(v, labels, counts, tau, protos, alpha, cfg)
        (res,) = sgd_train([np.zeros_like(protos)], fn, cfg, loss_history)
        return FitResult(ClassifierHead(protos + alpha * res, tau))

    if spec.method == "tip_ft":
        alpha = 1.0 if spec.alpha is None else spec.alpha
        beta = 1.0 if spec.beta is None else spec.beta
        return FitResult(_fit_tip_ft(support, texts, alpha, beta, cfg, loss_history))

    raise UnknownMethod(f"{spec.method!r} is not a gradient-trained probe")


def fit_adapter(spec: AdapterSpec, support: SupportSet, texts: TextPrototypeSet) -> FitResult:
    """Dispatch any benchmark method to its fitted predictor."""
    if spec.method == "zero_shot":
        return FitResult(build_zeroshot_head(texts))

    if spec.method == "sstext":
        if support.n == 0:
            return FitResult(build_zeroshot_head(texts), ("empty_support_zero_shot",))
        if spec.lam is not None:
            lam = spec.lam
        elif spec.lam_scale is not None:
            lam = spec.lam_scale / texts.temperature
        else:
            lam = 1.0 / texts.temperature
        head = sstext_solve(support, texts, np.full(texts.num_classes, lam))
        repel = spec.repel or "off"
        if repel != "off":
            head = ClassifierHead(repel_prototypes(head.weights, repel), head.temperature)
        return FitResult(head)

    if spec.method == "sstext_plus":
        cfg = RegularizerConfig(mode="adaptive", repel=spec.repel or "repel_plus")
        return FitResult(sstext_plus_solve(support, texts, cfg))

    if spec.method == "tip_free":
        alpha = 1.0 if spec.alpha is None else spec.alpha
        beta = 1.0 if spec.beta is None else spec.beta
        return FitResult(build_tip_predictor(support, texts, alpha, beta))

    if spec.method == "clip_adapter":
        alpha = 0.2 if spec.alpha is None else spec.alpha
        if support.n == 0:
            return FitResult(build_zeroshot_head(texts), ("empty_support_zero_shot",))
        return FitResult(fit_clip_adapter(support, texts, alpha, spec.train, spec.hidden_ratio))

    if spec.method in TRAINED_METHODS:
        return fit_probe(spec, support, texts)

    raise UnknownMethod(f"unknown adapter method {spec.method!r}")
