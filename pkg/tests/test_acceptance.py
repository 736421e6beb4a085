"""Acceptance suite.

Each criterion runs at its stated tolerance and prints one PASS/FAIL line
(run with ``pytest tests/test_acceptance.py -v -s`` to see them live).
"""

import time

import numpy as np
import pytest

from embadapt.adapters import (
    AdapterSpec,
    TrainConfig,
    _clip_adapter_loss_fn,
    _linear_loss_fn,
    _one_hot,
    _taskres_loss_fn,
    _tip_loss_fn,
)
from embadapt.config import BenchConfig, TaskConfig, ValStudyConfig
from embadapt.core import EmbeddingTable, build_zeroshot_head, predict
from embadapt.evaluation import balanced_accuracy
from embadapt.harness import (
    REPORT_FILE,
    fit_time_ratio,
    lambda_ablation_adapters,
    run_benchmark,
    run_val_study,
)
from embadapt.sampling import LabelMarginal, sample_realistic
from embadapt.solver import (
    RegularizerConfig,
    objective_full,
    objective_g1,
    objective_g2,
    sstext_plus_solve,
    sstext_solve,
)
from embadapt.synth import SynthConfig

from helpers import (
    empty_support,
    fd_grads,
    grad_rel_err,
    make_texts,
    random_support,
    unit_rows,
)
from test_sampling import make_pool


def check(criterion: str, ok: bool, detail: str):
    line = f"{criterion} {'PASS' if ok else 'FAIL'} - {detail}"
    print(line)
    assert ok, line


# ---------------------------------------------------------------------------
# Default synthetic suite shared by A7-A11 and A13
# ---------------------------------------------------------------------------

SUITE_SYNTH = SynthConfig(num_classes=10, dim=64, n_train=2000, n_test=2000,
                          class_sep=0.6, text_noise=0.4, imbalance_ratio=10.0,
                          seed=11)
SUITE_TEMPERATURE = 0.15
SUITE_SHOTS = (1, 2, 4, 8, 16)
SUITE_SEEDS = 20


def suite_config(out_dir) -> BenchConfig:
    adapters = (
        AdapterSpec(method="zero_shot"),
        AdapterSpec(method="zslp"),
        AdapterSpec(method="sstext_plus"),
        AdapterSpec(method="sstext_plus", name="sstext_plus_norepel", repel="off"),
    ) + lambda_ablation_adapters()[:3]
    return BenchConfig(tasks=(TaskConfig(name="synth", synth=SUITE_SYNTH),),
                       adapters=adapters, scenarios=("standard", "realistic"),
                       shots=SUITE_SHOTS, seeds=SUITE_SEEDS, global_seed=0,
                       temperature=SUITE_TEMPERATURE, output_dir=out_dir)


@pytest.fixture(scope="session")
def suite_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("suite")
    t0 = time.perf_counter()
    report = run_benchmark(suite_config(out))
    elapsed = time.perf_counter() - t0
    aggs = report.aggregates()

    def mean(method, scenario, shots):
        return aggs[("synth", method, scenario, shots)].mean

    return report, out, elapsed, mean


def random_solver_instance(gen, c_max=5, d_max=16, n_max=20):
    c = int(gen.integers(2, c_max + 1))
    d = int(gen.integers(2, d_max + 1))
    texts = make_texts(gen, c, d, temperature=float(gen.uniform(0.05, 1.0)))
    counts = gen.integers(0, max(2, n_max // c) + 1, size=c)
    if counts.sum() == 0:
        counts[int(gen.integers(0, c))] = 1
    support = random_support(gen, c, d, counts)
    lam = gen.uniform(0.1, 10.0, size=c) / texts.temperature
    return support, texts, lam


def test_a1_solver_optimality():
    gen = np.random.Generator(np.random.PCG64(101))
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        support, texts, lam = random_solver_instance(gen)
        head = sstext_solve(support, texts, lam)
        w = head.weights
        h = 1e-5
        for i in range(w.shape[0]):
            for j in range(w.shape[1]):
                wp, wm = w.copy(), w.copy()
                wp[i, j] += h
                wm[i, j] -= h
                g = (objective_g1(wp, support, texts, lam)
                     - objective_g1(wm, support, texts, lam)) / (2 * h)
                worst = max(worst, abs(g))
    elapsed = time.perf_counter() - t0
    check("A1", worst <= 1e-4 and elapsed < 10.0,
          f"grad inf-norm max {worst:.3g} (tol 1e-4), runtime {elapsed:.1f}s (< 10s)")


def test_a2_objective_split_identity():
    gen = np.random.Generator(np.random.PCG64(102))
    worst = 0.0
    for _ in range(100):
        support, texts, lam = random_solver_instance(gen)
        w = unit_rows(gen, texts.num_classes, texts.dim) * gen.uniform(0.3, 3.0)
        full = objective_full(w, support, texts, lam)
        split = objective_g1(w, support, texts, lam) + objective_g2(w, support, texts)
        worst = max(worst, abs(full - split))
    check("A2", worst <= 1e-9, f"max |g1 + g2 - objective| = {worst:.3g} (tol 1e-9)")


def test_a3_text_fallback():
    gen = np.random.Generator(np.random.PCG64(103))
    bit_exact = True
    for _ in range(20):
        c, d = int(gen.integers(3, 7)), int(gen.integers(4, 24))
        texts = make_texts(gen, c, d)
        counts = gen.integers(0, 4, size=c)
        counts[int(gen.integers(0, c))] = 0  # force at least one missing class
        if counts.sum() == 0:
            counts[0] = 1
        support = random_support(gen, c, d, counts)
        head = sstext_plus_solve(support, texts, RegularizerConfig(repel="off"))
        for cls in np.flatnonzero(counts == 0):
            bit_exact &= bool(np.array_equal(head.weights[cls], texts.prototypes[cls]))

    texts = make_texts(gen, 6, 32)
    head = sstext_plus_solve(empty_support(6, 32), texts, RegularizerConfig(repel="off"))
    pts = EmbeddingTable.create(unit_rows(gen, 1000, 32).astype(np.float32),
                                np.zeros(1000, dtype=np.int64), 6)
    _, a = predict(pts, head)
    _, b = predict(pts, build_zeroshot_head(texts))
    agreement = float(np.mean(a == b))
    check("A3", bit_exact and agreement == 1.0,
          f"missing-class rows bit-exact: {bit_exact}; "
          f"empty-support argmax agreement {agreement:.1%} (need 100%)")


def test_a4_zero_shot_limit():
    gen = np.random.Generator(np.random.PCG64(104))
    texts = make_texts(gen, 8, 48, temperature=0.04)
    support = random_support(gen, 8, 48, [3, 1, 0, 5, 2, 0, 4, 1])
    head = sstext_solve(support, texts, np.full(8, 1e6 / texts.temperature))
    pts = EmbeddingTable.create(unit_rows(gen, 1000, 48).astype(np.float32),
                                np.zeros(1000, dtype=np.int64), 8)
    _, a = predict(pts, head)
    _, b = predict(pts, build_zeroshot_head(texts))
    agreement = float(np.mean(a == b))
    check("A4", agreement == 1.0, f"argmax agreement {agreement:.1%} on 1000 points")


def test_a5_gradient_correctness():
    gen = np.random.Generator(np.random.PCG64(105))
    worst = {}
    for trial in range(3):
        c = int(gen.integers(2, 5))
        d = int(gen.integers(3, 9))
        counts = gen.integers(1, max(2, 8 // c) + 1, size=c)  # all classes present
        texts = make_texts(gen, c, d, temperature=0.5)
        support = random_support(gen, c, d, counts)
        v = support.embeddings.vectors.astype(np.float64)
        labels = support.embeddings.labels
        k = support.shot_counts
        protos = texts.prototypes
        zs = build_zeroshot_head(texts)
        w0 = unit_rows(gen, c, d)
        cfg = TrainConfig()
        closures = {
            "zslp": (_linear_loss_fn(v, labels, k, 0.5, cfg), [w0.copy()]),
            "clap": (_linear_loss_fn(v, labels, k, 0.5, cfg,
                                     lam=gen.uniform(0.1, 1.0, c), protos=protos),
                     [w0.copy()]),
            "taskres": (_taskres_loss_fn(v, labels, k, 0.5, protos, 1.0, cfg),
                        [0.2 * gen.standard_normal((c, d))]),
            "crossmodal": (_linear_loss_fn(np.concatenate([v, protos]),
                                           np.concatenate([labels, np.arange(c)]),
                                           k + 1, 0.5, cfg), [w0.copy()]),
            "tip_ft": (_tip_loss_fn(v, labels, k, zs.logits(v), _one_hot(labels, c),
                                    1.0, 1.0, cfg), [unit_rows(gen, v.shape[0], d)]),
            "clip_adapter": (_clip_adapter_loss_fn(v, labels, k, protos, 0.5, 0.2, cfg),
                             [gen.uniform(-1, 1, (d, max(1, d // 4))) / np.sqrt(d),
                              0.1 * gen.standard_normal((max(1, d // 4), d))]),
            "zslp_weighted_ce": (_linear_loss_fn(v, labels, k, 0.5,
                                                 TrainConfig(loss="weighted_ce")),
                                 [w0.copy()]),
            "zslp_ldam": (_linear_loss_fn(v, labels, k, 0.5, TrainConfig(loss="ldam")),
                          [w0.copy()]),
        }
        for name, (fn, params) in closures.items():
            _, analytic = fn(params)
            fd = fd_grads(fn, params, h=1e-5)
            err = grad_rel_err(analytic, fd)
            worst[name] = max(worst.get(name, 0.0), err)
    bad = {k: v for k, v in worst.items() if v > 1e-4}
    detail = ", ".join(f"{k}={v:.2g}" for k, v in sorted(worst.items()))
    check("A5", not bad, f"max relative gradient errors (tol 1e-4): {detail}")


def test_a6_sampler_statistics():
    m = LabelMarginal.create(np.array([0.4, 0.3, 0.15, 0.1, 0.05]))
    pool = make_pool([400, 300, 150, 100, 60], dim=4, seed=106)
    shots, reps = 3, 10_000
    n = shots * 5
    totals = np.zeros(5)
    missing_counts = np.zeros(reps)
    for seed in range(reps):
        s = sample_realistic(pool, shots, m, seed=seed)
        totals += s.shot_counts
        missing_counts[seed] = np.sum(s.shot_counts == 0)
    freq = totals / (reps * n)
    freq_err = float(np.max(np.abs(freq - m.m)))
    expected_missing = float(np.sum((1 - m.m) ** n))
    sigma = float(np.sqrt(np.sum((1 - m.m) ** n * (1 - (1 - m.m) ** n)) / reps))
    miss_err = abs(float(missing_counts.mean()) - expected_missing)
    check("A6", freq_err <= 0.02 and miss_err <= 3 * sigma,
          f"per-class freq err {freq_err:.4f} (tol 0.02); mean missing "
          f"{missing_counts.mean():.4f} vs {expected_missing:.4f} "
          f"(band 3*sigma = {3 * sigma:.4f})")


def test_a7_synthetic_trend(suite_run):
    _, _, elapsed, mean = suite_run
    a_ok = all(mean("zslp", "realistic", k) < mean("zslp", "standard", k)
               for k in SUITE_SHOTS)
    a_detail = ", ".join(
        f"K{k}:{mean('zslp', 'realistic', k) - mean('zslp', 'standard', k):+.4f}"
        for k in SUITE_SHOTS)
    # degradation (standard minus realistic) must be strictly smaller for the
    # adaptive solver than for the vanilla probe
    b_ok = all((mean("sstext_plus", "standard", k) - mean("sstext_plus", "realistic", k))
               < (mean("zslp", "standard", k) - mean("zslp", "realistic", k))
               for k in (1, 2, 4))
    c_ok = all(mean("sstext_plus", s, k) >= mean("zero_shot", s, k)
               for s in ("standard", "realistic") for k in SUITE_SHOTS)
    check("A7", a_ok and b_ok and c_ok and elapsed < 900.0,
          f"(a) zslp realistic-standard deltas [{a_detail}] all negative: {a_ok}; "
          f"(b) adaptive degrades less at K=1,2,4: {b_ok}; "
          f"(c) adaptive >= zero-shot everywhere: {c_ok}; "
          f"sweep runtime {elapsed:.0f}s (< 900s)")


def test_a8_efficiency(suite_run):
    report, _, _, _ = suite_run
    ratio = fit_time_ratio(report, "zslp", "sstext_plus", shots=16, scenario="standard")
    check("A8", ratio >= 10.0, f"median fit-time ratio zslp/sstext_plus at K=16: "
                               f"{ratio:.0f}x (need >= 10x)")


def test_a9_repel_ablation(suite_run):
    _, _, _, mean = suite_run
    with_repel = mean("sstext_plus", "realistic", 16)
    without = mean("sstext_plus_norepel", "realistic", 16)
    check("A9", with_repel >= without,
          f"K=16 realistic: repel {100 * with_repel:.2f} vs off {100 * without:.2f} "
          f"({100 * (with_repel - without):+.2f})")


def test_a10_lambda_ablation_shape(suite_run):
    _, _, _, mean = suite_run
    margins = {}
    ok = True
    for k in (1, 2):
        adaptive = mean("sstext_plus", "realistic", k)
        for scale in ("0.1", "1", "10"):
            margin = adaptive - mean(f"sstext_lam{scale}", "realistic", k)
            margins[f"K{k}/lam{scale}"] = margin
            ok &= margin >= 0
    detail = ", ".join(f"{k}:{v:+.4f}" for k, v in margins.items())
    check("A10", ok, f"adaptive-minus-fixed margins {detail} (all must be >= 0)")


def test_a11_validation_study_direction():
    cfg = BenchConfig(tasks=(TaskConfig(name="synth", synth=SUITE_SYNTH),),
                      adapters=(AdapterSpec(method="zslp"),),
                      seeds=SUITE_SEEDS, global_seed=0, temperature=SUITE_TEMPERATURE,
                      output_dir="unused",
                      val_study=ValStudyConfig(shots=(2, 4, 8)))
    summary = run_val_study(cfg)
    a = summary["model_selection_mean_aca"]
    b = summary["combined_training_mean_aca"]
    check("A11", b >= a,
          f"combined-2K training {100 * b:.2f} vs model selection {100 * a:.2f} "
          f"({100 * (b - a):+.2f})")


def test_a12_metric_oracle():
    from test_evaluation import confusion_matrix_oracle

    gen = np.random.Generator(np.random.PCG64(112))
    worst = 0.0
    for _ in range(1000):
        c = int(gen.integers(2, 8))
        n = int(gen.integers(1, 60))
        y_true = gen.integers(0, c, n)
        y_pred = gen.integers(0, c, n)
        aca, _ = balanced_accuracy(y_true, y_pred, c)
        want = confusion_matrix_oracle(y_true.tolist(), y_pred.tolist(), c)
        worst = max(worst, abs(aca - want))
    check("A12", worst <= 1e-12, f"max |aca - confusion-matrix oracle| = {worst:.3g}")


def test_a13_determinism(suite_run, tmp_path_factory):
    _, out, _, _ = suite_run
    second = tmp_path_factory.mktemp("suite_repeat")
    run_benchmark(suite_config(second))
    first_bytes = (out / REPORT_FILE).read_bytes()
    second_bytes = (second / REPORT_FILE).read_bytes()
    check("A13", first_bytes == second_bytes,
          f"report files byte-identical across reruns "
          f"({len(first_bytes)} bytes each)")
