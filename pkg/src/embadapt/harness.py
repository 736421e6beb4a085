"""End-to-end sweep harness: scenario grids, incremental resume-safe
records, deterministic report emission, the validation-set study, and
table/curve rendering.

Every sweep cell derives its RNG solely from
hash(global_seed, task, scenario, K, repetition), so results are
independent of execution order and worker count.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from threading import Lock

import numpy as np

from .adapters import AdapterSpec, TrainConfig, fit_adapter, fit_probe
from .config import BenchConfig, TaskConfig, ValStudyConfig
from .core import EmbeddingTable, TextPrototypeSet, predict
from .errors import EmptyReport, InsufficientClassSamples, InsufficientPool
from .evaluation import EvalReport, RunRecord, balanced_accuracy
from .interchange import load_embeddings, load_text_prototypes
from .sampling import LabelMarginal, SupportSet, derive_seed, estimate_marginal, sample_support
from .synth import generate_task

RECORDS_FILE = "records.jsonl"
REPORT_FILE = "report.json"


@dataclass(frozen=True)
class LoadedTask:
    name: str
    train: EmbeddingTable
    test: EmbeddingTable
    texts: TextPrototypeSet
    marginal: LabelMarginal


def load_task(task: TaskConfig, temperature_override: float | None = None) -> LoadedTask:
    if task.synth is not None:
        train, test, texts, _ = generate_task(task.synth)
    else:
        train, _, _ = load_embeddings(task.train_path)
        test, _, _ = load_embeddings(task.test_path)
        texts, _ = load_text_prototypes(task.text_path)
    if temperature_override is not None:
        texts = TextPrototypeSet.from_texts(
            texts.per_class_texts, temperature_override, texts.renormalized)
    marginal = estimate_marginal(train.labels, train.num_classes)
    return LoadedTask(task.name, train, test, texts, marginal)


def lambda_ablation_adapters(repel: str = "repel_plus") -> tuple:
    """Text-regularization grid: fixed lam in {0.1, 1, 10} / temperature,
    plus the class-adaptive variant."""
    fixed = tuple(
        AdapterSpec(method="sstext", name=f"sstext_lam{scale:g}", lam_scale=scale, repel=repel)
        for scale in (0.1, 1.0, 10.0)
    )
    return fixed + (AdapterSpec(method="sstext_plus", name="sstext_plus", repel=repel),)


def run_cell(task: LoadedTask, adapter: AdapterSpec, support: SupportSet,
             seed_index: int) -> RunRecord:
    """Fit one adapter on one support draw and score the full test split.

    Fit wall-clock covers the fit step only. Failures become failed
    records, never sweep aborts.
    """
    flags: tuple = ()
    try:
        t0 = time.perf_counter()
        fit = fit_adapter(adapter, support, task.texts)
        wallclock = time.perf_counter() - t0
        _, pred = predict(task.test, fit.predictor)
        aca, recall = balanced_accuracy(task.test.labels, pred, task.test.num_classes)
        flags = fit.flags
        if np.any(np.isnan(recall)):
            flags = flags + ("missing_test_class",)
        return RunRecord(
            task_id=task.name, method=adapter.display_name, scenario=support.scenario,
            shots=int(support.n // support.num_classes), seed=seed_index, aca=aca,
            fit_wallclock=wallclock, per_class_recall=tuple(float(r) for r in recall),
            flags=flags)
    except Exception as exc:  # recorded, not fatal: sweeps must complete
        return RunRecord(
            task_id=task.name, method=adapter.display_name, scenario=support.scenario,
            shots=int(support.n // support.num_classes), seed=seed_index, aca=None,
            fit_wallclock=0.0, per_class_recall=None,
            flags=("failed:" + type(exc).__name__, str(exc)))


def _load_existing_records(path: Path) -> list[RunRecord]:
    if not path.exists():
        return []
    records = []
    lines = path.read_text().splitlines()
    for i, line in enumerate(lines):
        if not line.strip():
            continue
        try:
            records.append(RunRecord.from_json(json.loads(line)))
        except (json.JSONDecodeError, KeyError):
            if i == len(lines) - 1:
                break  # torn tail from an interrupted write; redo that cell
            raise
    return records


def _report_payload(report: EvalReport, global_seed: int) -> dict:
    records = sorted((r for r in report.records), key=lambda r: r.key())
    aggs = EvalReport(records).aggregates()
    groups = [
        {
            "task": task, "method": method, "scenario": scenario, "shots": shots,
            "n": st.n, "mean_aca": st.mean, "std": st.std,
            "ci95_lo": st.ci95[0], "ci95_hi": st.ci95[1], "acas": list(st.values),
        }
        for (task, method, scenario, shots), st in aggs.items()
    ]
    failed = sorted(r.key() for r in records if r.aca is None)
    return {
        "global_seed": global_seed,
        "groups": groups,
        "failed_cells": ["/".join(str(p) for p in key) for key in failed],
    }


def write_report(report: EvalReport, out_dir: Path, global_seed: int) -> Path:
    """Deterministic aggregate report: derived from record contents only
    (wall-clock timing stays in records.jsonl)."""
    path = Path(out_dir) / REPORT_FILE
    payload = _report_payload(report, global_seed)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return path


def run_benchmark(cfg: BenchConfig) -> EvalReport:
    """Full sweep over task x scenario x K x seed x adapter.

    Records stream to records.jsonl as cells finish; rerunning skips
    completed (task, method, scenario, K, seed) cells, so interrupted
    sweeps resume without duplicates.
    """
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    records_path = out / RECORDS_FILE
    existing = _load_existing_records(records_path)
    done = {r.key() for r in existing}

    tasks = [load_task(t, cfg.temperature) for t in cfg.tasks]
    cells = [
        (task, scenario, shots, seed_index)
        for task in tasks
        for scenario in cfg.scenarios
        for shots in cfg.shots
        for seed_index in range(cfg.seeds)
    ]

    write_lock = Lock()
    new_records: list[RunRecord] = []

    def run_one(cell) -> list[RunRecord]:
        task, scenario, shots, seed_index = cell
        pending = [a for a in cfg.adapters
                   if (task.name, a.display_name, scenario, shots, seed_index) not in done]
        if not pending:
            return []
        run_seed = derive_seed(cfg.global_seed, task.name, scenario, shots, seed_index)
        try:
            support = sample_support(task.train, scenario, shots, task.marginal, run_seed)
        except Exception as exc:
            return [RunRecord(task_id=task.name, method=a.display_name, scenario=scenario,
                              shots=shots, seed=seed_index, aca=None, fit_wallclock=0.0,
                              flags=("failed:" + type(exc).__name__, str(exc)))
                    for a in pending]
        return [run_cell(task, a, support, seed_index) for a in pending]

    def emit(batch: list[RunRecord]):
        if not batch:
            return
        with write_lock:
            with open(records_path, "a") as fh:
                for rec in batch:
                    fh.write(json.dumps(rec.to_json(), sort_keys=True) + "\n")
                    new_records.append(rec)

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            for batch in pool.map(run_one, cells):
                emit(batch)
    else:
        for cell in cells:
            emit(run_one(cell))

    report = EvalReport(existing + new_records)
    write_report(report, out, cfg.global_seed)
    return report


def load_report(out_dir) -> EvalReport:
    return EvalReport(_load_existing_records(Path(out_dir) / RECORDS_FILE))


def fit_time_ratio(report: EvalReport, slow_method: str, fast_method: str,
                   shots: int, scenario: str = "standard") -> float:
    """Median fit wall-clock ratio slow/fast at one K (efficiency analysis)."""
    def med(method):
        vals = [r.fit_wallclock for r in report.records
                if r.method == method and r.shots == shots
                and r.scenario == scenario and r.aca is not None]
        if not vals:
            raise EmptyReport(f"no records for {method} at K={shots} ({scenario})")
        return float(np.median(vals))

    return med(slow_method) / max(med(fast_method), 1e-12)


# ---------------------------------------------------------------------------
# Validation-set usage study
# ---------------------------------------------------------------------------

def _split_standard_support(pool: EmbeddingTable, shots: int, seed: int
                            ) -> tuple[SupportSet, SupportSet, SupportSet]:
    """Sample 2K shots per class, split class-wise into K train + K val."""
    from .sampling import sample_standard

    try:
        full = sample_standard(pool, 2 * shots, seed)
    except InsufficientClassSamples as exc:
        raise InsufficientPool(str(exc)) from exc
    c = pool.num_classes
    idx = full.indices.reshape(c, 2 * shots)  # class-major blocks from the sampler
    train_idx = idx[:, :shots].reshape(-1)
    val_idx = idx[:, shots:].reshape(-1)
    counts = np.full(c, shots, dtype=np.int64)
    train = SupportSet(pool.take(train_idx), counts, "standard", seed, train_idx)
    val = SupportSet(pool.take(val_idx), counts, "standard", seed, val_idx)
    return full, train, val


def run_val_study(cfg: BenchConfig) -> dict:
    """Model selection on a K-shot validation set (arm A) versus training
    validation-free on the combined 2K shots (arm B), using the vanilla
    linear probe. Returns per-(task, K) means plus the overall summary."""
    vs: ValStudyConfig = cfg.val_study
    tasks = [load_task(t, cfg.temperature) for t in cfg.tasks]
    rows = []
    for task in tasks:
        for shots in vs.shots:
            a_vals, b_vals = [], []
            for seed_index in range(cfg.seeds):
                run_seed = derive_seed(cfg.global_seed, task.name, "val_study", shots, seed_index)
                full, train_half, val_half = _split_standard_support(task.train, shots, run_seed)

                best = None
                for lr in vs.grid_lrs:
                    for steps in vs.grid_steps:
                        spec = AdapterSpec(method="zslp",
                                           train=TrainConfig(steps=steps, lr0=lr))
                        fit = fit_probe(spec, train_half, task.texts)
                        _, val_pred = predict(val_half.embeddings, fit.predictor)
                        val_aca, _ = balanced_accuracy(val_half.embeddings.labels, val_pred,
                                                       task.train.num_classes)
                        if best is None or val_aca > best[0]:
                            best = (val_aca, fit.predictor)
                _, pred = predict(task.test, best[1])
                aca_a, _ = balanced_accuracy(task.test.labels, pred, task.test.num_classes)

                fit_b = fit_probe(AdapterSpec(method="zslp"), full, task.texts)
                _, pred = predict(task.test, fit_b.predictor)
                aca_b, _ = balanced_accuracy(task.test.labels, pred, task.test.num_classes)
                a_vals.append(aca_a)
                b_vals.append(aca_b)
            rows.append({
                "task": task.name, "shots": shots, "seeds": cfg.seeds,
                "model_selection_mean_aca": float(np.mean(a_vals)),
                "combined_training_mean_aca": float(np.mean(b_vals)),
            })
    summary = {
        "rows": rows,
        "model_selection_mean_aca": float(np.mean([r["model_selection_mean_aca"] for r in rows])),
        "combined_training_mean_aca": float(np.mean([r["combined_training_mean_aca"] for r in rows])),
        "grid_lrs": list(vs.grid_lrs),
        "grid_steps": list(vs.grid_steps),
    }
    return summary


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def _pct(x: float) -> str:
    return f"{100.0 * x:.1f}"


def render_report(report: EvalReport, fmt: str, out_dir) -> list[Path]:
    """Emit aggregate tables (csv / json / markdown) plus the per-(K,
    scenario) curve CSV used for shot-curve plots."""
    if not report.records:
        raise EmptyReport("no records to render")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    aggs = EvalReport(sorted(report.records, key=lambda r: r.key())).aggregates()
    written = []

    if fmt == "json":
        path = out / "aggregates.json"
        payload = [
            {"task": t, "method": m, "scenario": s, "shots": k, "n": st.n,
             "mean_aca": st.mean, "std": st.std, "ci95_lo": st.ci95[0], "ci95_hi": st.ci95[1]}
            for (t, m, s, k), st in aggs.items()
        ]
        path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
        return [path]

    if fmt == "csv":
        path = out / "aggregates.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["task", "method", "scenario", "shots", "n_seeds",
                        "mean_aca", "std", "ci95_lo", "ci95_hi"])
            for (t, m, s, k), st in aggs.items():
                w.writerow([t, m, s, k, st.n, repr(st.mean), repr(st.std),
                            repr(st.ci95[0]), repr(st.ci95[1])])
        written.append(path)
        curves = out / "curves.csv"
        with open(curves, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["task", "scenario", "shots", "method", "mean_aca"])
            for (t, m, s, k), st in sorted(aggs.items(), key=lambda kv: (kv[0][0], kv[0][2], kv[0][3], kv[0][1])):
                w.writerow([t, s, k, m, repr(st.mean)])
        written.append(curves)
        return written

    if fmt == "md":
        path = out / "tables.md"
        tasks = sorted({t for (t, _, _, _) in aggs})
        methods = sorted({m for (_, m, _, _) in aggs})
        scenarios = [s for s in ("standard", "relaxed", "realistic")
                     if any(sc == s for (_, _, sc, _) in aggs)]
        shot_values = sorted({k for (_, _, _, k) in aggs})
        lines = []
        for k in shot_values:
            lines.append(f"## K = {k}\n")
            header = ["method"]
            for s in scenarios:
                header += [f"{t} ({s})" for t in tasks] + [f"Avg ({s})"]
            lines.append("| " + " | ".join(header) + " |")
            lines.append("|" + "---|" * len(header))
            for m in methods:
                row = [m]
                for s in scenarios:
                    vals = []
                    for t in tasks:
                        st = aggs.get((t, m, s, k))
                        row.append(_pct(st.mean) if st else "-")
                        if st:
                            vals.append(st.mean)
                    row.append(_pct(float(np.mean(vals))) if vals else "-")
                lines.append("| " + " | ".join(row) + " |")
            lines.append("")
        path.write_text("\n".join(lines))
        return [path]

    raise ValueError(f"unknown report format {fmt!r}")
