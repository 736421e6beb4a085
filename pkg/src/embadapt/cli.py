"""``bench`` command line: sweeps, synthetic task export, the validation
study, and report rendering.

Exit codes: 0 full success, 2 partial (some failed cells), 1 config error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import load_config
from .errors import BenchmarkError, ConfigError
from .harness import load_report, render_report, run_benchmark, run_val_study
from .interchange import write_table, write_embeddings
from .synth import generate_task


def _cmd_run(args) -> int:
    cfg = load_config(args.config, args.out)
    report = run_benchmark(cfg)
    failed = [r for r in report.records if r.aca is None]
    total = len(report.records)
    print(f"completed {total - len(failed)}/{total} cells -> {cfg.output_dir}")
    return 2 if failed else 0


def _cmd_synth(args) -> int:
    cfg = load_config(args.config, args.out)
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    count = 0
    for task in cfg.tasks:
        if task.synth is None:
            continue
        train, test, texts, _ = generate_task(task.synth)
        tau = cfg.temperature or texts.temperature
        class_names = [f"class_{c:02d}" for c in range(train.num_classes)]
        base = {"task": task.name, "class_names": class_names,
                "source_model": "synthetic", "temperature": tau}
        write_table(out / f"{task.name}.train.vleb", train, tau,
                    {**base, "split": "train"})
        write_table(out / f"{task.name}.test.vleb", test, tau,
                    {**base, "split": "test"})
        text_rows = texts.per_class_texts
        import numpy as np

        vecs = np.concatenate([rows for rows in text_rows]).astype(np.float32)
        labels = np.concatenate([[c] * len(rows) for c, rows in enumerate(text_rows)])
        write_embeddings(out / f"{task.name}.text.vleb", vecs, labels,
                         train.num_classes, tau, {**base, "split": "text"})
        count += 1
        print(f"wrote {task.name} (train/test/text) to {out}")
    if count == 0:
        print("no synth tasks in config", file=sys.stderr)
        return 1
    return 0


def _cmd_val_study(args) -> int:
    cfg = load_config(args.config, args.out)
    summary = run_val_study(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "val_study.json"
    path.write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    print(f"{'task':<20} {'K':>3} {'model-selection':>16} {'combined-2K':>12}")
    for row in summary["rows"]:
        print(f"{row['task']:<20} {row['shots']:>3} "
              f"{100 * row['model_selection_mean_aca']:>16.1f} "
              f"{100 * row['combined_training_mean_aca']:>12.1f}")
    print(f"overall: model-selection {100 * summary['model_selection_mean_aca']:.1f} "
          f"vs combined-2K {100 * summary['combined_training_mean_aca']:.1f} -> {path}")
    return 0


def _cmd_report(args) -> int:
    report = load_report(args.indir)
    files = render_report(report, args.format, args.out or args.indir)
    for f in files:
        print(f"wrote {f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bench", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute the benchmark sweep from a config file")
    run.add_argument("--config", required=True)
    run.add_argument("--out", default=None, help="override output directory")
    run.set_defaults(fn=_cmd_run)

    synth = sub.add_parser("synth", help="emit synthetic tasks as interchange files")
    synth.add_argument("--config", required=True)
    synth.add_argument("--out", default=None)
    synth.set_defaults(fn=_cmd_synth)

    val = sub.add_parser("val-study", help="validation-set usage comparison")
    val.add_argument("--config", required=True)
    val.add_argument("--out", default=None)
    val.set_defaults(fn=_cmd_val_study)

    rep = sub.add_parser("report", help="render tables from an existing run directory")
    rep.add_argument("--in", dest="indir", required=True)
    rep.add_argument("--format", choices=("csv", "json", "md"), default="csv")
    rep.add_argument("--out", default=None)
    rep.set_defaults(fn=_cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except BenchmarkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
