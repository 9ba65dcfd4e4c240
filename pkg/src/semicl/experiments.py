"""Experiment orchestration shared by the CLI commands.

One "run" = build data for a seed, split it, hide train labels down to the
label ratio, train under a regime/ablation, and evaluate on the test split.
All output files are reproducible byte-for-byte from (config, seed):
timestamped notes go to a separate run.log sidecar, and every float is
written with repr.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from pathlib import Path

from .config import ExperimentConfig
from .data import (
    hide_train_labels,
    labeled_subset_hash,
    make_split,
    split_plan_hash,
    write_csv,
)
from .metrics import METRIC_NAMES, EvalReport
from .nn import EncoderClassifier, save_checkpoint
from .train import TrainTrace, fit_end_to_end, fit_two_stage

logger = logging.getLogger(__name__)


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


@dataclass
class RunResult:
    seed: int
    regime: str
    ablation: str
    label_ratio: float
    model: EncoderClassifier
    trace: TrainTrace
    metrics: dict[str, float]
    split_hash: str
    labeled_hash: str


def prepare_data(exp: ExperimentConfig, seed: int,
                 label_ratio: float | None = None,
                 pattern: str | None = None):
    """Dataset + split + hidden labels for one seed."""
    dataset = exp.build_dataset(seed)
    pattern = pattern or exp["split.pattern"]
    plan = make_split(dataset, pattern, exp.split_params(), seed)
    ratio = exp["data.label_ratio"] if label_ratio is None else label_ratio
    masked = hide_train_labels(dataset, plan, ratio, seed)
    return masked, plan


def run_single(exp: ExperimentConfig, seed: int, *, regime: str | None = None,
               ablation: str | None = None, label_ratio: float | None = None,
               pattern: str | None = None) -> RunResult:
    dataset, plan = prepare_data(exp, seed, label_ratio=label_ratio, pattern=pattern)
    cfg = exp.train_config(seed, regime=regime, ablation=ablation)
    model = EncoderClassifier(exp.encoder_config(dataset.channels), dataset.num_classes, seed=seed)
    if cfg.regime == "end_to_end":
        model, trace = fit_end_to_end(model, dataset, plan, cfg)
    else:
        model, trace = fit_two_stage(model, dataset, plan, cfg)
    return RunResult(
        seed=seed,
        regime=cfg.regime,
        ablation=cfg.ablation,
        label_ratio=dataset.label_ratio,
        model=model,
        trace=trace,
        metrics=trace.records[-1].val,
        split_hash=split_plan_hash(plan),
        labeled_hash=labeled_subset_hash(dataset, plan),
    )


# ---------------------------------------------------------------------------
# report writers
# ---------------------------------------------------------------------------

def write_report_csv(path, rows: list[tuple[str, dict[str, float]]]) -> None:
    """Rows of (label, metric dict) -> CSV with one metric column per name."""
    lines = ["seed," + ",".join(METRIC_NAMES)]
    for label, metrics in rows:
        lines.append(label + "," + ",".join(_fmt(metrics[m]) for m in METRIC_NAMES))
    Path(path).write_text("\n".join(lines) + "\n")


def aggregate_rows(results: list[RunResult]) -> list[tuple[str, dict[str, float]]]:
    report = EvalReport()
    rows = []
    for r in results:
        report.add(r.metrics)
        rows.append((str(r.seed), r.metrics))
    rows.append(("mean", report.mean()))
    rows.append(("std", report.std()))
    return rows


class RunLog:
    """Sidecar log for timestamps and notes, kept out of deterministic files."""

    def __init__(self, out_dir: Path):
        self.path = out_dir / "run.log"
        self.lines: list[str] = []

    def note(self, msg: str) -> None:
        stamp = time.strftime("%Y-%m-%d %H:%M:%S")
        self.lines.append(f"[{stamp}] {msg}")
        logger.info(msg)

    def flush(self) -> None:
        self.path.write_text("\n".join(self.lines) + "\n")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_train(exp: ExperimentConfig, out_dir, seeds: list[int],
              pattern: str | None = None, label_ratio: float | None = None) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log = RunLog(out_dir)
    results = []
    for seed in seeds:
        log.note(f"training seed {seed} ({exp['train.regime']}, ablation {exp['train.ablation']})")
        r = run_single(exp, seed, label_ratio=label_ratio, pattern=pattern)
        log.note(f"seed {seed}: split {r.split_hash}, labeled subset {r.labeled_hash}, "
                 f"final f1 {r.metrics['f1']:.4f}")
        r.trace.to_csv(out_dir / f"trace_seed{seed}.csv")
        save_checkpoint(r.model, out_dir / f"model_seed{seed}.ckpt")
        results.append(r)
    # Canonical single-run artifact names point at the first seed.
    results[0].trace.to_csv(out_dir / "trace.csv")
    save_checkpoint(results[0].model, out_dir / "model.ckpt")
    write_report_csv(out_dir / "report.csv", aggregate_rows(results))
    log.note(f"wrote report for {len(results)} seed(s) to {out_dir / 'report.csv'}")
    log.flush()


def cmd_eval(exp: ExperimentConfig, out_dir, seed: int, model_path) -> None:
    from .nn import load_checkpoint
    from .train import evaluate
    from .data import zscore_by_train

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = load_checkpoint(model_path)
    dataset, plan = prepare_data(exp, seed)
    metrics = evaluate(model, zscore_by_train(dataset, plan), plan.test_indices)
    write_report_csv(out_dir / "report.csv", [(str(seed), metrics)])


def cmd_ablate(exp: ExperimentConfig, out_dir, seeds: list[int],
               include_two_stage_ls: bool = False) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log = RunLog(out_dir)
    modes = [("end_to_end", "full"), ("end_to_end", "no_Lu"), ("end_to_end", "no_Ls")]
    if include_two_stage_ls:
        modes.append(("two_stage", "two_stage_with_Ls"))
    lines = ["ablation,seed," + ",".join(METRIC_NAMES) + ",split_hash,labeled_hash"]
    per_mode: dict[str, EvalReport] = {}
    for regime, ablation in modes:
        for seed in seeds:
            log.note(f"ablation {ablation} seed {seed}")
            r = run_single(exp, seed, regime=regime, ablation=ablation)
            lines.append(
                f"{ablation},{seed},"
                + ",".join(_fmt(r.metrics[m]) for m in METRIC_NAMES)
                + f",{r.split_hash},{r.labeled_hash}"
            )
            per_mode.setdefault(ablation, EvalReport()).add(r.metrics)
    (out_dir / "ablation.csv").write_text("\n".join(lines) + "\n")
    summary = ["ablation,stat," + ",".join(METRIC_NAMES)]
    for ablation, report in per_mode.items():
        summary.append(f"{ablation},mean," + ",".join(_fmt(report.mean()[m]) for m in METRIC_NAMES))
        summary.append(f"{ablation},std," + ",".join(_fmt(report.std()[m]) for m in METRIC_NAMES))
    (out_dir / "ablation_summary.csv").write_text("\n".join(summary) + "\n")
    log.note("ablation table written")
    log.flush()


def cmd_compare_regimes(exp: ExperimentConfig, out_dir, seeds: list[int],
                        ratios: list[float]) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log = RunLog(out_dir)
    lines = ["ratio,regime,seed," + ",".join(METRIC_NAMES) + ",labeled_hash"]
    summary_rows = []
    for ratio in ratios:
        for regime in ("end_to_end", "two_stage"):
            report = EvalReport()
            hashes = []
            for seed in seeds:
                log.note(f"ratio {ratio} regime {regime} seed {seed}")
                r = run_single(exp, seed, regime=regime, ablation="full", label_ratio=ratio)
                lines.append(
                    f"{_fmt(ratio)},{regime},{seed},"
                    + ",".join(_fmt(r.metrics[m]) for m in METRIC_NAMES)
                    + f",{r.labeled_hash}"
                )
                report.add(r.metrics)
                hashes.append(r.labeled_hash)
            summary_rows.append((ratio, regime, report))
            log.note(f"ratio {ratio} {regime}: labeled hashes {hashes}")
    (out_dir / "compare.csv").write_text("\n".join(lines) + "\n")
    summary = ["ratio,regime,stat," + ",".join(METRIC_NAMES)]
    for ratio, regime, report in summary_rows:
        summary.append(f"{_fmt(ratio)},{regime},mean,"
                       + ",".join(_fmt(report.mean()[m]) for m in METRIC_NAMES))
        summary.append(f"{_fmt(ratio)},{regime},std,"
                       + ",".join(_fmt(report.std()[m]) for m in METRIC_NAMES))
    (out_dir / "compare_summary.csv").write_text("\n".join(summary) + "\n")
    log.note("regime comparison written")
    log.flush()


def cmd_synth_gen(exp: ExperimentConfig, out_dir, seed: int) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = exp.build_dataset(seed)
    write_csv(dataset, out_dir / "data.csv", out_dir / "manifest.txt")
