"""Training loops: end-to-end hybrid training and the two-stage baseline.

Batch pairing: every optimization step draws one unlabeled and one labeled
batch; the smaller pool recycles (reshuffled) until the larger pool finishes
its epoch. All randomness (shuffling, augmentation) flows from the config
seed through named Philox streams, so a fixed seed fixes the entire trace.

When the unlabeled pool is empty or has a single sample (e.g. label ratio
1.0), the unsupervised loss is skipped with a logged warning. Non-finite
losses or gradients abort with the offending component named; nothing is
clipped.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import augment as aug
from . import losses as L
from .autodiff import Tape, slice_
from .data import SemiLabeledDataset, SplitPlan, zscore_by_train
from .errors import (
    ConfigError,
    ContractError,
    DegenerateLabelError,
    DivergenceError,
)
from .losses import LossWeights
from .metrics import compute_all
from .nn import EncoderClassifier
from .optim import make_optimizer
from .rng import stream

logger = logging.getLogger(__name__)

REGIMES = ("end_to_end", "two_stage")
ABLATIONS = ("full", "no_Lu", "no_Ls", "two_stage_with_Ls")

TRACE_HEADER = (
    "epoch,L_u,L_s,L_c,hybrid,val_accuracy,val_precision,val_recall,"
    "val_f1,val_auroc,val_auprc"
)


@dataclass(frozen=True)
class TrainConfig:
    regime: str = "end_to_end"
    ablation: str = "full"
    weights: LossWeights = field(default_factory=LossWeights)
    epochs: int = 30
    batch_size: int = 100
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    seed: int = 0
    pretrain_epochs: int = 30
    freeze_encoder: bool = False
    augment: aug.AugmentSpec = field(default_factory=aug.AugmentSpec)
    ntxent_denominator: str = "simclr"

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ConfigError(f"unknown regime {self.regime!r}; use one of {REGIMES}")
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"unknown ablation {self.ablation!r}; use one of {ABLATIONS}")
        if self.ablation == "two_stage_with_Ls" and self.regime != "two_stage":
            raise ConfigError("ablation two_stage_with_Ls requires regime two_stage")
        if self.ablation in ("no_Lu", "no_Ls") and self.regime != "end_to_end":
            raise ConfigError(f"ablation {self.ablation} requires regime end_to_end")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.pretrain_epochs < 0:
            raise ConfigError(f"pretrain_epochs must be >= 0, got {self.pretrain_epochs}")
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.ntxent_denominator not in L.DENOMINATOR_MODES:
            raise ConfigError(f"unknown ntxent_denominator {self.ntxent_denominator!r}")

    def effective_weights(self) -> LossWeights:
        """Loss weights with the ablation applied."""
        w = self.weights
        if self.ablation == "no_Lu":
            return replace(w, lambda1=0.0)
        if self.ablation == "no_Ls":
            return replace(w, lambda2=0.0)
        return w


@dataclass
class EpochRecord:
    epoch: int
    loss_u: float
    loss_s: float
    loss_c: float
    hybrid: float
    val: dict[str, float]

    def csv_row(self) -> str:
        vals = [self.epoch, self.loss_u, self.loss_s, self.loss_c, self.hybrid] + [
            self.val[k] for k in ("accuracy", "precision", "recall", "f1", "auroc", "auprc")
        ]
        return ",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in vals)


@dataclass
class TrainTrace:
    records: list[EpochRecord] = field(default_factory=list)

    def add(self, rec: EpochRecord) -> None:
        for name in ("loss_u", "loss_s", "loss_c", "hybrid"):
            if not math.isfinite(getattr(rec, name)):
                raise DivergenceError(f"non-finite {name} recorded at epoch {rec.epoch}")
        self.records.append(rec)

    def to_csv(self, path) -> None:
        lines = [TRACE_HEADER] + [r.csv_row() for r in self.records]
        Path(path).write_text("\n".join(lines) + "\n")


class _Cycler:
    """Endless shuffled batches over a pool; reshuffles on exhaustion."""

    def __init__(self, n: int, batch: int, rng: np.random.Generator):
        self.n = n
        self.batch = min(batch, n)
        self.rng = rng
        self.order = rng.permutation(n)
        self.pos = 0

    def draw(self) -> np.ndarray:
        out = []
        while len(out) < self.batch:
            if self.pos >= self.n:
                self.order = self.rng.permutation(self.n)
                self.pos = 0
            take = min(self.batch - len(out), self.n - self.pos)
            out.extend(self.order[self.pos: self.pos + take].tolist())
            self.pos += take
        return np.array(out, dtype=np.int64)

    @property
    def batches_per_epoch(self) -> int:
        return math.ceil(self.n / self.batch)


def _ensure_two_classes(idx: np.ndarray, labels: np.ndarray, order: np.ndarray) -> np.ndarray:
    """Swap the last drawn element for one with a different label if needed."""
    if np.unique(labels[idx]).size >= 2:
        return idx
    current = labels[idx[0]]
    for candidate in order:
        if labels[candidate] != current:
            idx = idx.copy()
            idx[-1] = candidate
            return idx
    return idx


def _check_finite(value: float, name: str) -> float:
    if not math.isfinite(value):
        raise DivergenceError(f"{name} is non-finite ({value})")
    return value


def _train_step(model: EncoderClassifier, optimizer, lw: LossWeights, cfg: TrainConfig,
                x_u: np.ndarray | None, x_l: np.ndarray | None, y_l: np.ndarray | None,
                aug_rng) -> dict[str, float | None]:
    """One optimizer step on the given batches; returns the component values."""
    use_u = x_u is not None
    use_l = x_l is not None
    if use_u and x_u.shape[0] < 2:
        raise ContractError(f"unlabeled batch needs >= 2 samples, got {x_u.shape[0]}")

    out: dict[str, float | None] = {"loss_u": None, "loss_s": None, "loss_c": None}
    with Tape() as tape:
        chunks = []
        if use_u:
            views_i, views_j = [], []
            for sample in x_u:
                vi, vj = aug.make_views(sample, cfg.augment, aug_rng)
                views_i.append(vi)
                views_j.append(vj)
            chunks.append(np.stack(views_i))
            chunks.append(np.stack(views_j))
        if use_l:
            chunks.append(x_l)
        z = model.encode(np.concatenate(chunks, axis=0))

        offset = 0
        loss_u = loss_s = loss_c = None
        if use_u:
            n = x_u.shape[0]
            zi = slice_(z, 0, offset, offset + n)
            zj = slice_(z, 0, offset + n, offset + 2 * n)
            offset += 2 * n
            loss_u = L.unsup_contrastive(zi, zj, lw.tau, denominator=cfg.ntxent_denominator)
            out["loss_u"] = _check_finite(loss_u.item(), "L_u")
        if use_l:
            zl = slice_(z, 0, offset, offset + x_l.shape[0])
            if lw.lambda2 > 0:
                loss_s = L.sup_contrastive(zl, y_l, lw.tau)
                out["loss_s"] = _check_finite(loss_s.item(), "L_s")
            if lw.lambda3 > 0:
                logits = model.classify(zl)
                loss_c = L.cross_entropy(logits, y_l)
                out["loss_c"] = _check_finite(loss_c.item(), "L_c")
        total = L.hybrid(loss_u, loss_s, loss_c, lw)
        out["hybrid"] = _check_finite(total.item(), "hybrid loss")

    optimizer.zero_grad()
    tape.backward(total)
    optimizer.step()
    return out


def step_end_to_end(model: EncoderClassifier, optimizer, batch_u: np.ndarray | None,
                    batch_l: np.ndarray | None, labels_l: np.ndarray | None,
                    cfg: TrainConfig, aug_rng) -> dict[str, float | None]:
    """One end-to-end step: optimize all parameters on the hybrid loss.

    Preconditions: batch_u has >= 2 samples or lambda1 == 0; batch_l spans
    >= 2 classes or lambda2 == 0; batch_l nonempty or lambda3 == 0.
    """
    lw = cfg.effective_weights()
    if lw.lambda1 == 0:
        batch_u = None
    if batch_u is not None and batch_u.shape[0] < 2:
        raise ContractError("batch_u needs >= 2 samples when lambda1 > 0")
    if lw.lambda2 == 0 and lw.lambda3 == 0:
        batch_l = None
    if batch_l is None and batch_u is None:
        raise ContractError("step has no active loss component")
    if batch_l is not None:
        labels_l = np.asarray(labels_l, dtype=np.int64)
        if lw.lambda2 > 0 and np.unique(labels_l).size < 2:
            raise DegenerateLabelError("batch_l must span >= 2 classes when lambda2 > 0")
        if labels_l.shape[0] < 1:
            raise ContractError("batch_l must be nonempty when lambda3 > 0")
    return _train_step(model, optimizer, lw, cfg, batch_u, batch_l, labels_l, aug_rng)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def predict(model: EncoderClassifier, values: np.ndarray, batch_size: int = 256):
    """Class scores (softmax of logits) and argmax predictions, tape-free."""
    scores = []
    for start in range(0, values.shape[0], batch_size):
        chunk = values[start: start + batch_size]
        logits = model.classify(model.encode(chunk)).data
        shifted = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        scores.append(e / e.sum(axis=1, keepdims=True))
    scores = np.concatenate(scores, axis=0)
    return scores, scores.argmax(axis=1)


def evaluate(model: EncoderClassifier, dataset: SemiLabeledDataset,
             indices) -> dict[str, float]:
    """Six-metric record over the labeled samples among `indices`."""
    rows = [dataset.samples[i] for i in indices if dataset.samples[i].is_labeled]
    if not rows:
        raise ContractError("no labeled samples to evaluate on")
    values = np.stack([s.values for s in rows])
    y_true = np.array([s.label for s in rows], dtype=np.int64)
    scores, y_pred = predict(model, values)
    return compute_all(y_true, y_pred, scores, dataset.num_classes)


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------

def _train_pools(dataset: SemiLabeledDataset, plan: SplitPlan):
    train = [dataset.samples[i] for i in plan.train_indices]
    labeled = [s for s in train if s.is_labeled]
    unlabeled = [s for s in train if not s.is_labeled]
    x_l = np.stack([s.values for s in labeled]) if labeled else None
    y_l = np.array([s.label for s in labeled], dtype=np.int64) if labeled else None
    x_u = np.stack([s.values for s in unlabeled]) if unlabeled else None
    return x_u, x_l, y_l


def fit_end_to_end(model: EncoderClassifier, dataset: SemiLabeledDataset,
                   plan: SplitPlan, cfg: TrainConfig):
    """Joint training of encoder and classifier on the hybrid loss."""
    ds = zscore_by_train(dataset, plan)
    x_u, x_l, y_l = _train_pools(ds, plan)
    lw = cfg.effective_weights()

    use_u = lw.lambda1 > 0
    if use_u and (x_u is None or x_u.shape[0] < 2):
        logger.warning("unsupervised pool has %d samples; skipping L_u",
                       0 if x_u is None else x_u.shape[0])
        use_u = False
    use_l = (lw.lambda2 > 0 or lw.lambda3 > 0)
    if use_l and x_l is None:
        raise ContractError("labeled pool is empty but lambda2/lambda3 are positive")
    if lw.lambda2 > 0 and np.unique(y_l).size < 2:
        raise DegenerateLabelError("labeled pool must span >= 2 classes for L_s")
    if not use_u and not use_l:
        raise ContractError("no active loss component for this configuration")

    optimizer = make_optimizer(cfg.optimizer, model.parameters(), cfg.learning_rate)
    shuffle_rng = stream(cfg.seed, "shuffle")
    aug_rng = stream(cfg.seed, "augment")

    cyc_u = _Cycler(x_u.shape[0], cfg.batch_size, shuffle_rng) if use_u else None
    cyc_l = _Cycler(x_l.shape[0], cfg.batch_size, shuffle_rng) if use_l else None
    steps = max(c.batches_per_epoch for c in (cyc_u, cyc_l) if c is not None)

    trace = TrainTrace()
    for epoch in range(1, cfg.epochs + 1):
        sums = {"loss_u": 0.0, "loss_s": 0.0, "loss_c": 0.0, "hybrid": 0.0}
        for step in range(steps):
            batch_u = x_u[cyc_u.draw()] if cyc_u is not None else None
            batch_l = labels = None
            if cyc_l is not None:
                idx = cyc_l.draw()
                if lw.lambda2 > 0:
                    idx = _ensure_two_classes(idx, y_l, cyc_l.order)
                batch_l, labels = x_l[idx], y_l[idx]
            try:
                parts = _train_step(model, optimizer, lw, cfg, batch_u, batch_l, labels, aug_rng)
            except DivergenceError as err:
                raise DivergenceError(f"epoch {epoch} batch {step + 1}: {err}") from err
            for key in sums:
                sums[key] += parts.get(key) or 0.0
        val = evaluate(model, ds, plan.test_indices)
        trace.add(EpochRecord(
            epoch=epoch,
            loss_u=sums["loss_u"] / steps,
            loss_s=sums["loss_s"] / steps,
            loss_c=sums["loss_c"] / steps,
            hybrid=sums["hybrid"] / steps,
            val=val,
        ))
    return model, trace


def fit_two_stage(model: EncoderClassifier, dataset: SemiLabeledDataset,
                  plan: SplitPlan, cfg: TrainConfig,
                  pretrain_dataset: SemiLabeledDataset | None = None,
                  pretrain_plan: SplitPlan | None = None):
    """Unsupervised encoder pretraining, then supervised fine-tuning.

    Stage 1 optimizes encoder parameters only, with the unsupervised
    contrastive loss on the unlabeled pool. Stage 2 optimizes the classifier
    (and, unless `freeze_encoder`, the encoder) with cross-entropy, plus the
    supervised contrastive loss under the `two_stage_with_Ls` ablation.

    Passing `pretrain_dataset` switches stage 1 to transfer mode: all of that
    dataset's train-split samples are used as the unsupervised pool, labels
    ignored; channel counts must match.
    """
    ds = zscore_by_train(dataset, plan)
    lw = cfg.effective_weights()
    trace = TrainTrace()
    epoch_counter = 0

    # Stage 1: encoder-only pretraining.
    if pretrain_dataset is not None:
        if pretrain_plan is None:
            raise ConfigError("transfer mode needs a pretrain split plan")
        if pretrain_dataset.channels != dataset.channels:
            raise ConfigError(
                f"transfer pretraining needs matching channel counts, got "
                f"{pretrain_dataset.channels} vs {dataset.channels}"
            )
        pre_ds = zscore_by_train(pretrain_dataset, pretrain_plan)
        pre_train = [pre_ds.samples[i] for i in pretrain_plan.train_indices]
        x_u = np.stack([s.values for s in pre_train]) if pre_train else None
    else:
        x_u, _, _ = _train_pools(ds, plan)

    run_pretrain = cfg.pretrain_epochs > 0 and lw.lambda1 > 0
    if run_pretrain and (x_u is None or x_u.shape[0] < 2):
        logger.warning("unsupervised pool has %d samples; skipping pretraining stage",
                       0 if x_u is None else x_u.shape[0])
        run_pretrain = False
    if run_pretrain:
        opt1 = make_optimizer(cfg.optimizer, model.encoder_parameters(), cfg.learning_rate)
        shuffle_rng = stream(cfg.seed, "shuffle")
        aug_rng = stream(cfg.seed, "augment")
        cyc = _Cycler(x_u.shape[0], cfg.batch_size, shuffle_rng)
        for _ in range(cfg.pretrain_epochs):
            epoch_counter += 1
            total_u = 0.0
            for step in range(cyc.batches_per_epoch):
                try:
                    parts = _train_step(model, opt1, lw, cfg, x_u[cyc.draw()], None, None, aug_rng)
                except DivergenceError as err:
                    raise DivergenceError(
                        f"pretrain epoch {epoch_counter} batch {step + 1}: {err}") from err
                total_u += parts["loss_u"]
            mean_u = total_u / cyc.batches_per_epoch
            trace.add(EpochRecord(
                epoch=epoch_counter,
                loss_u=mean_u, loss_s=0.0, loss_c=0.0,
                hybrid=lw.lambda1 * mean_u,
                val=evaluate(model, ds, plan.test_indices),
            ))

    # Stage 2: supervised fine-tuning.
    _, x_l, y_l = _train_pools(ds, plan)
    if x_l is None:
        raise ContractError("fine-tuning needs a labeled pool")
    with_ls = cfg.ablation == "two_stage_with_Ls" and lw.lambda2 > 0
    if with_ls and np.unique(y_l).size < 2:
        raise DegenerateLabelError("labeled pool must span >= 2 classes for L_s")
    stage2_weights = replace(lw, lambda2=lw.lambda2 if with_ls else 0.0)
    if stage2_weights.lambda3 == 0 and not with_ls:
        raise ContractError("fine-tuning has no active loss (lambda3 == 0)")

    params = model.parameters() if not cfg.freeze_encoder else model.classifier_parameters()
    opt2 = make_optimizer(cfg.optimizer, params, cfg.learning_rate)
    shuffle_rng = stream(cfg.seed, "shuffle", index=1)
    aug_rng = stream(cfg.seed, "augment", index=1)
    cyc = _Cycler(x_l.shape[0], cfg.batch_size, shuffle_rng)
    for _ in range(cfg.epochs):
        epoch_counter += 1
        sums = {"loss_s": 0.0, "loss_c": 0.0, "hybrid": 0.0}
        for step in range(cyc.batches_per_epoch):
            idx = cyc.draw()
            if with_ls:
                idx = _ensure_two_classes(idx, y_l, cyc.order)
            try:
                parts = _train_step(model, opt2, stage2_weights, cfg, None,
                                    x_l[idx], y_l[idx], aug_rng)
            except DivergenceError as err:
                raise DivergenceError(
                    f"fine-tune epoch {epoch_counter} batch {step + 1}: {err}") from err
            for key in sums:
                sums[key] += parts.get(key) or 0.0
        trace.add(EpochRecord(
            epoch=epoch_counter,
            loss_u=0.0,
            loss_s=sums["loss_s"] / cyc.batches_per_epoch,
            loss_c=sums["loss_c"] / cyc.batches_per_epoch,
            hybrid=sums["hybrid"] / cyc.batches_per_epoch,
            val=evaluate(model, ds, plan.test_indices),
        ))
    return model, trace


def fit(model: EncoderClassifier, dataset: SemiLabeledDataset, plan: SplitPlan,
        cfg: TrainConfig, **kwargs):
    """Dispatch on the configured regime."""
    if cfg.regime == "end_to_end":
        return fit_end_to_end(model, dataset, plan, cfg)
    return fit_two_stage(model, dataset, plan, cfg, **kwargs)
