"""Semi-labeled dataset model, CSV ingestion, label-ratio subsetting, splits.

File formats
------------
Sample CSV: header ``sample_id,subject_id,trial_id,label,channel,v0,...,v{L-1}``
with one row per channel; ``label`` is an integer class id or -1 for
unlabeled. Values are decimal doubles and round-trip bit-exactly (written with
``repr``). Manifest: plain-text lines ``path,num_classes,channels,length``
where ``path`` is resolved relative to the manifest's directory.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import (
    ContractError,
    DataError,
    LabelError,
    ParseError,
    SchemaError,
    SplitError,
    StratificationError,
)
from .rng import stream

UNLABELED = -1

PATTERNS = ("trial_dependent", "leave_trials_out", "leave_subjects_out")


@dataclass
class TimeSeriesSample:
    """One multichannel series with optional label and group ids."""

    values: np.ndarray  # (channels, length) float64
    label: int = UNLABELED
    subject_id: str = ""
    trial_id: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] < 1:
            raise ContractError(f"sample values must be (channels, length), got {self.values.shape}")
        self.label = int(self.label)

    @property
    def is_labeled(self) -> bool:
        return self.label != UNLABELED


@dataclass
class SemiLabeledDataset:
    """All samples plus class count and the label ratio they were built with."""

    samples: list[TimeSeriesSample]
    num_classes: int
    label_ratio: float = 1.0

    def __post_init__(self):
        if self.num_classes < 2:
            raise ContractError(f"num_classes must be >= 2, got {self.num_classes}")
        channels = {s.values.shape[0] for s in self.samples}
        if len(channels) > 1:
            raise SchemaError(f"inconsistent channel counts across samples: {sorted(channels)}")
        for s in self.samples:
            if s.label != UNLABELED and not (0 <= s.label < self.num_classes):
                raise LabelError(f"label {s.label} outside [0, {self.num_classes})")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def channels(self) -> int:
        return self.samples[0].values.shape[0] if self.samples else 0

    def labeled_indices(self) -> list[int]:
        return [i for i, s in enumerate(self.samples) if s.is_labeled]

    def unlabeled_indices(self) -> list[int]:
        return [i for i, s in enumerate(self.samples) if not s.is_labeled]

    @property
    def num_labeled(self) -> int:
        return len(self.labeled_indices())

    @property
    def num_unlabeled(self) -> int:
        return len(self.unlabeled_indices())


@dataclass(frozen=True)
class SplitParams:
    """Pattern-specific split knobs; only the relevant field is read."""

    test_fraction: float = 0.25   # trial_dependent
    holdout_trials: int = 1       # leave_trials_out: trials held out per subject
    holdout_subjects: int = 1     # leave_subjects_out


@dataclass(frozen=True)
class SplitPlan:
    pattern: str
    train_indices: tuple[int, ...]
    test_indices: tuple[int, ...]
    seed: int

    def __post_init__(self):
        overlap = set(self.train_indices) & set(self.test_indices)
        if overlap:
            raise SplitError(f"train/test overlap on indices {sorted(overlap)[:5]}")


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

def _expected_header(length: int) -> list[str]:
    return ["sample_id", "subject_id", "trial_id", "label", "channel"] + [
        f"v{i}" for i in range(length)
    ]


def load_csv(manifest_path) -> SemiLabeledDataset:
    """Load a dataset from a manifest of per-sample CSV files."""
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    entries = []
    for ln, raw in enumerate(manifest_path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise SchemaError(f"{manifest_path}:{ln}: manifest line needs path,num_classes,channels,length")
        try:
            entries.append((parts[0], int(parts[1]), int(parts[2]), int(parts[3])))
        except ValueError as e:
            raise SchemaError(f"{manifest_path}:{ln}: {e}") from e
    if not entries:
        raise DataError(f"{manifest_path}: empty manifest")
    num_classes = entries[0][1]
    channels = entries[0][2]
    if any(e[1] != num_classes or e[2] != channels for e in entries):
        raise SchemaError(f"{manifest_path}: num_classes/channels differ between manifest entries")

    samples: list[TimeSeriesSample] = []
    for rel, _, _, length in entries:
        samples.extend(_load_sample_csv(base / rel, num_classes, channels, length))
    if not samples:
        raise DataError(f"{manifest_path}: no samples found")
    return SemiLabeledDataset(samples=samples, num_classes=num_classes)


def _load_sample_csv(path: Path, num_classes: int, channels: int, length: int):
    rows_by_sample: dict[str, dict] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if header != _expected_header(length):
            raise SchemaError(
                f"{path}: header does not match the sample schema for length {length}"
            )
        count = 0
        for ln, row in enumerate(reader, start=2):
            if not row:
                continue
            count += 1
            if len(row) != 5 + length:
                raise ParseError(f"{path}:{ln}: expected {5 + length} fields, got {len(row)}")
            sample_id, subject_id, trial_id, label_s, channel_s = row[:5]
            try:
                label = int(label_s)
                channel = int(channel_s)
                values = np.array([float(v) for v in row[5:]], dtype=np.float64)
            except ValueError as e:
                raise ParseError(f"{path}:{ln}: {e}") from e
            if label != UNLABELED and not (0 <= label < num_classes):
                raise LabelError(f"{path}:{ln}: label {label} outside [0, {num_classes})")
            if not (0 <= channel < channels):
                raise SchemaError(f"{path}:{ln}: channel {channel} outside [0, {channels})")
            rec = rows_by_sample.setdefault(
                sample_id,
                {"subject": subject_id, "trial": trial_id, "label": label,
                 "values": np.full((channels, length), np.nan)},
            )
            if (rec["subject"], rec["trial"], rec["label"]) != (subject_id, trial_id, label):
                raise SchemaError(f"{path}:{ln}: rows of sample {sample_id} disagree on metadata")
            if not np.isnan(rec["values"][channel]).all():
                raise SchemaError(f"{path}:{ln}: duplicate channel {channel} for sample {sample_id}")
            rec["values"][channel] = values
    if count == 0:
        raise DataError(f"{path}: no data rows")

    samples = []
    for sample_id, rec in rows_by_sample.items():
        if np.isnan(rec["values"]).any():
            raise SchemaError(f"{path}: sample {sample_id} is missing channel rows")
        samples.append(TimeSeriesSample(values=rec["values"], label=rec["label"],
                                        subject_id=rec["subject"], trial_id=rec["trial"]))
    return samples


def write_csv(dataset: SemiLabeledDataset, csv_path, manifest_path=None) -> None:
    """Write a dataset (one CSV) and optionally a manifest pointing at it."""
    if not dataset.samples:
        raise DataError("refusing to write an empty dataset")
    csv_path = Path(csv_path)
    length = dataset.samples[0].values.shape[1]
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_expected_header(length))
        for i, s in enumerate(dataset.samples):
            for ch in range(dataset.channels):
                writer.writerow(
                    [f"n{i:06d}", s.subject_id, s.trial_id, s.label, ch]
                    + [repr(float(v)) for v in s.values[ch]]
                )
    if manifest_path is not None:
        manifest_path = Path(manifest_path)
        rel = csv_path.name if csv_path.parent == manifest_path.parent else str(csv_path)
        manifest_path.write_text(f"{rel},{dataset.num_classes},{dataset.channels},{length}\n")


# ---------------------------------------------------------------------------
# label-ratio subsetting
# ---------------------------------------------------------------------------

def apply_label_ratio(dataset: SemiLabeledDataset, ratio: float, seed: int) -> SemiLabeledDataset:
    """Keep labels on a stratified ceil(ratio*M) subset; hide the rest.

    Sample count is unchanged; hidden samples keep their values but become
    unlabeled. Per-class quotas use largest-remainder rounding, so class
    proportions are preserved within one sample.
    """
    if not (0.0 < ratio <= 1.0):
        raise ContractError(f"label ratio must be in (0, 1], got {ratio}")
    if dataset.num_unlabeled:
        raise ContractError("apply_label_ratio expects a fully labeled dataset")
    if ratio == 1.0:
        return replace(dataset, samples=list(dataset.samples), label_ratio=1.0)

    m = len(dataset.samples)
    target = math.ceil(ratio * m)
    by_class: dict[int, list[int]] = {}
    for i, s in enumerate(dataset.samples):
        by_class.setdefault(s.label, []).append(i)
    classes = sorted(by_class)
    quotas = {c: int(math.floor(ratio * len(by_class[c]))) for c in classes}
    remainders = sorted(
        classes,
        key=lambda c: (-(ratio * len(by_class[c]) - quotas[c]), c),
    )
    short = target - sum(quotas.values())
    for c in remainders[:short]:
        quotas[c] += 1
    if any(quotas[c] == 0 for c in classes):
        empty = [c for c in classes if quotas[c] == 0]
        raise StratificationError(
            f"ratio {ratio} leaves classes {empty} without labeled samples"
        )

    rng = stream(seed, "label_ratio")
    keep: set[int] = set()
    for c in classes:
        idx = np.array(by_class[c])
        perm = rng.permutation(len(idx))
        keep.update(idx[perm[: quotas[c]]].tolist())

    new_samples = []
    for i, s in enumerate(dataset.samples):
        if i in keep:
            new_samples.append(replace(s))
        else:
            new_samples.append(replace(s, label=UNLABELED))
    return replace(dataset, samples=new_samples, label_ratio=ratio)


def hide_train_labels(dataset: SemiLabeledDataset, plan: SplitPlan, ratio: float,
                      seed: int) -> SemiLabeledDataset:
    """Apply the label ratio inside the train split only; test labels stay."""
    if ratio == 1.0:
        return replace(dataset, samples=list(dataset.samples), label_ratio=1.0)
    train = list(plan.train_indices)
    sub = SemiLabeledDataset(
        samples=[dataset.samples[i] for i in train],
        num_classes=dataset.num_classes,
    )
    masked = apply_label_ratio(sub, ratio, seed)
    new_samples = list(dataset.samples)
    for pos, i in enumerate(train):
        new_samples[i] = masked.samples[pos]
    return replace(dataset, samples=new_samples, label_ratio=ratio)


def labeled_subset_hash(dataset: SemiLabeledDataset, plan: SplitPlan) -> str:
    """Stable hash of which train samples are labeled (fairness audits)."""
    visible = sorted(i for i in plan.train_indices if dataset.samples[i].is_labeled)
    blob = ",".join(str(i) for i in visible).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def split_plan_hash(plan: SplitPlan) -> str:
    """Stable hash of the train/test membership of a split plan."""
    blob = (
        ",".join(str(i) for i in plan.train_indices)
        + "|"
        + ",".join(str(i) for i in plan.test_indices)
    ).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# split protocols
# ---------------------------------------------------------------------------

def make_split(dataset: SemiLabeledDataset, pattern: str, params: SplitParams,
               seed: int) -> SplitPlan:
    """Build a train/test split under one of the three evaluation patterns."""
    if pattern not in PATTERNS:
        raise ContractError(f"unknown split pattern {pattern!r}; use one of {PATTERNS}")
    n = len(dataset.samples)
    if n < 2:
        raise SplitError(f"need at least 2 samples to split, got {n}")
    rng = stream(seed, "split")

    if pattern == "trial_dependent":
        if not (0.0 < params.test_fraction < 1.0):
            raise SplitError(f"test_fraction must be in (0, 1), got {params.test_fraction}")
        perm = rng.permutation(n)
        n_test = min(n - 1, max(1, round(params.test_fraction * n)))
        test = perm[:n_test]
        train = perm[n_test:]
    elif pattern == "leave_trials_out":
        _require_group_ids(dataset, pattern)
        k = params.holdout_trials
        if k < 1:
            raise SplitError(f"holdout_trials must be >= 1, got {k}")
        by_subject: dict[str, dict[str, list[int]]] = {}
        for i, s in enumerate(dataset.samples):
            by_subject.setdefault(s.subject_id, {}).setdefault(s.trial_id, []).append(i)
        test_list: list[int] = []
        train_list: list[int] = []
        for subj in sorted(by_subject):
            trials = sorted(by_subject[subj])
            if len(trials) <= k:
                raise SplitError(
                    f"subject {subj} has {len(trials)} trials; cannot hold out {k}"
                )
            held = set(rng.choice(len(trials), size=k, replace=False).tolist())
            for t_pos, trial in enumerate(trials):
                (test_list if t_pos in held else train_list).extend(by_subject[subj][trial])
        train, test = np.array(train_list), np.array(test_list)
    else:  # leave_subjects_out
        _require_group_ids(dataset, pattern)
        k = params.holdout_subjects
        if k < 1:
            raise SplitError(f"holdout_subjects must be >= 1, got {k}")
        subjects = sorted({s.subject_id for s in dataset.samples})
        if len(subjects) <= k:
            raise SplitError(f"{len(subjects)} subjects; cannot hold out {k}")
        held = set(np.array(subjects)[rng.choice(len(subjects), size=k, replace=False)].tolist())
        test = np.array([i for i, s in enumerate(dataset.samples) if s.subject_id in held])
        train = np.array([i for i, s in enumerate(dataset.samples) if s.subject_id not in held])

    return SplitPlan(
        pattern=pattern,
        train_indices=tuple(int(i) for i in sorted(train.tolist())),
        test_indices=tuple(int(i) for i in sorted(test.tolist())),
        seed=seed,
    )


def _require_group_ids(dataset: SemiLabeledDataset, pattern: str) -> None:
    if any(not s.subject_id or not s.trial_id for s in dataset.samples):
        raise SplitError(f"pattern {pattern} requires subject and trial ids on every sample")


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------

def zscore_by_train(dataset: SemiLabeledDataset, plan: SplitPlan) -> SemiLabeledDataset:
    """Per-channel z-score with statistics from the train split only."""
    train_values = np.concatenate(
        [dataset.samples[i].values for i in plan.train_indices], axis=1
    )
    mean = train_values.mean(axis=1, keepdims=True)
    std = train_values.std(axis=1, keepdims=True)
    std = np.where(std > 0.0, std, 1.0)
    new_samples = [
        replace(s, values=(s.values - mean) / std) for s in dataset.samples
    ]
    return replace(dataset, samples=new_samples)
