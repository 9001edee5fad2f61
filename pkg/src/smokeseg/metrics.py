"""Per-class precision/recall/F1 and the gap-moderated F1h for partial labels.

Labels may leave uncertain pixels unlabelled (Gap). Per class c the pixel
counts are:

* ``predicted``        all pixels predicted c (anywhere in the image)
* ``labelled``         pixels labelled c
* ``matched``          pixels both predicted and labelled c
* ``predicted_in_gap`` pixels predicted c that fall in the gap
* ``gap``              unlabelled pixels
* ``total``            all pixels

From these: precision = matched/predicted, recall = matched/labelled,
F1 their harmonic mean. The gap modifier

    r = predicted_in_gap/predicted + gap/total

measures how much of the class's prediction mass is unjudgeable plus how
much of the image is unlabelled; F1h = F1 * (1 - r) discounts F1 by it.
The raw two-term sum can exceed 1, so r is clamped to [0, 1] to keep F1h
in range. Classes absent from both prediction and label are undefined and
excluded from image averages.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, EmptyEvaluationError, PairingError
from .masks import CLASS_CODES, CLASS_NAMES, GAP


@dataclass(frozen=True)
class ClassCounts:
    predicted: int
    labelled: int
    matched: int
    predicted_in_gap: int
    gap: int
    total: int

    def __post_init__(self):
        if self.matched > min(self.predicted, self.labelled):
            raise ContractError("matched exceeds predicted or labelled count")
        if self.matched + self.predicted_in_gap > self.predicted:
            raise ContractError("matched + predicted_in_gap exceeds predicted")
        if self.gap > self.total:
            raise ContractError("gap exceeds total pixel count")


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    gap_modifier: float
    f1h: float
    defined: bool


@dataclass
class ImageEvaluation:
    """Per-class metrics for one image plus their unweighted average."""

    source_id: str
    per_class: dict
    precision: float
    recall: float
    f1: float
    f1h: float

    @property
    def f1h_ratio(self) -> float:
        return 0.0 if self.f1 == 0.0 else self.f1h / self.f1


@dataclass
class MetricReport:
    per_image: list = field(default_factory=list)
    precision: float = 0.0
    recall: float = 0.0
    f1: float = 0.0
    f1h: float = 0.0

    @property
    def f1h_ratio(self) -> float:
        return 0.0 if self.f1 == 0.0 else self.f1h / self.f1


def count_pixels(pred: np.ndarray, label: np.ndarray, cls: int) -> ClassCounts:
    """Exact pixel counts for one class.

    ``pred`` must be gap-free (every pixel assigned a class); ``label`` may
    contain Gap.
    """
    pred = np.asarray(pred)
    label = np.asarray(label)
    if pred.shape != label.shape:
        raise PairingError(f"pred {pred.shape} vs label {label.shape}")
    if (pred == GAP).any():
        raise ContractError("prediction mask contains Gap pixels")
    pred_c = pred == cls
    label_c = label == cls
    in_gap = label == GAP
    return ClassCounts(
        predicted=int(pred_c.sum()),
        labelled=int(label_c.sum()),
        matched=int((pred_c & label_c).sum()),
        predicted_in_gap=int((pred_c & in_gap).sum()),
        gap=int(in_gap.sum()),
        total=int(pred.size),
    )


def precision_recall_f1(counts: ClassCounts):
    """Precision, recall, F1 with total zero-denominator conventions.

    precision is 0 when nothing was predicted, recall is 0 when nothing was
    labelled, and F1 is 0 when precision + recall is 0.
    """
    precision = counts.matched / counts.predicted if counts.predicted else 0.0
    recall = counts.matched / counts.labelled if counts.labelled else 0.0
    denom = precision + recall
    f1 = 2.0 * precision * recall / denom if denom else 0.0
    return precision, recall, f1


def gap_modifier(counts: ClassCounts) -> float:
    """Two-term labelling-quality modifier, clamped into [0, 1]."""
    in_gap_share = (
        counts.predicted_in_gap / counts.predicted if counts.predicted else 0.0
    )
    gap_share = counts.gap / counts.total if counts.total else 0.0
    return min(1.0, max(0.0, in_gap_share + gap_share))


def moderated_f1(f1: float, modifier: float) -> float:
    """F1 discounted by labelling quality: F1 * (1 - modifier)."""
    return f1 * (1.0 - modifier)


def class_metrics(counts: ClassCounts) -> ClassMetrics:
    precision, recall, f1 = precision_recall_f1(counts)
    modifier = gap_modifier(counts)
    return ClassMetrics(
        precision=precision,
        recall=recall,
        f1=f1,
        gap_modifier=modifier,
        f1h=moderated_f1(f1, modifier),
        defined=bool(counts.predicted or counts.labelled),
    )


def evaluate_image(pred: np.ndarray, label: np.ndarray, source_id: str = "") -> ImageEvaluation:
    """Per-class metrics plus their unweighted mean over defined classes.

    A class that appears in neither prediction nor label is skipped in the
    average; with a gap-free prediction at least one class is always defined.
    """
    per_class = {}
    for cls in CLASS_CODES:
        per_class[cls] = class_metrics(count_pixels(pred, label, cls))
    defined = [m for m in per_class.values() if m.defined]
    if not defined:
        raise ContractError("no class defined in either prediction or label")
    n = len(defined)
    return ImageEvaluation(
        source_id=source_id,
        per_class=per_class,
        precision=sum(m.precision for m in defined) / n,
        recall=sum(m.recall for m in defined) / n,
        f1=sum(m.f1 for m in defined) / n,
        f1h=sum(m.f1h for m in defined) / n,
    )


def aggregate(evaluations: list) -> MetricReport:
    """Arithmetic mean of image-level metrics over all images."""
    if not evaluations:
        raise EmptyEvaluationError("no image evaluations to aggregate")
    n = len(evaluations)
    return MetricReport(
        per_image=list(evaluations),
        precision=sum(e.precision for e in evaluations) / n,
        recall=sum(e.recall for e in evaluations) / n,
        f1=sum(e.f1 for e in evaluations) / n,
        f1h=sum(e.f1h for e in evaluations) / n,
    )


def report_table(report: MetricReport) -> str:
    """Human-readable per-image table with the dataset average last."""
    lines = ["image\tF1h\tF1\tPrec\tRec\tF1h/F1"]
    for ev in report.per_image:
        lines.append(
            f"{ev.source_id}\t{ev.f1h:.4f}\t{ev.f1:.4f}\t{ev.precision:.4f}"
            f"\t{ev.recall:.4f}\t{ev.f1h_ratio:.4f}"
        )
    lines.append(
        f"dataset\t{report.f1h:.4f}\t{report.f1:.4f}\t{report.precision:.4f}"
        f"\t{report.recall:.4f}\t{report.f1h_ratio:.4f}"
    )
    return "\n".join(lines) + "\n"


def report_keyvalues(report: MetricReport) -> str:
    """Machine-readable key=value dump of the dataset-level metrics."""
    lines = [
        f"dataset.f1h={report.f1h!r}",
        f"dataset.f1={report.f1!r}",
        f"dataset.precision={report.precision!r}",
        f"dataset.recall={report.recall!r}",
        f"dataset.f1h_ratio={report.f1h_ratio!r}",
        f"dataset.images={len(report.per_image)}",
    ]
    for ev in report.per_image:
        prefix = f"image.{ev.source_id}"
        lines.append(f"{prefix}.f1h={ev.f1h!r}")
        lines.append(f"{prefix}.f1={ev.f1!r}")
        lines.append(f"{prefix}.precision={ev.precision!r}")
        lines.append(f"{prefix}.recall={ev.recall!r}")
        lines.append(f"{prefix}.f1h_ratio={ev.f1h_ratio!r}")
    for cls in CLASS_CODES:
        name = CLASS_NAMES[cls].lower()
        per_cls = [
            ev.per_class[cls] for ev in report.per_image if ev.per_class[cls].defined
        ]
        if per_cls:
            lines.append(
                f"class.{name}.f1h={sum(m.f1h for m in per_cls) / len(per_cls)!r}"
            )
    return "\n".join(lines) + "\n"
