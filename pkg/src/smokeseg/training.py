"""Training protocol: masked MSE over labelled pixels, Adam with a
plateau-halved learning rate, early stopping, and multi-session selection.

Per epoch the eval-set dataset F1h drives both patience counters: no
improvement for ``lr_halve_patience`` epochs halves the learning rate
(only while it is still at or above ``lr_floor``), and no improvement for
``stop_patience`` epochs ends the session. Improvement means a strict
increase by at least ``improvement_tol`` so float jitter does not reset
the counters. A session snapshots its best-so-far weights at every
improvement and is fully reproducible from its seed.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import torch

from .blocks import predict_classes
from .dataset import augment_pairs, encode_target
from .errors import (
    AllSessionsFailedError,
    PairingError,
    TrainingDivergedError,
)
from .metrics import MetricReport, aggregate, evaluate_image


@dataclass(frozen=True)
class TrainConfig:
    initial_lr: float = 1e-4
    lr_halve_patience: int = 10
    lr_floor: float = 1e-7
    stop_patience: int = 20
    batch_size: int = 4
    sessions: int = 10
    seed: int = 0
    max_epochs: int = 300
    improvement_tol: float = 1e-5

    def __post_init__(self):
        if self.stop_patience <= self.lr_halve_patience:
            raise ValueError("stop_patience must exceed lr_halve_patience")
        if self.lr_floor >= self.initial_lr:
            raise ValueError("lr_floor must be below initial_lr")
        if self.batch_size < 1 or self.sessions < 1 or self.max_epochs < 1:
            raise ValueError("batch_size, sessions and max_epochs must be >= 1")


def masked_mse_loss(scores, target, labelled):
    """Mean squared error over (labelled pixel, channel) pairs only.

    ``scores`` and ``target`` are (B, H, W, 3); ``labelled`` is a (B, H, W)
    bool mask. Gap pixels contribute exactly zero, so their gradients are
    exactly zero too. With no labelled pixel at all the loss is 0 (with a
    warning), keeping the graph intact.
    """
    if scores.shape != target.shape or scores.shape[:-1] != labelled.shape:
        raise PairingError(
            f"scores {tuple(scores.shape)}, target {tuple(target.shape)}, "
            f"labelled {tuple(labelled.shape)} disagree"
        )
    weight = labelled.to(scores.dtype)[..., None]
    n_terms = weight.sum() * scores.shape[-1]
    if n_terms.item() == 0:
        warnings.warn("masked_mse_loss: no labelled pixels in batch", stacklevel=2)
        return (scores * 0.0).sum()
    return ((scores - target) ** 2 * weight).sum() / n_terms


class PlateauSchedule:
    """Patience state machine over a to-be-maximized metric."""

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.best = -math.inf
        self.epochs_since_improvement = 0
        self.epochs_since_lr_event = 0

    def observe(self, metric: float):
        """Feed one epoch's metric; returns (improved, halve, stop)."""
        if metric > self.best + self.cfg.improvement_tol:
            self.best = metric
            self.epochs_since_improvement = 0
            self.epochs_since_lr_event = 0
            return True, False, False
        self.epochs_since_improvement += 1
        self.epochs_since_lr_event += 1
        halve = self.epochs_since_lr_event >= self.cfg.lr_halve_patience
        if halve:
            self.epochs_since_lr_event = 0
        stop = self.epochs_since_improvement >= self.cfg.stop_patience
        return False, halve, stop


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    eval_f1h: float
    lr: float
    improved: bool
    halved: bool


@dataclass
class SessionHistory:
    seed: int
    records: list = field(default_factory=list)
    best_epoch: int = 0
    best_f1h: float = -math.inf
    best_state: dict | None = None
    diverged: bool = False

    @property
    def epochs(self) -> int:
        return len(self.records)


def history_csv(history: SessionHistory) -> str:
    lines = ["epoch,loss,f1h,lr"]
    for rec in history.records:
        lines.append(f"{rec.epoch},{rec.train_loss!r},{rec.eval_f1h!r},{rec.lr!r}")
    return "\n".join(lines) + "\n"


def predict_scores(model, image: np.ndarray) -> np.ndarray:
    """(H, W, 6) image -> (H, W, 3) scores via a single no-grad forward."""
    model.eval()
    with torch.no_grad():
        scores = model(torch.from_numpy(np.ascontiguousarray(image))[None])
    return scores[0].numpy()


def evaluate_model(model, pairs) -> MetricReport:
    """Dataset metrics of a model's argmax predictions over (image, mask) pairs."""
    evaluations = []
    for idx, (image, mask) in enumerate(pairs):
        pred = predict_classes(predict_scores(model, image))
        evaluations.append(evaluate_image(pred, mask, source_id=f"img{idx:03d}"))
    return aggregate(evaluations)


def _batches(n: int, batch_size: int, generator: torch.Generator):
    order = torch.randperm(n, generator=generator).tolist()
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def _snapshot(model) -> dict:
    return {k: v.detach().clone() for k, v in model.state_dict().items()}


def train_session(
    make_model,
    train_pairs,
    eval_pairs,
    cfg: TrainConfig,
    session_seed: int,
    eval_metric=None,
    augment: bool = True,
) -> SessionHistory:
    """One training run from fresh random initialization.

    ``make_model`` is a zero-argument factory; it runs under the session
    seed so parameter init is reproducible. ``eval_metric`` (model -> float,
    higher is better) defaults to the dataset F1h over ``eval_pairs``.
    Raises TrainingDivergedError (with the partial history attached) when
    the loss goes non-finite.
    """
    torch.manual_seed(session_seed)
    model = make_model()
    generator = torch.Generator().manual_seed(session_seed)

    if eval_metric is None:
        if not eval_pairs:
            raise PairingError("eval_pairs must be non-empty without an eval_metric")
        eval_metric = lambda m: evaluate_model(m, eval_pairs).f1h  # noqa: E731

    samples = augment_pairs(train_pairs) if augment else list(train_pairs)
    if not samples:
        raise PairingError("train_pairs must be non-empty")
    images = torch.from_numpy(np.stack([img for img, _ in samples]))
    targets, labelled = [], []
    for _, mask in samples:
        tgt, lab = encode_target(mask)
        targets.append(tgt)
        labelled.append(lab)
    targets = torch.from_numpy(np.stack(targets))
    labelled = torch.from_numpy(np.stack(labelled))

    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.initial_lr)
    schedule = PlateauSchedule(cfg)
    history = SessionHistory(seed=session_seed)
    lr = cfg.initial_lr

    for epoch in range(1, cfg.max_epochs + 1):
        model.train()
        total, count = 0.0, 0
        for batch in _batches(len(samples), cfg.batch_size, generator):
            optimizer.zero_grad()
            scores = model(images[batch])
            loss = masked_mse_loss(scores, targets[batch], labelled[batch])
            if not torch.isfinite(loss):
                history.diverged = True
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}", history=history
                )
            loss.backward()
            optimizer.step()
            total += loss.item() * len(batch)
            count += len(batch)

        metric = float(eval_metric(model))
        improved, halve, stop = schedule.observe(metric)
        history.records.append(
            EpochRecord(epoch, total / count, metric, lr, improved, halve)
        )
        if improved:
            history.best_epoch = epoch
            history.best_f1h = metric
            history.best_state = _snapshot(model)
        if halve and lr >= cfg.lr_floor:
            lr *= 0.5
            for group in optimizer.param_groups:
                group["lr"] = lr
        if stop:
            break
    return history


@dataclass
class SessionsResult:
    histories: list
    best_session: int
    avg_f1h: float

    @property
    def best_history(self) -> SessionHistory:
        return self.histories[self.best_session]


def run_sessions(
    make_model,
    train_pairs,
    eval_pairs,
    cfg: TrainConfig,
    eval_metric=None,
    augment: bool = True,
) -> SessionsResult:
    """Train ``cfg.sessions`` independent sessions and select by best F1h.

    Session k uses seed ``cfg.seed + k``. Diverged sessions are kept in the
    result but excluded from selection and the average; if every session
    diverges, AllSessionsFailedError is raised.
    """
    histories = []
    for k in range(cfg.sessions):
        try:
            history = train_session(
                make_model,
                train_pairs,
                eval_pairs,
                cfg,
                session_seed=cfg.seed + k,
                eval_metric=eval_metric,
                augment=augment,
            )
        except TrainingDivergedError as exc:
            history = exc.history or SessionHistory(seed=cfg.seed + k, diverged=True)
            history.diverged = True
        histories.append(history)

    usable = [h for h in histories if not h.diverged and h.best_state is not None]
    if not usable:
        raise AllSessionsFailedError(f"all {cfg.sessions} sessions diverged")
    best = max(usable, key=lambda h: h.best_f1h)
    avg = sum(h.best_f1h for h in usable) / len(usable)
    return SessionsResult(
        histories=histories,
        best_session=histories.index(best),
        avg_f1h=avg,
    )


def load_best_model(make_model, result: SessionsResult):
    """Fresh model carrying the best session's best-epoch weights."""
    model = make_model()
    model.load_state_dict(result.best_history.best_state, strict=True)
    model.eval()
    return model
