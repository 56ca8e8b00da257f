"""Ensemble teacher construction and the distilled uncertainty head.

The teacher fuses member probability maps into a mean probability and a
normalized-disagreement uncertainty (per-pixel sample std divided by
the analytic maximum sample std of n values in [0, 1]).  The student
head is a per-pixel linear + sigmoid map over cached feature stacks,
trained to regress the teacher uncertainty under RMSLE with plain SGD:
momentum, coupled L2 weight decay on the weights, polynomial LR decay,
early stopping, and checkpoint selection by validation AUROC inside the
anchor-radius evaluation region.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateClassError, ShapeError, ValidationError
from .metrics import error_map, uq_auroc
from .protocol import build_fcer


@dataclass
class TeacherOutput:
    mean_prob: np.ndarray
    uncertainty: np.ndarray
    n_members: int


@dataclass
class UncertaintyHead:
    """Per-pixel linear + sigmoid uncertainty predictor."""

    weights: np.ndarray
    bias: float

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 1:
            raise ShapeError("head weights must be a 1-D channel vector")
        self.bias = float(self.bias)

    @property
    def channels(self) -> int:
        return self.weights.size


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 1e-3
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch_size: int = 4
    poly_power: float = 0.9
    max_epochs: int = 100
    patience: int = 20
    selection_anchor_px: int = 4
    rng_seed: int = 0

    def __post_init__(self):
        # lr0 = 0 is allowed so a no-op run stays expressible
        if self.lr0 < 0 or self.momentum < 0 or self.weight_decay < 0:
            raise ValidationError("lr0, momentum, weight_decay must be >= 0")
        if self.momentum >= 1:
            raise ValidationError("momentum must be < 1")
        if self.poly_power <= 0:
            raise ValidationError("poly_power must be > 0")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValidationError("batch_size and max_epochs must be >= 1")
        if self.patience < 1:
            raise ValidationError("patience must be >= 1")
        if self.selection_anchor_px < 0:
            raise ValidationError("selection_anchor_px must be >= 0")


def sigma_max(n: int) -> float:
    """Largest sample standard deviation (divisor n-1) attainable by n
    values in [0, 1]: reached by splitting them between the endpoints as
    evenly as possible."""
    if n < 2:
        raise ValidationError("sigma_max requires n >= 2")
    return math.sqrt((n // 2) * ((n + 1) // 2) / (n * (n - 1)))


def fuse_ensemble(members: list[np.ndarray]) -> TeacherOutput:
    """Average member probabilities; uncertainty = normalized sample std.

    Uncertainty is the per-pixel sample standard deviation (divisor
    n-1) divided by sigma_max(n), clipped to 1 against float roundoff,
    so it lies in [0, 1] with 1 meaning maximal disagreement.
    """
    n = len(members)
    if n < 2:
        raise ValidationError("fuse_ensemble: need at least 2 members")
    shape = members[0].shape
    for k, m in enumerate(members):
        if m.shape != shape:
            raise ShapeError(f"fuse_ensemble: member {k} shape {m.shape} != {shape}")
    stack = np.stack([np.asarray(m, dtype=np.float64) for m in members])
    mean_prob = stack.mean(axis=0)
    std = stack.std(axis=0, ddof=1)
    unc = np.minimum(std / sigma_max(n), 1.0)
    return TeacherOutput(mean_prob=mean_prob, uncertainty=unc, n_members=n)


def select_middle_member(per_member_ap: list[float]) -> int:
    """Index of the member with median AP; ties go to the lowest index.

    Only odd member counts are supported (a median member exists).
    """
    n = len(per_member_ap)
    if n == 0 or n % 2 == 0:
        raise ValidationError("select_middle_member: member count must be odd")
    values = [float(v) for v in per_member_ap]
    median = sorted(values)[n // 2]
    return values.index(median)


def rmsle(student: np.ndarray, teacher: np.ndarray) -> float:
    """Root mean squared error between log(1+x)-transformed maps."""
    s = np.asarray(student, dtype=np.float64)
    t = np.asarray(teacher, dtype=np.float64)
    if s.shape != t.shape:
        raise ShapeError(f"rmsle: shape mismatch {s.shape} vs {t.shape}")
    if s.min() < 0 or t.min() < 0:
        raise ValidationError("rmsle: values must be >= 0")
    d = np.log1p(t) - np.log1p(s)
    return float(np.sqrt(np.mean(d * d)))


def apply_head(head: UncertaintyHead, features: np.ndarray) -> np.ndarray:
    """sigmoid(w . f + b) per pixel over a (C, H, W) feature stack."""
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 3:
        raise ShapeError("apply_head: features must be (C, H, W)")
    if f.shape[0] != head.channels:
        raise ShapeError(
            f"apply_head: {f.shape[0]} feature channels vs head with {head.channels}"
        )
    z = np.tensordot(head.weights, f, axes=1) + head.bias
    return 1.0 / (1.0 + np.exp(-z))


def rmsle_gradient(
    head: UncertaintyHead, features: np.ndarray, teacher_unc: np.ndarray
) -> tuple[float, np.ndarray, float]:
    """Per-image RMSLE loss and its analytic gradient w.r.t. (w, b).

    With s = sigmoid(w.f + b), d = log1p(t) - log1p(s), L = sqrt(mean d^2):
    dL/dz_i = -d_i s_i (1 - s_i) / ((1 + s_i) L N); at L = 0 the loss is
    at its minimum and the (sub)gradient is taken as zero.
    """
    f = np.asarray(features, dtype=np.float64)
    t = np.asarray(teacher_unc, dtype=np.float64)
    if f.shape[1:] != t.shape:
        raise ShapeError("rmsle_gradient: feature and target shapes differ")
    c = f.shape[0]
    n = t.size
    flat = f.reshape(c, n)
    z = head.weights @ flat + head.bias
    s = 1.0 / (1.0 + np.exp(-z))
    d = np.log1p(t.ravel()) - np.log1p(s)
    loss = math.sqrt(float(np.mean(d * d)))
    if loss == 0.0:
        return 0.0, np.zeros(c), 0.0
    gz = -(d * s * (1.0 - s) / (1.0 + s)) / (loss * n)
    gw = flat @ gz
    gb = float(gz.sum())
    return loss, gw, gb


@dataclass
class EpochLog:
    epoch: int
    lr: float
    train_rmsle: float
    val_rmsle: float
    val_auroc_at_anchor: float | None


@dataclass
class TrainResult:
    head: UncertaintyHead
    log: list[EpochLog]
    selected_epoch: int
    selection_metric: float | None  # val AUROC at the anchor, if defined


def _mean_rmsle(head: UncertaintyHead, images: list) -> float:
    losses = [rmsle(apply_head(head, f), t) for f, t in images]
    return float(np.mean(losses))


def _val_anchor_auroc(
    head: UncertaintyHead, val_set: list, val_errors: list, val_regions: list
) -> float | None:
    scores = []
    for (f, _t), errors, region in zip(val_set, val_errors, val_regions):
        if errors is None:
            continue
        unc = apply_head(head, f)
        try:
            scores.append(uq_auroc(unc, errors, region))
        except DegenerateClassError:
            continue
    return float(np.mean(scores)) if scores else None


def train_head(
    train_set: list[tuple[np.ndarray, np.ndarray]],
    val_set: list[tuple[np.ndarray, np.ndarray]],
    cfg: TrainConfig,
    val_selection: list[tuple[np.ndarray, np.ndarray]],
    error_threshold: float = 0.5,
    init_head: UncertaintyHead | None = None,
) -> TrainResult:
    """SGD on the head over cached (features, teacher uncertainty) pairs.

    val_selection pairs (gt mask, reference probability) per validation
    image define the error maps and anchor regions used for checkpoint
    selection: the retained head maximizes mean validation AUROC inside
    the FCER at cfg.selection_anchor_px, with lower validation RMSLE as
    the tie-break.  Early stopping fires after cfg.patience epochs with
    no improvement of that selection key.  Default initialization is
    zero weights with the bias at the logit of the mean teacher
    uncertainty; init_head warm-starts from explicit parameters instead.
    """
    if not train_set:
        raise ValidationError("train_head: empty training set")
    if len(val_selection) != len(val_set):
        raise ValidationError("train_head: val_selection must align with val_set")
    c = train_set[0][0].shape[0]
    for f, t in list(train_set) + list(val_set):
        if f.ndim != 3 or f.shape[0] != c:
            raise ShapeError(f"train_head: inconsistent channel count ({f.shape})")
        if f.shape[1:] != t.shape:
            raise ShapeError("train_head: feature/target shape mismatch")

    # selection prerequisites, fixed across epochs
    val_errors, val_regions = [], []
    for (gt, reference) in val_selection:
        if not np.asarray(gt).any():
            val_errors.append(None)
            val_regions.append(None)
            continue
        val_errors.append(error_map(reference, gt, threshold=error_threshold))
        val_regions.append(build_fcer(gt, cfg.selection_anchor_px))

    if init_head is not None:
        if init_head.channels != c:
            raise ShapeError("train_head: init_head channel mismatch")
        head = UncertaintyHead(
            weights=init_head.weights.copy(), bias=init_head.bias
        )
    else:
        mean_t = float(np.mean([t.mean() for _f, t in train_set]))
        mean_t = min(max(mean_t, 1e-6), 1.0 - 1e-6)
        head = UncertaintyHead(
            weights=np.zeros(c), bias=math.log(mean_t / (1.0 - mean_t))
        )

    rng = np.random.default_rng(cfg.rng_seed)
    vw = np.zeros(c)
    vb = 0.0
    log: list[EpochLog] = []
    best_key = None
    best_state = (head.weights.copy(), head.bias, 0, None)
    stall = 0

    for epoch in range(cfg.max_epochs):
        lr = cfg.lr0 * (1.0 - epoch / cfg.max_epochs) ** cfg.poly_power
        order = rng.permutation(len(train_set))
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            gw = np.zeros(c)
            gb = 0.0
            for i in batch:
                f, t = train_set[i]
                _loss, gwi, gbi = rmsle_gradient(head, f, t)
                gw += gwi
                gb += gbi
            gw /= len(batch)
            gb /= len(batch)
            gw += cfg.weight_decay * head.weights  # decay on weights only
            vw = cfg.momentum * vw + gw
            vb = cfg.momentum * vb + gb
            head.weights = head.weights - lr * vw
            head.bias = head.bias - lr * vb

        train_loss = _mean_rmsle(head, train_set)
        val_loss = _mean_rmsle(head, val_set) if val_set else train_loss
        val_auroc = _val_anchor_auroc(head, val_set, val_errors, val_regions)
        log.append(EpochLog(epoch, lr, train_loss, val_loss, val_auroc))

        key = (
            val_auroc if val_auroc is not None else -math.inf,
            -val_loss,
        )
        if best_key is None or key > best_key:
            best_key = key
            best_state = (head.weights.copy(), head.bias, epoch, val_auroc)
            stall = 0
        else:
            stall += 1
            if stall >= cfg.patience:
                break

    weights, bias, sel_epoch, sel_metric = best_state
    return TrainResult(
        head=UncertaintyHead(weights=weights, bias=bias),
        log=log,
        selected_epoch=sel_epoch,
        selection_metric=sel_metric,
    )


def save_head(
    path: str | Path,
    result_head: UncertaintyHead,
    cfg: TrainConfig,
    selection_metric: float | None,
    epoch: int,
):
    payload = {
        "channels": result_head.channels,
        "weights": [float(w) for w in result_head.weights],
        "bias": result_head.bias,
        "train_config": asdict(cfg),
        "selection_metric": selection_metric,
        "epoch": epoch,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_head(path: str | Path) -> tuple[UncertaintyHead, dict]:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: malformed head checkpoint ({exc})") from exc
    try:
        head = UncertaintyHead(
            weights=np.asarray(payload["weights"], dtype=np.float64),
            bias=float(payload["bias"]),
        )
        if head.channels != int(payload["channels"]):
            raise ValidationError(f"{path}: channel count disagrees with weights")
    except KeyError as exc:
        raise ValidationError(f"{path}: missing checkpoint field {exc}") from exc
    return head, payload
