"""Segmentation validity, calibration, and uncertainty-overlap metrics.

Validity is measured by Dice scores aggregated two ways: DGS averages the
per-slice dice over all slices, DCS pools each case's voxels into a single
dice and averages over cases. Reliability is measured by expected
calibration error over predicted-class probabilities (with a negative-log
transform for readability) and by the uncertainty-error overlap, the best
achievable dice between a thresholded uncertainty map and the actual error
mask. Tumor burden agreement is summarized by the Pearson correlation of
per-case predicted and true volumes.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateCorrelation, EmptyInput, ShapeError
from .phantom import PHASES

ECE_FLOOR = 1e-12
UEO_THRESHOLDS = np.round(np.arange(1, 100) * 0.01, 2)

CSV_COLUMNS = (
    "run_id",
    "fusion",
    "perturb_kind",
    "perturb_param",
    "dgs",
    "dcs",
    "ece",
    "neg_log_ece",
    "ueo",
    "mean_u_fused",
    "mean_u_nc",
    "mean_u_art",
    "mean_u_pv",
    "mean_u_de",
)


@dataclass(frozen=True)
class EvalRecord:
    """One evaluated slice: hard masks plus per-pixel confidence and uncertainty."""

    prediction: np.ndarray
    truth: np.ndarray
    uncertainty: np.ndarray
    confidence: np.ndarray
    case_id: int = 0

    def __post_init__(self) -> None:
        pred = np.asarray(self.prediction).astype(np.int64)
        truth = np.asarray(self.truth).astype(np.int64)
        unc = np.asarray(self.uncertainty, dtype=np.float64)
        conf = np.asarray(self.confidence, dtype=np.float64)
        shapes = {pred.shape, truth.shape, unc.shape, conf.shape}
        if len(shapes) != 1:
            raise ShapeError(f"record grids disagree in shape: {sorted(shapes)}")
        if unc.min(initial=1.0) <= 0.0 or unc.max(initial=1.0) > 1.0 + 1e-9:
            raise ValueError("uncertainty values must lie in (0, 1]")
        if conf.min(initial=0.0) < -1e-9 or conf.max(initial=0.0) > 1.0 + 1e-9:
            raise ValueError("confidence values must lie in [0, 1]")
        object.__setattr__(self, "prediction", pred)
        object.__setattr__(self, "truth", truth)
        object.__setattr__(self, "uncertainty", unc)
        object.__setattr__(self, "confidence", conf)

    @property
    def error_mask(self) -> np.ndarray:
        return self.prediction != self.truth


def dice_score(pred: np.ndarray, truth: np.ndarray) -> float:
    """Dice overlap of two binary masks; two empty masks count as 1."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ShapeError(f"mask shapes differ: {pred.shape} vs {truth.shape}")
    p = pred.astype(bool)
    t = truth.astype(bool)
    total = int(p.sum()) + int(t.sum())
    if total == 0:
        return 1.0
    return 2.0 * int((p & t).sum()) / total


def dgs(records: list[EvalRecord]) -> float:
    """Dice global score: mean of per-slice lesion dice."""
    if not records:
        raise EmptyInput("no records to score")
    return float(
        np.mean([dice_score(r.prediction != 0, r.truth != 0) for r in records])
    )


def dcs(records: list[EvalRecord]) -> float:
    """Dice per-case score: dice of pooled voxels per case, averaged over cases.

    Pooling means the case dice is computed from summed intersections and
    mask sizes across the case's slices, not from averaging slice dices.
    """
    if not records:
        raise EmptyInput("no records to score")
    inter: dict[int, int] = defaultdict(int)
    size: dict[int, int] = defaultdict(int)
    for r in records:
        p = r.prediction != 0
        t = r.truth != 0
        inter[r.case_id] += int((p & t).sum())
        size[r.case_id] += int(p.sum()) + int(t.sum())
    scores = [
        1.0 if size[case] == 0 else 2.0 * inter[case] / size[case] for case in sorted(inter)
    ]
    return float(np.mean(scores))


def _binned_gap(confidence: np.ndarray, correct: np.ndarray, n_bins: int) -> float:
    bins = np.minimum((confidence * n_bins).astype(np.int64), n_bins - 1)
    total = confidence.size
    gap = 0.0
    for b in range(n_bins):
        members = bins == b
        count = int(members.sum())
        if count == 0:
            continue
        acc = float(correct[members].mean())
        conf = float(confidence[members].mean())
        gap += count / total * abs(acc - conf)
    return gap


def ece(records: list[EvalRecord], n_bins: int = 10) -> float:
    """Expected calibration error over pooled pixels, equal-width bins."""
    if n_bins < 1:
        raise ValueError("need at least one bin")
    if not records:
        raise EmptyInput("no records to score")
    confidence = np.concatenate([r.confidence.ravel() for r in records])
    correct = np.concatenate([(r.prediction == r.truth).ravel() for r in records])
    if confidence.size == 0:
        raise EmptyInput("records contain no pixels")
    return _binned_gap(confidence, correct.astype(np.float64), n_bins)


def neg_log_ece(value: float) -> float:
    """-ln(ECE), floored so perfectly calibrated runs stay finite."""
    return float(-np.log(max(value, ECE_FLOOR)))


def ueo(uncertainty: np.ndarray, errors: np.ndarray, normalize: bool = True) -> float:
    """Uncertainty-error overlap: best dice of (u > tau) against the error mask.

    The map is min-max rescaled first (flat maps become all zero), then the
    dice is maximized over thresholds 0.01, 0.02, ..., 0.99.
    """
    u = np.asarray(uncertainty, dtype=np.float64)
    err = np.asarray(errors).astype(bool)
    if u.shape != err.shape:
        raise ShapeError(f"grid shapes differ: {u.shape} vs {err.shape}")
    if normalize:
        lo, hi = u.min(), u.max()
        u = (u - lo) / (hi - lo) if hi > lo else np.zeros_like(u)
    taus = UEO_THRESHOLDS.reshape((-1,) + (1,) * u.ndim)
    flags = u[None, ...] > taus
    reduce_axes = tuple(range(1, flags.ndim))
    inter = (flags & err).sum(axis=reduce_axes)
    sizes = flags.sum(axis=reduce_axes) + err.sum()
    dices = np.where(sizes == 0, 1.0, 2.0 * inter / np.maximum(sizes, 1))
    return float(dices.max())


def volume_correlation(pred_volumes, true_volumes) -> float:
    """Pearson correlation between per-case predicted and true volumes."""
    a = np.asarray(pred_volumes, dtype=np.float64)
    b = np.asarray(true_volumes, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"volume vectors differ in shape: {a.shape} vs {b.shape}")
    if a.size < 2:
        raise DegenerateCorrelation("need at least two cases")
    if np.ptp(a) == 0.0 or np.ptp(b) == 0.0:
        raise DegenerateCorrelation("volumes are constant; correlation undefined")
    return float(np.corrcoef(a, b)[0, 1])


@dataclass(frozen=True)
class MetricsReport:
    """Aggregated evaluation results for one (fusion, perturbation) setting."""

    run_id: str
    fusion: str
    perturb_kind: str
    perturb_param: str
    dgs: float
    dcs: float
    ece: float
    neg_log_ece: float
    ueo: float
    mean_u_fused: float
    mean_u_phase: dict[str, float] = field(default_factory=dict)
    pearson_r: float = float("nan")
    n_slices: int = 0
    n_cases: int = 0
    mean_present: float = 0.0

    def to_csv_row(self) -> str:
        values = [
            self.run_id,
            self.fusion,
            self.perturb_kind,
            self.perturb_param,
            repr(self.dgs),
            repr(self.dcs),
            repr(self.ece),
            repr(self.neg_log_ece),
            repr(self.ueo),
            repr(self.mean_u_fused),
        ]
        for phase in PHASES:
            values.append(repr(self.mean_u_phase.get(phase, float("nan"))))
        return ",".join(values)

    @staticmethod
    def csv_header() -> str:
        return ",".join(CSV_COLUMNS)

    def to_json_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "fusion": self.fusion,
            "perturb_kind": self.perturb_kind,
            "perturb_param": self.perturb_param,
            "dgs": self.dgs,
            "dcs": self.dcs,
            "ece": self.ece,
            "neg_log_ece": self.neg_log_ece,
            "ueo": self.ueo,
            "mean_u_fused": self.mean_u_fused,
            "mean_u_phase": {p: self.mean_u_phase.get(p, float("nan")) for p in PHASES},
            "pearson_r": self.pearson_r,
            "n_slices": self.n_slices,
            "n_cases": self.n_cases,
            "mean_present": self.mean_present,
        }
