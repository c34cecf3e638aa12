"""Segmentation losses over channel-first opinion grids.

The reference implementations here are plain numpy and operate on a single
sample: one-hot targets, probabilities and Dirichlet parameters are all
(N, H, W) arrays. `loss_gradients` wires the same formulas through the
autodiff engine (via `graph_ops`) to differentiate the full training
objective with respect to raw evidence maps, without any network in the
loop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import graph_ops
from .autodiff import Tensor
from .errors import EmptyFusion, InvalidEvidence, ShapeError
from .special import digamma

DICE_SMOOTH = 1e-5


@dataclass(frozen=True)
class LossWeights:
    """Mixing weights of the training objective.

    lambda_p scales the average of the per-phase losses, lambda_m the loss of
    the fused opinion; dice_smooth is the additive smoothing of the soft Dice
    ratio.
    """

    lambda_p: float = 0.5
    lambda_m: float = 1.0
    dice_smooth: float = DICE_SMOOTH


def one_hot(mask: np.ndarray, n_categories: int) -> np.ndarray:
    """Integer label mask (H, W) or (B, H, W) -> one-hot floats, channel first."""
    mask = np.asarray(mask)
    if mask.ndim not in (2, 3):
        raise ShapeError(f"expected a 2-d or 3-d label mask, got shape {mask.shape}")
    labels = mask.astype(np.int64)
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= n_categories:
        raise ValueError(f"labels must lie in [0, {n_categories})")
    encoded = np.eye(n_categories, dtype=np.float64)[labels]
    # move the category axis in front of the spatial axes
    return np.moveaxis(encoded, -1, mask.ndim - 2)


def _check_grids(y: np.ndarray, other: np.ndarray, name: str) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64)
    other = np.asarray(other, dtype=np.float64)
    if y.ndim != 3:
        raise ShapeError(f"expected (N, H, W) targets, got shape {y.shape}")
    if other.shape != y.shape:
        raise ShapeError(f"{name} shape {other.shape} does not match targets {y.shape}")
    return y, other


def dice_loss(y: np.ndarray, p: np.ndarray, smooth: float = DICE_SMOOTH) -> float:
    """Soft Dice loss: one minus the class-averaged smoothed Dice ratio."""
    y, p = _check_grids(y, p, "probabilities")
    if p.min() < -1e-9 or p.max() > 1.0 + 1e-9:
        raise ValueError("probabilities must lie in [0, 1]")
    intersection = (y * p).sum(axis=(1, 2))
    denom = y.sum(axis=(1, 2)) + p.sum(axis=(1, 2))
    per_class = (2.0 * intersection + smooth) / (denom + smooth)
    return float(1.0 - per_class.mean())


def evidence_loss(y: np.ndarray, alphas: np.ndarray, reduction: str = "sum") -> float:
    """Dirichlet-expected cross-entropy sum_n y^n (psi(S) - psi(alpha^n)).

    With reduction "sum" (the optimized quantity) pixel contributions are
    summed over the grid; "mean" divides by the pixel count for reporting.
    """
    y, alphas = _check_grids(y, alphas, "alphas")
    if alphas.min() < 1.0:
        raise InvalidEvidence("Dirichlet parameters must be >= 1")
    strength = alphas.sum(axis=0, keepdims=True)
    per_pixel = (y * (digamma(strength) - digamma(alphas))).sum(axis=0)
    if reduction == "sum":
        return float(per_pixel.sum())
    if reduction == "mean":
        return float(per_pixel.mean())
    raise ValueError(f"unknown reduction {reduction!r}")


def combined_loss(
    y: np.ndarray, p: np.ndarray, alphas: np.ndarray, smooth: float = DICE_SMOOTH
) -> float:
    """Dice plus evidence loss of one (probability, Dirichlet) pair."""
    return dice_loss(y, p, smooth) + evidence_loss(y, alphas)


def total_loss(y: np.ndarray, per_phase, fused, weights: LossWeights = LossWeights()) -> float:
    """Weighted training objective over per-phase pairs and the fused pair.

    per_phase is a sequence of (p, alphas) pairs, fused a single pair;
    the result is lambda_p times the phase average plus lambda_m times the
    fused term.
    """
    pairs = list(per_phase)
    if not pairs:
        raise EmptyFusion("total loss needs at least one phase")
    phase_term = sum(combined_loss(y, p, a, weights.dice_smooth) for p, a in pairs) / len(pairs)
    fused_p, fused_alpha = fused
    mixture_term = combined_loss(y, fused_p, fused_alpha, weights.dice_smooth)
    return float(weights.lambda_p * phase_term + weights.lambda_m * mixture_term)


def loss_gradients(
    y: np.ndarray,
    evidence_by_phase: dict[str, np.ndarray],
    weights: LossWeights = LossWeights(),
    fusion: str = "mems",
) -> tuple[float, dict[str, np.ndarray]]:
    """Differentiate the training objective with respect to raw evidence.

    evidence_by_phase maps phase names to non-negative (N, H, W) evidence
    grids. The objective is rebuilt on autodiff tensors: evidence -> Dirichlet
    parameters -> opinions -> fused opinion -> total loss. Returns the loss
    value and a dict of gradients with the same keys and shapes as the input.
    """
    if not evidence_by_phase:
        raise EmptyFusion("no evidence maps given")
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 3:
        raise ShapeError(f"expected (N, H, W) targets, got shape {y.shape}")
    n = y.shape[0]
    y_t = Tensor(y[None])
    tensors: dict[str, Tensor] = {}
    per_phase = []
    opinions = []
    for name, evidence in evidence_by_phase.items():
        arr = np.asarray(evidence, dtype=np.float64)
        if arr.shape != y.shape:
            raise ShapeError(f"evidence {name!r} shape {arr.shape} does not match {y.shape}")
        if not np.all(np.isfinite(arr)) or arr.min() < 0.0:
            raise InvalidEvidence(f"evidence {name!r} must be finite and non-negative")
        e_t = Tensor(arr[None], requires_grad=True)
        tensors[name] = e_t
        alpha, _, beliefs, uncertainty = graph_ops.opinion_from_evidence(e_t, n)
        p = graph_ops.prediction_from_opinion(beliefs, uncertainty, n)
        per_phase.append((p, alpha))
        opinions.append((beliefs, uncertainty))
    fused_b, fused_u = graph_ops.fuse_opinions(opinions, mode=fusion)
    fused_pair = (
        graph_ops.prediction_from_opinion(fused_b, fused_u, n),
        graph_ops.alpha_from_opinion(fused_b, fused_u, n),
    )
    total, _, _ = graph_ops.objective(y_t, per_phase, fused_pair, weights)
    total.backward()
    grads = {name: t.grad[0].copy() for name, t in tensors.items()}
    return float(total.data), grads
