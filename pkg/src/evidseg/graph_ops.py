"""Differentiable opinion algebra and segmentation losses on autodiff tensors.

Everything here operates on batched channel-first arrays: beliefs, evidence,
Dirichlet parameters and one-hot targets are (B, N, H, W) tensors, and
uncertainty keeps a singleton category axis, (B, 1, H, W), so that it
broadcasts cleanly against beliefs. These functions mirror the numpy
implementations in `opinions` and `losses`, which serve as their oracles in
the test suite.
"""

from __future__ import annotations

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, EmptyFusion


def opinion_from_evidence(evidence: Tensor, n_categories: int):
    """Evidence -> (alpha, strength, beliefs, uncertainty)."""
    alpha = evidence + 1.0
    strength = alpha.sum(axis=1, keepdims=True)
    beliefs = (alpha - 1.0) / strength
    uncertainty = float(n_categories) / strength
    return alpha, strength, beliefs, uncertainty


def combine_pair(b1: Tensor, u1: Tensor, b2: Tensor, u2: Tensor):
    """Pixel-wise reduced combination of two belief/uncertainty pairs."""
    m1 = b1.sum(axis=1, keepdims=True)
    m2 = b2.sum(axis=1, keepdims=True)
    agreement = (b1 * b2).sum(axis=1, keepdims=True)
    conflict = m1 * m2 - agreement
    scale = 1.0 / (1.0 - conflict)
    beliefs = (b1 * b2 + b1 * u2 + b2 * u1) * scale
    uncertainty = u1 * u2 * scale
    return beliefs, uncertainty


def fuse_opinions(opinions, mode: str = "mems"):
    """Fold a non-empty list of (beliefs, uncertainty) pairs into one.

    mode "mems" is the left fold of the reduced combination rule; mode
    "average" is the ablation baseline, the renormalized arithmetic mean.
    """
    pairs = list(opinions)
    if not pairs:
        raise EmptyFusion("no opinions to fuse")
    if mode == "mems":
        beliefs, uncertainty = pairs[0]
        for b, u in pairs[1:]:
            beliefs, uncertainty = combine_pair(beliefs, uncertainty, b, u)
        return beliefs, uncertainty
    if mode == "average":
        inv = 1.0 / len(pairs)
        beliefs = pairs[0][0] * inv
        uncertainty = pairs[0][1] * inv
        for b, u in pairs[1:]:
            beliefs = beliefs + b * inv
            uncertainty = uncertainty + u * inv
        total = beliefs.sum(axis=1, keepdims=True) + uncertainty
        return beliefs / total, uncertainty / total
    raise ConfigError(f"unknown fusion mode {mode!r}")


def prediction_from_opinion(beliefs: Tensor, uncertainty: Tensor, n_categories: int) -> Tensor:
    """Induced probabilities p = b + u / N."""
    return beliefs + uncertainty * (1.0 / n_categories)


def alpha_from_opinion(beliefs: Tensor, uncertainty: Tensor, n_categories: int) -> Tensor:
    """Dirichlet parameters of a fused opinion: alpha = b * (N / u) + 1."""
    strength = float(n_categories) / uncertainty
    return beliefs * strength + 1.0


def dice_loss(y: Tensor, p: Tensor, smooth: float) -> Tensor:
    """Soft Dice loss, class-averaged, then averaged over the batch."""
    intersection = (y * p).sum(axis=(2, 3))
    denom = y.sum(axis=(2, 3)) + p.sum(axis=(2, 3))
    per_class = (2.0 * intersection + smooth) / (denom + smooth)
    return 1.0 - per_class.mean()


def evidence_loss(y: Tensor, alpha: Tensor) -> Tensor:
    """Digamma-form Dirichlet cross-entropy, summed over pixels.

    Per-sample pixel sums are averaged over the batch axis.
    """
    strength = alpha.sum(axis=1, keepdims=True)
    per_pixel = y * (ad.digamma(strength) - ad.digamma(alpha))
    batch = y.shape[0]
    return per_pixel.sum() * (1.0 / batch)


def objective(y: Tensor, per_phase, fused, weights) -> tuple[Tensor, Tensor, Tensor]:
    """Total training loss and its phase-wise / mixture-wise terms.

    per_phase is a non-empty list of (p, alpha) tensor pairs, fused a single
    (p, alpha) pair. Returns (total, phase_term, mixture_term) tensors, with
    total = lambda_p / len(per_phase) * sum(dice + evidence per phase)
          + lambda_m * (dice + evidence of the fused pair).
    """
    pairs = list(per_phase)
    if not pairs:
        raise EmptyFusion("objective needs at least one phase")
    phase_term = None
    for p, alpha in pairs:
        term = dice_loss(y, p, weights.dice_smooth) + evidence_loss(y, alpha)
        phase_term = term if phase_term is None else phase_term + term
    phase_term = phase_term * (1.0 / len(pairs))
    fused_p, fused_alpha = fused
    mixture_term = dice_loss(y, fused_p, weights.dice_smooth) + evidence_loss(y, fused_alpha)
    total = phase_term * weights.lambda_p + mixture_term * weights.lambda_m
    return total, phase_term, mixture_term
