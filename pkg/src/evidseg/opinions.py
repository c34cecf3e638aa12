"""Subjective-logic opinion algebra over Dirichlet-parameterized evidence.

An opinion assigns a belief mass to each of N categories plus an explicit
uncertainty mass, all non-negative and summing to one. Evidence e >= 0 maps to
Dirichlet parameters alpha = e + 1 with strength S = sum(alpha); the induced
opinion has beliefs (alpha - 1) / S and uncertainty N / S. Two opinions are
fused by the reduced combination rule restricted to singleton focal sets plus
the full frame: cross-category belief products form the conflict mass C, and
the surviving mass is renormalized by 1 / (1 - C).

Scalar objects (`Opinion`, `DirichletParams`) carry the invariants; the
`*_masses` functions are vectorized kernels over trailing-axis belief arrays,
used by the property suites and the evaluation pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .errors import DegenerateOpinion, EmptyFusion, InvalidEvidence, ShapeError, TotalConflict

#: tolerance for the additivity invariant sum(beliefs) + uncertainty == 1
MASS_TOL = 1e-9

#: conflicts at or above 1 - CONFLICT_EPS are treated as total
CONFLICT_EPS = 1e-12


@dataclass(frozen=True)
class CategorySet:
    """The prediction categories; index 0 is background by convention."""

    labels: tuple[str, ...] = ("background", "lesion")

    @property
    def n_categories(self) -> int:
        return len(self.labels)

    def __post_init__(self):
        if len(self.labels) < 2:
            raise ValueError("need at least two categories")


@dataclass(frozen=True)
class Opinion:
    """Belief masses over N categories plus an uncertainty mass."""

    beliefs: np.ndarray
    uncertainty: float

    def __post_init__(self):
        b = np.asarray(self.beliefs, dtype=np.float64)
        object.__setattr__(self, "beliefs", b)
        if b.ndim != 1 or b.size < 2:
            raise ValueError("beliefs must be a vector of length >= 2")
        if np.any(b < 0.0) or self.uncertainty < 0.0:
            raise ValueError("belief and uncertainty masses must be non-negative")
        total = float(b.sum()) + self.uncertainty
        if abs(total - 1.0) > MASS_TOL:
            raise ValueError(f"masses must sum to 1 (got {total!r})")

    @property
    def n_categories(self) -> int:
        return self.beliefs.size


def vacuous_opinion(n_categories: int) -> Opinion:
    """The identity of the combination rule: zero belief, full uncertainty."""
    return Opinion(np.zeros(n_categories), 1.0)


@dataclass(frozen=True)
class DirichletParams:
    """Dirichlet concentration parameters, alpha = evidence + 1 >= 1."""

    alphas: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alphas, dtype=np.float64)
        object.__setattr__(self, "alphas", a)
        if a.ndim != 1 or a.size < 2:
            raise ValueError("alphas must be a vector of length >= 2")
        if np.any(a < 1.0) or not np.all(np.isfinite(a)):
            raise ValueError("every alpha must be finite and >= 1")

    @property
    def strength(self) -> float:
        return float(self.alphas.sum())

    @property
    def n_categories(self) -> int:
        return self.alphas.size


def evidence_to_alpha(evidence) -> DirichletParams:
    """alpha = e + 1 componentwise for non-negative finite evidence."""
    e = np.asarray(evidence, dtype=np.float64)
    if not np.all(np.isfinite(e)) or np.any(e < 0.0):
        raise InvalidEvidence("evidence must be finite and >= 0")
    return DirichletParams(e + 1.0)


def alpha_to_opinion(params: DirichletParams) -> Opinion:
    """beliefs = (alpha - 1) / S, uncertainty = N / S."""
    s = params.strength
    return Opinion((params.alphas - 1.0) / s, params.n_categories / s)


def expected_probability(params: DirichletParams) -> np.ndarray:
    """Dirichlet mean alpha / S; sums to 1."""
    return params.alphas / params.strength


def opinion_to_alpha(op: Opinion, n_categories: int | None = None) -> DirichletParams:
    """Invert alpha_to_opinion: S = N / u, alpha = b * S + 1. Requires u > 0."""
    n = op.n_categories if n_categories is None else n_categories
    if n != op.n_categories:
        raise ShapeError(f"opinion has {op.n_categories} categories, expected {n}")
    if op.uncertainty <= 0.0:
        raise DegenerateOpinion("zero uncertainty corresponds to infinite evidence")
    s = n / op.uncertainty
    return DirichletParams(op.beliefs * s + 1.0)


def fused_prediction(op: Opinion, n_categories: int | None = None) -> np.ndarray:
    """Probabilities induced by an opinion: p = b + u / N.

    Closed form of expected_probability(opinion_to_alpha(op)); shares its
    u > 0 requirement.
    """
    n = op.n_categories if n_categories is None else n_categories
    if n != op.n_categories:
        raise ShapeError(f"opinion has {op.n_categories} categories, expected {n}")
    if op.uncertainty <= 0.0:
        raise DegenerateOpinion("zero uncertainty corresponds to infinite evidence")
    return op.beliefs + op.uncertainty / n


def conflict_masses(b1: np.ndarray, b2: np.ndarray) -> np.ndarray:
    """Conflict C = sum over unequal category pairs of b1[n1] * b2[n2].

    Beliefs live on the last axis; leading axes broadcast.
    """
    b1 = np.asarray(b1, dtype=np.float64)
    b2 = np.asarray(b2, dtype=np.float64)
    if b1.shape[-1] != b2.shape[-1]:
        raise ShapeError("belief vectors must share the category axis")
    return b1.sum(axis=-1) * b2.sum(axis=-1) - (b1 * b2).sum(axis=-1)


def combine_masses(b1, u1, b2, u2):
    """Reduced combination rule on raw mass arrays.

    Beliefs have the category axis last; uncertainties carry the leading axes.
    Returns (beliefs, uncertainty). Raises TotalConflict when any pair has
    conflict >= 1 - 1e-12.
    """
    b1 = np.asarray(b1, dtype=np.float64)
    b2 = np.asarray(b2, dtype=np.float64)
    u1 = np.asarray(u1, dtype=np.float64)
    u2 = np.asarray(u2, dtype=np.float64)
    c = conflict_masses(b1, b2)
    if np.any(c >= 1.0 - CONFLICT_EPS):
        raise TotalConflict(f"conflict {float(np.max(c))!r} leaves no mass to renormalize")
    scale = 1.0 / (1.0 - c)
    b = (b1 * b2 + b1 * u2[..., None] + b2 * u1[..., None]) * scale[..., None]
    u = u1 * u2 * scale
    return b, u


def conflict(a: Opinion, b: Opinion) -> float:
    """Conflict coefficient between two opinions, in [0, 1]."""
    if a.n_categories != b.n_categories:
        raise ShapeError("opinions must share the category set")
    return float(conflict_masses(a.beliefs, b.beliefs))


def combine(a: Opinion, b: Opinion) -> Opinion:
    """Fuse two opinions with the reduced combination rule."""
    if a.n_categories != b.n_categories:
        raise ShapeError("opinions must share the category set")
    beliefs, u = combine_masses(a.beliefs, a.uncertainty, b.beliefs, b.uncertainty)
    return Opinion(beliefs, float(u))


def combine_many(opinions) -> Opinion:
    """Left fold of combine over an ordered, non-empty list of opinions."""
    ops = list(opinions)
    if not ops:
        raise EmptyFusion("cannot fuse an empty list of opinions")
    return reduce(combine, ops)


@dataclass(frozen=True)
class OpinionGrid:
    """Per-pixel opinions stored channel-first: beliefs (N, H, W), u (H, W)."""

    beliefs: np.ndarray
    uncertainty: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.beliefs, dtype=np.float64)
        u = np.asarray(self.uncertainty, dtype=np.float64)
        object.__setattr__(self, "beliefs", b)
        object.__setattr__(self, "uncertainty", u)
        if b.ndim != 3 or u.ndim != 2 or b.shape[1:] != u.shape:
            raise ShapeError(f"beliefs {b.shape} and uncertainty {u.shape} do not align")
        if np.any(b < -MASS_TOL) or np.any(u < -MASS_TOL):
            raise ValueError("negative mass in opinion grid")
        total = b.sum(axis=0) + u
        if np.max(np.abs(total - 1.0)) > MASS_TOL:
            raise ValueError("per-pixel masses must sum to 1")

    @property
    def n_categories(self) -> int:
        return self.beliefs.shape[0]

    @property
    def height(self) -> int:
        return self.beliefs.shape[1]

    @property
    def width(self) -> int:
        return self.beliefs.shape[2]

    def at(self, i: int, j: int) -> Opinion:
        return Opinion(self.beliefs[:, i, j].copy(), float(self.uncertainty[i, j]))

    def prediction(self) -> np.ndarray:
        """Per-pixel induced probabilities, shape (N, H, W)."""
        return self.beliefs + self.uncertainty / self.n_categories


def combine_grids(a: OpinionGrid, b: OpinionGrid) -> OpinionGrid:
    """Pixel-wise reduced combination of two opinion grids."""
    if a.beliefs.shape != b.beliefs.shape:
        raise ShapeError("grids must share shape and category count")
    b1 = np.moveaxis(a.beliefs, 0, -1)
    b2 = np.moveaxis(b.beliefs, 0, -1)
    fused_b, fused_u = combine_masses(b1, a.uncertainty, b2, b.uncertainty)
    return OpinionGrid(np.moveaxis(fused_b, -1, 0), fused_u)


def combine_grids_many(grids) -> OpinionGrid:
    """Left fold of combine_grids over a non-empty list."""
    gs = list(grids)
    if not gs:
        raise EmptyFusion("cannot fuse an empty list of opinion grids")
    return reduce(combine_grids, gs)


def average_grids(grids) -> OpinionGrid:
    """Ablation baseline: arithmetic mean of beliefs and uncertainties.

    The mean of valid opinions already satisfies additivity; the explicit
    renormalization only absorbs rounding drift.
    """
    gs = list(grids)
    if not gs:
        raise EmptyFusion("cannot average an empty list of opinion grids")
    beliefs = np.mean([g.beliefs for g in gs], axis=0)
    u = np.mean([g.uncertainty for g in gs], axis=0)
    total = beliefs.sum(axis=0) + u
    return OpinionGrid(beliefs / total, u / total)
