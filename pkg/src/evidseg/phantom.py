"""Synthetic multi-phase abdominal phantoms and test-time perturbations.

Each sample is a stack of co-registered single-channel images, one per
contrast phase (non-contrast, arterial, portal-venous, delayed), plus a
binary lesion mask. Lesions follow fixed enhancement rules: roughly
iso-intense before contrast, hyper-intense in the arterial phase,
hypo-intense in the portal-venous phase, and iso-intense with a bright rim
in the delayed phase. Geometry and intensities are jittered per sample from
a seeded generator, so a (seed, index) pair always reproduces the same
sample byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, ShapeError

PHASES = ("nc", "art", "pv", "de")

_BACKGROUND_LEVEL = 0.15
_ORGAN_LEVEL = {"nc": 0.40, "art": 0.50, "pv": 0.62, "de": 0.52}
_TUMOR_SHIFT = {"nc": 0.07, "art": 0.30, "pv": -0.28, "de": 0.03}
_RIM_SHIFT = 0.28
_TEXTURE_SIGMA = 0.015
_MIN_SIZE = 16

PERTURB_KINDS = ("noise", "blur", "missing")


@dataclass(frozen=True)
class PhaseStack:
    """One multi-phase slice: per-phase images, lesion mask, provenance ids.

    `phases` holds only the phases that are present, keyed by phase name in
    canonical order; every image is an (H, W) float array in [0, 1]. `mask`
    is an (H, W) integer label map (0 background, 1 lesion). `case_id`
    groups consecutive slices of the same synthetic case; `sample_id` is the
    index of the slice within its run and seeds per-sample perturbations.
    """

    phases: dict[str, np.ndarray]
    mask: np.ndarray
    case_id: int = 0
    sample_id: int = 0

    def __post_init__(self) -> None:
        if not self.phases:
            raise ShapeError("a sample needs at least one phase image")
        unknown = [name for name in self.phases if name not in PHASES]
        if unknown:
            raise ConfigError(f"unknown phase names {unknown!r}")
        mask = np.asarray(self.mask)
        if mask.ndim != 2:
            raise ShapeError(f"mask must be 2-d, got shape {mask.shape}")
        ordered: dict[str, np.ndarray] = {}
        for name in PHASES:
            if name not in self.phases:
                continue
            img = np.asarray(self.phases[name], dtype=np.float64)
            if img.shape != mask.shape:
                raise ShapeError(
                    f"phase {name!r} shape {img.shape} does not match mask {mask.shape}"
                )
            if not np.all(np.isfinite(img)):
                raise ShapeError(f"phase {name!r} contains non-finite values")
            ordered[name] = img
        object.__setattr__(self, "phases", ordered)
        object.__setattr__(self, "mask", mask.astype(np.int64))

    @property
    def present(self) -> tuple[str, ...]:
        return tuple(self.phases)

    @property
    def size(self) -> int:
        return self.mask.shape[0]

    def image(self, phase: str) -> np.ndarray:
        return self.phases[phase]


@dataclass(frozen=True)
class PerturbSpec:
    """A single test-time corruption: noise, blur, or missing phases.

    noise adds zero-mean Gaussian noise of variance `noise_var` to every
    present phase; blur convolves each phase with a normalized Gaussian
    kernel of variance `blur_var` (in squared pixels) and odd width
    `kernel_size`; missing drops `n_missing` randomly chosen phases. `seed`
    is mixed with the sample id so reruns corrupt identically.
    """

    kind: str
    noise_var: float = 0.0
    blur_var: float = 0.0
    kernel_size: int = 0
    n_missing: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in PERTURB_KINDS:
            raise ConfigError(f"unknown perturbation kind {self.kind!r}")
        if self.kind == "noise" and not self.noise_var >= 0.0:
            raise ConfigError("noise variance must be >= 0")
        if self.kind == "blur":
            if not self.blur_var > 0.0:
                raise ConfigError("blur variance must be > 0")
            if self.kernel_size < 1 or self.kernel_size % 2 == 0:
                raise ConfigError("blur kernel size must be odd and >= 1")
        if self.kind == "missing" and self.n_missing < 1:
            raise ConfigError("number of missing phases must be >= 1")


def _sample_rng(seed: int, index: int) -> np.random.Generator:
    # Mixing through SeedSequence keeps per-sample streams independent.
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def _ellipse(size: int, center, axes, angle: float) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    dy = yy - center[0]
    dx = xx - center[1]
    cos_a, sin_a = np.cos(angle), np.sin(angle)
    major = dy * cos_a + dx * sin_a
    minor = -dy * sin_a + dx * cos_a
    return (major / axes[0]) ** 2 + (minor / axes[1]) ** 2 <= 1.0


def _generate_one(size: int, rng: np.random.Generator) -> tuple[dict[str, np.ndarray], np.ndarray]:
    organ_center = size / 2.0 + rng.uniform(-size / 8.0, size / 8.0, size=2)
    organ_axes = rng.uniform(0.28, 0.38, size=2) * size
    organ_angle = rng.uniform(0.0, np.pi)
    organ = _ellipse(size, organ_center, organ_axes, organ_angle)

    base = _BACKGROUND_LEVEL + rng.uniform(-0.03, 0.03)
    grad = rng.uniform(-0.04, 0.04, size=2)
    yy, xx = np.mgrid[0:size, 0:size]
    background = base + grad[0] * yy / size + grad[1] * xx / size

    n_tumors = int(rng.integers(0, 4))
    tumors = []
    inner = _ellipse(size, organ_center, organ_axes * 0.75, organ_angle)
    for _ in range(n_tumors):
        for _attempt in range(100):
            center = rng.uniform(0.0, size, size=2)
            iy, ix = int(center[0]), int(center[1])
            if 0 <= iy < size and 0 <= ix < size and inner[iy, ix]:
                break
        else:
            continue
        axes = rng.uniform(0.06, 0.14, size=2) * size
        axes = np.minimum(axes, organ_axes.min() * 0.5)
        angle = rng.uniform(0.0, np.pi)
        core = _ellipse(size, center, axes, angle)
        rim = core & ~_ellipse(size, center, axes * 0.65, angle)
        tumors.append((core, rim))

    organ_jitter = rng.uniform(-0.03, 0.03, size=len(PHASES))
    shift_jitter = rng.uniform(0.9, 1.1, size=len(PHASES))
    rim_jitter = rng.uniform(0.9, 1.1)

    mask = np.zeros((size, size), dtype=np.int64)
    images: dict[str, np.ndarray] = {}
    for k, name in enumerate(PHASES):
        img = background.copy()
        organ_value = _ORGAN_LEVEL[name] + organ_jitter[k]
        img[organ] = organ_value
        tumor_value = organ_value + _TUMOR_SHIFT[name] * shift_jitter[k]
        for core, rim in tumors:
            img[core] = tumor_value
            if name == "de":
                img[rim] = organ_value + _RIM_SHIFT * rim_jitter
        img += rng.normal(0.0, _TEXTURE_SIGMA, size=(size, size))
        images[name] = np.clip(img, 0.0, 1.0)
    for core, _rim in tumors:
        mask[core] = 1
    return images, mask


def generate_phantom(
    count: int, size: int = 32, seed: int = 0, slices_per_case: int = 5
) -> list[PhaseStack]:
    """Generate `count` deterministic multi-phase phantom slices.

    Consecutive slices share a case id in groups of `slices_per_case`.
    Sample i is drawn from a generator seeded with SeedSequence([seed, i]),
    so any slice can be regenerated independently of the rest of the run.
    """
    if count < 1:
        raise ConfigError("sample count must be >= 1")
    if size < _MIN_SIZE:
        raise ConfigError(f"image size must be >= {_MIN_SIZE}")
    if slices_per_case < 1:
        raise ConfigError("slices per case must be >= 1")
    samples = []
    for index in range(count):
        images, mask = _generate_one(size, _sample_rng(seed, index))
        samples.append(
            PhaseStack(
                phases=images,
                mask=mask,
                case_id=index // slices_per_case,
                sample_id=index,
            )
        )
    return samples


def _gaussian_kernel(kernel_size: int, variance: float) -> np.ndarray:
    center = (kernel_size - 1) / 2.0
    offsets = np.arange(kernel_size, dtype=np.float64) - center
    weights = np.exp(-(offsets**2) / (2.0 * variance))
    return weights / weights.sum()


def _blur_image(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    pad = len(kernel) // 2
    if pad == 0:
        return img.copy()
    padded = np.pad(img, ((pad, pad), (0, 0)), mode="reflect")
    out = sliding_window_view(padded, len(kernel), axis=0) @ kernel
    padded = np.pad(out, ((0, 0), (pad, pad)), mode="reflect")
    return sliding_window_view(padded, len(kernel), axis=1) @ kernel


def perturb(sample: PhaseStack, spec: PerturbSpec) -> PhaseStack:
    """Apply one corruption to a sample, leaving the mask untouched.

    Noise and phase dropout draw from a stream seeded by
    (spec.seed, sample.sample_id); blur is deterministic. Dropping as many
    phases as are present is rejected with ConfigError so at least one
    phase always survives.
    """
    rng = _sample_rng(spec.seed, sample.sample_id)
    if spec.kind == "noise":
        sigma = np.sqrt(spec.noise_var)
        phases = {
            name: np.clip(img + rng.normal(0.0, sigma, size=img.shape), 0.0, 1.0)
            for name, img in sample.phases.items()
        }
    elif spec.kind == "blur":
        kernel = _gaussian_kernel(spec.kernel_size, spec.blur_var)
        phases = {name: _blur_image(img, kernel) for name, img in sample.phases.items()}
    else:  # missing
        present = sample.present
        if spec.n_missing >= len(present):
            raise ConfigError(
                f"cannot drop {spec.n_missing} of {len(present)} present phases"
            )
        dropped = set(rng.choice(len(present), size=spec.n_missing, replace=False))
        phases = {
            name: img
            for i, (name, img) in enumerate(sample.phases.items())
            if i not in dropped
        }
    return replace(sample, phases=phases)


def hu_window(raw: np.ndarray, level: float = 40.0, width: float = 140.0) -> np.ndarray:
    """Map raw attenuation values to [0, 1] with a linear window.

    Values at or below level - width/2 map to 0, values at or above
    level + width/2 map to 1.
    """
    if not width > 0.0:
        raise ConfigError("window width must be > 0")
    raw = np.asarray(raw, dtype=np.float64)
    return np.clip((raw - (level - width / 2.0)) / width, 0.0, 1.0)
