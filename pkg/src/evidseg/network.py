"""Convolutional evidence network: extractor, per-phase experts, training.

The model maps each phase image through a small padded conv stack (shared
across phases by default, optionally per phase) and a per-phase expert head
whose final activation exp(tanh(x)) keeps every evidence value strictly
inside (1/e, e). Opinions derived from the evidence maps are fused
pixel-wise and the whole pipeline is trained end to end with Adam
(decoupled weight decay) under a cosine-annealed learning rate.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np

from . import autodiff as ad
from . import graph_ops, tensorio
from .autodiff import Tensor, no_grad
from .errors import ConfigError, EmptyFusion, EmptyInput, GraphError, ShapeError
from .losses import LossWeights, one_hot
from .opinions import OpinionGrid
from .phantom import PHASES, PhaseStack

FUSION_MODES = ("mems", "average")


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture of the evidence network."""

    phases: tuple[str, ...] = PHASES
    n_categories: int = 2
    channels: int = 8
    depth: int = 3
    kernel_size: int = 3
    shared_extractor: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if len(self.phases) < 1:
            raise ConfigError("need at least one phase")
        if self.n_categories < 2:
            raise ConfigError("need at least two categories")
        if self.channels < 1 or self.depth < 1:
            raise ConfigError("channels and depth must be >= 1")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigError("kernel size must be odd and >= 1")
        object.__setattr__(self, "phases", tuple(self.phases))


@dataclass(frozen=True)
class TrainConfig:
    """Optimization schedule for `train`."""

    epochs: int = 60
    learning_rate: float = 5e-4
    weight_decay: float = 1e-5
    batch_size: int = 4
    cosine_period: int = 20
    lr_min: float = 0.0
    seed: int = 0
    fusion: str = "mems"
    rotate_augment: bool = False

    def __post_init__(self) -> None:
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if not self.learning_rate > 0.0 or self.lr_min < 0.0:
            raise ConfigError("learning rate must be > 0 and lr_min >= 0")
        if self.weight_decay < 0.0:
            raise ConfigError("weight decay must be >= 0")
        if self.batch_size < 1 or self.cosine_period < 1:
            raise ConfigError("batch size and cosine period must be >= 1")
        if self.fusion not in FUSION_MODES:
            raise ConfigError(f"unknown fusion mode {self.fusion!r}")


class Conv2d:
    """3x3/1x1 convolution layer with He-initialized weights and zero bias."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 rng: np.random.Generator, init_scale: float = 1.0) -> None:
        fan_in = in_channels * kernel_size * kernel_size
        scale = init_scale * np.sqrt(2.0 / fan_in)
        self.weight = Tensor(
            rng.normal(0.0, scale, size=(out_channels, in_channels, kernel_size, kernel_size)),
            requires_grad=True,
        )
        self.bias = Tensor(np.zeros(out_channels), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.conv2d(x, self.weight, self.bias)


class Model:
    """Feature extractor(s) plus one expert head per phase."""

    # Images live in [0, 1]; subtracting the midpoint before the first
    # convolution keeps early-layer activations roughly zero-centered.
    INPUT_CENTER = 0.5
    # The head feeds exp(tanh(.)), which is nearly flat once |x| > 2. A
    # damped initialization starts every evidence value near 1 (maximal
    # uncertainty) instead of a random point in the saturated tails, which
    # speeds up the early epochs considerably.
    HEAD_INIT_SCALE = 0.1

    def __init__(self, config: NetworkConfig) -> None:
        self.config = config
        rng = np.random.default_rng(config.seed)
        k, c = config.kernel_size, config.channels
        extractor_keys = ("shared",) if config.shared_extractor else config.phases
        self._extractors: dict[str, list[Conv2d]] = {}
        for key in extractor_keys:
            widths = [1] + [c] * config.depth
            self._extractors[key] = [
                Conv2d(widths[i], widths[i + 1], k, rng) for i in range(config.depth)
            ]
        self._experts: dict[str, tuple[Conv2d, Conv2d]] = {}
        for phase in config.phases:
            self._experts[phase] = (
                Conv2d(c, c, k, rng),
                Conv2d(c, config.n_categories, 1, rng, init_scale=self.HEAD_INIT_SCALE),
            )

    def _extractor(self, phase: str) -> list[Conv2d]:
        if phase not in self.config.phases:
            raise ConfigError(f"phase {phase!r} not in model config")
        key = "shared" if self.config.shared_extractor else phase
        return self._extractors[key]

    def extract_features(self, x: Tensor, phase: str) -> Tensor:
        """(B, 1, H, W) image -> (B, C, H, W) features, spatial size kept."""
        if x.ndim != 4 or x.shape[1] != 1:
            raise ShapeError(f"expected (B, 1, H, W) input, got shape {x.shape}")
        h = x - self.INPUT_CENTER
        for conv in self._extractor(phase):
            h = ad.relu(conv(h))
        return h

    def expert_forward(self, features: Tensor, phase: str) -> Tensor:
        """Features -> bounded evidence map, values in (1/e, e)."""
        if phase not in self.config.phases:
            raise ConfigError(f"phase {phase!r} not in model config")
        if features.ndim != 4 or features.shape[1] != self.config.channels:
            raise ShapeError(f"expected (B, {self.config.channels}, H, W) features")
        hidden, head = self._experts[phase]
        h = ad.relu(hidden(features))
        return ad.exp(ad.tanh(head(h)))

    def phase_evidence(self, images: dict[str, Tensor]) -> dict[str, Tensor]:
        """Run extractor + expert for every given phase image."""
        return {
            phase: self.expert_forward(self.extract_features(x, phase), phase)
            for phase, x in images.items()
        }

    def named_parameters(self) -> dict[str, Tensor]:
        params: dict[str, Tensor] = {}
        for key, layers in self._extractors.items():
            for i, conv in enumerate(layers):
                params[f"extractor.{key}.conv{i}.weight"] = conv.weight
                params[f"extractor.{key}.conv{i}.bias"] = conv.bias
        for phase, (hidden, head) in self._experts.items():
            params[f"expert.{phase}.conv0.weight"] = hidden.weight
            params[f"expert.{phase}.conv0.bias"] = hidden.bias
            params[f"expert.{phase}.conv1.weight"] = head.weight
            params[f"expert.{phase}.conv1.bias"] = head.bias
        return params

    def state(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters().items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        params = self.named_parameters()
        missing = set(params) - set(state)
        extra = set(state) - set(params)
        if missing or extra:
            raise ConfigError(
                f"parameter names do not match model (missing {sorted(missing)}, "
                f"unexpected {sorted(extra)})"
            )
        for name, param in params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != param.data.shape:
                raise ShapeError(
                    f"parameter {name}: checkpoint shape {value.shape} vs model {param.data.shape}"
                )
            param.data = value.copy()


@dataclass(frozen=True)
class PipelineResult:
    """Per-phase and fused opinions for one sample."""

    per_phase: dict[str, OpinionGrid]
    per_phase_alphas: dict[str, np.ndarray]
    fused: OpinionGrid
    fused_alpha: np.ndarray


def _grid_from_arrays(beliefs: np.ndarray, uncertainty: np.ndarray) -> OpinionGrid:
    return OpinionGrid(beliefs=beliefs.copy(), uncertainty=uncertainty.copy())


def forward_pipeline(model: Model, sample: PhaseStack, fusion: str = "mems") -> PipelineResult:
    """Full inference path: images -> evidence -> opinions -> fused opinion.

    Phases absent from the sample are simply left out of the fusion fold.
    """
    if fusion not in FUSION_MODES:
        raise ConfigError(f"unknown fusion mode {fusion!r}")
    present = [p for p in model.config.phases if p in sample.phases]
    if not present:
        raise EmptyFusion("sample has no phase the model knows about")
    n = model.config.n_categories
    per_phase: dict[str, OpinionGrid] = {}
    per_phase_alphas: dict[str, np.ndarray] = {}
    pairs = []
    with no_grad():
        for phase in present:
            x = Tensor(sample.phases[phase][None, None])
            evidence = model.expert_forward(model.extract_features(x, phase), phase)
            alpha, _, beliefs, uncertainty = graph_ops.opinion_from_evidence(evidence, n)
            per_phase[phase] = _grid_from_arrays(beliefs.data[0], uncertainty.data[0, 0])
            per_phase_alphas[phase] = alpha.data[0].copy()
            pairs.append((beliefs, uncertainty))
        fused_b, fused_u = graph_ops.fuse_opinions(pairs, mode=fusion)
        fused_alpha = graph_ops.alpha_from_opinion(fused_b, fused_u, n)
    fused = _grid_from_arrays(fused_b.data[0], fused_u.data[0, 0])
    return PipelineResult(
        per_phase=per_phase,
        per_phase_alphas=per_phase_alphas,
        fused=fused,
        fused_alpha=fused_alpha.data[0].copy(),
    )


class Adam:
    """Adam with decoupled weight decay over a named parameter dict."""

    def __init__(self, params: dict[str, Tensor], learning_rate: float,
                 weight_decay: float = 0.0, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8) -> None:
        self.params = dict(params)
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self._m = {name: np.zeros_like(p.data) for name, p in self.params.items()}
        self._v = {name: np.zeros_like(p.data) for name, p in self.params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self, learning_rate: Optional[float] = None) -> None:
        lr = self.learning_rate if learning_rate is None else learning_rate
        self.t += 1
        for name, p in self.params.items():
            if p.grad is None:
                raise GraphError(f"parameter {name} has no gradient; run backward first")
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad**2
            m_hat = m / (1.0 - self.beta1**self.t)
            v_hat = v / (1.0 - self.beta2**self.t)
            p.data = p.data - lr * (m_hat / (np.sqrt(v_hat) + self.eps)
                                    + self.weight_decay * p.data)


def cosine_lr(epoch: int, base_lr: float, lr_min: float, period: int) -> float:
    """Cosine-annealed learning rate, restarting every `period` epochs."""
    phase = np.pi * (epoch % period) / period
    return float(lr_min + 0.5 * (base_lr - lr_min) * (1.0 + np.cos(phase)))


def backward_and_step(loss: Tensor, optimizer: Adam,
                      learning_rate: Optional[float] = None) -> None:
    """One optimization step: clear grads, backpropagate, apply the update."""
    optimizer.zero_grad()
    loss.backward()
    optimizer.step(learning_rate)


def _rotate_nearest(arr: np.ndarray, degrees: float, fill: float = 0.0) -> np.ndarray:
    theta = np.deg2rad(degrees)
    h, w = arr.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.mgrid[0:h, 0:w]
    dy, dx = yy - cy, xx - cx
    src_y = cy + dy * np.cos(theta) + dx * np.sin(theta)
    src_x = cx - dy * np.sin(theta) + dx * np.cos(theta)
    iy = np.rint(src_y).astype(np.int64)
    ix = np.rint(src_x).astype(np.int64)
    valid = (iy >= 0) & (iy < h) & (ix >= 0) & (ix < w)
    out = np.full_like(arr, fill, dtype=arr.dtype)
    out[valid] = arr[iy[valid], ix[valid]]
    return out


def _batch_arrays(samples: list[PhaseStack], phases: tuple[str, ...], n_categories: int,
                  angles: Optional[np.ndarray]) -> tuple[dict[str, np.ndarray], np.ndarray]:
    images = {phase: [] for phase in phases}
    targets = []
    for j, sample in enumerate(samples):
        mask = sample.mask
        for phase in phases:
            img = sample.phases[phase]
            if angles is not None:
                img = _rotate_nearest(img, angles[j])
            images[phase].append(img[None])
        if angles is not None:
            mask = _rotate_nearest(mask, angles[j], fill=0)
        targets.append(one_hot(mask, n_categories))
    stacked = {phase: np.stack(batch) for phase, batch in images.items()}
    return stacked, np.stack(targets)


def train(
    samples: list[PhaseStack],
    net_config: NetworkConfig,
    train_config: TrainConfig,
    weights: LossWeights = LossWeights(),
    progress: Optional[Callable[[dict], None]] = None,
) -> tuple[Model, list[dict]]:
    """Fit the network on `samples`; returns the model and per-epoch history.

    Every history entry records the epoch, the mean per-sample total loss and
    its phase-wise / mixture terms, and the learning rate used. Sample order
    is reshuffled each epoch from the training seed, so runs are repeatable.
    """
    if not samples:
        raise EmptyInput("training needs at least one sample")
    for sample in samples:
        missing = [p for p in net_config.phases if p not in sample.phases]
        if missing:
            raise ConfigError(f"sample {sample.sample_id} lacks phases {missing}")
    model = Model(net_config)
    optimizer = Adam(
        model.named_parameters(),
        learning_rate=train_config.learning_rate,
        weight_decay=train_config.weight_decay,
    )
    rng = np.random.default_rng(train_config.seed)
    n = len(samples)
    n_cat = net_config.n_categories
    history: list[dict] = []
    for epoch in range(train_config.epochs):
        lr = cosine_lr(epoch, train_config.learning_rate, train_config.lr_min,
                       train_config.cosine_period)
        order = rng.permutation(n)
        sums = np.zeros(3)
        for start in range(0, n, train_config.batch_size):
            chosen = [samples[i] for i in order[start : start + train_config.batch_size]]
            angles = rng.uniform(-5.0, 5.0, size=len(chosen)) if train_config.rotate_augment else None
            stacked, targets = _batch_arrays(chosen, net_config.phases, n_cat, angles)
            y_t = Tensor(targets)
            evidence = model.phase_evidence(
                {phase: Tensor(arr) for phase, arr in stacked.items()}
            )
            per_phase = []
            opinion_pairs = []
            for phase in net_config.phases:
                alpha, _, beliefs, uncertainty = graph_ops.opinion_from_evidence(
                    evidence[phase], n_cat
                )
                per_phase.append(
                    (graph_ops.prediction_from_opinion(beliefs, uncertainty, n_cat), alpha)
                )
                opinion_pairs.append((beliefs, uncertainty))
            fused_b, fused_u = graph_ops.fuse_opinions(opinion_pairs, mode=train_config.fusion)
            fused_pair = (
                graph_ops.prediction_from_opinion(fused_b, fused_u, n_cat),
                graph_ops.alpha_from_opinion(fused_b, fused_u, n_cat),
            )
            total, phase_term, mixture_term = graph_ops.objective(
                y_t, per_phase, fused_pair, weights
            )
            backward_and_step(total, optimizer, lr)
            batch_losses = np.array(
                [float(total.data), float(phase_term.data), float(mixture_term.data)]
            )
            sums += batch_losses * len(chosen)
        record = {
            "epoch": epoch,
            "total": float(sums[0] / n),
            "phase_term": float(sums[1] / n),
            "mixture_term": float(sums[2] / n),
            "lr": float(lr),
        }
        history.append(record)
        if progress is not None:
            progress(record)
    return model, history


def save_model(path, model: Model, extra: dict | None = None) -> None:
    """Checkpoint the model config and parameters (plus optional metadata)."""
    config = {"network": asdict(model.config)}
    config["network"]["phases"] = list(model.config.phases)
    if extra:
        config.update(extra)
    tensorio.save_checkpoint(path, config, model.state())


def load_model(path) -> tuple[Model, dict]:
    """Rebuild a model from a checkpoint; returns (model, full config block)."""
    config, params = tensorio.load_checkpoint(path)
    if "network" not in config:
        raise ConfigError(f"{path}: checkpoint lacks a network config block")
    net_cfg = dict(config["network"])
    net_cfg["phases"] = tuple(net_cfg.get("phases", PHASES))
    model = Model(NetworkConfig(**net_cfg))
    model.load_state(params)
    return model, config
