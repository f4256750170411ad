"""MSE loss, Adam, the training loop and a finite-difference gradient checker."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields

import numpy as np

from .models import ModelParams, ModelSpec, backward, forward, init_params
from .preprocess import WindowedDataset

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    teacher_forcing: bool = True
    seed: int = 0
    shuffle_each_epoch: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise KeyError(f"unknown train key(s): {', '.join(sorted(unknown))}")
        return cls(**d)


def mse_loss(pred, target) -> tuple[float, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def fresh(cls, params: ModelParams) -> AdamState:
        arrays = params.arrays()
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays], 0)


def adam_step(params: ModelParams, grads: ModelParams, state: AdamState,
              cfg: TrainConfig) -> tuple[ModelParams, AdamState]:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params.arrays(), grads.arrays(), state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
    return params, state


def train(spec: ModelSpec, dataset: WindowedDataset, cfg: TrainConfig,
          params: ModelParams | None = None) -> tuple[ModelParams, list[float]]:
    """Minibatch Adam on MSE.

    Initial weights come from ``spec.seed``; shuffling and dropout masks come
    from ``cfg.seed``.  Each history entry is the sample-weighted mean of the
    epoch's train-mode batch losses.
    """
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    if dataset.window != spec.window or dataset.horizon != spec.horizon:
        raise ValueError(
            f"dataset window/horizon {dataset.window}/{dataset.horizon} "
            f"!= spec {spec.window}/{spec.horizon}"
        )
    params = init_params(spec) if params is None else params
    state = AdamState.fresh(params)
    rng = np.random.default_rng(cfg.seed)
    n = len(dataset)
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n) if cfg.shuffle_each_epoch else np.arange(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            x, y = dataset.inputs[idx], dataset.targets[idx]
            pred, cache = forward(spec, params, x, mode="train", rng=rng, targets=y,
                                  teacher_forcing=cfg.teacher_forcing)
            loss, grad = mse_loss(pred, y)
            grads = backward(spec, params, cache, grad)
            adam_step(params, grads, state, cfg)
            total += loss * len(idx)
        history.append(total / n)
        logger.debug("%s epoch %d loss %.6g", spec.architecture, epoch + 1, history[-1])
    return params, history


def relative_error(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-8)


def grad_check(spec: ModelSpec, sample: tuple[np.ndarray, np.ndarray], eps: float = 1e-5,
               params: ModelParams | None = None, mode: str = "train",
               teacher_forcing: bool = False, mask_seed: int = 0,
               fault_gate: str | None = None) -> float:
    """Worst relative error between backprop and central differences.

    Every parameter entry is perturbed.  In train mode the same dropout
    masks are replayed for every evaluation so the loss is a deterministic
    function of the weights.
    """
    x, y = sample
    params = init_params(spec) if params is None else params.copy()

    def run():
        rng = np.random.default_rng(mask_seed)
        pred, cache = forward(spec, params, x, mode=mode, rng=rng, targets=y,
                              teacher_forcing=teacher_forcing)
        return pred, cache

    pred, cache = run()
    _, g = mse_loss(pred, y)
    analytic = backward(spec, params, cache, g, fault_gate=fault_gate)

    worst = 0.0
    for p, ga in zip(params.arrays(), analytic.arrays()):
        flat, gflat = p.reshape(-1), ga.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + eps
            lp, _ = mse_loss(run()[0], y)
            flat[k] = orig - eps
            lm, _ = mse_loss(run()[0], y)
            flat[k] = orig
            worst = max(worst, relative_error(gflat[k], (lp - lm) / (2.0 * eps)))
    return worst
