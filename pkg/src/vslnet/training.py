"""Adam with linear learning-rate decay, global-norm clipping and early stopping on validation mIoU."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .data import make_batches
from .errors import ConfigError, NumericalError
from .evaluation import evaluate, predict
from .model import total_loss
from .seeding import sub_rng, sub_seed

log = logging.getLogger(__name__)


class TrainingError(NumericalError):
    def __init__(self, msg, epoch=None, batch=None):
        super().__init__(msg)
        self.epoch = epoch
        self.batch = batch


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 16
    lr: float = 1e-4
    clip_norm: float = 1.0
    dropout: float = 0.2
    patience: int = 10
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        for name in ("epochs", "batch_size", "lr", "clip_norm", "patience"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.patience > self.epochs:
            raise ConfigError("patience cannot exceed epochs")

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        return asdict(self)


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0


def global_norm(grads) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads))


def clip_by_global_norm(grads, max_norm=1.0):
    """Scale every gradient by max_norm / norm when the joint L2 norm exceeds ``max_norm``."""
    norm = global_norm(grads)
    if norm <= max_norm:
        return list(grads)
    scale = max_norm / norm
    return [g * scale for g in grads]


def adam_step(params, grads, state: AdamState, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Bias-corrected Adam update, in place on ``params`` (a name -> Tensor mapping)."""
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, p in params.items():
        g = grads[name]
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state


def lr_schedule(step, total_steps, lr0):
    if total_steps <= 0:
        return lr0
    return max(0.0, lr0 * (1.0 - step / total_steps))


def compute_gradients(model, batch, alpha=None, rng=None, training=True):
    """Fresh gradients for one batch; returns (loss value, name -> gradient)."""
    model.zero_grad()
    out = model.forward_batch(batch, training=training, rng=rng)
    loss = total_loss(out, batch.starts, batch.ends, batch.highlight, model.cfg.variant)
    loss.backward()
    return loss.item(), {k: p.grad.copy() for k, p in model.params.items()}


@dataclass
class TrainResult:
    best_state: dict
    log: list
    best_epoch: int
    best_val_miou: float


def train(model, train_set, val_set, cfg: TrainConfig, on_epoch=None) -> TrainResult:
    if len(train_set) == 0 or len(val_set) == 0:
        raise ConfigError("training and validation sets must be non-empty")
    alpha = model.cfg.alpha if model.cfg.variant == "net" else None
    steps_per_epoch = math.ceil(len(train_set) / cfg.batch_size)
    total_steps = cfg.epochs * steps_per_epoch
    drop_rng = sub_rng(cfg.seed, "dropout")
    state = AdamState()
    names = list(model.params)
    best_state, best_epoch, best_miou = model.state(), 0, -1.0
    wait, step, history = 0, 0, []
    for epoch in range(1, cfg.epochs + 1):
        total, lr = 0.0, lr_schedule(step, total_steps, cfg.lr)
        order_seed = sub_seed(cfg.seed, "shuffle", epoch)
        for bi, batch in enumerate(make_batches(train_set, cfg.batch_size, order_seed, alpha)):
            lr = lr_schedule(step, total_steps, cfg.lr)
            try:
                loss, grads = compute_gradients(model, batch, alpha, drop_rng)
            except NumericalError as e:
                raise TrainingError(f"non-finite value at epoch {epoch}, batch {bi}: {e}", epoch, bi) from e
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {bi}", epoch, bi)
            clipped = clip_by_global_norm([grads[k] for k in names], cfg.clip_norm)
            adam_step(model.params, dict(zip(names, clipped)), state, lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
            step += 1
            total += loss * batch.size
        report = evaluate(predict(model, val_set), val_set)
        entry = {
            "epoch": epoch,
            "train_loss": total / len(train_set),
            "lr": lr,
            "val_miou": report.miou,
            "val_r1_03": report.r1[0.3],
            "val_r1_05": report.r1[0.5],
            "val_r1_07": report.r1[0.7],
        }
        history.append(entry)
        log.info(json.dumps(entry))
        if on_epoch is not None:
            on_epoch(entry)
        if report.miou > best_miou:
            best_miou, best_epoch, best_state, wait = report.miou, epoch, model.state(), 0
        else:
            wait += 1
            if wait >= cfg.patience:
                break
    model.load_state(best_state)
    return TrainResult(best_state, history, best_epoch, best_miou)
