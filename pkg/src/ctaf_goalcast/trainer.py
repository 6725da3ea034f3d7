"""Training: batch loss, AdamW, reduce-on-plateau schedule and the epoch loop."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .dataio import DatasetSplit, Scene
from .geometry import IntentLabel
from .goalnet import GoalNet, ModelConfig, entropy_reg_tensor, mixture_nll_tensor, save_params

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, last_checkpoint: Path | None):
        super().__init__(message)
        self.last_checkpoint = last_checkpoint


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    lr0: float = 1e-4
    plateau_factor: float = 0.2
    plateau_patience: int = 5
    plateau_threshold: float = 1e-8
    min_lr: float = 1e-8
    batch_size: int = 64
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip: float = 1.0
    checkpoint_every: int = 50
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.plateau_factor < 1:
            raise ValueError("plateau_factor must lie in (0, 1)")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")


@dataclass
class TrainHistory:
    loss: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)  # LR after the end-of-epoch schedule step
    seconds: list[float] = field(default_factory=list)
    checkpoint: str | None = None

    def __len__(self) -> int:
        return len(self.loss)

    def write(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "loss", "lr", "seconds"])
            for i, (l, r, s) in enumerate(zip(self.loss, self.lr, self.seconds), start=1):
                w.writerow([i, repr(l), repr(r), f"{s:.3f}"])


# ------------------------------------------------------------------ loss


def _batch_arrays(model: GoalNet, scenes: Sequence[Scene], intents: Sequence[IntentLabel] | None = None):
    obs = np.stack([s.obs for s in scenes])
    origin = obs[:, 0, :]
    rel = obs - origin[:, None, :]
    goals = np.stack([s.goal for s in scenes]) - origin
    labels = intents if intents is not None else [s.intent for s in scenes]
    idx = model.label_indices(labels) if model.config.use_intent else np.zeros(len(scenes), np.int64)
    return rel, idx, goals


def batch_loss(model: GoalNet, scenes: Sequence[Scene], include_entropy: bool = True) -> ad.Tensor:
    """Mean per-scene mixture NLL plus the mean mode-divergence term."""
    if not scenes:
        raise ValueError("empty batch")
    rel, idx, goals = _batch_arrays(model, scenes)
    means, logvar, logits = model.forward(rel, idx)
    per_scene = mixture_nll_tensor(means, logvar, logits, goals)
    if ad.is_checked():
        bad = ~np.isfinite(per_scene.value)
        if bad.any():
            raise ad.NonFiniteError(f"non-finite loss for scene {scenes[int(np.argmax(bad))].scene_id}")
    loss = ad.tmean(per_scene)
    if include_entropy and (model.config.lambda_rep != 0.0):
        loss = ad.add(loss, ad.tmean(entropy_reg_tensor(means, logits, model.config)))
    return loss


def per_scene_nll(model: GoalNet, scenes: Sequence[Scene]) -> np.ndarray:
    rel, idx, goals = _batch_arrays(model, scenes)
    means, logvar, logits = model.forward(rel, idx)
    return mixture_nll_tensor(means, logvar, logits, goals).value


# ------------------------------------------------------------- optimiser


@dataclass
class AdamWState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adamw_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamWState,
    lr: float,
    weight_decay: float = 1e-4,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """In-place AdamW update with decoupled decay and bias-corrected moments."""
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name in sorted(params):
        p, g = params[name], grads[name]
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        if weight_decay:
            p *= 1.0 - lr * weight_decay
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads.values():
            g *= scale
    return total


# -------------------------------------------------------------- schedule


class PlateauScheduler:
    """Multiply the LR by ``factor`` after ``patience`` epochs without improvement."""

    def __init__(self, lr: float, factor: float = 0.2, patience: int = 5, threshold: float = 1e-8, min_lr: float = 1e-8):
        self.lr = lr
        self.factor = factor
        self.patience = patience
        self.threshold = threshold
        self.min_lr = min_lr
        self.best = math.inf
        self.bad_epochs = 0

    def step(self, loss: float) -> float:
        if loss < self.best - self.threshold:
            self.best = loss
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs >= self.patience:
                self.lr = max(self.lr * self.factor, self.min_lr)
                self.bad_epochs = 0
        return self.lr


def plateau_schedule(history: Sequence[float], current_lr: float, factor: float = 0.2, patience: int = 5,
                     threshold: float = 1e-8, min_lr: float = 1e-8, lr0: float | None = None) -> float:
    """LR to use after the last epoch of ``history``.

    Replays the scheduler from ``lr0`` (defaults to ``current_lr``) over the loss
    history, so the result depends only on the losses seen.
    """
    if not history:
        raise ValueError("empty loss history")
    sched = PlateauScheduler(current_lr if lr0 is None else lr0, factor, patience, threshold, min_lr)
    for loss in history:
        sched.step(loss)
    return sched.lr


# ------------------------------------------------------------------ loop


def _grads(model: GoalNet, scenes: Sequence[Scene]) -> tuple[float, dict[str, np.ndarray]]:
    for p in model.params.values():
        p.grad = None
    with ad.Tape() as tape:
        loss = batch_loss(model, scenes)
    ad.backward(tape, loss, model.param_list())
    return loss.item(), {k: v.grad for k, v in model.params.items()}


def train(
    dataset: DatasetSplit | Sequence[Scene],
    model: GoalNet,
    tconfig: TrainConfig = TrainConfig(),
    out_dir: str | Path | None = None,
    loss_fn=None,
) -> tuple[GoalNet, TrainHistory]:
    """Fit ``model`` in place on the training scenes and return it with its history.

    ``loss_fn(epoch)`` may override the epoch loss fed to the LR schedule (used to
    exercise the schedule on contrived losses).
    """
    scenes = list(dataset.train if isinstance(dataset, DatasetSplit) else dataset)
    if not scenes:
        raise ValueError("training split is empty")
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(tconfig.seed)
    sched = PlateauScheduler(tconfig.lr0, tconfig.plateau_factor, tconfig.plateau_patience,
                             tconfig.plateau_threshold, tconfig.min_lr)
    state = AdamWState()
    history = TrainHistory()
    values = {k: v.value for k, v in model.params.items()}
    last_ckpt: Path | None = None
    for epoch in range(1, tconfig.epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(len(scenes))
        total, count = 0.0, 0
        lr = sched.lr
        for start in range(0, len(order), tconfig.batch_size):
            batch = [scenes[i] for i in order[start : start + tconfig.batch_size]]
            loss, grads = _grads(model, batch)
            if not math.isfinite(loss) or loss > 1e6:
                raise TrainingDiverged(f"loss {loss} at epoch {epoch}", last_ckpt)
            clip_global_norm(grads, tconfig.grad_clip)
            adamw_step(values, grads, state, lr, tconfig.weight_decay, tconfig.beta1, tconfig.beta2, tconfig.eps)
            total += loss * len(batch)
            count += len(batch)
        epoch_loss = total / count
        if loss_fn is not None:
            epoch_loss = loss_fn(epoch)
        history.loss.append(epoch_loss)
        history.lr.append(sched.step(epoch_loss))
        history.seconds.append(time.perf_counter() - t0)
        if out is not None and (epoch % tconfig.checkpoint_every == 0 or epoch == tconfig.epochs):
            last_ckpt = out / "model.ckpt"
            save_params(last_ckpt, model, extra={"epoch": epoch, "train_config": asdict(tconfig)})
        if epoch % 50 == 0 or epoch == 1:
            log.info("epoch %d loss %.5f lr %.2e", epoch, epoch_loss, history.lr[-1])
    history.checkpoint = str(last_ckpt) if last_ckpt else None
    if out is not None:
        history.write(out / "history.csv")
    return model, history
