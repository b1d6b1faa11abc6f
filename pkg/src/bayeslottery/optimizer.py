"""ADAM with decoupled weight decay, step/warmup schedules, and the training loop."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, augment
from .metrics import accuracy, mace_from_probs
from .models import Model, predict_mean
from .objective import elbo


@dataclass
class Schedule:
    base_lr: float = 1e-3
    milestones: tuple[int, ...] = (80, 120)
    gamma: float = 0.1
    warmup_epochs: int = 0


def schedule_lr(schedule: Schedule, epoch: int) -> float:
    """Step-decayed learning rate, linearly ramped from 0 during warmup."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    drops = sum(1 for m in schedule.milestones if m <= epoch)
    lr = schedule.base_lr * schedule.gamma ** drops
    if schedule.warmup_epochs and epoch < schedule.warmup_epochs:
        lr *= epoch / schedule.warmup_epochs
    return lr


@dataclass
class ParamGroup:
    tensor: object  # Tensor
    decay: bool
    mask: np.ndarray | None = None


class Adam:
    """ADAM with bias correction and decoupled weight decay.

    Decay applies only to groups flagged ``decay`` (weight means). Entries
    where a group's mask is 0 are never modified.
    """

    def __init__(self, groups: list[ParamGroup], betas=(0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 1e-4):
        self.groups = groups
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros_like(g.tensor.data) for g in groups]
        self.v = [np.zeros_like(g.tensor.data) for g in groups]

    def step(self, lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1 - b1 ** self.t
        c2 = 1 - b2 ** self.t
        for i, g in enumerate(self.groups):
            p = g.tensor
            grad = p.grad if p.grad is not None else np.zeros_like(p.data)
            adam_step(p.data, grad, self.m[i], self.v[i], lr, b1, b2, self.eps, c1, c2,
                      self.weight_decay if g.decay else 0.0, g.mask)


def adam_step(param, grad, m, v, lr, beta1=0.9, beta2=0.999, eps=1e-8, c1=None, c2=None,
              weight_decay=0.0, mask=None) -> None:
    """One in-place ADAM update of ``param`` and its moment buffers."""
    dt = param.dtype
    if mask is not None:
        grad = np.where(mask, grad, 0)
    m *= beta1
    m += (1 - beta1) * grad
    v *= beta2
    v += (1 - beta2) * grad * grad
    c1 = 1 - beta1 if c1 is None else c1
    c2 = 1 - beta2 if c2 is None else c2
    delta = lr * (m / c1) / (np.sqrt(v / c2) + eps)
    if weight_decay:
        delta = delta + lr * weight_decay * param
    if mask is not None:
        delta = np.where(mask, delta, 0)
    param -= delta.astype(dt)


def make_optimizer(model: Model, cfg: "TrainConfig") -> Adam:
    groups = []
    for _, layer in model.weight_layers():
        w = layer.weight
        groups.append(ParamGroup(w.mu, decay=True, mask=w.mask))
        if w.rho is not None:
            groups.append(ParamGroup(w.rho, decay=False, mask=w.mask))
        if layer.bias is not None:
            groups.append(ParamGroup(layer.bias, decay=False))
    for norm in model.norms.values():
        groups.append(ParamGroup(norm.scale, decay=False))
        groups.append(ParamGroup(norm.shift, decay=False))
    return Adam(groups, betas=cfg.betas, eps=cfg.eps, weight_decay=cfg.weight_decay)


@dataclass
class TrainConfig:
    epochs: int = 160
    lr: float = 1e-3
    milestones: tuple[int, ...] = (80, 120)
    gamma: float = 0.1
    warmup_epochs: int = 0
    weight_decay: float = 1e-4
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    batch_size: int = 128
    samples: int = 10
    eval_samples: int = 10
    temperature: float = 0.1
    prior_mu: float = 0.0
    prior_sigma: float = 1.0
    bins: int = 10
    augment: bool = False

    @property
    def schedule(self) -> Schedule:
        return Schedule(self.lr, tuple(self.milestones), self.gamma, self.warmup_epochs)


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    total: float
    nll: float
    kl: float
    test_acc: float
    mace: float


@dataclass
class TrainRecord:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1
    best_state: dict | None = None
    final_state: dict | None = None
    eval_seed: int = 0
    wall_seconds: float = 0.0

    @property
    def max_test_acc(self) -> float:
        return max(e.test_acc for e in self.epochs)

    @property
    def mace_at_max(self) -> float:
        return self.epochs[self.best_epoch].mace


def derive_seeds(seed: int, n: int) -> list[int]:
    """Independent child seeds for the sub-streams of one run."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def evaluate(model: Model, data: Dataset, samples: int, seed: int, bins: int = 10):
    probs = predict_mean(model, data.x, samples=samples, seed=seed, batch_size=1024)
    return accuracy(probs, data.y), mace_from_probs(probs, data.y, bins).mace


def train(model: Model, train_data: Dataset, test_data: Dataset, cfg: TrainConfig,
          seed: int = 0, schedule: Schedule | None = None) -> TrainRecord:
    """Minibatch training; test accuracy and MACE are evaluated after every epoch.

    The returned record keeps a copy of the parameters from the epoch with the
    highest test accuracy (first such epoch on ties) and from the last epoch.
    """
    if cfg.epochs < 1:
        raise ValueError("epochs must be >= 1")
    if len(train_data) == 0 or len(test_data) == 0:
        raise ValueError("train: empty dataset")
    schedule = schedule or cfg.schedule
    shuffle_seed, noise_seed, aug_seed, eval_seed = derive_seeds(seed, 4)
    shuffle_rng = np.random.Generator(np.random.Philox(shuffle_seed))
    noise_rng = np.random.Generator(np.random.Philox(noise_seed))
    aug_rng = np.random.Generator(np.random.Philox(aug_seed))
    opt = make_optimizer(model, cfg)
    record = TrainRecord(eval_seed=eval_seed)
    n = len(train_data)
    prior = (cfg.prior_mu, cfg.prior_sigma)
    best = -1.0
    t0 = time.perf_counter()
    for epoch in range(cfg.epochs):
        lr = schedule_lr(schedule, epoch)
        order = shuffle_rng.permutation(n)
        sums = np.zeros(3)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb, yb = train_data.x[idx], train_data.y[idx]
            if cfg.augment and train_data.is_image:
                xb = augment(xb, aug_rng)
            model.zero_grad()
            parts = elbo(model, xb, yb, samples=cfg.samples, rng=noise_rng,
                         temperature=cfg.temperature, prior=prior, dataset_size=n)
            parts.total.backward()
            opt.step(lr)
            f = parts.floats()
            sums += np.array([f["total"], f["nll"], f["kl"]]) * len(idx)
        acc, cal = evaluate(model, test_data, cfg.eval_samples, eval_seed, cfg.bins)
        total, nll, kl = sums / n
        record.epochs.append(EpochRecord(epoch, lr, total, nll, kl, acc, cal))
        if acc > best:
            best = acc
            record.best_epoch = epoch
            record.best_state = model.state_dict()
    record.wall_seconds = time.perf_counter() - t0
    record.final_state = model.state_dict()
    return record
