"""Lottery-ticket pipelines: IMP, learning-rate rewinding, random baselines, transplantation."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset
from .layers import inverse_softplus, kaiming_bound, SIGMA_INIT_FRACTION
from .models import Model, ModelConfig, build
from .optimizer import TrainConfig, TrainRecord, derive_seeds, train
from .pruning import PruneMask, canonical_score, commit_mask, prune_global
from .tensor import ShapeError

log = logging.getLogger(__name__)

LINEAGES = ("imp", "lrr", "reinit", "shuffle_global", "shuffle_even", "shuffle_layerwise",
            "transplant")
SHUFFLE_MODES = ("global", "even", "layerwise")


@dataclass
class Ticket:
    """A (mask, initial parameters) pair plus where it came from.

    ``trained_state`` holds the parameters at the best-accuracy epoch once
    the ticket has been trained.
    """

    mask: PruneMask
    init_state: dict[str, np.ndarray]
    config: ModelConfig
    level: int = 0
    score: str = "snr"
    lineage: str = "imp"
    seed: int = 0
    trained_state: dict[str, np.ndarray] | None = None

    @property
    def remaining_fraction(self) -> float:
        return self.mask.remaining_fraction

    def model(self, state: dict[str, np.ndarray] | None = None) -> Model:
        """Materialize a model holding ``state`` (default: the initial parameters)."""
        m = build(self.config, 0)
        m.load_state_dict(self.init_state if state is None else state)
        commit_mask(m, self.mask)
        return m


@dataclass
class PipelineResult:
    tickets: list[Ticket] = field(default_factory=list)
    records: list[TrainRecord] = field(default_factory=list)

    @property
    def wall_seconds(self) -> float:
        return sum(r.wall_seconds for r in self.records)

    def summary_rows(self) -> list[dict]:
        return [{"level": t.level, "remaining_fraction": t.remaining_fraction,
                 "max_test_acc": r.max_test_acc, "mace_at_max": r.mace_at_max,
                 "wall_seconds": r.wall_seconds}
                for t, r in zip(self.tickets, self.records)]

    def epoch_rows(self) -> list[dict]:
        rows = []
        for t, r in zip(self.tickets, self.records):
            for e in r.epochs:
                rows.append({"level": t.level, "remaining_fraction": t.remaining_fraction,
                             "epoch": e.epoch, "lr": e.lr, "total": e.total, "nll": e.nll,
                             "kl": e.kl, "test_acc": e.test_acc, "mace": e.mace})
        return rows


def train_ticket(ticket: Ticket, train_data: Dataset, test_data: Dataset, cfg: TrainConfig,
                 seed: int | None = None) -> TrainRecord:
    """Train a ticket from its initial parameters under its mask."""
    model = ticket.model()
    record = train(model, train_data, test_data, cfg, seed=ticket.seed if seed is None else seed)
    ticket.trained_state = record.best_state
    return record


def _rewind(model: Model, init_state: dict, rewind_rho: bool) -> None:
    state = dict(init_state)
    if not rewind_rho:
        for k in state:
            if k.endswith(".rho"):
                state[k] = model.state_dict()[k]
    model.load_state_dict(state)


def imp(config: ModelConfig, train_data: Dataset, test_data: Dataset, cfg: TrainConfig,
        levels: int, rate: float = 0.2, score: str = "snr", seed: int = 0,
        rewind_rho: bool = True, lineage: str = "imp") -> PipelineResult:
    """Iterative train -> prune -> rewind, producing tickets for levels 0..levels.

    Level 0 is the dense network. With ``lineage="lrr"`` survivors keep their
    trained values between levels and only the learning-rate schedule restarts.
    """
    if levels < 0:
        raise ValueError("levels must be >= 0")
    if lineage not in ("imp", "lrr"):
        raise ValueError(f"imp: lineage must be 'imp' or 'lrr', got {lineage!r}")
    score = canonical_score(score)
    init_seed, *level_seeds = derive_seeds(seed, levels + 2)
    model = build(config, init_seed)
    init_state = model.state_dict()
    mask = PruneMask.dense(model, lineage)
    result = PipelineResult()
    for level in range(levels + 1):
        commit_mask(model, mask)
        ticket = Ticket(mask.copy(), model.state_dict(), config, level, score, lineage,
                        seed=level_seeds[level])
        record = train(model, train_data, test_data, cfg, seed=ticket.seed)
        ticket.trained_state = record.best_state
        result.tickets.append(ticket)
        result.records.append(record)
        log.info("%s level %d: remaining %.4f max acc %.4f", lineage, level,
                 mask.remaining_fraction, record.max_test_acc)
        if level == levels:
            break
        mask = prune_global(model, score, rate, level=level + 1, lineage=lineage)
        if lineage == "imp":
            _rewind(model, init_state, rewind_rho)
    return result


def lrr(config: ModelConfig, train_data: Dataset, test_data: Dataset, cfg: TrainConfig,
        levels: int, rate: float = 0.2, score: str = "snr", seed: int = 0) -> PipelineResult:
    return imp(config, train_data, test_data, cfg, levels, rate, score, seed, lineage="lrr")


def sigma_init_rho(state: dict[str, np.ndarray], config: ModelConfig) -> dict[str, np.ndarray]:
    """Copy of ``state`` with every rho set to the initial-sigma parameterization."""
    model = build(config, 0)
    out = dict(state)
    for name, layer in model.weight_layers():
        if layer.weight.bayesian:
            b = kaiming_bound(layer.spec.fan_in)
            out[f"{name}.rho"] = np.full(layer.weight.shape,
                                         inverse_softplus(SIGMA_INIT_FRACTION * b),
                                         dtype=layer.weight.mu.data.dtype)
    return out


def reinit_weights(ticket: Ticket, seed: int, dist: str | None = None) -> Ticket:
    """Keep the mask; redraw every parameter from the initialization scheme."""
    cfg = ticket.config if dist is None else replace(ticket.config, init_dist=dist)
    fresh = build(cfg, seed).state_dict()
    return replace(ticket, mask=ticket.mask.copy(lineage="reinit"), init_state=fresh,
                   lineage="reinit", trained_state=None)


def round_half_away(num: int, den: int) -> int:
    """round(num / den) with halves away from zero, for num, den >= 0."""
    return (2 * num + den) // (2 * den)


def even_counts(sizes: list[int], ones: int) -> list[int]:
    """Per-layer ones counts at the global density; the largest layer absorbs rounding."""
    total = sum(sizes)
    counts = [round_half_away(ones * s, total) for s in sizes]
    diff = ones - sum(counts)
    for i in sorted(range(len(sizes)), key=lambda i: (-sizes[i], i)):
        if diff == 0:
            break
        new = min(max(counts[i] + diff, 0), sizes[i])
        diff -= new - counts[i]
        counts[i] = new
    return counts


def _random_mask(shape, ones: int, rng: np.random.Generator) -> np.ndarray:
    flat = np.zeros(int(np.prod(shape)), bool)
    flat[rng.permutation(flat.size)[:ones]] = True
    return flat.reshape(shape)


def shuffle_mask(ticket: Ticket, mode: str, seed: int) -> Ticket:
    """Randomize the mask structure; the initial parameters stay untouched."""
    if mode not in SHUFFLE_MODES:
        raise ValueError(f"unknown shuffle mode {mode!r}; expected one of {SHUFFLE_MODES}")
    rng = np.random.default_rng(seed)
    names = list(ticket.mask.masks)
    masks = [ticket.mask.masks[n] for n in names]
    if mode == "global":
        flat = np.concatenate([m.reshape(-1) for m in masks])
        flat = flat[rng.permutation(flat.size)]
        new, start = [], 0
        for m in masks:
            new.append(flat[start:start + m.size].reshape(m.shape))
            start += m.size
    elif mode == "even":
        counts = even_counts([m.size for m in masks], ticket.mask.remaining)
        new = [_random_mask(m.shape, c, rng) for m, c in zip(masks, counts)]
    else:
        new = [_random_mask(m.shape, int(np.count_nonzero(m)), rng) for m in masks]
    lineage = f"shuffle_{mode}"
    mask = PruneMask(dict(zip(names, new)), ticket.mask.level, lineage)
    return replace(ticket, mask=mask, lineage=lineage, trained_state=None)


def transplant(det_ticket: Ticket, bayes_config: ModelConfig | None = None) -> Ticket:
    """Bayesian ticket whose means are the deterministic ticket's trained pruned weights.

    The mask is reused and every sigma sits at its initial value; biases and
    normalization parameters copy across unchanged.
    """
    bayes_config = bayes_config or replace(det_ticket.config, bayesian=True)
    if not bayes_config.bayesian:
        raise ValueError("transplant target must be a Bayesian config")
    source = det_ticket.trained_state or det_ticket.init_state
    target = build(bayes_config, 0).state_dict()
    state = {}
    for key, value in target.items():
        if key.endswith(".rho"):
            state[key] = value
            continue
        if key not in source:
            raise ShapeError(f"transplant: deterministic ticket has no parameter {key}")
        if source[key].shape != value.shape:
            raise ShapeError(
                f"transplant: {key} shape {source[key].shape} != {value.shape}")
        state[key] = source[key].copy()
    # masked means are zero in the deterministic ticket's effective weights
    for name, m in det_ticket.mask.masks.items():
        state[f"{name}.mu"] = np.where(m, state[f"{name}.mu"], 0).astype(state[f"{name}.mu"].dtype)
    state = sigma_init_rho(state, bayes_config)
    return Ticket(det_ticket.mask.copy(lineage="transplant"), state, bayes_config,
                  det_ticket.level, "magnitude", "transplant", det_ticket.seed)


def transplant_pipeline(config: ModelConfig, train_data: Dataset, test_data: Dataset,
                        cfg: TrainConfig, levels: int, rate: float = 0.2, seed: int = 0,
                        det_cfg: TrainConfig | None = None) -> tuple[PipelineResult, PipelineResult]:
    """Deterministic IMP to ``levels``, then one VI phase on the final ticket.

    Returns (deterministic IMP result, transplanted result).
    """
    det_config = replace(config, bayesian=False)
    det = imp(det_config, train_data, test_data, det_cfg or cfg, levels, rate,
              "magnitude", seed)
    ticket = transplant(det.tickets[-1], replace(config, bayesian=True))
    record = train_ticket(ticket, train_data, test_data, cfg)
    return det, PipelineResult([ticket], [record])
