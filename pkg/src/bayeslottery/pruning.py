"""Per-weight score functions and global unstructured pruning."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import VariationalTensor

SCORE_KINDS = ("magnitude", "snr", "square", "mu_magnitude")
_ALIASES = {"mu": "mu_magnitude", "mm": "mu_magnitude", "ss": "square", "m": "magnitude"}


def canonical_score(kind: str) -> str:
    kind = _ALIASES.get(kind, kind)
    if kind not in SCORE_KINDS:
        raise ValueError(f"unknown score kind {kind!r}; expected one of {SCORE_KINDS}")
    return kind


@dataclass
class PruneMask:
    masks: dict[str, np.ndarray]
    level: int = 0
    lineage: str = "imp"

    @classmethod
    def dense(cls, model, lineage: str = "imp") -> "PruneMask":
        return cls({n: np.ones(w.shape, bool) for n, w in model.prunable_parameters()},
                   0, lineage)

    @property
    def total(self) -> int:
        return sum(m.size for m in self.masks.values())

    @property
    def remaining(self) -> int:
        return sum(int(np.count_nonzero(m)) for m in self.masks.values())

    @property
    def remaining_fraction(self) -> float:
        return self.remaining / self.total

    @property
    def sparsity(self) -> float:
        return (self.total - self.remaining) / self.total

    def ones_per_layer(self) -> dict[str, int]:
        return {n: int(np.count_nonzero(m)) for n, m in self.masks.items()}

    def copy(self, **changes) -> "PruneMask":
        out = PruneMask({n: m.copy() for n, m in self.masks.items()}, self.level, self.lineage)
        for k, v in changes.items():
            setattr(out, k, v)
        return out

    def is_subset_of(self, other: "PruneMask") -> bool:
        return all(not np.any(m & ~other.masks[n]) for n, m in self.masks.items())


def score_values(kind: str, mu, sigma=None) -> np.ndarray:
    """Elementwise score from mean (or deterministic weight) and std arrays."""
    kind = canonical_score(kind)
    mu = np.asarray(mu, dtype=np.float64)
    if kind in ("magnitude", "mu_magnitude"):
        return np.abs(mu)
    if sigma is None:
        raise ValueError(f"score {kind!r} needs a posterior standard deviation")
    sigma = np.asarray(sigma, dtype=np.float64)
    if kind == "snr":
        return np.abs(mu) / sigma
    return np.sqrt(mu * mu + sigma * sigma)


def score(kind: str, weight: VariationalTensor) -> np.ndarray:
    """Scores of the unmasked entries of ``weight``, in flat (row-major) order."""
    kind = canonical_score(kind)
    if kind in ("snr", "square") and not weight.bayesian:
        raise ValueError(f"score {kind!r} is undefined for deterministic weights")
    keep = weight.mask.reshape(-1)
    mu = weight.mu.data.reshape(-1)[keep]
    sigma = None
    if weight.bayesian:
        sigma = np.logaddexp(0, weight.rho.data.astype(np.float64)).reshape(-1)[keep]
    return score_values(kind, mu, sigma)


def select_prune(scores: list[np.ndarray], masks: list[np.ndarray], rate: float) -> list[np.ndarray]:
    """Zero the floor(rate * remaining) lowest-scoring unmasked entries.

    ``scores[i]`` covers every entry of layer i (masked entries ignored).
    Equal scores are pruned in (layer index, flat index) order.
    """
    if not 0 < rate < 1:
        raise ValueError(f"rate must lie in (0, 1), got {rate}")
    flat_masks = [m.reshape(-1) for m in masks]
    remaining = sum(int(np.count_nonzero(m)) for m in flat_masks)
    if remaining == 0:
        raise ValueError("nothing left to prune")
    k = int(np.floor(rate * remaining))
    pooled = np.concatenate([np.where(m, np.asarray(s, np.float64).reshape(-1), np.inf)
                             for s, m in zip(scores, flat_masks)])
    alive = np.concatenate(flat_masks)
    cand = np.flatnonzero(alive)
    # stable sort keeps concatenation order, i.e. (layer, flat index), among ties
    chosen = cand[np.argsort(pooled[cand], kind="stable")[:k]]
    new_alive = alive.copy()
    new_alive[chosen] = False
    out, start = [], 0
    for m in masks:
        out.append(new_alive[start:start + m.size].reshape(m.shape))
        start += m.size
    return out


def prune_global(model, kind: str, rate: float, level: int | None = None,
                 lineage: str = "imp") -> PruneMask:
    """Next-level mask from a single score pool over all prunable layers."""
    kind = canonical_score(kind)
    params = model.prunable_parameters()
    scores, masks = [], []
    for _, w in params:
        full = np.zeros(w.mask.size)
        full[w.mask.reshape(-1)] = score(kind, w)
        scores.append(full)
        masks.append(w.mask)
    if level is None:
        level = getattr(model, "level", 0) + 1
    new = select_prune(scores, masks, rate)
    return PruneMask({n: m for (n, _), m in zip(params, new)}, level, lineage)


def commit_mask(model, mask: PruneMask | dict) -> None:
    """Install ``mask`` so masked weights act as (mu, sigma) = (0, 0) everywhere."""
    masks = mask.masks if isinstance(mask, PruneMask) else mask
    params = dict(model.prunable_parameters())
    if set(masks) != set(params):
        raise ValueError(f"mask layers {sorted(masks)} != prunable layers {sorted(params)}")
    for name, m in masks.items():
        params[name].set_mask(np.asarray(m))
    if isinstance(mask, PruneMask):
        model.level = mask.level


def remaining_after(total: int, rate: float, levels: int) -> int:
    """Weights left after ``levels`` rounds of removing floor(rate * remaining)."""
    r = total
    for _ in range(levels):
        r -= int(np.floor(rate * r))
    return r
