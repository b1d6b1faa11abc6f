"""Accuracy, mean absolute calibration error, and layer-wise sparsity."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class CalibrationReport:
    bins: int
    counts: np.ndarray  # samples per bin
    gaps: np.ndarray  # signed mean (correct - confidence) per bin; nan when empty
    mace: float


def mace(confidences, predictions, labels, bins: int = 10) -> CalibrationReport:
    """Equal-width binned |accuracy - confidence|, averaged over nonempty bins.

    ``confidences[i]`` is the probability assigned to ``predictions[i]``.
    A confidence of exactly 1.0 falls in the last bin.
    """
    p = np.asarray(confidences, dtype=np.float64)
    yhat = np.asarray(predictions)
    y = np.asarray(labels)
    if p.size == 0:
        raise ValueError("mace: empty input")
    if not (p.shape == yhat.shape == y.shape):
        raise ValueError(f"mace: length mismatch {p.shape}, {yhat.shape}, {y.shape}")
    if bins < 1:
        raise ValueError("mace: bins must be >= 1")
    if np.any((p < 0) | (p > 1)):
        raise ValueError("mace: confidences must lie in [0, 1]")
    idx = np.minimum((p * bins).astype(np.int64), bins - 1)
    resid = (yhat == y).astype(np.float64) - p
    counts = np.bincount(idx, minlength=bins)
    sums = np.bincount(idx, weights=resid, minlength=bins)
    nonempty = counts > 0
    gaps = np.full(bins, np.nan)
    gaps[nonempty] = sums[nonempty] / counts[nonempty]
    value = float(np.abs(gaps[nonempty]).mean())
    return CalibrationReport(bins=bins, counts=counts, gaps=gaps, mace=value)


def mace_from_probs(probs, labels, bins: int = 10) -> CalibrationReport:
    probs = np.asarray(probs)
    pred = probs.argmax(axis=1)
    return mace(probs[np.arange(len(pred)), pred], pred, labels, bins)


def accuracy(probs, labels) -> float:
    """Fraction of rows whose argmax (lowest index on ties) matches the label."""
    probs = np.asarray(probs)
    labels = np.asarray(labels)
    if probs.shape[0] == 0:
        raise ValueError("accuracy: empty input")
    return float(np.mean(probs.argmax(axis=1) == labels))


@dataclass
class LayerSparsity:
    name: str
    size: int
    zeros: int

    @property
    def ratio(self) -> float:
        return self.zeros / self.size


@dataclass
class SparsityProfile:
    layers: list[LayerSparsity]

    @property
    def size(self) -> int:
        return sum(l.size for l in self.layers)

    @property
    def zeros(self) -> int:
        return sum(l.zeros for l in self.layers)

    @property
    def global_sparsity(self) -> float:
        return self.zeros / self.size

    def rows(self) -> list[dict]:
        out = [{"layer": l.name, "size": l.size, "zeros": l.zeros, "sparsity": l.ratio}
               for l in self.layers]
        out.append({"layer": "global", "size": self.size, "zeros": self.zeros,
                    "sparsity": self.global_sparsity})
        return out


def sparsity_profile(model_or_masks) -> SparsityProfile:
    """Per-layer mask sparsity in registry (depth) order.

    Accepts a model or a name -> boolean-mask mapping.
    """
    if hasattr(model_or_masks, "prunable_parameters"):
        masks = {n: w.mask for n, w in model_or_masks.prunable_parameters()}
    else:
        masks = getattr(model_or_masks, "masks", model_or_masks)
    return SparsityProfile([LayerSparsity(n, int(m.size), int(m.size - np.count_nonzero(m)))
                            for n, m in masks.items()])
