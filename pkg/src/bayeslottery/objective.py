"""Tempered ELBO with closed-form Gaussian KL."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .layers import VariationalTensor
from .models import Model
from .tensor import Tensor


@dataclass
class ElboParts:
    nll: Tensor
    kl: Tensor
    temperature: float
    dataset_size: int
    total: Tensor

    def floats(self) -> dict[str, float]:
        return {"total": self.total.item(), "nll": self.nll.item(), "kl": self.kl.item()}


def kl_gaussian(mu_q, sigma_q, mu_p: float = 0.0, sigma_p: float = 1.0, mask=None) -> float:
    """Sum of KL(N(mu_q, sigma_q^2) || N(mu_p, sigma_p^2)) over unmasked entries."""
    mu_q = np.asarray(mu_q, dtype=np.float64)
    sigma_q = np.asarray(sigma_q, dtype=np.float64)
    keep = np.ones(mu_q.shape, bool) if mask is None else np.asarray(mask, bool)
    sp = np.broadcast_to(np.asarray(sigma_p, dtype=np.float64), mu_q.shape)
    if np.any(sigma_q[keep] <= 0) or np.any(sp[keep] <= 0):
        raise ValueError("kl_gaussian: standard deviations must be positive")
    mp = np.broadcast_to(np.asarray(mu_p, dtype=np.float64), mu_q.shape)
    sq, mq, sp, mp = sigma_q[keep], mu_q[keep], sp[keep], mp[keep]
    terms = np.log(sp / sq) + (sq ** 2 + (mq - mp) ** 2) / (2 * sp ** 2) - 0.5
    return float(terms.sum())


def kl_weight(weight: VariationalTensor, mu_p: float = 0.0, sigma_p: float = 1.0) -> Tensor:
    """Differentiable KL of one weight posterior against the prior; masked entries excluded."""
    if sigma_p <= 0:
        raise ValueError("prior sigma must be positive")
    m = weight.mask.astype(weight.mu.data.dtype)
    sigma = T.softplus(weight.rho)
    diff = T.sub(weight.mu, mu_p)
    terms = T.add(T.mul(T.add(T.square(sigma), T.square(diff)), 1.0 / (2 * sigma_p ** 2)),
                  T.mul(T.log(sigma), -1.0))
    terms = T.add(terms, float(np.log(sigma_p) - 0.5))
    return T.sum(T.mul(terms, m))


def model_kl(model: Model, mu_p: float = 0.0, sigma_p: float = 1.0) -> Tensor:
    total = None
    for _, layer in model.weight_layers():
        if not layer.weight.bayesian:
            continue
        k = kl_weight(layer.weight, mu_p, sigma_p)
        total = k if total is None else T.add(total, k)
    return total if total is not None else Tensor(0.0)


def elbo(model: Model, x, y, samples: int = 10, rng: np.random.Generator | int | None = None,
         noise: list[dict] | None = None, temperature: float = 0.1,
         prior: tuple[float, float] = (0.0, 1.0), dataset_size: int | None = None) -> ElboParts:
    """Negative tempered ELBO per data point for one minibatch.

    ``total = nll + temperature * kl / dataset_size`` where ``nll`` is the
    mean cross-entropy over ``samples`` independent weight draws. Pass
    ``noise`` (one dict per draw) to freeze the randomness.
    """
    y = np.asarray(y)
    if len(y) == 0:
        raise ValueError("elbo: empty batch")
    n = dataset_size or len(y)
    bayesian = any(l.weight.bayesian for _, l in model.weight_layers())
    if noise is None:
        if not bayesian:
            noise = [None]
        else:
            if samples < 1:
                raise ValueError("samples must be >= 1")
            gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
            noise = [model.draw_noise(gen) for _ in range(samples)]
    nll = None
    for eps in noise:
        ce = T.cross_entropy(model.forward(x, eps), y)
        nll = ce if nll is None else T.add(nll, ce)
    nll = T.mul(nll, 1.0 / len(noise))
    kl = model_kl(model, *prior)
    total = T.add(nll, T.mul(kl, temperature / n)) if temperature else nll
    return ElboParts(nll=nll, kl=kl, temperature=temperature, dataset_size=n, total=total)
