"""Mean-field Gaussian weight layers and their deterministic twins."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor

SIGMA_INIT_FRACTION = 0.01


def kaiming_bound(fan_in: int) -> float:
    if fan_in < 1:
        raise ValueError(f"fan_in must be >= 1, got {fan_in}")
    return math.sqrt(6.0 / fan_in)


def inverse_softplus(y: float) -> float:
    """rho such that softplus(rho) == y."""
    if y <= 0:
        raise ValueError("softplus is strictly positive")
    return y + math.log(-math.expm1(-y))


@dataclass
class LayerSpec:
    kind: str  # "linear" | "conv2d"
    fan_in: int
    fan_out: int
    kernel: int = 1
    stride: int = 1
    padding: int = 0
    prunable: bool = True

    @property
    def weight_shape(self) -> tuple[int, ...]:
        if self.kind == "linear":
            return (self.fan_in, self.fan_out)
        cin = self.fan_in // (self.kernel * self.kernel)
        return (self.fan_out, cin, self.kernel, self.kernel)


class VariationalTensor:
    """Weight posterior N(mu, softplus(rho)^2) with a pruning mask.

    Deterministic weights use the same container with ``rho=None``.
    ``mu0``/``rho0`` hold the values the tensor was initialized with.
    """

    def __init__(self, mu: np.ndarray, rho: np.ndarray | None, mask: np.ndarray | None = None):
        self.mu = Tensor(mu, requires_grad=True)
        self.rho = None if rho is None else Tensor(rho, requires_grad=True)
        if self.rho is not None and self.rho.shape != self.mu.shape:
            raise T.ShapeError(f"rho shape {self.rho.shape} != mu shape {self.mu.shape}")
        self.mu0 = self.mu.data.copy()
        self.rho0 = None if self.rho is None else self.rho.data.copy()
        self.mask = np.ones(self.mu.shape, dtype=bool) if mask is None else mask.astype(bool)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.mu.shape

    @property
    def bayesian(self) -> bool:
        return self.rho is not None

    @property
    def sigma(self) -> np.ndarray:
        """Effective standard deviation; zero on masked entries."""
        if self.rho is None:
            return np.zeros(self.shape, dtype=self.mu.data.dtype)
        return np.where(self.mask, np.logaddexp(0, self.rho.data), 0).astype(self.mu.data.dtype)

    @property
    def effective_mu(self) -> np.ndarray:
        return np.where(self.mask, self.mu.data, 0).astype(self.mu.data.dtype)

    def set_mask(self, mask: np.ndarray) -> None:
        if mask.shape != self.shape:
            raise T.ShapeError(f"mask shape {mask.shape} != weight shape {self.shape}")
        self.mask = mask.astype(bool)

    def parameters(self) -> list[Tensor]:
        return [self.mu] if self.rho is None else [self.mu, self.rho]

    def sample(self, noise: np.ndarray | None) -> Tensor:
        """Reparameterized weight mask * (mu + softplus(rho) * noise)."""
        m = self.mask.astype(self.mu.data.dtype)
        if self.rho is None or noise is None:
            return T.mul(self.mu, m)
        if noise.shape != self.shape:
            raise T.ShapeError(f"noise shape {noise.shape} != weight shape {self.shape}")
        w = T.add(self.mu, T.mul(T.softplus(self.rho), noise.astype(self.mu.data.dtype)))
        return T.mul(w, m)


def init_variational(spec: LayerSpec, seed, bayesian: bool = True,
                     dist: str = "uniform") -> VariationalTensor:
    """Kaiming-initialized means; sigma at 1% of the Kaiming bound.

    ``seed`` may be an int or a numpy Generator. Only the means consume
    randomness, so Bayesian and deterministic builds share mean values.
    """
    b = kaiming_bound(spec.fan_in)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    shape = spec.weight_shape
    if dist == "uniform":
        mu = rng.uniform(-b, b, size=shape)
    elif dist == "normal":
        # same variance as the uniform scheme: b^2 / 3 == 2 / fan_in
        mu = rng.normal(0.0, b / math.sqrt(3.0), size=shape)
    else:
        raise ValueError(f"unknown init distribution {dist!r}")
    dtype = T.get_default_dtype()
    rho = np.full(shape, inverse_softplus(SIGMA_INIT_FRACTION * b)) if bayesian else None
    return VariationalTensor(mu.astype(dtype), None if rho is None else rho.astype(dtype))


class Linear:
    def __init__(self, spec: LayerSpec, rng: np.random.Generator, bayesian: bool,
                 bias: bool = True, dist: str = "uniform"):
        self.spec = spec
        self.weight = init_variational(spec, rng, bayesian, dist)
        self.bias = None
        if bias:
            bound = 1.0 / math.sqrt(spec.fan_in)
            self.bias = Tensor(rng.uniform(-bound, bound, size=spec.fan_out), requires_grad=True)

    def __call__(self, x: Tensor, noise: np.ndarray | None = None) -> Tensor:
        return sample_forward(self, x, noise)


class Conv2d:
    def __init__(self, spec: LayerSpec, rng: np.random.Generator, bayesian: bool,
                 dist: str = "uniform"):
        self.spec = spec
        self.weight = init_variational(spec, rng, bayesian, dist)
        self.bias = None

    def __call__(self, x: Tensor, noise: np.ndarray | None = None) -> Tensor:
        return sample_forward(self, x, noise)


def sample_forward(layer, x: Tensor, noise: np.ndarray | None) -> Tensor:
    """Forward with one weight draw; ``noise=None`` uses the mean weights."""
    w = layer.weight.sample(noise)
    if layer.spec.kind == "linear":
        out = T.matmul(x, w)
    else:
        out = T.conv2d(x, w, stride=layer.spec.stride, padding=layer.spec.padding)
    if layer.bias is not None:
        out = T.add(out, layer.bias)
    return out


class ChannelAffine:
    """Deterministic per-channel scale and shift (no batch statistics)."""

    def __init__(self, channels: int):
        self.scale = Tensor(np.ones((channels, 1, 1)), requires_grad=True)
        self.shift = Tensor(np.zeros((channels, 1, 1)), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return T.add(T.mul(x, self.scale), self.shift)
