"""Desk-scale MLP and pre-activation residual CNN, Bayesian or deterministic."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .layers import ChannelAffine, Conv2d, LayerSpec, Linear, VariationalTensor
from .tensor import Tensor


@dataclass
class ModelConfig:
    arch: str = "mlp"
    # mlp: full layer widths including input and output, e.g. (2, 64, 64, 2)
    # mini_resnet: channel width of each of the two stages
    widths: tuple[int, ...] = (2, 64, 64, 2)
    # mini_resnet only: residual blocks per stage
    blocks: tuple[int, ...] = (1, 1)
    num_classes: int = 2
    in_channels: int = 3
    bayesian: bool = True
    init_dist: str = "uniform"

    def validate(self) -> None:
        if self.arch == "mlp":
            if len(self.widths) < 3:
                raise ValueError("mlp needs at least one hidden layer")
            if self.widths[-1] != self.num_classes:
                raise ValueError(
                    f"mlp output width {self.widths[-1]} != num_classes {self.num_classes}")
        elif self.arch == "mini_resnet":
            if len(self.widths) != 2 or len(self.blocks) != 2:
                raise ValueError("mini_resnet takes exactly two stages")
            if min(self.blocks) < 1:
                raise ValueError("each stage needs at least one block")
        else:
            raise ValueError(f"unknown arch {self.arch!r}")
        if min(self.widths) < 1 or self.num_classes < 1:
            raise ValueError(f"zero-width layer in {self.widths}")


@dataclass
class Model:
    config: ModelConfig
    layers: dict = field(default_factory=dict)  # name -> Linear | Conv2d, registry order
    norms: dict = field(default_factory=dict)
    plan: list = field(default_factory=list)  # resnet block wiring
    level: int = 0  # pruning level of the committed mask

    # registry ---------------------------------------------------------------

    def weight_layers(self) -> list[tuple[str, object]]:
        return list(self.layers.items())

    def prunable_parameters(self) -> list[tuple[str, VariationalTensor]]:
        """Prunable weight tensors in depth order; the classifier is excluded."""
        return [(name, layer.weight) for name, layer in self.layers.items()
                if layer.spec.prunable]

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for name, layer in self.layers.items():
            out.append((f"{name}.mu", layer.weight.mu))
            if layer.weight.rho is not None:
                out.append((f"{name}.rho", layer.weight.rho))
            if layer.bias is not None:
                out.append((f"{name}.bias", layer.bias))
        for name, norm in self.norms.items():
            out.append((f"{name}.scale", norm.scale))
            out.append((f"{name}.shift", norm.shift))
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True) -> None:
        params = dict(self.named_parameters())
        if strict and set(state) != set(params):
            missing = sorted(set(params) ^ set(state))
            raise KeyError(f"state keys do not match model parameters: {missing}")
        for k, v in state.items():
            if k not in params:
                continue
            if v.shape != params[k].shape:
                raise T.ShapeError(f"{k}: shape {v.shape} != {params[k].shape}")
            params[k].data[...] = v

    def masks(self) -> dict[str, np.ndarray]:
        return {n: w.mask.copy() for n, w in self.prunable_parameters()}

    def zero_grad(self) -> None:
        for _, p in self.named_parameters():
            p.grad = None

    # forward ----------------------------------------------------------------

    def draw_noise(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        dtype = T.get_default_dtype()
        return {name: rng.standard_normal(layer.weight.shape).astype(dtype)
                for name, layer in self.layers.items() if layer.weight.bayesian}

    def forward(self, x, noise: dict[str, np.ndarray] | None = None) -> Tensor:
        """Logits for one weight draw. ``noise=None`` evaluates at the means."""
        x = T.as_tensor(x)
        noise = noise or {}
        if self.config.arch == "mlp":
            names = list(self.layers)
            for name in names[:-1]:
                x = T.relu(self.layers[name](x, noise.get(name)))
            return self.layers[names[-1]](x, noise.get(names[-1]))
        return self._resnet_forward(x, noise)

    __call__ = forward

    def _resnet_forward(self, x: Tensor, noise) -> Tensor:
        def conv(name, h):
            return self.layers[name](h, noise.get(name))

        h = conv("stem", x)
        for blk in self.plan:
            pre = T.relu(self.norms[blk["norm1"]](h))
            r = conv(blk["conv1"], pre)
            r = T.relu(self.norms[blk["norm2"]](r))
            r = conv(blk["conv2"], r)
            short = conv(blk["shortcut"], pre) if blk["shortcut"] else h
            h = T.add(r, short)
        h = T.relu(self.norms["final_norm"](h))
        h = T.mean(h, axis=(2, 3))
        return self.layers["classifier"](h, noise.get("classifier"))


def build(config: ModelConfig, seed) -> Model:
    """Construct a model; initial means depend only on ``seed``, not on ``bayesian``."""
    config.validate()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    model = Model(config)
    bayes, dist = config.bayesian, config.init_dist
    if config.arch == "mlp":
        w = config.widths
        for i in range(len(w) - 1):
            last = i == len(w) - 2
            name = "classifier" if last else f"fc{i}"
            spec = LayerSpec("linear", w[i], w[i + 1], prunable=not last)
            model.layers[name] = Linear(spec, rng, bayes, bias=True, dist=dist)
        return model

    def add_conv(name, cin, cout, k, stride):
        spec = LayerSpec("conv2d", cin * k * k, cout, kernel=k, stride=stride,
                         padding=k // 2, prunable=True)
        model.layers[name] = Conv2d(spec, rng, bayes, dist=dist)

    c0, c1 = config.widths
    add_conv("stem", config.in_channels, c0, 3, 1)
    cin = c0
    for stage, (width, nblocks) in enumerate(zip((c0, c1), config.blocks)):
        for b in range(nblocks):
            stride = 2 if stage > 0 and b == 0 else 1
            tag = f"s{stage}b{b}"
            blk = {"norm1": f"{tag}.norm1", "norm2": f"{tag}.norm2",
                   "conv1": f"{tag}.conv1", "conv2": f"{tag}.conv2", "shortcut": None}
            model.norms[blk["norm1"]] = ChannelAffine(cin)
            add_conv(blk["conv1"], cin, width, 3, stride)
            model.norms[blk["norm2"]] = ChannelAffine(width)
            add_conv(blk["conv2"], width, width, 3, 1)
            if stride != 1 or cin != width:
                blk["shortcut"] = f"{tag}.shortcut"
                add_conv(blk["shortcut"], cin, width, 1, stride)
            model.plan.append(blk)
            cin = width
    model.norms["final_norm"] = ChannelAffine(cin)
    spec = LayerSpec("linear", cin, config.num_classes, prunable=False)
    model.layers["classifier"] = Linear(spec, rng, bayes, bias=True, dist=dist)
    return model


def prunable_parameters(model: Model) -> list[tuple[str, VariationalTensor]]:
    return model.prunable_parameters()


def predict_mean(model: Model, x, samples: int = 10, seed=0,
                 batch_size: int | None = None) -> np.ndarray:
    """Average of ``samples`` softmax outputs, each from an independent weight draw."""
    if samples < 1:
        raise ValueError("predict_mean: samples must be >= 1")
    x = np.asarray(x)
    bayesian = any(l.weight.bayesian for _, l in model.weight_layers())
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = len(x)
    step = batch_size or n
    probs = np.zeros((n, model.config.num_classes), dtype=np.float64)
    with T.no_grad():
        draws = samples if bayesian else 1
        for _ in range(draws):
            eps = model.draw_noise(rng) if bayesian else None
            for start in range(0, n, step):
                logits = model.forward(x[start:start + step], eps)
                probs[start:start + step] += T._softmax(logits.data.astype(np.float64))
    return probs / draws
