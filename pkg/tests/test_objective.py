import math

import numpy as np
import pytest

from bayeslottery import tensor as T
from bayeslottery.layers import inverse_softplus
from bayeslottery.models import ModelConfig, build
from bayeslottery.objective import elbo, kl_gaussian, kl_weight
from bayeslottery.optimizer import Adam, ParamGroup

from oracles import elbo_gradient_error, kl_monte_carlo


def small_model(widths=(2, 16, 16, 2), seed=0, sigma=None):
    model = build(ModelConfig(widths=widths, num_classes=widths[-1]), seed)
    if sigma is not None:
        for layer in model.layers.values():
            layer.weight.rho.data[...] = inverse_softplus(sigma)
    return model


def test_kl_identical_is_zero():
    assert kl_gaussian([0.0], [1.0], 0.0, 1.0) == 0.0


def test_kl_unit_shift_is_half():
    assert kl_gaussian([1.0], [1.0], 0.0, 1.0) == pytest.approx(0.5, abs=1e-15)


def test_kl_rejects_nonpositive_sigma():
    with pytest.raises(ValueError):
        kl_gaussian([0.0], [0.0])
    with pytest.raises(ValueError):
        kl_gaussian([0.0], [1.0], sigma_p=-1.0)


def test_kl_masked_entries_contribute_nothing():
    mu, sig = np.array([0.3, 5.0]), np.array([0.2, 1e-3])
    assert kl_gaussian(mu, sig, mask=[True, False]) == kl_gaussian(mu[:1], sig[:1])
    # a masked sigma of zero is not an error
    assert kl_gaussian([0.3, 0.0], [0.2, 0.0], mask=[True, False]) == kl_gaussian([0.3], [0.2])


def test_kl_matches_monte_carlo_spot_check():
    rng = np.random.default_rng(0)
    mean, se = kl_monte_carlo(0.7, 0.4, -0.2, 1.3, 200_000, rng)
    assert abs(kl_gaussian([0.7], [0.4], -0.2, 1.3) - mean) < 3 * se


def test_differentiable_kl_agrees_with_closed_form_and_mask_order():
    model = small_model()
    w = model.layers["fc1"].weight
    mask = np.random.default_rng(0).random(w.shape) < 0.6
    w.set_mask(mask)
    k = kl_weight(w, 0.1, 0.8).item()
    sigma = np.logaddexp(0, w.rho.data.astype(np.float64))
    ref = kl_gaussian(w.mu.data[mask], sigma[mask], 0.1, 0.8)
    assert k == pytest.approx(ref, rel=1e-5)
    assert k >= 0


def test_elbo_rejects_empty_batch():
    with pytest.raises(ValueError):
        elbo(small_model(), np.zeros((0, 2)), np.zeros(0, int))


def test_zero_temperature_total_is_nll():
    model = small_model()
    x = np.random.default_rng(0).standard_normal((6, 2)).astype(np.float32)
    parts = elbo(model, x, np.arange(6) % 2, samples=3, rng=1, temperature=0.0)
    assert parts.total.item() == parts.nll.item()


def test_total_decomposition():
    model = small_model()
    x = np.random.default_rng(0).standard_normal((6, 2)).astype(np.float32)
    parts = elbo(model, x, np.arange(6) % 2, samples=2, rng=1, temperature=0.1,
                 dataset_size=600)
    f = parts.floats()
    assert f["total"] == pytest.approx(f["nll"] + 0.1 * f["kl"] / 600, rel=1e-6)
    assert f["kl"] >= 0


def test_vanishing_sigma_gives_deterministic_cross_entropy():
    model = small_model()
    for layer in model.layers.values():
        layer.weight.rho.data[...] = -60.0
    x = np.random.default_rng(0).standard_normal((6, 2)).astype(np.float32)
    y = np.arange(6) % 2
    parts = elbo(model, x, y, samples=4, rng=3, temperature=0.0)
    det = T.cross_entropy(model.forward(x, None), y).item()
    assert parts.nll.item() == pytest.approx(det, abs=1e-6)


def test_elbo_is_deterministic_for_a_seed():
    model = small_model(sigma=0.2)
    x = np.random.default_rng(0).standard_normal((6, 2)).astype(np.float32)
    a = elbo(model, x, np.arange(6) % 2, samples=3, rng=42).total.item()
    b = elbo(model, x, np.arange(6) % 2, samples=3, rng=42).total.item()
    assert a == b


def test_elbo_gradient_small_model():
    assert elbo_gradient_error((2, 5, 3)) < 1e-3


def test_nll_spread_shrinks_as_inverse_sqrt_samples():
    model = small_model(sigma=0.3)
    x = np.random.default_rng(0).standard_normal((16, 2)).astype(np.float32)
    y = np.arange(16) % 2
    reps = 200
    std = {}
    for s in (1, 4, 16):
        vals = [elbo(model, x, y, samples=s, rng=1000 * s + r, temperature=0).nll.item()
                for r in range(reps)]
        std[s] = np.std(vals, ddof=1)
    # relative standard error of a ratio of two sample stds ~ sqrt(1 / (n - 1))
    rel_se = math.sqrt(1 / (reps - 1))
    for s in (4, 16):
        ratio = std[1] / std[s]
        assert abs(ratio - math.sqrt(s)) < 3 * rel_se * math.sqrt(s)


def test_single_batch_minimization_decreases_moving_average():
    model = small_model(sigma=0.05)
    rng = np.random.default_rng(0)
    x = rng.standard_normal((32, 2)).astype(np.float32)
    y = (x[:, 0] * x[:, 1] > 0).astype(int)
    groups = []
    for layer in model.layers.values():
        groups += [ParamGroup(layer.weight.mu, True), ParamGroup(layer.weight.rho, False),
                   ParamGroup(layer.bias, False)]
    opt = Adam(groups, weight_decay=0.0)
    noise_rng = np.random.default_rng(1)
    totals = []
    for _ in range(200):
        model.zero_grad()
        parts = elbo(model, x, y, samples=4, rng=noise_rng, temperature=0.1, dataset_size=32)
        parts.total.backward()
        opt.step(0.01)
        totals.append(parts.total.item())
    ma = np.convolve(totals, np.ones(10) / 10, mode="valid")
    windows = ma[::38]  # moving average sampled every 38 steps, 5 points
    assert np.all(np.diff(windows) < 0)
    assert ma[-1] < 0.5 * ma[0]
