import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bayeslottery.data import synth_blobs
from bayeslottery.models import ModelConfig, build
from bayeslottery.optimizer import TrainConfig
from bayeslottery.pruning import PruneMask
from bayeslottery.tensor import ShapeError
from bayeslottery.tickets import (Ticket, even_counts, imp, lrr, reinit_weights,
                                  round_half_away, shuffle_mask, transplant, transplant_pipeline)

CFG = TrainConfig(epochs=2, batch_size=64, milestones=(), lr=3e-3, samples=2, eval_samples=2)
SMALL = ModelConfig(widths=(2, 16, 16, 4), num_classes=4)


@pytest.fixture(scope="module")
def data():
    return (synth_blobs(40, 4, 0.15, seed=1, grid=5), synth_blobs(20, 4, 0.15, seed=2, grid=5))


@pytest.fixture(scope="module")
def imp_run(data):
    return imp(SMALL, *data, CFG, levels=3, rate=0.2, score="snr", seed=0)


@pytest.fixture(scope="module")
def lrr_run(data):
    return lrr(SMALL, *data, CFG, levels=2, rate=0.2, score="snr", seed=0)


def test_one_level_prunes_twenty_percent(data):
    res = imp(SMALL, *data, CFG, levels=1, seed=1)
    assert [t.level for t in res.tickets] == [0, 1]
    assert len(res.records) == 2
    mask = res.tickets[1].mask
    assert mask.total - mask.remaining == int(0.2 * mask.total)


def test_imp_rewinds_survivors_to_initial_values(imp_run):
    init = imp_run.tickets[0].init_state
    for ticket in imp_run.tickets[1:]:
        for key, value in init.items():
            assert np.array_equal(ticket.init_state[key], value), key


def test_imp_masks_are_monotone_and_follow_the_count_recursion(imp_run):
    remaining = [t.mask.remaining for t in imp_run.tickets]
    expect = [remaining[0]]
    for _ in range(3):
        expect.append(expect[-1] - int(0.2 * expect[-1]))
    assert remaining == expect
    for a, b in zip(imp_run.tickets, imp_run.tickets[1:]):
        assert b.mask.is_subset_of(a.mask)
        assert b.mask.level == b.level == a.level + 1


def test_imp_is_deterministic(data, imp_run):
    again = imp(SMALL, *data, CFG, levels=3, rate=0.2, score="snr", seed=0)
    for a, b in zip(imp_run.tickets, again.tickets):
        for n in a.mask.masks:
            assert np.array_equal(a.mask.masks[n], b.mask.masks[n])
    assert [r.max_test_acc for r in imp_run.records] == [r.max_test_acc for r in again.records]


def test_mu_only_rewind_keeps_trained_rho(data):
    res = imp(SMALL, *data, CFG, levels=1, seed=0, rewind_rho=False)
    init, trained = res.tickets[0].init_state, res.records[0].final_state
    nxt = res.tickets[1].init_state
    assert np.array_equal(nxt["fc0.mu"], init["fc0.mu"])
    assert np.array_equal(nxt["fc0.rho"], trained["fc0.rho"])


def test_lrr_starts_from_previous_trained_weights(lrr_run):
    for prev, ticket in zip(lrr_run.records, lrr_run.tickets[1:]):
        for key, value in prev.final_state.items():
            assert np.array_equal(ticket.init_state[key], value), key
    for a, b in zip(lrr_run.tickets, lrr_run.tickets[1:]):
        assert b.mask.is_subset_of(a.mask)
    assert {t.lineage for t in lrr_run.tickets} == {"lrr"}


def test_imp_rejects_bad_arguments(data):
    with pytest.raises(ValueError):
        imp(SMALL, *data, CFG, levels=-1)
    with pytest.raises(ValueError):
        imp(SMALL, *data, CFG, levels=1, lineage="reinit")
    with pytest.raises(ValueError):
        imp(SMALL, *data, CFG, levels=1, score="fisher")


def test_reinit_keeps_mask_and_decorrelates_weights(imp_run):
    ticket = imp_run.tickets[-1]
    big = ModelConfig(widths=(2, 64, 64, 4), num_classes=4)
    model = build(big, 3)
    base = Ticket(PruneMask.dense(model), model.state_dict(), big, seed=3)
    new = reinit_weights(base, seed=99)
    assert new.lineage == "reinit"
    for n, m in base.mask.masks.items():
        assert np.array_equal(new.mask.masks[n], m)
    r = np.corrcoef(base.init_state["fc1.mu"].ravel(), new.init_state["fc1.mu"].ravel())[0, 1]
    assert base.init_state["fc1.mu"].size == 4096
    assert abs(r) < 0.05
    assert np.array_equal(new.init_state["fc1.rho"], base.init_state["fc1.rho"])
    small = reinit_weights(ticket, seed=4, dist="normal")
    for n, m in ticket.mask.masks.items():
        assert np.array_equal(small.mask.masks[n], m)
    uniform = reinit_weights(ticket, seed=4)
    assert not np.array_equal(small.init_state["fc0.mu"], uniform.init_state["fc0.mu"])


def test_even_counts_example():
    assert even_counts([10, 90], 50) == [5, 45]


def test_even_counts_repairs_rounding_in_largest_layer():
    # 3 * (1/3) rounds to 1 each -> 3, but only 2 ones exist; the largest layer absorbs it
    assert even_counts([3, 3, 4], 3) == [1, 1, 1]
    assert sum(even_counts([5, 5, 7], 8)) == 8
    assert round_half_away(5, 2) == 3 and round_half_away(3, 2) == 2 and round_half_away(1, 4) == 0


def random_ticket(seed):
    rng = np.random.default_rng(seed)
    widths = (2, *rng.integers(1, 12, rng.integers(1, 4)), 3)
    cfg = ModelConfig(widths=tuple(int(w) for w in widths), num_classes=3)
    model = build(cfg, seed)
    density = rng.uniform(0.01, 1.0)
    masks = {n: rng.random(w.shape) < density for n, w in model.prunable_parameters()}
    return Ticket(PruneMask(masks, 2), model.state_dict(), cfg, level=2, seed=seed)


def unchanged_weights(a, b):
    return all(np.array_equal(a.init_state[k], b.init_state[k]) for k in a.init_state)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.integers(0, 2 ** 31 - 1))
def test_mask_transform_contracts(ticket_seed, seed):
    t = random_ticket(ticket_seed)
    ones = t.mask.ones_per_layer()
    g = shuffle_mask(t, "global", seed)
    assert g.mask.remaining == t.mask.remaining
    lw = shuffle_mask(t, "layerwise", seed)
    assert lw.mask.ones_per_layer() == ones
    ev = shuffle_mask(t, "even", seed)
    sizes = [m.size for m in t.mask.masks.values()]
    assert list(ev.mask.ones_per_layer().values()) == even_counts(sizes, t.mask.remaining)
    assert ev.mask.remaining == t.mask.remaining
    for s in (g, lw, ev):
        assert unchanged_weights(s, t)
        assert all(s.mask.masks[n].shape == m.shape for n, m in t.mask.masks.items())
    r = reinit_weights(t, seed)
    for n, m in t.mask.masks.items():
        assert np.array_equal(r.mask.masks[n], m)


def test_shuffle_lineages_and_unknown_mode():
    t = random_ticket(0)
    assert shuffle_mask(t, "even", 1).lineage == "shuffle_even"
    assert shuffle_mask(t, "even", 1).mask.lineage == "shuffle_even"
    with pytest.raises(ValueError, match="unknown shuffle mode"):
        shuffle_mask(t, "blockwise", 1)


def test_transplant_matches_deterministic_forward_at_zero_noise(data):
    det_cfg = ModelConfig(widths=(2, 16, 16, 4), num_classes=4, bayesian=False)
    det = imp(det_cfg, *data, CFG, levels=2, score="magnitude", seed=0)
    source = det.tickets[-1]
    new = transplant(source)
    assert new.config.bayesian and new.lineage == "transplant"
    assert new.mask.ones_per_layer() == source.mask.ones_per_layer()
    det_model = source.model(source.trained_state)
    bayes_model = new.model()
    x = data[1].x
    zero = {n: np.zeros(l.weight.shape, np.float32) for n, l in bayes_model.layers.items()}
    np.testing.assert_array_equal(bayes_model.forward(x, zero).data, det_model.forward(x).data)
    sigma = bayes_model.layers["fc0"].weight.sigma
    fresh = build(new.config, 0).layers["fc0"].weight.sigma
    np.testing.assert_array_equal(sigma[bayes_model.layers["fc0"].weight.mask],
                                  fresh[bayes_model.layers["fc0"].weight.mask])


def test_transplant_rejects_shape_mismatch():
    det_cfg = ModelConfig(widths=(2, 8, 4), num_classes=4, bayesian=False)
    model = build(det_cfg, 0)
    ticket = Ticket(PruneMask.dense(model), model.state_dict(), det_cfg)
    with pytest.raises(ShapeError):
        transplant(ticket, ModelConfig(widths=(2, 9, 4), num_classes=4))
    with pytest.raises(ValueError):
        transplant(ticket, det_cfg)


def test_transplant_pipeline_runs_one_variational_phase(data):
    det, tr = transplant_pipeline(SMALL, *data, CFG, levels=2, seed=0)
    assert len(det.tickets) == 3 and not det.tickets[0].config.bayesian
    assert len(tr.tickets) == 1 and tr.tickets[0].config.bayesian
    assert tr.tickets[0].mask.remaining == det.tickets[-1].mask.remaining
    assert tr.tickets[0].trained_state is not None


def test_lrr_tracks_imp_at_high_sparsity(toy_runs):
    imp_acc = np.median([r["imp"].records[-1].max_test_acc for r in toy_runs])
    lrr_acc = np.median([r["lrr"].records[-1].max_test_acc for r in toy_runs])
    assert lrr_acc >= imp_acc - 0.02
