import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netform.baseline import (
    MyopicConfig,
    average_stats,
    draw_pairs,
    myopic_run,
    myopic_run_reference,
    myopic_step,
    comparison_config,
)
from netform.errors import ConfigError
from netform.graph import Network
from netform.payoff import ConnectionsModel, PayoffParams


@st.composite
def configs(draw):
    k = draw(st.integers(1, 3))
    counts = draw(st.lists(st.integers(0, 4), min_size=k, max_size=k).filter(lambda c: sum(c) >= 2))
    f = {t: draw(st.sampled_from([0.5, 1.0, 2.0, 4.0, 10.0])) for t in range(k)}
    c = draw(st.sampled_from([0.3, 1.0, 2.5, 5.0]))
    delta = draw(st.sampled_from([0.2, 0.5, 0.6, 0.9]))
    n = sum(counts)
    return MyopicConfig(
        PayoffParams(f, c, delta), tuple(counts),
        horizon=n * (n - 1) * draw(st.integers(1, 3)),
        seed=draw(st.integers(0, 10**6)),
        initial=draw(st.sampled_from(["complete", "empty"])),
        discount_direct=draw(st.booleans()),
    )


@given(configs())
@settings(max_examples=80)
def test_compiled_run_matches_reference(cfg):
    assert myopic_run(cfg, compute_stats=False).network == myopic_run_reference(cfg)


def test_compiled_run_matches_reference_past_one_word():
    # 66 agents span two bitset words
    cfg = MyopicConfig(PayoffParams({0: 3.0, 1: 1.0}, 2.5, 0.5), (36, 30), seed=3, initial="empty")
    assert myopic_run(cfg, compute_stats=False).network == myopic_run_reference(cfg)


def params(f, c, delta=0.5):
    return PayoffParams({0: f}, c, delta)


def test_isolated_pair_links_when_valuable():
    g = myopic_step(Network.empty(3), (0, 0, 0), params(1.0, 0.5), (0, 1))
    assert g.links == {(0, 1)}


def test_isolated_pair_stays_apart_when_costly():
    assert not myopic_step(Network.empty(3), (0, 0, 0), params(1.0, 1.5), (0, 1)).links


def test_exact_tie_is_not_formed():
    assert not myopic_step(Network.empty(2), (0, 0), params(1.0, 1.0), (0, 1)).links


def test_costly_link_is_cut():
    g = myopic_step(Network.complete(2), (0, 0), params(1.0, 1.5), (1, 0))
    assert not g.links


def test_other_links_are_untouched():
    g = Network(4, [(0, 1), (2, 3)])
    out = myopic_step(g, (0,) * 4, params(1.0, 5.0), (0, 2))
    assert out == g


def test_two_agents_end_linked():
    res = myopic_run(MyopicConfig(params(1.0, 0.5), (2,), initial="empty", horizon=10))
    assert res.network.links == {(0, 1)}


@given(configs(), st.integers(0, 100))
@settings(max_examples=60)
def test_added_links_benefit_both_ends(cfg, seed):
    model = ConnectionsModel(cfg.effective_params())
    types = cfg.types.types
    g = Network.empty(cfg.n) if seed % 2 else Network.complete(cfg.n)
    rng = np.random.default_rng(seed)
    for i, j in zip(*draw_pairs(rng, cfg.n, 20)):
        i, j = int(i), int(j)
        out = myopic_step(g, types, cfg.effective_params(), (i, j))
        if out.has_link(i, j) and not g.has_link(i, j):
            for a in (i, j):
                assert model.payoff(types, out, a) >= model.payoff(types, g, a) - 1e-9
        g = out


def test_draw_pairs_distinct_and_uniform():
    ii, jj = draw_pairs(np.random.default_rng(0), 5, 200_000)
    assert np.all(ii != jj)
    counts = np.bincount(ii * 5 + jj, minlength=25).reshape(5, 5)
    off = counts[~np.eye(5, dtype=bool)]
    assert np.allclose(off / off.sum(), 1 / 20, atol=0.002)


def test_horizon_below_minimum_rejected():
    with pytest.raises(ConfigError):
        MyopicConfig(params(1.0, 0.5), (5,), horizon=19)


def test_unknown_initial_network_rejected():
    with pytest.raises(ConfigError):
        MyopicConfig(params(1.0, 0.5), (5,), initial="star")


def test_default_horizon():
    assert MyopicConfig(params(1.0, 0.5), (2, 3)).horizon == 20


def test_direct_discount_scales_benefits():
    cfg = MyopicConfig(PayoffParams({0: 10.0}, 5.0, 0.6), (3,), discount_direct=True)
    assert cfg.effective_params().benefit(0) == pytest.approx(6.0)


def test_comparison_setups():
    two = comparison_config(2, n=1000)
    assert two.type_counts == (167, 333, 500)
    assert comparison_config(1).type_counts == (1000,)
    with pytest.raises(ConfigError):
        comparison_config(3)


def test_seed_average():
    runs = [myopic_run(comparison_config(1, seed=s, n=30)) for s in range(3)]
    avg = average_stats(runs)
    assert avg.mean["alcc"] == pytest.approx(np.mean([r.stats.alcc for r in runs]))
    assert avg.stderr["alcc"] >= 0
    assert myopic_run(comparison_config(1, seed=1, n=30)).network == runs[1].network
