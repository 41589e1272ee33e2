import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from netform import equilibrium as eq
from netform.efficiency import is_core_stable
from netform.errors import ArgumentError, SizeLimitError
from netform.graph import Network
from netform.payoff import ConnectionsModel, PayoffParams, example1_model

EX1 = (Network.complete(3), (0, 0, 0), example1_model(1))


def connections(f=1.0, c=0.2, delta=0.5):
    return ConnectionsModel(PayoffParams({0: f}, c, delta))


# -- chain ----------------------------------------------------------------------


def test_two_agent_chain_size_and_rows():
    chain = eq.build_chain(Network.complete(2), (0, 0), connections(), 1)
    assert chain.n_states == 4
    assert np.allclose(np.asarray(chain.kernel.sum(axis=1)).ravel(), 1, atol=1e-12)


def test_rows_sum_to_one_with_long_punishment():
    chain = eq.build_chain(*EX1, 12)
    assert np.allclose(np.asarray(chain.kernel.sum(axis=1)).ravel(), 1, atol=1e-12)


def test_first_link_probabilities_from_empty_network():
    chain = eq.build_chain(*EX1, 2)
    row = chain.kernel.getrow(chain.index(0, 0)).toarray().ravel()
    for k in range(3):
        assert math.isclose(row[chain.index(1 << k, 0)], 1 / 3)


def test_punishment_states_empty_the_network():
    K = 4
    chain = eq.build_chain(*EX1, K)
    for mask in range(8):
        for ph in range(1, K + 1):
            nxt = 0 if ph == K else ph + 1
            row = chain.kernel.getrow(chain.index(mask, ph)).toarray().ravel()
            assert row[chain.index(0, nxt)] == 1


def test_chain_size_limit():
    with pytest.raises(SizeLimitError):
        eq.build_chain(Network.complete(5), (0,) * 5, connections(), 1)


# -- values ---------------------------------------------------------------------


@pytest.mark.parametrize("gamma", [0.3, 0.9, 0.99])
def test_iterative_values_match_dense_solve(gamma):
    chain = eq.build_chain(Network.star(4, 0), (0,) * 4, connections(), 3)
    P = chain.kernel.toarray()
    dense = np.linalg.solve(np.eye(chain.n_states) - gamma * P, chain.payoffs)
    assert np.allclose(eq.exact_values(chain, gamma), dense, atol=1e-8)
    assert np.allclose(eq.exact_values(chain, gamma, method="direct"), dense, atol=1e-8)


def test_zero_discount_gives_one_period_payoffs():
    chain = eq.build_chain(*EX1, 2)
    assert np.array_equal(eq.exact_values(chain, 0), chain.payoffs)


@pytest.mark.parametrize("target", [Network.complete(3), Network(3, [(0, 1)]), Network.path(3)])
def test_value_at_converged_state(target):
    gamma = 0.95
    model = connections()
    chain = eq.build_chain(target, (0, 0, 0), model, 3)
    V = eq.exact_values(chain, gamma)
    u = [model.payoff((0, 0, 0), target, i) for i in range(3)]
    assert np.allclose(V[chain.index(target.mask, 0)], np.array(u) / (1 - gamma), atol=1e-9)


def test_example1_value_at_complete_network():
    chain = eq.build_chain(*EX1, 5)
    V = eq.exact_values(chain, 0.9)
    assert np.allclose(V[chain.index(7, 0)], 1 / (1 - 0.9))


def test_non_convergence_is_reported():
    chain = eq.build_chain(*EX1, 2)
    with pytest.raises(eq.NumericalError):
        eq.exact_values(chain, 0.999, max_iter=5)


# -- deviations -------------------------------------------------------------------


def test_example1_sustained_when_patient():
    assert eq.one_shot_deviation_gain(*EX1, 0.98, 60).equilibrium


def test_example1_fails_when_impatient():
    rep = eq.one_shot_deviation_gain(*EX1, 0.5, 60)
    assert rep.gain > 0 and rep.agent is not None


def test_all_zero_profile_is_an_equilibrium():
    for gamma in (0.1, 0.5, 0.99):
        rep = eq.one_shot_deviation_gain(*EX1, gamma, 3, rule=eq.zero_rule)
        assert rep.gain <= 0


def brute_gain(chain, gamma, V):
    """Direct enumeration of every own-action change at every state."""
    from netform.graph import all_pairs

    n, K = chain.n, chain.K
    act = eq.sc_rule(chain.target)
    pairs = all_pairs(n)
    best = 0.0
    for s in range(chain.n_states):
        m, ph = divmod(s, K + 1)
        for i in range(n):
            total = 0.0
            for p in range(len(pairs)):
                rel = [pairs[k] for k in range(len(pairs)) if (m | 1 << p) >> k & 1]
                mine = [q for q in rel if i in q]
                presc = V[chain.succ[s, p], i]
                top = presc
                for bits in itertools.product((0, 1), repeat=len(mine)):
                    over = {(i, b if a == i else a): x for (a, b), x in zip(mine, bits)}
                    h = eq._outcome(n, m, ph, p, act, over)
                    s2 = h * (K + 1) + eq._next_phase(m, ph, p, h, chain.target.mask, K)
                    top = max(top, V[s2, i])
                total += top - presc
            best = max(best, gamma * total / len(pairs))
    return best


@pytest.mark.parametrize("gamma", [0.4, 0.8, 0.95])
def test_deviation_gain_matches_full_enumeration(gamma):
    chain = eq.build_chain(Network.path(3), (0, 0, 0), connections(c=0.9, delta=0.3), 2)
    V = eq.exact_values(chain, gamma, method="direct")
    got = eq.deviation_gain(chain, gamma, V).gain
    assert math.isclose(got, brute_gain(chain, gamma, V), abs_tol=1e-9)


# -- thresholds -----------------------------------------------------------------------


def test_threshold_bracket_for_example1():
    res = eq.threshold_gamma(*EX1, 60)
    assert res.outcome == "interior" and res.gamma_bar < 0.98
    lo, hi = res.bracket
    assert hi - lo <= 1e-4
    chain = eq.build_chain(*EX1, 60)
    assert eq.deviation_gain(chain, res.gamma_bar + 1e-4).equilibrium
    assert not eq.deviation_gain(chain, res.gamma_bar - 1e-4).equilibrium


def test_threshold_nonincreasing_in_k():
    bars = [eq.threshold_gamma(*EX1, K).gamma_bar for K in (10, 30, 60)]
    assert bars[0] >= bars[1] >= bars[2]


def test_negative_payoff_target_is_never_sustained():
    model = connections(f=1.0, c=1.2, delta=0.1)
    assert eq.threshold_gamma(Network.complete(3), (0, 0, 0), model, 5).outcome == "never"


def test_min_k_for_example1():
    k = eq.min_K(*EX1, 0.98)
    assert k is not None
    assert eq.one_shot_deviation_gain(*EX1, 0.98, k).equilibrium
    if k > 1:
        assert not eq.one_shot_deviation_gain(*EX1, 0.98, k - 1).equilibrium


# -- bounds -------------------------------------------------------------------------------


def test_t_star_values():
    assert eq.t_star(2) == 1
    assert eq.t_star(3) == 3  # 3 (2/3)^3 = 8/9 is the first value below one


def test_lower_bound_grows_without_limit():
    vals = [eq.lemma1_lower_bound(1 - 10.0**-k, None, -1.0, 1.0, 4) for k in range(1, 7)]
    assert all(a < b for a, b in zip(vals, vals[1:]))


@given(st.floats(0.05, 0.99), st.integers(1, 200), st.floats(-3, 3), st.integers(2, 6))
def test_lower_bound_with_equal_payoffs_is_geometric(gamma, M, u, N):
    assert math.isclose(eq.lemma1_lower_bound(gamma, M, u, u, N), u * (1 - gamma**M) / (1 - gamma),
                        rel_tol=1e-9, abs_tol=1e-9)
    assert math.isclose(eq.lemma1_lower_bound(gamma, None, u, u, N), u / (1 - gamma), rel_tol=1e-9)


def test_lower_bound_matches_direct_sum():
    gamma, W, u, N, M = 0.9, -0.5, 2.0, 4, 40
    P = N * (N - 1) / 2
    ts = eq.t_star(N)
    direct = sum(gamma ** (t - 1) * W for t in range(1, ts))
    direct += sum(gamma ** (t - 1) * (P * (1 - 1 / P) ** t * W + (1 - P * (1 - 1 / P) ** t) * u)
                  for t in range(ts, M + 1))
    assert math.isclose(eq.lemma1_lower_bound(gamma, M, W, u, N), direct, rel_tol=1e-12)


@pytest.mark.parametrize("target,model", [
    (Network.complete(3), connections()),
    (Network.path(3), connections(c=0.5)),
    (Network.complete(3), example1_model(1)),
])
def test_lower_bound_below_exact_values(target, model):
    gamma = 0.9
    types = (0, 0, 0)
    chain = eq.build_chain(target, types, model, 2)
    V = eq.exact_values(chain, gamma)
    b = eq.bound_components(target, types, model)
    for mask in range(8):
        s = chain.index(mask, 0)
        for i in range(3):
            u_i = float(chain.payoffs[chain.index(target.mask, 0), i])
            mu = eq.lemma1_lower_bound(gamma, None, b.W, u_i, 3)
            assert mu <= (V[s, i] - chain.payoffs[s, i]) / gamma + 1e-9


def test_bound_components_example1():
    b = eq.bound_components(*EX1)
    assert (b.v_bar, b.W, b.V, b.u_min, b.t_star) == (2.0, 0.0, 2.0, 1.0, 3)
    assert b.A > 0
    assert b.certifies(0.98, 60)


@pytest.mark.parametrize("target,model", [
    (Network.complete(3), example1_model(1)),
    (Network.complete(3), connections(c=0.8)),
    (Network.path(3), connections(c=0.5)),
    (Network.complete(2), connections(c=0.5)),
])
def test_bound_is_sound(target, model):
    types = (0,) * target.n
    b = eq.bound_components(target, types, model)
    for K in (1, 5, 20, 60):
        chain = eq.build_chain(target, types, model, K)
        for gamma in (0.5, 0.8, 0.9, 0.95, 0.98, 0.995):
            if b.certifies(gamma, K):
                assert eq.deviation_gain(chain, gamma).equilibrium, (gamma, K)


# -- group deviations ------------------------------------------------------------------------


def test_group_check_rejects_bad_inputs():
    g = Network.complete(3)
    model = connections()
    with pytest.raises(ArgumentError):
        eq.group_deviation_check(g, (0, 0, 0), model, (0, 1, 2), Network(3), 0, 0.9, 2)
    with pytest.raises(ArgumentError):
        eq.group_deviation_check(g, (0, 0, 0), model, (0, 1), Network(3, [(1, 2)]), 0, 0.9, 2)


def test_no_profitable_coalition_in_cooperation_phase():
    g = Network.complete(3)
    model = connections()
    assert is_core_stable(g, (0, 0, 0), model)
    for group, hat in eq.proper_group_networks(3):
        res = eq.group_deviation_check(g, (0, 0, 0), model, group, hat, 0, 0.99, 2)
        assert not res.profitable


def test_group_bound_is_sound():
    g = Network.complete(3)
    model = connections()
    for gamma in (0.9, 0.99, 0.999):
        for Kp in (0, 1, 3):
            for group, hat in eq.proper_group_networks(3):
                res = eq.group_deviation_check(g, (0, 0, 0), model, group, hat, Kp, gamma, 3)
                if res.bound_says_unprofitable:
                    assert not res.profitable


def test_f_negative_for_core_stable_target():
    b = eq.group_bound(Network.complete(3), (0, 0, 0), connections())
    assert b.F < 0


def test_m_of_gamma_requires_negative_f():
    with pytest.raises(ArgumentError):
        eq.m_of_gamma(eq.GroupDeviationBound(1.0, 0.1, 0.0, 0.0), 0.9)


def test_m_of_gamma_two_agents():
    b = eq.group_bound(Network.complete(2), (0, 0), connections(c=0.5))
    assert b.D == 0 and b.E == 0
    assert eq.m_of_gamma(b, 0.9) >= 0
    assert eq.m_of_gamma(b, 1 - 1e-6) > eq.m_of_gamma(b, 0.9)


def test_m_of_gamma_monotone_and_diverging():
    b = eq.group_bound(Network.complete(3), (0, 0, 0), connections())
    start = eq.gamma_hat(b)
    grid = [start + (1 - start) * x for x in (0.01, 0.2, 0.5, 0.9, 0.99, 0.999)]
    ms = [eq.m_of_gamma(b, g) for g in grid]
    assert all(m >= 0 for m in ms)
    assert all(a <= b_ for a, b_ in zip(ms, ms[1:]))
    assert ms[-1] > 100 * max(ms[0], 1)


def test_m_of_gamma_below_cutoff_is_refused():
    b = eq.group_bound(Network.complete(3), (0, 0, 0), connections())
    with pytest.raises(ArgumentError):
        eq.m_of_gamma(b, eq.gamma_hat(b) / 2)


# -- spatial discount comparative statics --------------------------------------------------------


def test_equal_deltas_equal_thresholds():
    params = PayoffParams({0: 1.0}, 0.8, 0.5)
    res = eq.gamma_of_delta([0.3], Network.complete(3), (0, 0, 0), params, 20)
    again = eq.gamma_of_delta([0.3], Network.complete(3), (0, 0, 0), params, 20)
    assert res[0.3].gamma_bar == again[0.3].gamma_bar


def test_missing_threshold_reported_per_point():
    params = PayoffParams({0: 1.0}, 1.5, 0.5)
    res = eq.gamma_of_delta([0.1, 0.2], Network.complete(3), (0, 0, 0), params, 5)
    assert {r.outcome for r in res.values()} == {"never"}
    assert not eq.strictly_decreasing(res)


def test_cheap_links_need_no_patience():
    # every link is worth more than it costs, so no threshold exists at any delta
    params = PayoffParams({0: 1.0}, 0.2, 0.5)
    res = eq.gamma_of_delta([0.1, 0.2, 0.3], Network.complete(3), (0, 0, 0), params, 20)
    assert {r.outcome for r in res.values()} == {"always"}


def test_cycle_threshold_rises_with_delta():
    # cutting a triangle link costs 1 - delta in benefit, which shrinks as delta grows
    params = PayoffParams({0: 1.0}, 0.8, 0.5)
    res = eq.gamma_of_delta([0.3, 0.4, 0.5], Network.complete(3), (0, 0, 0), params, 20)
    bars = [res[d].gamma_bar for d in (0.3, 0.4, 0.5)]
    assert bars[0] < bars[1] < bars[2]


@pytest.mark.xfail(strict=True, reason="no interior threshold exists for these parameters")
def test_three_agent_clique_threshold_falls_with_delta():
    params = PayoffParams({0: 1.0}, 0.2, 0.5)
    res = eq.gamma_of_delta([0.1, 0.2, 0.3], Network.complete(3), (0, 0, 0), params, 20)
    assert eq.strictly_decreasing(res)
