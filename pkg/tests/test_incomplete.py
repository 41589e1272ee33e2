from fractions import Fraction as F

import numpy as np
import pytest

from netform.errors import ConfigError, SizeLimitError
from netform.game import ActionContext, Injection, SimConfig
from netform.graph import Network
from netform.incomplete import (
    E_C,
    E_P,
    T,
    X0,
    AdmissiblePlan,
    Beliefs,
    ICState,
    belief_update,
    check_admissible,
    criterion_sets,
    initial_beliefs,
    is_partial_equilibrium,
    phases_match_grammar,
    run_ic,
    star_or_wheel_plan,
    strategy_sic,
)
from netform.payoff import PayoffParams

PARAMS = PayoffParams({"alpha": F(2), "beta": F(4, 5)}, F(1), F(1, 2))
PLAN = star_or_wheel_plan()


def complete_plan():
    def r(n, agents, group_types):
        return Network.complete(n, agents)

    return AdmissiblePlan(r, r, "complete")


def test_star_or_wheel_plan_is_admissible():
    report = check_admissible(PLAN, range(5), ["alpha", "beta"], PARAMS)
    assert report.admissible and report.checked == 32


def test_complete_plan_violates_admissibility():
    report = check_admissible(complete_plan(), range(5), ["alpha", "beta"], PARAMS)
    assert not report
    assert "non-positive" in report.reason


def test_plan_with_outside_links_is_rejected():
    bad = AdmissiblePlan(lambda n, a, t: Network.complete(n), lambda n, a, t: Network(n), "leaky")
    with pytest.raises(ConfigError):
        bad.target(4, (0, 1), ("alpha",) * 4)


def test_large_groups_need_sampling():
    with pytest.raises(SizeLimitError):
        check_admissible(PLAN, range(9), ["alpha", "beta"], PARAMS)
    # with nine agents a star centre pays for eight links, more than it gains
    report = check_admissible(PLAN, range(9), ["alpha", "beta"], PARAMS, samples=20)
    assert not report and report.checked <= 20


def test_partial_equilibrium():
    types = ("alpha",) * 3
    assert is_partial_equilibrium(Network.star(3, 0), [0, 1, 2], types, PARAMS)
    assert not is_partial_equilibrium(Network(3), [0], types, PARAMS)


def test_beliefs_learn_types_from_links():
    b = initial_beliefs(("alpha", "beta", "beta"), {"alpha": 0.5, "beta": 0.5})
    assert not b.knows(0, 1)
    b = belief_update(b, ("link", 0, 1))
    assert b.knows(0, 1) and b.knows(1, 0)
    assert b.belief(0, 1) == {"beta": 1.0}
    assert not b.complete_within({0, 1, 2})


def test_strategy_sic_phases():
    types = ("alpha", "alpha", "beta")
    group = frozenset(range(3))
    on = ActionContext(1, 0)
    yes = lambda g: True
    assert strategy_sic(PLAN, ICState(X0, group), on, (1, 2), types, yes) == 1
    # in exploitation only star links are kept
    assert strategy_sic(PLAN, ICState(E_C, group), on, (0, 1), types, yes) == 1
    assert strategy_sic(PLAN, ICState(E_C, group), on, (1, 2), types, yes) == 0
    assert strategy_sic(PLAN, ICState(E_P, group), on, (0, 1), types, yes) == 0
    assert strategy_sic(PLAN, ICState(X0, group), on, (0, 1), types, lambda g: False) == 0
    assert strategy_sic(PLAN, ICState(X0, frozenset({0, 1})), on, (0, 2), types, yes) == 0


@pytest.mark.parametrize("types", [("alpha", "beta", "alpha", "beta", "beta"), ("beta",) * 5,
                                   ("beta", "alpha", "beta", "beta", "beta")])
def test_reaches_plan_target(types):
    for seed in range(3):
        tr = run_ic(SimConfig(5, PLAN, K=3, J=4, seed=seed, horizon=600), types, PARAMS)
        phases = [r.signal for r in tr.records]
        assert phases_match_grammar(phases, 3)
        assert tr.converged
        assert tr.final_state.g == PLAN.target(5, range(5), types)


def test_deviation_in_exploitation_triggers_k_punishment_signals():
    types = ("alpha", "alpha", "beta", "beta", "beta")
    cfg = SimConfig(5, PLAN, K=3, J=4, seed=0, horizon=600)
    clean = run_ic(cfg, types, PARAMS)
    t0 = clean.convergence[0]
    tr = run_ic(cfg, types, PARAMS, injections=[Injection(t0 + 2, 0)])
    phases = [r.signal for r in tr.records]
    k = phases.index(E_P)
    assert phases[k:k + 3] == [E_P] * 3 and phases[k + 3] == E_C
    assert phases_match_grammar(phases, 3)


def test_grammar_rejects_bad_sequences():
    assert phases_match_grammar([X0, X0, T, E_C, E_P, E_P, E_C], 2)
    assert phases_match_grammar([X0, T, E_C, E_P], 2)  # run ends mid-punishment
    assert not phases_match_grammar([X0, T, E_C, E_P, E_C], 2)
    assert not phases_match_grammar([T, X0], 2)


def test_criterion_sets_nested():
    gc, gic = criterion_sets(("alpha", "beta", "beta"), PARAMS, {"alpha", "beta"})
    assert gic <= gc
    assert gc
