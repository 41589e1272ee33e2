"""Formation under incomplete information about types.

Agents learn a partner's type by linking to her. The monitor tracks an
experimentation phase (``X0``; ``X1`` is kept for completeness but nothing
enters it), a transition phase ``T`` that holds a reward network for ``J``
periods, and an exploitation phase that behaves like the complete-information
monitor with cooperation ``E_C`` and punishment ``E_P``. Agents caught failing
a required link, or linking outside the group, before exploitation become
solitary and stay out for good.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from .efficiency import Enumeration
from .errors import ArgumentError, ConfigError, SizeLimitError
from .graph import Network, all_pairs
from .payoff import ConnectionsModel, PayoffParams, TypeVector

X0, X1, T, E_C, E_P = "X0", "X1", "T", "E_C", "E_P"
PHASES = (X0, X1, T, E_C, E_P)
EXHAUSTIVE_LIMIT = 8


# -- beliefs ------------------------------------------------------------------------


@dataclass(frozen=True)
class Beliefs:
    """What each agent knows about the others' types.

    ``known`` holds the unordered pairs that have ever been linked; both ends of
    such a pair know each other's type. Everyone knows her own type. Anything
    else is held at the common prior ``prior``.
    """

    types: tuple
    prior: dict
    known: frozenset = frozenset()

    def knows(self, i, j):
        return i == j or (min(i, j), max(i, j)) in self.known

    def belief(self, i, j):
        """Agent ``i``'s distribution over ``j``'s type."""
        if self.knows(i, j):
            return {self.types[j]: 1}
        return dict(self.prior)

    def complete_within(self, agents):
        return all(self.knows(i, j) for i, j in itertools.combinations(sorted(agents), 2))


def initial_beliefs(types, prior):
    types = types.types if isinstance(types, TypeVector) else tuple(types)
    total = sum(prior.values())
    if not abs(total - 1) < 1e-12:
        raise ConfigError(f"prior must sum to 1, got {total}")
    return Beliefs(types, dict(prior))


def belief_update(beliefs, event=None):
    """Apply a link-formation event ``("link", i, j)``; any other event changes nothing.

    Under the strategies implemented here signals carry no information about
    types, so Bayes' rule leaves the prior where it was.
    """
    if event is None or event[0] != "link":
        return beliefs
    _, i, j = event
    pair = (min(i, j), max(i, j))
    if pair in beliefs.known:
        return beliefs
    return Beliefs(beliefs.types, beliefs.prior, beliefs.known | {pair})


def belief_observer(beliefs, g_prev, phi, g_now):
    """Engine hook: reveal types across every link present this period."""
    if beliefs is None:
        return None
    new = (g_now.links | g_prev.links) - beliefs.known
    if not new:
        return beliefs
    return Beliefs(beliefs.types, beliefs.prior, beliefs.known | new)


# -- plans ------------------------------------------------------------------------------


def _restrict_ok(g, agents):
    return all(i in agents and j in agents for i, j in g.links)


@dataclass(frozen=True)
class AdmissiblePlan:
    """Long-run network ``r`` and reward network ``r_prime`` for every group and type vector.

    Both are callables ``(n, agents, types_of_agents) -> Network`` where the
    returned network has links only among ``agents``.
    """

    r: Callable
    r_prime: Callable
    name: str = "plan"

    def target(self, n, agents, types):
        agents = tuple(sorted(agents))
        g = self.r(n, agents, tuple(types[i] for i in agents))
        if not _restrict_ok(g, agents):
            raise ConfigError(f"{self.name}: r returned links outside the group")
        return g

    def reward(self, n, agents, types):
        agents = tuple(sorted(agents))
        g = self.r_prime(n, agents, tuple(types[i] for i in agents))
        if not _restrict_ok(g, agents):
            raise ConfigError(f"{self.name}: r_prime returned links outside the group")
        return g


def star_or_wheel_plan(alpha="alpha"):
    """Star around the lowest-index ``alpha`` agent when there are two or more of them, else a cycle."""

    def r(n, agents, group_types):
        alphas = [a for a, t in zip(agents, group_types) if t == alpha]
        if len(alphas) >= 2:
            return Network.star(n, alphas[0], [a for a in agents if a != alphas[0]])
        return Network.cycle(n, agents)

    return AdmissiblePlan(r, r, "star-or-wheel")


def is_partial_equilibrium(g, agents, types, params_or_model):
    """Every agent in ``agents`` earns a positive payoff and gains nothing by cutting one link."""
    model = _model(params_or_model)
    types = _types(types)
    for i in agents:
        u = model.payoff(types, g, i)
        if not u > 0:
            return False
        for j in g.neighbors(i):
            if model.payoff(types, g.without_link(i, j), i) > u:
                return False
    return True


@dataclass(frozen=True)
class AdmissibilityReport:
    admissible: bool
    counterexample: tuple | None = None
    reason: str = ""
    checked: int = 0

    def __bool__(self):
        return self.admissible


def check_plan_at(plan, n, agents, group_types, params_or_model, filler=None):
    """Check both admissibility conditions for one type vector of the group."""
    model = _model(params_or_model)
    agents = tuple(sorted(agents))
    filler = group_types[0] if filler is None else filler
    full = [filler] * n
    for a, t in zip(agents, group_types):
        full[a] = t
    full = tuple(full)
    g = plan.target(n, agents, full)
    linked = g.non_singletons()
    for i in sorted(linked):
        if not model.payoff(full, g, i) > 0:
            return f"agent {i} has non-positive payoff in r"
    singles = [a for a in agents if a not in linked]
    if singles:
        h = plan.reward(n, agents, full)
        if not is_partial_equilibrium(h, singles, full, model):
            return f"r_prime is not a partial equilibrium network for {singles}"
    return None


def check_admissible(plan, agents, type_set, params_or_model, n=None, samples=None, seed=0):
    """Verify ``plan`` for every type vector of ``agents`` over ``type_set``.

    With more than eight agents the check is sampled when ``samples`` is given
    and refused otherwise.
    """
    agents = tuple(sorted(agents))
    n = (max(agents) + 1 if agents else 0) if n is None else n
    type_set = sorted(type_set, key=repr)
    if not agents:
        return AdmissibilityReport(True)
    if len(agents) > EXHAUSTIVE_LIMIT:
        if samples is None:
            raise SizeLimitError("exhaustive admissibility check", len(agents), EXHAUSTIVE_LIMIT)
        rng = np.random.default_rng(seed)
        vectors = (tuple(type_set[k] for k in rng.integers(len(type_set), size=len(agents)))
                   for _ in range(samples))
    else:
        vectors = itertools.product(type_set, repeat=len(agents))
    count = 0
    for vec in vectors:
        count += 1
        why = check_plan_at(plan, n, agents, vec, params_or_model)
        if why:
            return AdmissibilityReport(False, vec, why, count)
    return AdmissibilityReport(True, None, "", count)


# -- y_ic monitor ---------------------------------------------------------------------


@dataclass(frozen=True)
class ICState:
    phase: str
    nonsolitary: frozenset
    counter: int = 0
    revealed: frozenset = frozenset()

    def __post_init__(self):
        if self.phase not in PHASES:
            raise ValueError(f"unknown phase {self.phase!r}")

    @property
    def label(self):
        return self.phase


def _failed(required, group, g_prev, phi, actions):
    """Agents in ``group`` that refused a required link they could have formed or kept."""
    out = set()
    for (i, j), a in actions.items():
        if a == 0 and i in group and j in group and required.has_link(i, j):
            possible = g_prev.has_link(i, j) or tuple(sorted((i, j))) == tuple(sorted(phi))
            if possible:
                out.add(i)
    return out


def _outside(group, g_now):
    """Agents in ``group`` holding a link to someone outside it."""
    out = set()
    for i, j in g_now.links:
        if (i in group) != (j in group):
            out.add(i if i in group else j)
    return out


def _complete(group, revealed):
    return all(p in revealed for p in itertools.combinations(sorted(group), 2))


def _within(g, group):
    return frozenset(l for l in g.links if l[0] in group or l[1] in group)


@dataclass(frozen=True)
class ICMonitor:
    plan: AdmissiblePlan
    types: tuple
    J: int
    K: int

    def initial(self):
        return ICState(X0, frozenset(range(len(self.types))))

    def update(self, prev, g_prev, phi, g_now, actions):
        return monitor_update_ic(prev, self.plan, self.types, self.J, self.K, g_prev, phi, g_now, actions)


def monitor_update_ic(prev, plan, types, J, K, g_prev, phi, g_now, actions):
    n = g_now.n
    revealed = prev.revealed | g_prev.links | g_now.links
    group = prev.nonsolitary
    if prev.phase == X0:
        rest = group - _failed(Network.complete(n, group), group, g_prev, phi, actions)
        phase = T if _complete(rest, revealed) else X0
        return ICState(phase, frozenset(rest), 0, revealed)
    if prev.phase == X1:
        reward = plan.reward(n, group, types)
        rest = group - (_failed(reward, group, g_prev, phi, actions) | _outside(group, g_now))
        return ICState(T, frozenset(rest), 0, revealed)
    if prev.phase == T:
        reward = plan.reward(n, group, types)
        held = prev.counter + 1 if _within(g_now, group) == reward.links else 0
        if held >= J:
            return ICState(E_C, group, 0, revealed)
        bad = _failed(reward, group, g_prev, phi, actions) | _outside(group, g_now)
        if bad:
            return ICState(T, frozenset(group - bad), 0, revealed)
        return ICState(T, group, held, revealed)
    if prev.phase == E_C:
        target = plan.target(n, group, types)
        bad = _failed(target, group, g_prev, phi, actions) | _outside(group, g_now)
        return ICState(E_P if bad else E_C, group, 0, revealed)
    # punishment lasts K signals
    if prev.counter >= K - 1:
        return ICState(E_C, group, 0, revealed)
    return ICState(E_P, group, prev.counter + 1, revealed)


# -- strategy ---------------------------------------------------------------------------


def strategy_sic(plan, signal, ctx, pair, types, admissible):
    """Action of ``pair[0]`` toward ``pair[1]`` under the incomplete-information strategy.

    ``admissible`` is a predicate on the non-solitary set; when it fails every
    action is 0.
    """
    i, j = pair
    group = signal.nonsolitary
    if not ctx.active or i not in group or j not in group or not admissible(group):
        return 0
    n = len(types)
    if signal.phase == X0:
        return 1
    if signal.phase in (X1, T):
        return int(plan.reward(n, group, types).has_link(i, j))
    if signal.phase == E_C:
        return int(plan.target(n, group, types).has_link(i, j))
    return 0


class SicProfile:
    """Everyone follows the incomplete-information strategy for ``plan``."""

    def __init__(self, plan, types, params_or_model, type_set=None):
        self.plan = plan
        self.types = _types(types)
        self.model = _model(params_or_model)
        self.type_set = sorted(set(self.types) if type_set is None else type_set, key=repr)
        self._cache = {}

    def admissible(self, group):
        if group not in self._cache:
            self._cache[group] = bool(
                check_admissible(self.plan, group, self.type_set, self.model, n=len(self.types))
            )
        return self._cache[group]

    def action(self, i, j, ctx, state):
        return strategy_sic(self.plan, state.monitor, ctx, (i, j), self.types, self.admissible)


def plan_target_of(types):
    """Engine hook giving the long-run network for the current non-solitary set."""
    types = _types(types)

    def target_of(plan, state):
        return plan.target(len(types), state.monitor.nonsolitary, types)

    return target_of


_GRAMMAR = re.compile(r"(X0 )*(T )*(E_C )*((E_P ){K}(E_C )*)*")


def phases_match_grammar(phases, K):
    """True when ``phases`` reads X0* T* E_C* followed by blocks of K E_P's and E_C's.

    A trailing incomplete punishment block is allowed, since a run can stop mid-way.
    """
    text = "".join(p + " " for p in phases)
    pattern = _GRAMMAR.pattern.replace("{K}", "{%d}" % K)
    full = re.fullmatch(pattern + r"(E_P ){0,%d}" % max(K - 1, 0), text)
    return full is not None


def run_ic(config, types, params, prior=None, injections=(), type_set=None):
    """Simulate the incomplete-information strategy with ``config.target`` as the plan."""
    from .game import run

    types = _types(types)
    plan = config.target
    profile = SicProfile(plan, types, params, type_set)
    monitor = ICMonitor(plan, types, config.J, config.K)
    if prior is None:
        kinds = sorted(set(types), key=repr)
        prior = {t: 1 / len(kinds) for t in kinds}
    return run(
        config,
        profile=profile,
        monitor=monitor,
        injections=injections,
        observer=belief_observer,
        initial_beliefs=initial_beliefs(types, prior),
        target_of=plan_target_of(types),
    )


# -- criterion sets for patient agents ---------------------------------------------------


def positive_set(types, params):
    """Networks in which every agent earns a strictly positive payoff (masks)."""
    enum = Enumeration(types, ConnectionsModel(params), limit=5)
    return frozenset(m for m, row in enumerate(enum.payoffs) if all(x > 0 for x in row))


def _group_admissible_for(types, params):
    """Whether some network works as ``r`` for this type vector of the whole group."""
    enum = Enumeration(types, ConnectionsModel(params), limit=5)
    pay = enum.payoffs
    n = enum.n
    pairs = all_pairs(n)
    happy = []
    for m, row in enumerate(pay):
        ok = 0
        for i in range(n):
            if not row[i] > 0:
                continue
            cut = [m & ~(1 << b) for b, p in enumerate(pairs) if m >> b & 1 and i in p]
            if all(pay[c][i] <= row[i] for c in cut):
                ok |= 1 << i
        happy.append(ok)
    reachable = set(happy)
    for m, row in enumerate(pay):
        nonsingle = 0
        for b, (i, j) in enumerate(pairs):
            if m >> b & 1:
                nonsingle |= (1 << i) | (1 << j)
        if not all(row[i] > 0 for i in range(n) if nonsingle >> i & 1):
            continue
        singles = ((1 << n) - 1) & ~nonsingle
        if singles == 0 or any(h & singles == singles for h in reachable):
            return True
    return False


def group_admissible(n, type_set, params):
    """Whether every type vector over ``type_set`` admits a valid long-run network."""
    type_set = sorted(type_set, key=repr)
    if n > 5:
        raise SizeLimitError("group admissibility", n, 5)
    return all(_group_admissible_for(vec, params) for vec in itertools.product(type_set, repeat=n))


def criterion_sets(types, params, type_set=None):
    """Patient-agent criterion sets ``(G_c, G_ic)`` as frozensets of networks.

    ``G_c`` holds the networks with strictly positive payoffs for everyone.
    ``G_ic`` keeps those only when the whole group is admissible, since an
    admissible function may then send the realised type vector to any of them.
    """
    types = _types(types)
    n = len(types)
    type_set = set(types) | set(params.f) if type_set is None else set(type_set)
    gc = frozenset(Network.from_mask(n, m) for m in positive_set(types, params))
    gic = gc if group_admissible(n, type_set, params) else frozenset()
    return gc, gic


def _model(x):
    return ConnectionsModel(x) if isinstance(x, PayoffParams) else x


def _types(types):
    return types.types if isinstance(types, TypeVector) else tuple(types)
