"""Equilibrium certification for the target-network strategy on small populations.

The joint process of network and monitor phase is a finite Markov chain once
the strategy profile is fixed. With at most four agents it is small enough to
solve exactly, so one-shot deviation gains can be computed without bounds.
The closed-form bounds used to prove existence for arbitrary populations are
implemented alongside, so they can be checked against the exact values.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix, identity
from scipy.sparse.linalg import spsolve

from .efficiency import Enumeration
from .errors import ArgumentError, NumericalError, SizeLimitError
from .graph import Network, all_pairs
from .payoff import ConnectionsModel, PayoffParams, TypeVector

CHAIN_LIMIT = 4
GAIN_TOL = 1e-9


def _types(types):
    return types.types if isinstance(types, TypeVector) else tuple(types)


def _model(model):
    return ConnectionsModel(model) if isinstance(model, PayoffParams) else model


def _bits(mask):
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


# -- chain ---------------------------------------------------------------------------


@dataclass
class ChainModel:
    """States are ``(network mask, phase)`` with phase 0 for cooperation and
    ``1..K`` for punishment with ``phase - 1`` signals already elapsed."""

    n: int
    K: int
    target: Network
    payoffs: np.ndarray  # [state, agent]
    succ: np.ndarray  # [state, pair] prescribed successor
    kernel: csr_matrix
    dev_state: np.ndarray = None  # flattened deviation successors
    dev_group: np.ndarray = None  # (state, pair, agent) id per candidate
    groups: tuple = ()  # decoded group ids

    @property
    def n_states(self):
        return self.payoffs.shape[0]

    @property
    def n_pairs(self):
        return self.succ.shape[1]

    def index(self, mask, phase):
        return mask * (self.K + 1) + phase

    def decode(self, s):
        return Network.from_mask(self.n, s // (self.K + 1)), s % (self.K + 1)


def _next_phase(m, ph, p, g2, tmask, K):
    if ph == 0:
        dev = (g2 & ~tmask) or ((tmask & m) & ~g2) or ((tmask >> p & 1) and not g2 >> p & 1)
        return 1 if dev else 0
    return 0 if ph == K else ph + 1


def _outcome(n, m, ph, p, act, override=None):
    """Network after one period when agents act by ``act(i, j, phase)``."""
    pairs = all_pairs(n)
    g2 = 0
    for k in _bits(m | (1 << p)):
        i, j = pairs[k]
        ai = override[(i, j)] if override and (i, j) in override else act(i, j, ph)
        aj = override[(j, i)] if override and (j, i) in override else act(j, i, ph)
        if ai and aj:
            g2 |= 1 << k
    return g2


def sc_rule(target):
    tmask = target.mask
    index = {p: k for k, p in enumerate(all_pairs(target.n))}

    def act(i, j, ph):
        return int(ph == 0 and tmask >> index[(min(i, j), max(i, j))] & 1)

    return act


def zero_rule(i, j, ph):
    return 0


def build_chain(target, types, model, K, rule=None, deviations=True):
    """Transition structure of the strategy profile ``rule`` (default: target strategy).

    With ``deviations`` the chain also records, for every state, selected pair
    and agent, the successors the agent can reach by changing her own actions
    while everyone else follows the rule.
    """
    n = target.n
    if n > CHAIN_LIMIT:
        raise SizeLimitError("exact equilibrium chain", n, CHAIN_LIMIT)
    if K < 1:
        raise ArgumentError("K must be positive")
    model = _model(model)
    types = _types(types)
    act = sc_rule(target) if rule is None else rule
    pairs = all_pairs(n)
    n_masks = 1 << len(pairs)
    n_states = n_masks * (K + 1)
    tmask = target.mask
    pay = Enumeration(types, model, limit=CHAIN_LIMIT).payoffs
    payoffs = np.repeat(np.array(pay, dtype=float), K + 1, axis=0)
    succ = np.empty((n_states, len(pairs)), dtype=np.int64)
    dev_state, dev_group, groups = [], [], []
    for m in range(n_masks):
        for ph in range(K + 1):
            s = m * (K + 1) + ph
            for p in range(len(pairs)):
                g2 = _outcome(n, m, ph, p, act)
                succ[s, p] = g2 * (K + 1) + _next_phase(m, ph, p, g2, tmask, K)
                if not deviations:
                    continue
                rel = [pairs[k] for k in _bits(m | (1 << p))]
                for i in range(n):
                    mine = [(a, b) for a, b in rel if i in (a, b)]
                    # only links whose partner consents can be changed by i
                    open_ = [(a, b) for a, b in mine if act(b if a == i else a, i, ph)]
                    if not open_:
                        continue
                    gid = len(groups)
                    groups.append((s, p, i))
                    for bits in itertools.product((0, 1), repeat=len(open_)):
                        over = {}
                        for (a, b), x in zip(open_, bits):
                            over[(i, b if a == i else a)] = x
                        h = _outcome(n, m, ph, p, act, over)
                        dev_state.append(h * (K + 1) + _next_phase(m, ph, p, h, tmask, K))
                        dev_group.append(gid)
    rows = np.repeat(np.arange(n_states), len(pairs))
    kernel = csr_matrix(
        (np.full(rows.size, 1.0 / len(pairs)), (rows, succ.ravel())), shape=(n_states, n_states)
    )
    kernel.sum_duplicates()
    return ChainModel(
        n, K, target, payoffs, succ, kernel,
        np.array(dev_state, dtype=np.int64), np.array(dev_group, dtype=np.int64), tuple(groups),
    )


def exact_values(chain, gamma, method="iterate", tol=1e-10, max_iter=None):
    """Discounted values ``V = u + gamma P V`` per state and agent."""
    if not 0 <= gamma < 1:
        raise ArgumentError(f"gamma must lie in [0,1), got {gamma}")
    u = chain.payoffs
    P = chain.kernel
    if gamma == 0:
        return u.copy()
    if method == "direct":
        A = (identity(chain.n_states, format="csc") - gamma * P).tocsc()
        V = spsolve(A, u)
        V = V.reshape(u.shape)
    else:
        cap = int(1e7 / (1 - gamma)) if max_iter is None else max_iter
        V = u / (1 - gamma) if np.all(u == u[0]) else u.copy()
        for _ in range(cap):
            nxt = u + gamma * (P @ V)
            if np.max(np.abs(nxt - V)) < tol * (1 - gamma):
                V = nxt
                break
            V = nxt
        else:
            raise NumericalError(f"value iteration did not converge in {cap} steps")
    resid = np.max(np.abs(u + gamma * (P @ V) - V))
    if resid > max(tol, 1e-9 * max(1.0, float(np.max(np.abs(V))))):
        raise NumericalError(f"value residual {resid:.3e} above tolerance")
    return V


@dataclass(frozen=True)
class DeviationReport:
    gain: float
    state: tuple | None  # (network, phase)
    agent: int | None
    gamma: float
    K: int

    @property
    def equilibrium(self):
        return self.gain <= GAIN_TOL


def deviation_gain(chain, gamma, values=None, tol=GAIN_TOL):
    """Largest expected one-period deviation gain over states and agents."""
    V = exact_values(chain, gamma, method="direct") if values is None else values
    if not chain.groups:
        return DeviationReport(0.0, None, None, gamma, chain.K)
    groups = np.array(chain.groups)
    agent_of = groups[:, 2]
    cand = V[chain.dev_state, agent_of[chain.dev_group]]
    best = np.full(len(groups), -np.inf)
    np.maximum.at(best, chain.dev_group, cand)
    presc = V[chain.succ[groups[:, 0], groups[:, 1]], agent_of]
    excess = np.maximum(best - presc, 0.0)
    # expected over the selected pair
    per = {}
    for (s, p, i), x in zip(chain.groups, excess):
        per[(s, i)] = per.get((s, i), 0.0) + x
    (s, i), total = max(per.items(), key=lambda kv: kv[1])
    gain = gamma * total / chain.n_pairs
    if gain <= tol:
        return DeviationReport(0.0 if gain < tol else gain, None, None, gamma, chain.K)
    return DeviationReport(float(gain), chain.decode(s), int(i), gamma, chain.K)


def one_shot_deviation_gain(target, types, model, gamma, K, rule=None):
    chain = build_chain(target, types, model, K, rule=rule)
    return deviation_gain(chain, gamma)


# -- thresholds -----------------------------------------------------------------------


@dataclass(frozen=True)
class ThresholdResult:
    outcome: str  # "interior", "always" or "never"
    gamma_bar: float | None
    bracket: tuple | None  # (gamma with gain > 0, gamma with gain <= 0)
    gains: tuple | None

    def to_json(self):
        return {
            "outcome": self.outcome,
            "gamma_bar": self.gamma_bar,
            "bracket": list(self.bracket) if self.bracket else None,
            "gains": list(self.gains) if self.gains else None,
        }


def threshold_gamma(target, types, model, K, lo=1e-3, hi=1 - 1e-6, tol=1e-4, chain=None):
    """Smallest discount factor (to ``tol``) at which the target strategy has no profitable deviation."""
    chain = build_chain(target, types, model, K) if chain is None else chain

    def ok(g):
        return deviation_gain(chain, g).equilibrium

    if ok(lo):
        return ThresholdResult("always", lo, None, None)
    if not ok(hi):
        return ThresholdResult("never", None, None, None)
    a, b = lo, hi
    while b - a > tol / 2:
        mid = (a + b) / 2
        if ok(mid):
            b = mid
        else:
            a = mid
    gains = (deviation_gain(chain, a).gain, deviation_gain(chain, b).gain)
    return ThresholdResult("interior", b, (a, b), gains)


def min_K(target, types, model, gamma, K_max=200):
    """Smallest punishment length that makes the target strategy an equilibrium at ``gamma``."""
    for K in range(1, K_max + 1):
        if one_shot_deviation_gain(target, types, model, gamma, K).equilibrium:
            return K
    return None


# -- lower bounds on continuation values ------------------------------------------


def miss_probability(N, t):
    """Union bound on some pair never being selected in ``t`` periods."""
    P = N * (N - 1) / 2
    return P * (1 - 1 / P) ** t


def t_star(N):
    t = 0
    while miss_probability(N, t) >= 1:
        t += 1
    return max(t, 1)


def _geom(a, r, terms=None):
    """``a + a r + a r^2 + ...`` with ``terms`` terms (infinite when None)."""
    if terms is not None and terms <= 0:
        return 0.0
    if terms is None:
        return a / (1 - r)
    return a * (1 - r**terms) / (1 - r)


def lemma1_lower_bound(gamma, M, W, u_target, N):
    """Lower bound on the discounted payoff over ``M`` cooperation periods (``None`` = forever).

    Periods before ``t*`` count at the worst payoff ``W``; afterwards the target
    holds except with the union-bound probability.
    """
    if not 0 < gamma < 1:
        raise ArgumentError(f"gamma must lie in (0,1), got {gamma}")
    ts = t_star(N)
    P = N * (N - 1) / 2
    r = 1 - 1 / P
    head = min(ts - 1, M) if M is not None else ts - 1
    total = W * _geom(1.0, gamma, head)
    tail = None if M is None else M - ts + 1
    if tail is not None and tail <= 0:
        return total
    g0 = gamma ** (ts - 1)
    total += u_target * _geom(g0, gamma, tail)
    total += (W - u_target) * _geom(g0 * P * r**ts, gamma * r, tail)
    return total


@dataclass(frozen=True)
class BoundComponents:
    v_bar: float
    W: float
    V: float
    u_min: float
    A: float
    t_star: int
    N: int

    def mu_lower(self, gamma, M=None):
        return lemma1_lower_bound(gamma, M, self.W, self.u_min, self.N)

    def slack(self, gamma, K):
        """Bound on the deviation gain; negative means no profitable deviation."""
        return self.v_bar + gamma ** (1 + K) * self.A - gamma * self.mu_lower(gamma, K)

    def certifies(self, gamma, K):
        return self.slack(gamma, K) < 0


def bound_components(target, types, model):
    types = _types(types)
    model = _model(model)
    n = target.n
    enum = Enumeration(types, model)
    pay = np.array(enum.payoffs, dtype=float)
    pairs = all_pairs(n)
    v_bar = 0.0
    for m in range(enum.n_networks):
        for i in range(n):
            mine = [k for k in _bits(m) if i in pairs[k]]
            for r in range(1, len(mine) + 1):
                for sub in itertools.combinations(mine, r):
                    h = m & ~sum(1 << k for k in sub)
                    v_bar = max(v_bar, abs(pay[m, i] - pay[h, i]))
    W = float(pay.min())
    V = float(pay.max())
    u_min = float(pay[target.mask].min())
    ts = t_star(n)
    P = n * (n - 1) / 2
    r = 1 - 1 / P
    A = (V - W) * ((ts - 1) + P * r**ts / (1 - r))
    return BoundComponents(v_bar, W, V, u_min, max(A, 1e-300), ts, n)


# -- group deviations --------------------------------------------------------------------


@dataclass(frozen=True)
class GroupDeviationBound:
    V_max: float
    F: float
    D: float
    E: float

    def expression(self, gamma, K_prime):
        return self.D + self.E + K_prime * self.V_max + gamma**K_prime * self.F / (1 - gamma)


def _tail_sum(N, start):
    """Sum over t >= start of min(1, union bound at t)."""
    total, t = 0.0, start
    while True:
        p = miss_probability(N, t)
        if p < 1:
            P = N * (N - 1) / 2
            return total + _geom(p, 1 - 1 / P)
        total += 1
        t += 1


def _worst_gain(pay_row_hat, pay_row_g, members):
    return min(pay_row_hat[i] - pay_row_g[i] for i in members)


def group_bound(g, types, model):
    """Constants of the group-deviation bound for target ``g``."""
    types = _types(types)
    n = g.n
    if n > CHAIN_LIMIT:
        raise SizeLimitError("group-deviation bound", n, CHAIN_LIMIT)
    enum = Enumeration(types, _model(model))
    pay = np.array(enum.payoffs, dtype=float)
    base = pay[g.mask]
    F = -math.inf
    for group, hat in proper_group_networks(n):
        F = max(F, _worst_gain(pay[hat.mask], base, group))
    V = float(pay.max())
    W = float(pay.min())
    D = (V - W) * _tail_sum(n, 1)
    E = (float(base.max()) - W) * _tail_sum(n, 1)
    return GroupDeviationBound(V, float(F), D, E)


def proper_group_networks(n):
    """Every nonempty proper subgroup with every network among its members."""
    for size in range(1, n):
        for group in itertools.combinations(range(n), size):
            inner = [p for p in all_pairs(n) if p[0] in group and p[1] in group]
            for r in range(len(inner) + 1):
                for links in itertools.combinations(inner, r):
                    yield group, Network(n, links)


def m_of_gamma(bound, gamma):
    """Largest remaining punishment ``K'`` for which the group-deviation bound stays negative."""
    if bound.F >= 0:
        raise ArgumentError(f"F must be negative (got {bound.F}); the target is not strictly core-stable")
    if not 0 < gamma < 1:
        raise ArgumentError(f"gamma must lie in (0,1), got {gamma}")
    if not bound.expression(gamma, 0) < 0:
        raise ArgumentError(f"gamma={gamma} is below the cutoff where K'=0 satisfies the bound")
    hi = 1
    while bound.expression(gamma, hi) < 0:
        hi *= 2
    lo = hi // 2
    # expression increases in K'; find the last K' below zero
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if bound.expression(gamma, mid) < 0:
            lo = mid
        else:
            hi = mid
    return lo


def gamma_hat(bound):
    """Discount factor above which ``K'=0`` satisfies the bound."""
    return max(0.0, 1 + bound.F / (bound.D + bound.E)) if bound.D + bound.E > 0 else 0.0


@dataclass(frozen=True)
class GroupDeviationResult:
    profitable: bool
    worst_member: int
    worst_gain: float
    bound_says_unprofitable: bool
    bound_value: float


def group_deviation_check(g, types, model, group, g_hat, K_prime, gamma, K):
    """Exact value comparison for a coalition committed to ``g_hat``.

    Coalition members consent to exactly the links of ``g_hat``; everyone else
    follows the target strategy. The process starts at the cooperation phase
    on ``g`` when ``K_prime`` is 0, otherwise on the empty network with
    ``K_prime`` punishment signals left.
    """
    n = g.n
    group = tuple(sorted(set(group)))
    if not group or len(group) >= n:
        raise ArgumentError("the coalition must be a nonempty proper subgroup")
    if any(not (a in group and b in group) for a, b in g_hat.links):
        raise ArgumentError("the coalition network has links leaving the coalition")
    if not 0 <= K_prime <= K:
        raise ArgumentError(f"remaining punishment must lie in [0, K], got {K_prime}")
    sc = sc_rule(g)
    hat_mask = g_hat.mask
    index = {p: k for k, p in enumerate(all_pairs(n))}

    def committed(i, j, ph):
        if i in group:
            return int(hat_mask >> index[(min(i, j), max(i, j))] & 1)
        return sc(i, j, ph)

    comply = build_chain(g, types, model, K, deviations=False)
    deviate = build_chain(g, types, model, K, rule=committed, deviations=False)
    start = comply.index(g.mask, 0) if K_prime == 0 else comply.index(0, K - K_prime + 1)
    v_c = exact_values(comply, gamma, method="direct")[start]
    v_d = exact_values(deviate, gamma, method="direct")[start]
    diffs = {i: v_d[i] - v_c[i] for i in group}
    worst = min(diffs, key=diffs.get)
    profitable = diffs[worst] >= -GAIN_TOL and max(diffs.values()) > GAIN_TOL
    pay = np.array(Enumeration(_types(types), _model(model)).payoffs, dtype=float)
    bound = group_bound(g, types, model)
    F = _worst_gain(pay[hat_mask], pay[g.mask], group)
    specific = GroupDeviationBound(bound.V_max, float(F), bound.D, bound.E)
    value = specific.expression(gamma, K_prime)
    return GroupDeviationResult(bool(profitable), worst, float(diffs[worst]), value < 0, float(value))


# -- comparative statics in the spatial discount -------------------------------------------


def gamma_of_delta(deltas, target, types, params, K, tol=1e-4):
    """Threshold discount factor of the target strategy at each spatial discount."""
    out = {}
    for d in deltas:
        model = ConnectionsModel(params.with_delta(d))
        out[d] = threshold_gamma(target, types, model, K, tol=tol)
    return out


def strictly_decreasing(thresholds):
    """Whether every grid point has an interior threshold and they fall as delta rises."""
    items = sorted(thresholds.items())
    if any(r.outcome != "interior" for _, r in items):
        return False
    gs = [r.gamma_bar for _, r in items]
    return all(a > b for a, b in zip(gs, gs[1:]))
