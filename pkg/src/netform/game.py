"""Stochastic network formation engine with public monitoring.

Each period one unordered pair is drawn uniformly at random. Both agents of
the pair may consent to a link, and every agent may sever any of her existing
links. A link survives the period only when both endpoints keep choosing 1.
A public monitor turns the formation history into a signal that the strategies
condition on.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace
from typing import Protocol

import numpy as np

from .errors import ConfigError, ConsistencyError
from .graph import Network, all_pairs

PHASE_C = "C"
PHASE_P = "P"


# -- configuration ------------------------------------------------------------


@dataclass(frozen=True)
class SimConfig:
    n: int
    target: object  # Network for the complete-information strategy, AdmissiblePlan otherwise
    gamma: float = 0.9
    K: int = 1
    J: int = 1
    epsilon: float = 0.0
    seed: int = 0
    initial_network: Network | None = None
    horizon: int = 1000

    def __post_init__(self):
        if self.n < 2:
            raise ConfigError(f"need at least two agents, got n={self.n}")
        if not 0 < self.gamma < 1:
            raise ConfigError(f"gamma must lie in (0,1), got {self.gamma}")
        if not 0 <= self.epsilon < 1:
            raise ConfigError(f"epsilon must lie in [0,1), got {self.epsilon}")
        if self.K < 1 or self.J < 1:
            raise ConfigError("K and J must be positive")
        if self.horizon < 1:
            raise ConfigError("horizon must be positive")
        if self.initial_network is None:
            object.__setattr__(self, "initial_network", Network.empty(self.n))
        if self.initial_network.n != self.n:
            raise ConfigError("initial network size does not match n")
        if isinstance(self.target, Network) and self.target.n != self.n:
            raise ConfigError("target network size does not match n")


@dataclass(frozen=True)
class ActionContext:
    """``omega``: the pair was selected this period. ``zeta``: the pair is linked."""

    omega: int
    zeta: int

    @property
    def active(self):
        return bool(self.omega or self.zeta)


# -- pair selection -------------------------------------------------------------


def select_pair(rng, n):
    """Uniformly random unordered pair of distinct agents."""
    if n < 2:
        raise ConfigError(f"pair selection needs n >= 2, got {n}")
    pairs = all_pairs(n)
    return pairs[int(rng.integers(len(pairs)))]


# -- y_{g,K} monitor and the strategy built on it ---------------------------------


@dataclass(frozen=True)
class CPState:
    phase: str = PHASE_C
    elapsed: int = 0

    def __post_init__(self):
        if self.phase not in (PHASE_C, PHASE_P):
            raise ValueError(f"unknown phase {self.phase!r}")
        if self.phase == PHASE_C and self.elapsed != 0:
            raise ValueError("cooperation phase carries no counter")

    @property
    def label(self):
        return self.phase if self.phase == PHASE_C else f"P{self.elapsed}"


def monitor_update_cp(prev, detected_deviation, K):
    """One step of the cooperation/punishment automaton; punishment lasts ``K`` signals."""
    if prev.phase == PHASE_C:
        return CPState(PHASE_P, 0) if detected_deviation else prev
    if prev.elapsed >= K - 1:
        return CPState()
    return CPState(PHASE_P, prev.elapsed + 1)


def check_transition(g_prev, phi, g_now):
    extra = g_now.links - g_prev.links - {tuple(sorted(phi))}
    if extra:
        raise ConsistencyError(f"links {sorted(extra)} appeared without being selected")


def detect_deviation(target, g_prev, phi, g_now):
    """Whether the observable transition departs from the target-building rule."""
    check_transition(g_prev, phi, g_now)
    phi = tuple(sorted(phi))
    if g_now.links - target.links:
        return True
    if (target.links & g_prev.links) - g_now.links:
        return True
    return phi in target.links and phi not in g_now.links


def strategy_sc(target, signal, ctx, pair):
    """Consent to or keep ``pair`` only if it is a target link and the phase is C."""
    i, j = pair
    return int(target.has_link(i, j) and signal.phase == PHASE_C and ctx.active)


class Monitor(Protocol):
    def initial(self): ...

    def update(self, prev, g_prev, phi, g_now, actions): ...


@dataclass(frozen=True)
class CPMonitor:
    target: Network
    K: int

    def initial(self):
        return CPState()

    def update(self, prev, g_prev, phi, g_now, actions):
        dev = prev.phase == PHASE_C and detect_deviation(self.target, g_prev, phi, g_now)
        return monitor_update_cp(prev, dev, self.K)


class StrategyProfile(Protocol):
    def action(self, i, j, ctx, state): ...


@dataclass(frozen=True)
class ScProfile:
    """Every agent follows the complete-information target strategy."""

    target: Network

    def action(self, i, j, ctx, state):
        return strategy_sc(self.target, state.monitor, ctx, (i, j))


class ZeroProfile:
    """Nobody ever consents; every link is severed."""

    def action(self, i, j, ctx, state):
        return 0


# -- engine -----------------------------------------------------------------------------


@dataclass(frozen=True)
class SimState:
    t: int
    g: Network
    monitor: object
    beliefs: object = None


@dataclass(frozen=True)
class Injection:
    """Forced action vector for one agent in one period.

    ``actions`` maps partners to 0/1; the strings ``"sever"`` and ``"consent"``
    mean 0 or 1 toward every partner the agent can act on.
    """

    t: int
    agent: int
    actions: object = "sever"

    def choice(self, j, default):
        if self.actions == "sever":
            return 0
        if self.actions == "consent":
            return 1
        return int(self.actions.get(j, self.actions.get(str(j), default)))


def load_injections(text):
    raw = json.loads(text)
    out = []
    for k, item in enumerate(raw):
        if isinstance(item, dict):
            t, agent, act = item.get("t"), item.get("agent"), item.get("actions", "sever")
        elif isinstance(item, (list, tuple)) and len(item) == 3:
            t, agent, act = item
        else:
            raise ConfigError(f"injection {k}: expected [t, agent, override]")
        if not isinstance(t, int) or not isinstance(agent, int):
            raise ConfigError(f"injection {k}: t and agent must be integers")
        if not (act in ("sever", "consent") or isinstance(act, dict)):
            raise ConfigError(f"injection {k}: override must be 'sever', 'consent' or a partner map")
        out.append(Injection(t, agent, act))
    return out


@dataclass
class StepRecord:
    t: int
    pair: tuple
    signal: str
    added: tuple
    removed: tuple
    network: Network


def relevant_pairs(g, phi):
    """Ordered (agent, partner) pairs whose actions matter this period."""
    pairs = set(g.links) | {tuple(sorted(phi))}
    return [(i, j) for a, b in sorted(pairs) for i, j in ((a, b), (b, a))]


def step(state, profile, monitor, rng, epsilon=0.0, injections=(), observer=None):
    """Advance one period. Returns the new state and its trace record."""
    n = state.g.n
    t = state.t + 1
    phi = select_pair(rng, n)
    trembling = set()
    if epsilon > 0:
        trembling = set(np.flatnonzero(rng.random(n) < epsilon).tolist())
    forced = {inj.agent: inj for inj in injections if inj.t == t}
    actions = {}
    for i, j in relevant_pairs(state.g, phi):
        ctx = ActionContext(int(tuple(sorted((i, j))) == phi), int(state.g.has_link(i, j)))
        default = profile.action(i, j, ctx, state)
        if i in forced:
            a = forced[i].choice(j, default)
        elif i in trembling:
            a = int(rng.integers(2))
        else:
            a = default
        actions[(i, j)] = a
    keep = [l for l in state.g.links if actions[l] and actions[l[::-1]]]
    if actions[phi] and actions[phi[::-1]]:
        keep.append(phi)
    g_now = Network(n, keep) if set(keep) != state.g.links else state.g
    signal = monitor.update(state.monitor, state.g, phi, g_now, actions)
    beliefs = observer(state.beliefs, state.g, phi, g_now) if observer else state.beliefs
    added = tuple(sorted(g_now.links - state.g.links))
    removed = tuple(sorted(state.g.links - g_now.links))
    label = signal.label if hasattr(signal, "label") else str(signal)
    return SimState(t, g_now, signal, beliefs), StepRecord(t, phi, label, added, removed, g_now)


@dataclass
class SimTrace:
    config: SimConfig
    records: list = field(default_factory=list)
    convergence: tuple | None = None  # (period, limit network)
    target_periods: int = 0
    periods: int = 0
    final_state: SimState | None = None

    @property
    def occupancy(self):
        return self.target_periods / self.periods if self.periods else 0.0

    @property
    def converged(self):
        return self.convergence is not None

    def networks(self):
        return [r.network for r in self.records]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "pair", "signal", "edge_delta"])
        for r in self.records:
            delta = ";".join([f"+{a}:{b}" for a, b in r.added] + [f"-{a}:{b}" for a, b in r.removed])
            w.writerow([r.t, f"{r.pair[0]}:{r.pair[1]}", r.signal, delta])
        return buf.getvalue()

    def summary(self):
        return {
            "converged": self.converged,
            "convergence_period": self.convergence[0] if self.convergence else None,
            "occupancy": self.occupancy,
            "periods": self.periods,
            "recorded_periods": len(self.records),
            "final_links": [list(l) for l in self.final_state.g.edge_list()] if self.final_state else None,
        }


def _target_network(target, state):
    return target if isinstance(target, Network) else None


def run(config, profile=None, monitor=None, injections=(), observer=None, initial_beliefs=None,
        target_of=None, fast_forward=True):
    """Simulate ``config.horizon`` periods.

    Convergence is declared at the first period from which the target network
    holds until the horizon while the cooperation phase is on and every target
    link has been selected and kept since the last punishment. With no trembles
    and no pending injections the run stops as soon as that holds, since the
    process is then frozen; the remaining periods count toward occupancy.
    """
    target = config.target
    if profile is None:
        profile = ScProfile(target)
    if monitor is None:
        monitor = CPMonitor(target, config.K)
    if target_of is None:
        target_of = _target_network
    rng = np.random.default_rng(config.seed)
    injections = list(injections)
    last_injection = max((inj.t for inj in injections), default=0)
    state = SimState(0, config.initial_network, monitor.initial(), initial_beliefs)
    trace = SimTrace(config)
    confirmed = set()
    candidate = None
    for _ in range(config.horizon):
        state, rec = step(state, profile, monitor, rng, config.epsilon, injections, observer)
        trace.records.append(rec)
        goal = target_of(target, state)
        phase = getattr(state.monitor, "phase", None)
        if not _cooperative(phase):
            confirmed = set()
        if goal is not None and rec.pair in goal.links and rec.pair in state.g.links:
            confirmed.add(rec.pair)
        on_target = goal is not None and state.g == goal
        trace.target_periods += on_target
        if on_target and _cooperative(phase) and goal.links <= confirmed:
            if candidate is None:
                candidate = (state.t, state.g)
        elif not on_target:
            candidate = None
        if (fast_forward and candidate is not None and config.epsilon == 0
                and state.t >= last_injection):
            remaining = config.horizon - state.t
            trace.target_periods += remaining
            break
    trace.periods = config.horizon
    trace.convergence = candidate
    trace.final_state = state
    return trace


def _cooperative(phase):
    return phase in (PHASE_C, "E_C")


def empty_run_lengths(trace, start=0):
    """Lengths of maximal runs of empty-network periods after period ``start``."""
    runs, cur = [], 0
    for r in trace.records:
        if r.t <= start:
            continue
        if not r.network.links:
            cur += 1
        elif cur:
            runs.append(cur)
            cur = 0
    if cur:
        runs.append(cur)
    return runs


def batch(configs, runner=run, threads=None, **kw):
    """Run independent simulations, optionally in a thread pool; order follows ``configs``."""
    if not threads or threads <= 1:
        return [runner(c, **kw) for c in configs]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda c: runner(c, **kw), configs))
