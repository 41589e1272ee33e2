"""Strongly efficient networks, maximum attainable payoffs and core stability.

The closed forms cover the two-type connections model and its multi-type
core-periphery generalization. Brute-force enumeration over every network on
at most six agents serves as the oracle for all of them.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.sparse.csgraph import shortest_path

from .errors import ArgumentError, ConfigError, DegenerateParameterError, SizeLimitError
from .graph import Network, all_pairs, components
from .payoff import ConnectionsModel, PayoffParams, TableModel, TypeVector, total_welfare

ALPHA, BETA = "alpha", "beta"
BRUTE_FORCE_LIMIT = 6
CORE_LIMIT = 5
_UNREACHED = 99


# -- two-type specification ---------------------------------------------------


@dataclass(frozen=True)
class TwoTypeSpec:
    """Two-type connections model. Agents ``0..n_alpha-1`` are type alpha, the rest beta."""

    f_alpha: object
    f_beta: object
    n_alpha: int
    n_beta: int
    c: object
    delta: object

    def __post_init__(self):
        if not self.f_alpha > self.f_beta > 0:
            raise ConfigError(f"need f_alpha > f_beta > 0, got {self.f_alpha}, {self.f_beta}")
        if self.n_alpha < 1 or self.n_beta < 1:
            raise ConfigError("both type counts must be positive")
        self.params()  # validates c and delta

    @property
    def n(self):
        return self.n_alpha + self.n_beta

    def types(self):
        return TypeVector.from_counts([self.n_alpha, self.n_beta], [ALPHA, BETA])

    def params(self):
        return PayoffParams({ALPHA: self.f_alpha, BETA: self.f_beta}, self.c, self.delta)

    def model(self):
        return ConnectionsModel(self.params())

    def replace(self, **kw):
        fields_ = dict(self.__dict__)
        fields_.update(kw)
        return TwoTypeSpec(**fields_)


@dataclass(frozen=True)
class EfficientResult:
    network: Network
    case_label: str
    partition: tuple  # (I1 core, I2 periphery-I, I3 periphery-II, I4 singletons)
    hub: int | None = None

    def __post_init__(self):
        blocks = [frozenset(b) for b in self.partition]
        object.__setattr__(self, "partition", tuple(blocks))
        seen = set()
        for b in blocks:
            if seen & b:
                raise ArgumentError("partition blocks overlap")
            seen |= b
        if seen != set(range(self.network.n)):
            raise ArgumentError("partition does not cover every agent")

    def to_json(self):
        names = ("core", "periphery_1", "periphery_2", "singletons")
        return {
            "case": self.case_label,
            "n": self.network.n,
            "hub": self.hub,
            "partition": {k: sorted(b) for k, b in zip(names, self.partition)},
            "links": [list(l) for l in self.network.edge_list()],
        }

    def dumps(self):
        return json.dumps(self.to_json(), indent=2)


def _sign(x, what):
    if x == 0:
        raise DegenerateParameterError(f"boundary tie: {what} holds with equality")
    return x > 0


def two_type_quantities(spec):
    """Threshold quantities that decide which efficient structure applies."""
    fa, fb, na, nb, c, d = spec.f_alpha, spec.f_beta, spec.n_alpha, spec.n_beta, spec.c, spec.delta
    # per-beta contribution when all betas hang off one alpha hub
    q = (1 + d * (na - 1)) * fa + (1 + d * (na + nb - 2)) * fb - 2 * c
    # per-link total of a star of alpha agents only
    fs = fa * (2 + d * (na - 2)) - 2 * c
    star = (
        2 * (na - 1) * fa
        + nb * (fa + fb)
        + d * ((na - 1) * (na - 2) * fa + nb * (nb - 1) * fb + nb * (na - 1) * (fa + fb))
        - 2 * (na + nb - 1) * c
    )
    return {
        "beta_link": (1 - d) * fb - c,
        "mixed_link": (1 - d) * (fa + fb) / 2 - c,
        "alpha_link": (1 - d) * fa - c,
        "beta_hub": q,
        "alpha_star": fs,
        "full_star": star,
    }


def two_type_case(spec):
    """Label in ``'abcdefg'`` of the efficient structure for ``spec``."""
    q = two_type_quantities(spec)
    if _sign(q["beta_link"], "(1-delta) f(beta) = c"):
        return "a"
    if _sign(q["mixed_link"], "(1-delta)(f(alpha)+f(beta))/2 = c"):
        return "b"
    if _sign(q["alpha_link"], "(1-delta) f(alpha) = c"):
        return "c" if _sign(q["beta_hub"], "beta hub contribution = 0") else "d"
    beta_pos = _sign(q["beta_hub"], "beta hub contribution = 0")
    if beta_pos:
        return "e" if _sign(q["full_star"], "full star welfare = 0") else "g"
    if spec.n_alpha == 1:
        return "f"
    return "f" if _sign(q["alpha_star"], "alpha star welfare = 0") else "g"


def efficient_two_type(spec):
    case = two_type_case(spec)
    n = spec.n
    alphas = list(range(spec.n_alpha))
    betas = list(range(spec.n_alpha, n))
    hub = alphas[0]
    if case == "a":
        g = Network.complete(n)
        part = (range(n), (), (), ())
    elif case == "b":
        g = Network(n, list(itertools.combinations(alphas, 2)) + [(a, b) for a in alphas for b in betas])
        part = (alphas, betas, (), ())
    elif case == "c":
        g = Network(n, list(itertools.combinations(alphas, 2)) + [(hub, b) for b in betas])
        part = (alphas, (), betas, ())
    elif case == "d":
        g = Network.complete(n, alphas)
        part = (alphas, (), (), betas) if len(alphas) > 1 else ((), (), (), range(n))
    elif case == "e":
        g = Network.star(n, hub)
        part = ([hub], (), alphas[1:] + betas, ())
    elif case == "f":
        g = Network.star(n, hub, alphas[1:])
        part = ([hub], (), alphas[1:], betas) if len(alphas) > 1 else ((), (), (), range(n))
    else:
        g = Network.empty(n)
        part = ((), (), (), range(n))
    if not g.links:
        hub = None
    return EfficientResult(g, case, part, hub)


# -- multi-type core-periphery ------------------------------------------------


def fast_welfare(types, params, g):
    """Total welfare; exact for small networks, vectorised floats for large ones."""
    types = types.types if isinstance(types, TypeVector) else tuple(types)
    if g.n <= 64:
        return total_welfare(ConnectionsModel(params), types, g)
    if not g.links:
        return 0.0
    dist = shortest_path(g.sparse(), method="D", unweighted=True, directed=False)
    finite = np.isfinite(dist)
    dint = np.where(finite, dist, 0).astype(np.int64)
    pw = np.array(params.discount_powers(g.n), dtype=float)
    fvec = np.array([float(params.benefit(t)) for t in types])
    benefit = (pw[dint] * finite * fvec[None, :]).sum()
    return float(benefit - 2 * len(g) * float(params.c))


def efficient_core_periphery(types, params):
    """Core-periphery network for any finite type set.

    Core agents (``(1-delta) f > c``) form a clique. A non-core agent links to
    every core agent of each core type whose pairwise test
    ``(1-delta)(f_k + f_core)/2 > c`` passes. The remaining types, taken in
    decreasing ``f`` order, attach to a single hub for the welfare-maximizing
    prefix of types; everyone else stays isolated.
    """
    types = types if isinstance(types, TypeVector) else TypeVector(tuple(types))
    n = types.n
    d, c = params.delta, params.c
    f = [params.benefit(t) for t in types.types]
    core = [i for i in range(n) if _sign((1 - d) * f[i] - c, f"(1-delta) f({types[i]!r}) = c")]
    core_types = sorted({types[i] for i in core}, key=repr)
    links = list(itertools.combinations(core, 2))
    periphery1 = []
    for k in range(n):
        if k in core:
            continue
        targets = [
            t for t in core_types
            if _sign((1 - d) * (f[k] + params.benefit(t)) / 2 - c, "(1-delta)(f_k+f_core)/2 = c")
        ]
        if targets:
            periphery1.append(k)
            links += [(k, j) for j in core if types[j] in targets]
    rest = [k for k in range(n) if k not in core and k not in periphery1]
    rest_types = sorted({types[k] for k in rest}, key=lambda t: params.benefit(t), reverse=True)
    base = Network(n, links)

    if core:
        top = max(params.benefit(types[i]) for i in core)
        hub = min(i for i in core if params.benefit(types[i]) == top)
    elif rest:
        top = max(f[k] for k in rest)
        hub = min(k for k in rest if f[k] == top)
    else:
        hub = None

    candidates = []
    for m in range(len(rest_types) + 1):
        chosen = [k for k in rest if types[k] in rest_types[:m] and k != hub]
        g = Network(n, links + [(hub, k) for k in chosen]) if chosen else base
        candidates.append((fast_welfare(types, params, g), m, g, chosen))
    best = max(w for w, *_ in candidates)
    winners = [cand for cand in candidates if cand[0] == best]
    if len({cand[2] for cand in winners}) > 1:
        raise DegenerateParameterError("two periphery-II prefixes give equal welfare")
    _, m, g, chosen = winners[0]

    attached = set(chosen)
    if not core and chosen:
        core_block = [hub]
    else:
        core_block = core
    if not g.links:
        hub = None
    periphery2 = sorted(attached)
    singles = [k for k in range(n) if k not in core_block and k not in periphery1 and k not in attached]
    label = "core-periphery" if g.links else "empty"
    return EfficientResult(g, label, (core_block, periphery1, periphery2, singles), hub)


# -- brute-force enumeration --------------------------------------------------


@lru_cache(maxsize=None)
def _distance_tensor(n):
    """Shortest-path lengths for every network on ``n`` agents, indexed by mask."""
    pairs = all_pairs(n)
    masks = np.arange(1 << len(pairs))
    dist = np.full((len(masks), n, n), _UNREACHED, dtype=np.int16)
    for k, (i, j) in enumerate(pairs):
        on = (masks >> k) & 1 == 1
        dist[on, i, j] = 1
        dist[on, j, i] = 1
    idx = np.arange(n)
    dist[:, idx, idx] = 0
    for k in range(n):
        dist = np.minimum(dist, dist[:, :, k, None] + dist[:, None, k, :])
    return dist


@lru_cache(maxsize=64)
def _count_tensor(pattern):
    """``counts[mask, i, t, d-1]``: agents of type index ``t`` at distance ``d`` from ``i``."""
    n = len(pattern)
    dist = _distance_tensor(n)
    kinds = max(pattern) + 1
    counts = np.zeros((dist.shape[0], n, kinds, max(n - 1, 1)), dtype=np.int16)
    pat = np.array(pattern)
    for t in range(kinds):
        sel = dist[:, :, pat == t]
        for d in range(1, n):
            counts[:, :, t, d - 1] = (sel == d).sum(axis=-1)
    return counts


class Enumeration:
    """Payoffs of every agent in every network on ``n <= 6`` agents.

    Payoffs are evaluated once per distinct (type, distance) count profile, so
    exact number types stay affordable.
    """

    def __init__(self, types, model, limit=BRUTE_FORCE_LIMIT):
        self.types = types.types if isinstance(types, TypeVector) else tuple(types)
        self.n = len(self.types)
        if self.n > limit:
            raise SizeLimitError("exhaustive network enumeration", self.n, limit)
        self.model = model
        self.n_networks = 1 << (self.n * (self.n - 1) // 2)
        self._payoffs = None
        self._welfare = None

    def network(self, mask):
        return Network.from_mask(self.n, int(mask))

    @property
    def payoffs(self):
        """Object array ``[mask, agent]`` of one-period payoffs."""
        if self._payoffs is None:
            if isinstance(self.model, ConnectionsModel):
                self._payoffs = self._connections_payoffs()
            else:
                self._payoffs = np.array(
                    [[self.model.payoff(self.types, self.network(m), i) for i in range(self.n)]
                     for m in range(self.n_networks)],
                    dtype=object,
                )
        return self._payoffs

    @property
    def welfare(self):
        if self._welfare is None:
            if isinstance(self.model, ConnectionsModel):
                self._welfare = self._connections_welfare()
            else:
                self._welfare = np.array([sum(row) for row in self.payoffs], dtype=object)
        return self._welfare

    def _pattern(self):
        labels = sorted(set(self.types), key=repr)
        return tuple(labels.index(t) for t in self.types), labels

    def _evaluate(self, rows, labels):
        params = self.model.params
        pw = params.discount_powers(max(self.n, 1))
        fs = [params.benefit(t) for t in labels]
        out = []
        for row in rows:
            v = 0
            deg = 0
            for t, f in enumerate(fs):
                deg += int(row[t, 0])
                for d in range(row.shape[1]):
                    k = int(row[t, d])
                    if k:
                        v = v + k * f * pw[d + 1]
            out.append(v - deg * params.c if deg else v)
        return out

    def _connections_payoffs(self):
        pattern, labels = self._pattern()
        counts = _count_tensor(pattern)
        flat = counts.reshape(-1, *counts.shape[2:])
        uniq, inverse = np.unique(flat, axis=0, return_inverse=True)
        values = np.array(self._evaluate(uniq, labels) + [None], dtype=object)[:-1]
        return values[inverse.ravel()].reshape(counts.shape[0], self.n)

    def _connections_welfare(self):
        pattern, labels = self._pattern()
        counts = _count_tensor(pattern).sum(axis=1, dtype=np.int32)
        uniq, inverse = np.unique(counts, axis=0, return_inverse=True)
        # the degree term counts every link twice, matching the sum of payoffs
        values = np.array(self._evaluate(uniq, labels) + [None], dtype=object)[:-1]
        return values[inverse.ravel()]


def brute_force_efficient(types, model):
    """All welfare-maximizing networks (identity labels) and the maximal welfare."""
    if isinstance(model, PayoffParams):
        model = ConnectionsModel(model)
    enum = Enumeration(types, model)
    w = enum.welfare
    best = max(w)
    winners = frozenset(enum.network(m) for m in np.flatnonzero(w == best))
    return winners, best


def single_component(networks):
    """True when every network has at most one non-singleton component."""
    return all(len(components(g)) <= 1 for g in networks)


# -- maximum attainable payoffs -------------------------------------------------


def _solo_alpha_value(spec):
    """Best one-link payoff of an alpha agent that has a hub to reach everyone through."""
    fa, fb, na, nb, d = spec.f_alpha, spec.f_beta, spec.n_alpha, spec.n_beta, spec.delta
    if na >= 2:
        return fa + d * ((na - 2) * fa + nb * fb)
    # a lone alpha agent can only hang off a beta hub
    return fb + d * (nb - 1) * fb


def _solo_beta_value(spec):
    fa, fb, na, nb, d = spec.f_alpha, spec.f_beta, spec.n_alpha, spec.n_beta, spec.delta
    return fa + d * ((na - 1) * fa + (nb - 1) * fb)


def max_payoff_case(spec):
    fa, fb, c, d = spec.f_alpha, spec.f_beta, spec.c, spec.delta
    if _sign((1 - d) * fb - c, "(1-delta) f(beta) = c"):
        return "a"
    if _sign((1 - d) * fa - c, "(1-delta) f(alpha) = c"):
        return "b"
    a1 = _solo_alpha_value(spec) - c
    b1 = _solo_beta_value(spec) - c
    if _sign(a1, "alpha one-link payoff = 0"):
        return "c"
    return "d" if _sign(b1, "beta one-link payoff = 0") else "e"


def max_attainable_payoff(theta, spec):
    """Largest one-period payoff an agent of type ``theta`` can get in any network."""
    if theta not in (ALPHA, BETA):
        raise ArgumentError(f"type must be {ALPHA!r} or {BETA!r}, got {theta!r}")
    fa, fb, na, nb, c, d = spec.f_alpha, spec.f_beta, spec.n_alpha, spec.n_beta, spec.c, spec.delta
    case = max_payoff_case(spec)
    if case == "a":
        if theta == ALPHA:
            return (na - 1) * fa + nb * fb - (na + nb - 1) * c
        return na * fa + (nb - 1) * fb - (na + nb - 1) * c
    if case == "b":
        if theta == BETA:
            return na * fa + d * (nb - 1) * fb - na * c
        if na >= 2:
            return (na - 1) * fa + d * nb * fb - (na - 1) * c
        # no alpha partner: hang off one beta that links every other beta
        return max(0, _solo_alpha_value(spec) - c)
    a1 = _solo_alpha_value(spec) - c
    b1 = _solo_beta_value(spec) - c
    if case == "c":
        return a1 if theta == ALPHA else b1
    if case == "d":
        return 0 if theta == ALPHA else b1
    return 0


def brute_force_max_payoff(types, params, theta):
    enum = Enumeration(types, ConnectionsModel(params))
    cols = [i for i, t in enumerate(enum.types) if t == theta]
    if not cols:
        raise ArgumentError(f"no agent of type {theta!r}")
    return max(max(row[i] for i in cols) for row in enum.payoffs)


# -- core stability -------------------------------------------------------------


@dataclass(frozen=True)
class CoreVerdict:
    stable: bool
    coalition: frozenset = frozenset()
    network: Network | None = None

    def __bool__(self):
        return self.stable


def is_core_stable(g, types, model):
    """Exhaustive search for a coalition that can do better on its own.

    A coalition ``I'`` blocks ``g`` with a network ``g'`` among ``I'`` when every
    member is weakly better off in ``g'`` and one member strictly.
    """
    if isinstance(model, PayoffParams):
        model = ConnectionsModel(model)
    types = types.types if isinstance(types, TypeVector) else tuple(types)
    if g.n > CORE_LIMIT:
        raise SizeLimitError("core-stability search", g.n, CORE_LIMIT)
    enum = Enumeration(types, model, limit=CORE_LIMIT)
    pay = enum.payoffs
    current = pay[g.mask]
    for i in range(g.n):
        if current[i] < 0:
            return CoreVerdict(False, frozenset({i}), Network.empty(g.n))
    pairs = all_pairs(g.n)
    for m in range(1, enum.n_networks):
        members = {k for b, p in enumerate(pairs) if m >> b & 1 for k in p}
        row = pay[m]
        if all(row[i] >= current[i] for i in members) and any(row[i] > current[i] for i in members):
            return CoreVerdict(False, frozenset(members), enum.network(m))
    return CoreVerdict(True)


def core_stable_conditions(spec):
    """Closed-form core-stability verdict for the two-type efficient network."""
    res = efficient_two_type(spec)
    case = res.case_label
    if case in "adg":
        return True
    if case == "b":
        return spec.f_beta >= spec.c
    if case in "ce":
        return ConnectionsModel(spec.params()).payoff(spec.types().types, res.network, res.hub) >= 0
    # case f
    if spec.n_alpha == 1:
        return True
    return spec.f_alpha >= spec.c


# -- sustainable networks ---------------------------------------------------------


@dataclass(frozen=True)
class SustainableSet:
    networks: frozenset
    criterion: str = "u_i > 0 for all i"

    def __contains__(self, g):
        return g in self.networks

    def __len__(self):
        return len(self.networks)

    def __iter__(self):
        return iter(sorted(self.networks, key=lambda g: g.mask))

    def __le__(self, other):
        return self.networks <= other.networks

    def __ge__(self, other):
        return self.networks >= other.networks


def sustainable_set(types, params, limit=CORE_LIMIT):
    """Networks giving every agent a strictly positive one-period payoff."""
    enum = Enumeration(types, ConnectionsModel(params), limit=limit)
    keep = [m for m, row in enumerate(enum.payoffs) if all(x > 0 for x in row)]
    return SustainableSet(frozenset(enum.network(m) for m in keep))
