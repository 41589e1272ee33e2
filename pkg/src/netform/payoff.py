"""One-period and discounted payoffs.

Two payoff models are provided. :class:`ConnectionsModel` is the heterogeneous
connections model, where an agent gains ``delta**(d-1) * f(type_j)`` from every
agent ``j`` at distance ``d`` and pays ``c`` per link. :class:`TableModel` looks
payoffs up in a table keyed by the agent's rooted component, which is enough
for small hand-specified games.

All arithmetic is generic over the number type, so passing
:class:`fractions.Fraction` parameters gives exact results.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Mapping

from .errors import ArgumentError, ConfigError
from .graph import INF, Network, distance_table, rooted_component_key


@dataclass(frozen=True)
class TypeVector:
    """Type assignment, one type identifier per agent."""

    types: tuple
    type_set: frozenset = None

    def __post_init__(self):
        types = tuple(self.types)
        object.__setattr__(self, "types", types)
        if self.type_set is None:
            object.__setattr__(self, "type_set", frozenset(types))
        else:
            object.__setattr__(self, "type_set", frozenset(self.type_set))
            missing = set(types) - self.type_set
            if missing:
                raise ConfigError(f"types {sorted(map(repr, missing))} are not in the type set")

    @classmethod
    def from_counts(cls, counts, labels=None):
        """Agents ``0..`` get ``labels[0]`` for ``counts[0]`` agents, then ``labels[1]`` and so on."""
        labels = list(range(len(counts))) if labels is None else list(labels)
        if len(labels) != len(counts):
            raise ConfigError("one label per count is required")
        types = [lab for lab, k in zip(labels, counts) for _ in range(k)]
        return cls(tuple(types), frozenset(labels))

    @property
    def n(self):
        return len(self.types)

    def __getitem__(self, i):
        return self.types[i]

    def __len__(self):
        return len(self.types)

    def members(self, t):
        return [i for i, x in enumerate(self.types) if x == t]


@dataclass(frozen=True)
class PayoffParams:
    """Connections-model parameters: benefit per type, link cost, spatial discount."""

    f: Mapping[Hashable, object]
    c: object
    delta: object

    def __post_init__(self):
        object.__setattr__(self, "f", dict(self.f))
        for t, v in self.f.items():
            if not v > 0:
                raise ConfigError(f"f({t!r}) must be positive, got {v}")
        if not self.c > 0:
            raise ConfigError(f"link cost c must be positive, got {self.c}")
        if not 0 < self.delta < 1:
            raise ConfigError(f"spatial discount delta must lie in (0,1), got {self.delta}")

    def __hash__(self):
        return hash((tuple(sorted(self.f.items(), key=lambda kv: repr(kv[0]))), self.c, self.delta))

    def benefit(self, t):
        try:
            return self.f[t]
        except KeyError:
            raise ConfigError(f"no benefit f defined for type {t!r}") from None

    def discount_powers(self, n):
        """``[0, 1, delta, delta**2, ...]`` of length ``n + 1``; index ``d`` holds ``delta**(d-1)``."""
        pw = [0, 1]
        for _ in range(n - 1):
            pw.append(pw[-1] * self.delta)
        return pw

    def with_delta(self, delta):
        return PayoffParams(self.f, self.c, delta)

    def with_f(self, f):
        return PayoffParams(f, self.c, self.delta)


class PayoffModel:
    """Interface: ``payoff(types, g, i)`` gives agent ``i``'s one-period payoff."""

    def payoff(self, types, g, i):
        raise NotImplementedError


@dataclass(frozen=True)
class ConnectionsModel(PayoffModel):
    params: PayoffParams

    def payoff(self, types, g, i):
        if not 0 <= i < g.n:
            raise ArgumentError(f"agent {i} out of range for n={g.n}")
        if len(types) != g.n:
            raise ConfigError(f"type vector has {len(types)} entries but the network has {g.n} agents")
        dist = distance_table(g)[i]
        deg = g.degree(i)
        if deg == 0:
            return 0
        pw = self.params.discount_powers(g.n)
        total = 0
        for j, d in dist.items():
            if j != i and d is not INF:
                total = total + pw[d] * self.params.benefit(types[j])
        return total - deg * self.params.c


@dataclass(frozen=True)
class TableModel(PayoffModel):
    """Payoffs keyed by the canonical form of the agent's rooted component.

    Keys are the output of :func:`netform.graph.rooted_component_key`. Types are
    ignored, so this model suits homogeneous-type tables. Singletons get 0.
    """

    entries: Mapping[tuple, object] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "entries", dict(self.entries))

    def __hash__(self):
        return hash(tuple(sorted(self.entries.items())))

    def payoff(self, types, g, i):
        if not 0 <= i < g.n:
            raise ArgumentError(f"agent {i} out of range for n={g.n}")
        if g.degree(i) == 0:
            return 0
        key = rooted_component_key(g, i)
        try:
            return self.entries[key]
        except KeyError:
            raise ConfigError(f"payoff table has no entry for component {key}") from None


def example1_model(v=1):
    """Three-agent table: 2v on an isolated link, v in the triangle, 0 on a two-link path."""
    return TableModel(
        {
            ((0, 1),): 2 * v,
            ((0, 1), (1, 2)): 0,  # path endpoint
            ((0, 1), (0, 2)): 0,  # path center
            ((0, 1), (0, 2), (1, 2)): v,
        }
    )


def one_period_payoff(model, types, g, i):
    return model.payoff(_types(types), g, i)


def payoff_vector(model, types, g):
    types = _types(types)
    return [model.payoff(types, g, i) for i in range(g.n)]


def total_welfare(model, types, g):
    return sum(payoff_vector(model, types, g))


def discounted_constant_value(u, gamma):
    """Discounted sum of a constant per-period payoff ``u``."""
    if not 0 < gamma < 1:
        raise ArgumentError(f"time discount gamma must lie in (0,1), got {gamma}")
    return u / (1 - gamma)


def _types(types):
    return types.types if isinstance(types, TypeVector) else tuple(types)


def homogeneous(n, label=0):
    return TypeVector((label,) * n)
