"""Myopic pairwise-stability dynamics used as a comparison baseline.

Each period a uniformly drawn pair re-evaluates its link: it is present after
the period iff both endpoints weakly gain from it in the current network and at
least one gains strictly. Nothing else changes. Large populations run on a
compiled bitset kernel; :func:`myopic_step` is the plain reference version.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import ConfigError
from .graph import Network, NetworkStats, stats
from .payoff import ConnectionsModel, PayoffParams, TypeVector

TIE_TOL = 1e-9  # marginal payoffs this close to zero count as exact ties


@dataclass(frozen=True)
class MyopicConfig:
    """Setup of one myopic run.

    ``discount_direct`` discounts the benefit of a direct neighbour as well, so
    an agent at distance ``d`` is worth ``delta**d * f``. The comparison
    simulations are reproduced under that convention; with ``False`` the
    library's usual ``delta**(d-1)`` weighting applies.
    """

    params: PayoffParams
    type_counts: tuple
    labels: tuple = None
    horizon: int = None
    seed: int = 0
    initial: str = "complete"
    discount_direct: bool = False

    def __post_init__(self):
        counts = tuple(int(k) for k in self.type_counts)
        if any(k < 0 for k in counts) or sum(counts) < 2:
            raise ConfigError("type counts must be nonnegative and cover at least two agents")
        object.__setattr__(self, "type_counts", counts)
        labels = tuple(range(len(counts))) if self.labels is None else tuple(self.labels)
        if len(labels) != len(counts):
            raise ConfigError("one label per type count is required")
        object.__setattr__(self, "labels", labels)
        n = self.n
        if self.horizon is None:
            object.__setattr__(self, "horizon", n * (n - 1))
        if self.horizon < n * (n - 1):
            raise ConfigError(
                f"horizon {self.horizon} is below n(n-1)={n * (n - 1)}; pairs would be selected "
                "fewer than twice in expectation"
            )
        if self.initial not in ("complete", "empty"):
            raise ConfigError(f"initial network must be 'complete' or 'empty', got {self.initial!r}")

    @property
    def n(self):
        return sum(self.type_counts)

    @property
    def types(self):
        return TypeVector.from_counts(self.type_counts, self.labels)

    def effective_params(self):
        if not self.discount_direct:
            return self.params
        d = self.params.delta
        return self.params.with_f({t: v * d for t, v in self.params.f.items()})


def _marginal(model, types, g, i, j):
    with_ = g.with_link(i, j)
    without = g.without_link(i, j)
    return model.payoff(types, with_, i) - model.payoff(types, without, i)


def myopic_step(g, types, params, pair):
    """Re-evaluate the selected pair's link; every other link is left alone."""
    types = types.types if isinstance(types, TypeVector) else tuple(types)
    model = ConnectionsModel(params)
    i, j = pair
    mi = _marginal(model, types, g, i, j)
    mj = _marginal(model, types, g, j, i)
    form = _forms(mi, mj, TIE_TOL)
    if form == g.has_link(i, j):
        return g
    return g.with_link(i, j) if form else g.without_link(i, j)


def _forms(mi, mj, tol):
    return mi >= -tol and mj >= -tol and (mi > tol or mj > tol)


# -- compiled kernel -------------------------------------------------------------------


_DEBRUIJN = np.uint64(0x03F79D71B4CB0A89)
_DEBRUIJN_TABLE = np.zeros(64, dtype=np.int64)
for _k in range(64):
    _DEBRUIJN_TABLE[int(((1 << _k) * 0x03F79D71B4CB0A89 & (2**64 - 1)) >> 58)] = _k


@numba.njit(cache=True)
def _popcount(x):
    x = x - ((x >> np.uint64(1)) & np.uint64(0x5555555555555555))
    x = (x & np.uint64(0x3333333333333333)) + ((x >> np.uint64(2)) & np.uint64(0x3333333333333333))
    x = (x + (x >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    return int((x * np.uint64(0x0101010101010101)) >> np.uint64(56))


@numba.njit(cache=True)
def _bit(a, k):
    return (a[k >> 6] >> np.uint64(k & 63)) & np.uint64(1)


@numba.njit(cache=True)
def _levels(rows, live, src, levels, visited, table):
    """Breadth-first layers from ``src`` as bitsets; returns the number of layers.

    ``levels[d]`` holds the agents at distance ``d``. The expansion switches to
    scanning unvisited agents once the frontier outnumbers them.
    """
    W = rows.shape[1]
    one = np.uint64(1)
    for w in range(W):
        visited[w] = 0
        levels[0, w] = 0
    visited[src >> 6] |= one << np.uint64(src & 63)
    levels[0, src >> 6] = one << np.uint64(src & 63)
    fcount = 1
    nvis = 1
    n_live = 0
    for w in range(W):
        n_live += _popcount(live[w])
    d = 0
    while fcount > 0:
        nxt = levels[d + 1]
        for w in range(W):
            nxt[w] = 0
        frontier = levels[d]
        if fcount < n_live - nvis:
            for w in range(W):
                x = frontier[w]
                while x:
                    low = x & (~x + one)
                    v = w * 64 + table[(low * _DEBRUIJN) >> np.uint64(58)]
                    for k in range(W):
                        nxt[k] |= rows[v, k]
                    x ^= low
        else:
            for w in range(W):
                x = live[w] & ~visited[w]
                while x:
                    low = x & (~x + one)
                    u = w * 64 + table[(low * _DEBRUIJN) >> np.uint64(58)]
                    for k in range(W):
                        if rows[u, k] & frontier[k]:
                            nxt[w] |= low
                            break
                    x ^= low
        fcount = 0
        for w in range(W):
            nxt[w] &= ~visited[w]
            visited[w] |= nxt[w]
            fcount += _popcount(nxt[w])
        nvis += fcount
        d += 1
    # layer d is empty; store the unreached agents there
    for w in range(W):
        levels[d, w] = live[w] & ~visited[w]
    return d


@numba.njit(cache=True)
def _gain(li, ni, lj, nj, type_masks, f_type, pw, c):
    """Gain of the agent with layers ``li`` from linking to the agent with layers ``lj``.

    The last layer of each holds unreached agents, which are worth nothing.
    """
    W = li.shape[1]
    total = -c
    for d in range(1, ni + 1):
        far = 0.0 if d == ni else pw[d]
        top = nj if d == ni else min(d - 1, nj)
        for e in range(top):
            step = pw[e + 1] - far
            if step == 0.0:
                continue
            for t in range(type_masks.shape[0]):
                cnt = 0
                for w in range(W):
                    cnt += _popcount(li[d, w] & lj[e, w] & type_masks[t, w])
                if cnt:
                    total += f_type[t] * step * cnt
    return total


@numba.njit(cache=True, nogil=True)
def _run_kernel(type_masks, f_type, c, pw, n, ii, jj, rows, tol):
    W = rows.shape[1]
    one = np.uint64(1)
    live = np.zeros(W, np.uint64)
    for k in range(n):
        live[k >> 6] |= one << np.uint64(k & 63)
    li = np.zeros((n + 2, W), np.uint64)
    lj = np.zeros((n + 2, W), np.uint64)
    vis = np.zeros(W, np.uint64)
    table = _DEBRUIJN_TABLE
    changes = 0
    for t in range(ii.shape[0]):
        i = ii[t]
        j = jj[t]
        linked = _bit(rows[i], j) != 0
        if linked:
            rows[i, j >> 6] &= ~(one << np.uint64(j & 63))
            rows[j, i >> 6] &= ~(one << np.uint64(i & 63))
        ni = _levels(rows, live, i, li, vis, table)
        nj = _levels(rows, live, j, lj, vis, table)
        mi = _gain(li, ni, lj, nj, type_masks, f_type, pw, c)
        mj = _gain(lj, nj, li, ni, type_masks, f_type, pw, c)
        form = mi >= -tol and mj >= -tol and (mi > tol or mj > tol)
        if form:
            rows[i, j >> 6] |= one << np.uint64(j & 63)
            rows[j, i >> 6] |= one << np.uint64(i & 63)
        if form != linked:
            changes += 1
    return changes


def _pack(adj):
    padded = np.pad(adj.astype(np.uint8), ((0, 0), (0, (-adj.shape[1]) % 64)))
    return np.packbits(padded, axis=1, bitorder="little").view(np.uint64).copy()


def _unpack(rows, n):
    return np.unpackbits(rows.view(np.uint8), axis=1, bitorder="little")[:, :n].astype(bool)


def draw_pairs(rng, n, periods):
    """Uniform ordered draws of distinct agents, as two index arrays."""
    ii = rng.integers(0, n, periods)
    jj = rng.integers(0, n - 1, periods)
    jj = jj + (jj >= ii)
    return ii, jj


@dataclass
class MyopicResult:
    config: MyopicConfig
    network: Network
    stats: NetworkStats
    changes: int

    def summary(self):
        out = self.stats.as_dict()
        out.update(links=len(self.network), changes=self.changes, seed=self.config.seed)
        return out


def network_from_adjacency(adj):
    iu, ju = np.nonzero(np.triu(adj, 1))
    return Network(adj.shape[0], zip(iu.tolist(), ju.tolist()))


def myopic_run(config, compute_stats=True):
    n = config.n
    params = config.effective_params()
    labels = list(config.labels)
    index = np.repeat(np.arange(len(labels)), config.type_counts)
    masks = _pack(np.equal.outer(np.arange(len(labels)), index))
    f_type = np.array([float(params.benefit(t)) for t in labels])
    pw = np.zeros(n + 2)
    v = 1.0
    for d in range(1, n + 1):
        pw[d] = v
        v *= float(params.delta)
    adj = np.ones((n, n), dtype=bool) if config.initial == "complete" else np.zeros((n, n), dtype=bool)
    np.fill_diagonal(adj, False)
    rows = _pack(adj)
    rng = np.random.default_rng(config.seed)
    ii, jj = draw_pairs(rng, n, config.horizon)
    changes = _run_kernel(masks, f_type, float(params.c), pw, n, ii, jj, rows, TIE_TOL)
    g = network_from_adjacency(_unpack(rows, n))
    return MyopicResult(config, g, stats(g) if compute_stats else None, int(changes))


def myopic_run_reference(config):
    """Pure-Python run with the same pair draws; for small populations and testing."""
    n = config.n
    params = config.effective_params()
    g = Network.complete(n) if config.initial == "complete" else Network.empty(n)
    rng = np.random.default_rng(config.seed)
    ii, jj = draw_pairs(rng, n, config.horizon)
    for i, j in zip(ii.tolist(), jj.tolist()):
        g = myopic_step(g, config.types, params, (i, j))
    return g


@dataclass(frozen=True)
class SeedAverage:
    mean: dict
    stderr: dict
    runs: tuple = field(default_factory=tuple)


def average_stats(results):
    """Mean and standard error of each statistic over runs."""
    keys = ("alcc", "gcc", "diameter", "p90_distance")
    table = np.array([[r.stats.as_dict()[k] for k in keys] for r in results], dtype=float)
    mean = table.mean(axis=0)
    se = table.std(axis=0, ddof=1) / np.sqrt(len(results)) if len(results) > 1 else np.zeros(len(keys))
    return SeedAverage(dict(zip(keys, mean.tolist())), dict(zip(keys, se.tolist())), tuple(results))


def comparison_config(variant, seed=0, n=1000):
    """The two comparison setups: homogeneous (1) and three-type (2)."""
    if variant == 1:
        return MyopicConfig(PayoffParams({0: 10.0}, 5.0, 0.6), (n,), seed=seed)
    if variant == 2:
        a, b = round(n / 6), round(n / 3)
        return MyopicConfig(
            PayoffParams({0: 16.0, 1: 10.0, 2: 6.0}, 5.0, 0.6), (a, b, n - a - b), seed=seed
        )
    raise ConfigError(f"unknown comparison variant {variant}")
