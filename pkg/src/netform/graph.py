"""Undirected networks on agent indices, connectivity queries and descriptive statistics."""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

from .errors import ArgumentError, ConfigError

INF = math.inf


def _norm(i, j):
    return (i, j) if i < j else (j, i)


class Network:
    """Undirected simple network on agents ``0..n-1``.

    Links are stored as sorted ``(i, j)`` tuples with ``i < j``. Instances are
    immutable and hashable, so they can be used as dictionary keys and cached.
    """

    __slots__ = ("n", "links", "_adj", "_hash")

    def __init__(self, n, links=()):
        if n < 1:
            raise ArgumentError(f"network needs at least one agent, got n={n}")
        normed = set()
        for i, j in links:
            i, j = int(i), int(j)
            if i == j:
                raise ArgumentError(f"self-loop on agent {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise ArgumentError(f"link ({i}, {j}) out of range for n={n}")
            normed.add(_norm(i, j))
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "links", frozenset(normed))
        object.__setattr__(self, "_adj", None)
        object.__setattr__(self, "_hash", None)

    def __setattr__(self, key, value):
        raise AttributeError("Network is immutable")

    # -- construction helpers -------------------------------------------------

    @classmethod
    def empty(cls, n):
        return cls(n)

    @classmethod
    def complete(cls, n, agents=None):
        agents = range(n) if agents is None else sorted(agents)
        return cls(n, itertools.combinations(agents, 2))

    @classmethod
    def star(cls, n, center, leaves=None):
        leaves = [k for k in range(n) if k != center] if leaves is None else leaves
        return cls(n, ((center, k) for k in leaves))

    @classmethod
    def cycle(cls, n, agents=None):
        agents = list(range(n)) if agents is None else list(agents)
        if len(agents) < 3:
            return cls(n, zip(agents, agents[1:]))
        return cls(n, zip(agents, agents[1:] + agents[:1]))

    @classmethod
    def path(cls, n, agents=None):
        agents = list(range(n)) if agents is None else list(agents)
        return cls(n, zip(agents, agents[1:]))

    @classmethod
    def from_mask(cls, n, mask):
        """Build the network whose links are the set bits of ``mask`` over :func:`all_pairs`."""
        pairs = all_pairs(n)
        return cls(n, (pairs[k] for k in range(len(pairs)) if mask >> k & 1))

    @property
    def mask(self):
        index = _pair_index(self.n)
        return sum(1 << index[p] for p in self.links)

    # -- queries ---------------------------------------------------------------

    @property
    def adjacency(self):
        """Tuple of neighbour frozensets, one per agent."""
        if self._adj is None:
            nbrs = [set() for _ in range(self.n)]
            for i, j in self.links:
                nbrs[i].add(j)
                nbrs[j].add(i)
            object.__setattr__(self, "_adj", tuple(frozenset(s) for s in nbrs))
        return self._adj

    def neighbors(self, i):
        return self.adjacency[i]

    def degree(self, i):
        return len(self.adjacency[i])

    def has_link(self, i, j):
        return _norm(i, j) in self.links

    def with_link(self, i, j):
        return Network(self.n, self.links | {_norm(i, j)})

    def without_link(self, i, j):
        return Network(self.n, self.links - {_norm(i, j)})

    def restrict(self, agents):
        """Links of this network with both endpoints in ``agents``."""
        agents = set(agents)
        return Network(self.n, (l for l in self.links if l[0] in agents and l[1] in agents))

    def non_singletons(self):
        return {k for l in self.links for k in l}

    def matrix(self, dtype=bool):
        a = np.zeros((self.n, self.n), dtype=dtype)
        if self.links:
            idx = np.array(sorted(self.links))
            a[idx[:, 0], idx[:, 1]] = 1
            a[idx[:, 1], idx[:, 0]] = 1
        return a

    def sparse(self):
        if not self.links:
            return csr_matrix((self.n, self.n), dtype=np.int8)
        idx = np.array(sorted(self.links))
        rows = np.concatenate([idx[:, 0], idx[:, 1]])
        cols = np.concatenate([idx[:, 1], idx[:, 0]])
        return csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(self.n, self.n))

    def edge_list(self):
        return sorted(self.links)

    def __len__(self):
        return len(self.links)

    def __contains__(self, pair):
        return _norm(*pair) in self.links

    def __iter__(self):
        return iter(sorted(self.links))

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return self.n == other.n and self.links == other.links

    def __hash__(self):
        if self._hash is None:
            object.__setattr__(self, "_hash", hash((self.n, self.links)))
        return self._hash

    def __repr__(self):
        return f"Network(n={self.n}, links={self.edge_list()})"


@lru_cache(maxsize=None)
def all_pairs(n):
    """Unordered agent pairs in lexicographic order; the bit order used by masks."""
    return tuple(itertools.combinations(range(n), 2))


@lru_cache(maxsize=None)
def _pair_index(n):
    return {p: k for k, p in enumerate(all_pairs(n))}


def all_networks(n):
    """Every network on ``n`` agents, in mask order."""
    for mask in range(1 << (n * (n - 1) // 2)):
        yield Network.from_mask(n, mask)


def distances(g, i):
    """Breadth-first shortest path lengths from agent ``i``; unreachable agents map to ``INF``."""
    if not 0 <= i < g.n:
        raise ArgumentError(f"agent {i} out of range for n={g.n}")
    dist = dict.fromkeys(range(g.n), INF)
    dist[i] = 0
    adj = g.adjacency
    queue = deque([i])
    while queue:
        v = queue.popleft()
        dv = dist[v] + 1
        for w in adj[v]:
            if dist[w] is INF:
                dist[w] = dv
                queue.append(w)
    return dist


@lru_cache(maxsize=1 << 16)
def distance_table(g):
    """All-pairs distances for small networks as a tuple of per-agent dicts (cached)."""
    return tuple(distances(g, i) for i in range(g.n))


def components(g):
    """Non-singleton connected components, ordered by smallest member."""
    seen = set()
    comps = []
    adj = g.adjacency
    for s in range(g.n):
        if s in seen or not adj[s]:
            continue
        comp = {s}
        queue = deque([s])
        while queue:
            v = queue.popleft()
            for w in adj[v]:
                if w not in comp:
                    comp.add(w)
                    queue.append(w)
        seen |= comp
        comps.append(comp)
    return comps


def component_of(g, i):
    """Agents connected to ``i`` (including ``i``)."""
    return {k for k, d in distances(g, i).items() if d is not INF}


def _is_bridge(g, i, j):
    h = g.without_link(i, j)
    return distances(h, i)[j] is INF


def classify(g):
    comps = components(g)
    minimal = all(_is_bridge(g, i, j) for i, j in g.links)
    connected = len(comps) == 1 and len(comps[0]) == g.n
    return {
        "empty": not g.links,
        "connected": connected,
        "minimal": minimal,
        "minimally_connected": minimal and connected,
    }


@dataclass(frozen=True)
class NetworkStats:
    alcc: float
    gcc: float
    diameter: float
    p90_distance: float

    def as_dict(self):
        return {
            "alcc": self.alcc,
            "gcc": self.gcc,
            "diameter": self.diameter,
            "p90_distance": self.p90_distance,
        }


def clustering(g):
    """Local clustering, triangle and open-triad counts.

    Returns ``(local, triangles, open_triads)`` where ``local[i]`` is the share of
    linked neighbour pairs of ``i`` (0 when ``deg(i) < 2``).
    """
    a = g.sparse().astype(np.int64)
    deg = np.asarray(a.sum(axis=1)).ravel()
    # closed neighbour pairs per agent
    closed = np.asarray((a @ a).multiply(a).sum(axis=1)).ravel() // 2
    pairs = deg * (deg - 1) // 2
    local = np.zeros(g.n)
    ok = pairs > 0
    local[ok] = closed[ok] / pairs[ok]
    triangles = int(closed.sum() // 3)
    open_triads = int(pairs.sum() - 3 * triangles)
    return local, triangles, open_triads


def _percentile_from_counts(counts, q):
    """Linear-interpolated percentile of a sample given as value -> multiplicity."""
    values = sorted(counts)
    total = sum(counts[v] for v in values)
    pos = q / 100.0 * (total - 1)
    lo, hi = math.floor(pos), math.ceil(pos)

    def kth(k):
        acc = 0
        for v in values:
            acc += counts[v]
            if k < acc:
                return v
        return values[-1]

    vlo, vhi = kth(lo), kth(hi)
    return vlo + (vhi - vlo) * (pos - lo)


def distance_histogram(g, block=512):
    """Counts of unordered connected pairs at each finite distance."""
    a = g.sparse()
    counts = {}
    for start in range(0, g.n, block):
        idx = np.arange(start, min(start + block, g.n))
        d = shortest_path(a, method="D", unweighted=True, directed=False, indices=idx)
        cols = np.arange(g.n)
        upper = cols[None, :] > idx[:, None]
        vals = d[upper & np.isfinite(d)].astype(np.int64)
        for v, c in zip(*np.unique(vals, return_counts=True)):
            counts[int(v)] = counts.get(int(v), 0) + int(c)
    return counts


def stats(g):
    """ALCC, GCC, diameter and 90th-percentile distance of ``g``.

    ALCC averages local clustering over all agents, counting agents of degree
    below two as 0. GCC is triangles / (triangles + open triads). The diameter is
    taken within the largest component; with no links it is 0.
    """
    local, triangles, open_triads = clustering(g)
    alcc = float(local.mean())
    gcc = triangles / (triangles + open_triads) if triangles + open_triads else 0.0
    if not g.links:
        return NetworkStats(alcc, gcc, 0, 0.0)
    _, labels = connected_components(g.sparse(), directed=False)
    big = np.bincount(labels).argmax()
    members = np.flatnonzero(labels == big)
    sub = g.restrict(members.tolist())
    hist = distance_histogram(sub)
    diameter = max(hist)
    whole = hist if len(members) == g.n else distance_histogram(g)
    p90 = _percentile_from_counts(whole, 90)
    return NetworkStats(alcc, gcc, diameter, float(p90))


# -- edge-list format -----------------------------------------------------------


def parse_edgelist(lines, n=None):
    """Parse ``i j`` lines (0-based, ``#`` comments) into a network."""
    links = []
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) < 2:
            raise ConfigError(f"line {lineno}: expected 'i j', got {raw.strip()!r}")
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError:
            raise ConfigError(f"line {lineno}: non-integer agent index in {raw.strip()!r}") from None
        if i < 0 or j < 0:
            raise ConfigError(f"line {lineno}: negative agent index")
        if i == j:
            raise ConfigError(f"line {lineno}: self-loop on agent {i}")
        links.append((i, j))
    size = max((max(l) for l in links), default=-1) + 1
    if n is None:
        n = max(size, 1)
    elif size > n:
        raise ConfigError(f"edge list mentions agent {size - 1} but n={n}")
    return Network(n, links)


def read_edgelist(path, n=None):
    with open(path) as fh:
        return parse_edgelist(fh, n=n)


def format_edgelist(g):
    lines = [f"# n={g.n} links={len(g)}"]
    lines += [f"{i} {j}" for i, j in g.edge_list()]
    return "\n".join(lines) + "\n"


def write_edgelist(g, path):
    with open(path, "w") as fh:
        fh.write(format_edgelist(g))


# -- canonical forms --------------------------------------------------------------


def canonical_form(g, types=None):
    """Smallest sorted edge tuple over type-preserving relabelings (small ``n`` only)."""
    types = [0] * g.n if types is None else list(types)
    groups = {}
    for k, t in enumerate(types):
        groups.setdefault(t, []).append(k)
    keys = sorted(groups, key=repr)
    slots = [k for t in keys for k in groups[t]]
    best = None
    for perms in itertools.product(*(itertools.permutations(groups[t]) for t in keys)):
        order = [k for p in perms for k in p]
        relabel = {old: slots[pos] for pos, old in enumerate(order)}
        edges = tuple(sorted(_norm(relabel[i], relabel[j]) for i, j in g.links))
        if best is None or edges < best:
            best = edges
    return best


def rooted_component_key(g, i):
    """Canonical edge tuple of ``i``'s component with ``i`` relabeled to 0."""
    comp = component_of(g, i)
    others = sorted(comp - {i})
    links = [l for l in g.links if l[0] in comp]
    best = None
    for perm in itertools.permutations(range(1, len(comp))):
        relabel = {i: 0, **dict(zip(others, perm))}
        edges = tuple(sorted(_norm(relabel[a], relabel[b]) for a, b in links))
        if best is None or edges < best:
            best = edges
    return best
