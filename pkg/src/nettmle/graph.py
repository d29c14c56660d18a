"""Undirected networks, synthetic generators, dependency neighborhoods, hubs.

Nodes are dense integers 0..n-1. Edges are stored once as unordered pairs
(i, j) with i < j; adjacency is also exposed as sorted neighbor lists and as
a scipy CSR matrix for vectorized summary computation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import EmptySubnetworkError, InvalidParameterError


@dataclass(frozen=True)
class Network:
    """Immutable undirected network on nodes 0..n-1 without self-loops."""

    n: int
    edges: np.ndarray  # (m, 2) int array, each row (i, j) with i < j
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @staticmethod
    def from_edges(n: int, edges) -> "Network":
        arr = np.asarray(sorted({(min(i, j), max(i, j)) for i, j in edges}), dtype=np.int64)
        if arr.size == 0:
            arr = np.empty((0, 2), dtype=np.int64)
        if arr.size and (arr.min() < 0 or arr.max() >= n):
            raise InvalidParameterError("edge endpoint outside 0..n-1")
        if arr.size and np.any(arr[:, 0] == arr[:, 1]):
            raise InvalidParameterError("self-loops are not allowed")
        return Network(n=n, edges=arr)

    @property
    def m(self) -> int:
        return self.edges.shape[0]

    @property
    def adjacency(self) -> sp.csr_matrix:
        """Symmetric 0/1 CSR adjacency matrix."""
        if "adj" not in self._cache:
            if self.m:
                i, j = self.edges[:, 0], self.edges[:, 1]
                data = np.ones(2 * self.m, dtype=np.float64)
                a = sp.csr_matrix(
                    (data, (np.concatenate([i, j]), np.concatenate([j, i]))),
                    shape=(self.n, self.n),
                )
            else:
                a = sp.csr_matrix((self.n, self.n), dtype=np.float64)
            a.sort_indices()
            self._cache["adj"] = a
        return self._cache["adj"]

    @property
    def degree(self) -> np.ndarray:
        if "deg" not in self._cache:
            deg = np.zeros(self.n, dtype=np.int64)
            if self.m:
                np.add.at(deg, self.edges[:, 0], 1)
                np.add.at(deg, self.edges[:, 1], 1)
            self._cache["deg"] = deg
        return self._cache["deg"]

    def neighbors(self, i: int) -> np.ndarray:
        a = self.adjacency
        return a.indices[a.indptr[i]:a.indptr[i + 1]]

    def has_edge(self, i: int, j: int) -> bool:
        return j in self.neighbors(i)


@dataclass(frozen=True)
class DependencyStructure:
    """Per-node dependency neighborhoods: self, friends, friends-of-friends."""

    n: int
    indptr: np.ndarray
    indices: np.ndarray  # sorted within each row

    def neighborhood(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def contains(self, i: int, j: int) -> bool:
        return j in self.neighborhood(i)

    @property
    def pair_matrix(self) -> sp.csr_matrix:
        """0/1 CSR matrix with entry (i, j) = 1 iff j is in D_i (incl. i=j)."""
        data = np.ones(self.indices.shape[0], dtype=np.float64)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))

    @property
    def n_pairs(self) -> int:
        return int(self.indices.shape[0])

    def sizes(self) -> np.ndarray:
        return np.diff(self.indptr)


def dependency_neighborhoods(net: Network) -> DependencyStructure:
    """D_i = {i} union friends union friends-of-friends."""
    a = net.adjacency
    eye = sp.identity(net.n, format="csr")
    reach = (eye + a + a @ a).tocsr()
    reach.sort_indices()
    return DependencyStructure(n=net.n, indptr=reach.indptr.copy(), indices=reach.indices.astype(np.int64))


def gen_preferential_attachment(n: int, m_attach: int, power: float = 1.0, seed: int = 0) -> Network:
    """Growing network: each arrival attaches m_attach edges with probability
    proportional to degree**power. Seed core is the complete graph on
    m_attach + 1 nodes, so the result is connected.
    """
    if m_attach < 1 or n < m_attach:
        raise InvalidParameterError("require n >= m_attach >= 1")
    rng = np.random.default_rng(seed)
    core = m_attach + 1
    if n <= core:
        return Network.from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)])
    edges = [(i, j) for i in range(core) for j in range(i + 1, core)]
    deg = np.zeros(n, dtype=np.float64)
    deg[:core] = m_attach
    for v in range(core, n):
        w = deg[:v] ** power
        w /= w.sum()
        targets = rng.choice(v, size=m_attach, replace=False, p=w)
        for t in targets:
            edges.append((int(t), v))
            deg[t] += 1
        deg[v] = m_attach
    return Network.from_edges(n, edges)


def gen_small_world(n: int, k_ring: int, p_rewire: float, seed: int = 0) -> Network:
    """Watts-Strogatz ring lattice with forward-edge rewiring.

    Edge count n*k_ring/2 is preserved: each rewire replaces one lattice edge
    by an edge to a uniformly chosen non-neighbor.
    """
    if k_ring % 2 != 0:
        raise InvalidParameterError("k_ring must be even")
    if not 0.0 <= p_rewire <= 1.0:
        raise InvalidParameterError("p_rewire must be in [0, 1]")
    if n <= k_ring:
        raise InvalidParameterError("require n > k_ring")
    rng = np.random.default_rng(seed)
    half = k_ring // 2
    adj = [set() for _ in range(n)]
    for i in range(n):
        for d in range(1, half + 1):
            j = (i + d) % n
            adj[i].add(j)
            adj[j].add(i)
    for d in range(1, half + 1):
        for i in range(n):
            j = (i + d) % n
            if rng.random() < p_rewire:
                # candidates: anything but i and current neighbors of i
                for _ in range(100):
                    t = int(rng.integers(n))
                    if t != i and t not in adj[i]:
                        adj[i].discard(j)
                        adj[j].discard(i)
                        adj[i].add(t)
                        adj[t].add(i)
                        break
    edges = [(i, j) for i in range(n) for j in adj[i] if i < j]
    return Network.from_edges(n, edges)


@dataclass(frozen=True)
class RateDiagnostic:
    k_max: int
    ratio: float  # K_max^2 / n
    rate_bracket: tuple  # (n / K_max^2, n), convergence-rate bounds
    warn: bool


def stein_rate_diagnostic(net: Network) -> RateDiagnostic:
    """Max-degree growth diagnostic: ratio K_max^2/n must be small for the
    normal-limit regime; the convergence rate lies in [n/K_max^2, n]."""
    if net.n < 1:
        raise InvalidParameterError("empty network")
    k_max = int(net.degree.max()) if net.n else 0
    ratio = k_max ** 2 / net.n
    lower = net.n / k_max ** 2 if k_max > 0 else float(net.n)
    return RateDiagnostic(k_max=k_max, ratio=ratio, rate_bracket=(min(lower, net.n), net.n), warn=ratio >= 1.0)


@dataclass(frozen=True)
class HubConditioning:
    sub: Network
    hubs: np.ndarray          # original ids of removed hubs
    kept: np.ndarray          # original ids of remaining nodes, in new order
    hub_tie_counts: np.ndarray  # per remaining node: number of removed hub ties


def condition_on_hubs(net: Network, degree_threshold: int) -> HubConditioning:
    """Remove nodes of degree >= threshold; each survivor carries its count of
    removed hub ties as a derived covariate."""
    if degree_threshold < 1:
        raise InvalidParameterError("degree_threshold must be >= 1")
    deg = net.degree
    hubs = np.flatnonzero(deg >= degree_threshold)
    kept = np.flatnonzero(deg < degree_threshold)
    if kept.size == 0:
        raise EmptySubnetworkError("every node qualifies as a hub")
    new_id = -np.ones(net.n, dtype=np.int64)
    new_id[kept] = np.arange(kept.size)
    hub_mask = np.zeros(net.n, dtype=bool)
    hub_mask[hubs] = True
    sub_edges = []
    hub_ties = np.zeros(kept.size, dtype=np.int64)
    for i, j in net.edges:
        hi, hj = hub_mask[i], hub_mask[j]
        if not hi and not hj:
            sub_edges.append((new_id[i], new_id[j]))
        elif hi != hj:
            survivor = j if hi else i
            hub_ties[new_id[survivor]] += 1
    return HubConditioning(
        sub=Network.from_edges(kept.size, sub_edges),
        hubs=hubs,
        kept=kept,
        hub_tie_counts=hub_ties,
    )


def read_edge_list(path) -> Network:
    """Read a whitespace-separated undirected edge list.

    Lines starting with '#' are ignored. When every label is a nonnegative
    integer the labels are used as node ids directly (so files written by
    write_edge_list round-trip with ids intact); otherwise labels map to
    dense ids in order of first appearance. Duplicate edges and self-loops
    are rejected.
    """
    raw_pairs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise InvalidParameterError(f"{path}:{lineno}: expected two labels per line")
            a, b = parts
            if a == b:
                raise InvalidParameterError(f"{path}:{lineno}: self-loop {a!r}")
            raw_pairs.append((lineno, a, b))
    numeric = all(a.isdigit() and b.isdigit() for _, a, b in raw_pairs)
    labels: dict = {}

    def ident(lab: str) -> int:
        if numeric:
            return int(lab)
        if lab not in labels:
            labels[lab] = len(labels)
        return labels[lab]

    pairs = []
    seen = set()
    for lineno, a, b in raw_pairs:
        ia, ib = ident(a), ident(b)
        key = (min(ia, ib), max(ia, ib))
        if key in seen:
            raise InvalidParameterError(f"{path}:{lineno}: duplicate edge {a!r} {b!r}")
        seen.add(key)
        pairs.append(key)
    n = (max(max(p) for p in pairs) + 1 if pairs else 0) if numeric else len(labels)
    return Network.from_edges(n, pairs)


def write_edge_list(net: Network, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"# undirected edge list, {net.n} nodes, {net.m} edges\n")
        for i, j in net.edges:
            fh.write(f"{i} {j}\n")
