"""Clustered multitask network model: topology, combination weights, targets.

A network is a set of N nodes with symmetric neighbor relations, partitioned
into L clusters.  Each cluster estimates its own target vector; targets of
different clusters are scaled copies of a shared base vector.  Intra-cluster
combination weights (alpha) mix intermediate estimates inside a cluster,
inter-cluster weights (gamma) couple estimates of adjacent clusters.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


class TopologyError(ValueError):
    """Raised for structurally invalid network descriptions."""


@dataclass(frozen=True)
class Topology:
    """Validated clustered network. Immutable; safe to share across trials.

    neighbors[k] always contains k itself.  Cluster labels are 0-based
    internally (files use 1-based labels).
    """

    n_nodes: int
    neighbors: tuple  # tuple of frozensets, self-loop included
    cluster: tuple    # per-node cluster id, 0..n_clusters-1
    n_clusters: int

    def intra_neighbors(self, k: int) -> list:
        """Neighbors of k in the same cluster, k included, sorted."""
        return sorted(m for m in self.neighbors[k] if self.cluster[m] == self.cluster[k])

    def inter_neighbors(self, k: int) -> list:
        """Neighbors of k in other clusters, sorted."""
        return sorted(m for m in self.neighbors[k] if self.cluster[m] != self.cluster[k])

    def cluster_members(self, c: int) -> list:
        return [k for k in range(self.n_nodes) if self.cluster[k] == c]


@dataclass(frozen=True)
class CombinationWeights:
    """alpha[m, k]: intra-cluster combiner weights (columns sum to 1).
    gamma[k, l]: inter-cluster coupling weights (non-empty rows sum to 1)."""

    alpha: np.ndarray
    gamma: np.ndarray


@dataclass(frozen=True)
class TargetSet:
    """Per-node true parameter vectors w*_k = (1 + offset[cluster(k)]) * base."""

    w_star: np.ndarray          # (N, M)
    base: np.ndarray            # (M,)
    offsets: tuple              # per-cluster scalar

    @property
    def stacked(self) -> np.ndarray:
        """Targets stacked node-major into a single (N*M,) vector."""
        return self.w_star.reshape(-1)


def _connected(members: list, adj: dict) -> bool:
    if not members:
        return False
    seen = {members[0]}
    stack = [members[0]]
    member_set = set(members)
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if v in member_set and v not in seen:
                seen.add(v)
                stack.append(v)
    return seen == member_set


def build_topology(edges, clusters) -> Topology:
    """Build a validated Topology from an edge list and per-node cluster labels.

    ``edges`` is an iterable of (i, j) pairs, 0-based; ``clusters`` a sequence
    of 0-based labels, one per node.  Self-loops are added to every neighbor
    set.  Raises TopologyError on asymmetric input, empty clusters, or a
    cluster whose intra-cluster subgraph is disconnected.
    """
    clusters = list(clusters)
    n = len(clusters)
    if n < 1:
        raise TopologyError("network needs at least one node")
    adj = {k: set() for k in range(n)}
    for i, j in edges:
        if not (0 <= i < n and 0 <= j < n):
            raise TopologyError(f"edge ({i},{j}) references unknown node")
        adj[i].add(j)
        adj[j].add(i)
    n_clusters = max(clusters) + 1
    for c in range(n_clusters):
        members = [k for k in range(n) if clusters[k] == c]
        if not members:
            raise TopologyError(f"cluster {c} is empty")
        intra_adj = {k: {m for m in adj[k] if clusters[m] == c} for k in members}
        if not _connected(members, intra_adj):
            raise TopologyError(f"cluster {c} intra-cluster subgraph is disconnected")
    neighbors = tuple(frozenset(adj[k] | {k}) for k in range(n))
    return Topology(n_nodes=n, neighbors=neighbors, cluster=tuple(clusters),
                    n_clusters=n_clusters)


def build_topology_from_adjacency(adjacency, clusters) -> Topology:
    """Same as build_topology but from per-node neighbor lists.

    The adjacency must be symmetric (m in adjacency[k] iff k in adjacency[m]);
    asymmetry is an error rather than silently symmetrized.
    """
    n = len(adjacency)
    for k in range(n):
        for m in adjacency[k]:
            if m != k and k not in adjacency[m]:
                raise TopologyError(f"asymmetric adjacency: {k}->{m} has no reverse edge")
    edges = [(k, m) for k in range(n) for m in adjacency[k] if m != k]
    return build_topology(edges, clusters)


def uniform_combination_weights(topo: Topology) -> np.ndarray:
    """Uniform intra-cluster rule: alpha[m, k] = 1/|N_k ∩ C(k)| for member m."""
    n = topo.n_nodes
    alpha = np.zeros((n, n))
    for k in range(n):
        members = topo.intra_neighbors(k)
        w = 1.0 / len(members)
        for m in members:
            alpha[m, k] = w
    return alpha


def inter_cluster_weights(topo: Topology) -> np.ndarray:
    """gamma[k, l] = 1/|N_k \\ C(k)|; rows with no inter-cluster neighbor stay zero."""
    n = topo.n_nodes
    gamma = np.zeros((n, n))
    for k in range(n):
        others = topo.inter_neighbors(k)
        if others:
            w = 1.0 / len(others)
            for l in others:
                gamma[k, l] = w
    return gamma


def combination_weights(topo: Topology) -> CombinationWeights:
    return CombinationWeights(alpha=uniform_combination_weights(topo),
                              gamma=inter_cluster_weights(topo))


def generate_targets(topo: Topology, m_taps: int, offsets, seed) -> TargetSet:
    """Draw the shared base vector uniform on [0,1) and scale it per cluster.

    Nodes of one cluster share the identical array contents (bitwise), since
    each cluster's target is computed once and broadcast to its members.
    """
    offsets = tuple(float(h) for h in offsets)
    if len(offsets) != topo.n_clusters:
        raise TopologyError(f"expected {topo.n_clusters} offsets, got {len(offsets)}")
    if m_taps < 1:
        raise ValueError("filter length must be >= 1")
    rng = np.random.default_rng(seed)
    base = rng.random(m_taps)
    per_cluster = [(1.0 + h) * base for h in offsets]
    w_star = np.empty((topo.n_nodes, m_taps))
    for k in range(topo.n_nodes):
        w_star[k] = per_cluster[topo.cluster[k]]
    return TargetSet(w_star=w_star, base=base, offsets=offsets)


def load_topology_file(path) -> tuple:
    """Load a topology preset file.

    The format is a JSON document with fields::

        {"nodes": 7,
         "edges": [[1, 2], ...],      # 1-based node pairs, symmetric by construction
         "clusters": [1, 1, 1, 2, 2, 3, 3],   # 1-based labels, one per node
         "offsets": [0.025, -0.05, 0.075]}    # per-cluster target offsets

    Returns (Topology, offsets).
    """
    with open(path) as fh:
        doc = json.load(fh)
    try:
        n = int(doc["nodes"])
        edges = [(int(i) - 1, int(j) - 1) for i, j in doc["edges"]]
        clusters = [int(c) - 1 for c in doc["clusters"]]
        offsets = [float(h) for h in doc["offsets"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise TopologyError(f"malformed topology file {path}: {exc}") from exc
    if len(clusters) != n:
        raise TopologyError(f"{path}: {n} nodes but {len(clusters)} cluster labels")
    topo = build_topology(edges, clusters)
    if len(offsets) != topo.n_clusters:
        raise TopologyError(f"{path}: {topo.n_clusters} clusters but {len(offsets)} offsets")
    return topo, offsets
