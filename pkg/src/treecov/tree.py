"""Spanning trees over covariance indices and best tree approximations.

The optimal tree approximation of a covariance matrix is the maximum-weight
spanning tree under pairwise mutual-information edge weights, completed to a
full covariance by the path-product rule. An exhaustive enumeration over all
labelled spanning trees doubles as the correctness oracle for small
dimensions.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .gaussian import (
    CovMatrix,
    NotPositiveDefiniteError,
    NumericalError,
    kl_tree_simplified,
    pairwise_mutual_information,
)

TREE_KL_CLAMP = 1e-9
BRUTE_FORCE_MAX_VERTICES = 8


def _normalize_edge(edge: Sequence[int]) -> tuple[int, int]:
    u, v = int(edge[0]), int(edge[1])
    return (u, v) if u < v else (v, u)


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, x: int, y: int) -> bool:
        rx, ry = self.find(x), self.find(y)
        if rx == ry:
            return False
        self.parent[rx] = ry
        return True


@dataclass(frozen=True, eq=False)
class SpanningTree:
    """Undirected spanning tree on vertices 0..p-1.

    Exactly p - 1 edges, connected and acyclic. Edges are normalized to
    (smaller, larger) pairs and stored sorted, so equal trees have equal
    edge tuples.
    """

    num_vertices: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        p = self.num_vertices
        if p < 1:
            raise ValueError(f"need at least one vertex, got {p}")
        normalized = []
        for edge in self.edges:
            u, v = _normalize_edge(edge)
            if u == v:
                raise ValueError(f"self-loop at vertex {u}")
            if not (0 <= u and v < p):
                raise ValueError(f"edge ({u}, {v}) out of range for {p} vertices")
            normalized.append((u, v))
        normalized.sort()
        if len(normalized) != p - 1:
            raise ValueError(
                f"spanning tree on {p} vertices needs {p - 1} edges, got {len(normalized)}"
            )
        if len(set(normalized)) != len(normalized):
            raise ValueError("duplicate edge")
        uf = _UnionFind(p)
        for u, v in normalized:
            if not uf.union(u, v):
                raise ValueError(f"edge ({u}, {v}) closes a cycle")
        # p - 1 edges and no cycle together imply connectivity.
        object.__setattr__(self, "edges", tuple(normalized))

    def adjacency(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.num_vertices)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        return adj


@dataclass(frozen=True, eq=False)
class TreeApproxResult:
    """A spanning tree, its marginal-matching covariance, and the KL cost."""

    tree: SpanningTree
    cov: CovMatrix
    kl: float


def edge_set_equal(a: SpanningTree, b: SpanningTree) -> bool:
    """Whether two trees on the same vertex set have identical edges."""
    if a.num_vertices != b.num_vertices:
        raise ValueError(
            f"vertex-count mismatch: {a.num_vertices} vs {b.num_vertices}"
        )
    return a.edges == b.edges


def prufer_decode(sequence: Iterable[int], num_vertices: int) -> tuple[tuple[int, int], ...]:
    """Edges of the labelled tree encoded by a length-(p-2) vertex sequence.

    Every labelled tree on p vertices corresponds to exactly one sequence,
    so iterating over all p^(p-2) sequences enumerates all trees. The empty
    sequence at p = 2 decodes to the single edge (0, 1).
    """
    seq = [int(s) for s in sequence]
    p = num_vertices
    if p < 2:
        raise ValueError(f"need at least two vertices, got {p}")
    if len(seq) != p - 2:
        raise ValueError(f"sequence length {len(seq)} != {p - 2}")
    if any(not 0 <= s < p for s in seq):
        raise ValueError("sequence entry out of range")
    degree = [1] * p
    for s in seq:
        degree[s] += 1
    leaves = [v for v in range(p) if degree[v] == 1]
    heapq.heapify(leaves)
    edges = []
    for s in seq:
        leaf = heapq.heappop(leaves)
        edges.append((leaf, s) if leaf < s else (s, leaf))
        degree[s] -= 1
        if degree[s] == 1:
            heapq.heappush(leaves, s)
    u = heapq.heappop(leaves)
    v = heapq.heappop(leaves)
    edges.append((u, v) if u < v else (v, u))
    return tuple(edges)


def _path_product_corr(
    num_vertices: int,
    edges: Sequence[tuple[int, int]],
    rho: Mapping[tuple[int, int], float],
) -> np.ndarray:
    """Correlation matrix whose (u, v) entry is the product of edge
    correlations along the unique tree path from u to v."""
    p = num_vertices
    adj: list[list[int]] = [[] for _ in range(p)]
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    corr = np.empty((p, p))
    for root in range(p):
        prod = corr[root]
        prod.fill(0.0)
        prod[root] = 1.0
        stack = [root]
        seen = [False] * p
        seen[root] = True
        while stack:
            x = stack.pop()
            for y in adj[x]:
                if not seen[y]:
                    seen[y] = True
                    key = (x, y) if x < y else (y, x)
                    prod[y] = prod[x] * rho[key]
                    stack.append(y)
    return corr


def _edge_correlations(
    sigma_entries: np.ndarray, std: np.ndarray, edges: Sequence[tuple[int, int]]
) -> dict[tuple[int, int], float]:
    return {
        (u, v): float(sigma_entries[u, v]) / float(std[u] * std[v]) for u, v in edges
    }


def _tree_cov_entries(
    sigma_entries: np.ndarray, std: np.ndarray, edges: Sequence[tuple[int, int]]
) -> np.ndarray:
    p = sigma_entries.shape[0]
    rho = _edge_correlations(sigma_entries, std, edges)
    corr = _path_product_corr(p, edges, rho)
    tilde = corr * np.outer(std, std)
    tilde = (tilde + tilde.T) / 2.0
    # Variances and tree-edge covariances are copied verbatim; the path
    # products only fill the remaining entries.
    for u in range(p):
        tilde[u, u] = sigma_entries[u, u]
    for u, v in edges:
        tilde[u, v] = sigma_entries[u, v]
        tilde[v, u] = sigma_entries[u, v]
    return tilde


def tree_covariance(sigma: CovMatrix, tree: SpanningTree) -> CovMatrix:
    """Marginal-matching covariance of ``sigma`` with the tree's Markov structure.

    Variances and tree-edge covariances equal those of ``sigma``; every other
    entry is sqrt(sigma_uu * sigma_vv) times the product of edge correlations
    along the unique tree path between u and v. The inverse of the result is
    sparse outside the tree.

    Parameters
    ----------
    sigma : CovMatrix
        Source covariance, dimension matching the tree's vertex count.
    tree : SpanningTree
        Markov structure to impose.

    Returns
    -------
    CovMatrix
        The completed covariance; positive definite for any valid input.
    """
    if tree.num_vertices != sigma.dim:
        raise ValueError(
            f"vertex count {tree.num_vertices} != covariance dimension {sigma.dim}"
        )
    std = np.sqrt(np.diag(sigma.entries))
    tilde = _tree_cov_entries(sigma.entries, std, tree.edges)
    try:
        return CovMatrix(tilde)
    except NotPositiveDefiniteError as exc:
        raise NumericalError(
            "tree covariance lost positive definiteness; input assumptions violated"
        ) from exc


def _clamp_tree_kl(kl: float) -> float:
    if kl >= 0.0:
        return kl
    if kl >= -TREE_KL_CLAMP:
        return 0.0
    raise NumericalError(f"tree approximation KL {kl:.6e} negative beyond roundoff")


def chow_liu(sigma: CovMatrix) -> TreeApproxResult:
    """Best tree approximation of ``sigma`` in KL divergence.

    Runs Kruskal on the complete graph with pairwise mutual-information
    weights, maximizing total weight. Ties are broken deterministically by
    sorting candidate edges on (weight descending, smaller vertex, larger
    vertex). The returned covariance matches ``sigma`` on all variances and
    tree-edge covariances, and ``kl`` is the approximation divergence.

    Parameters
    ----------
    sigma : CovMatrix
        Covariance to approximate, dimension at least 2.
    """
    p = sigma.dim
    if p < 2:
        raise ValueError(f"need at least two vertices, got {p}")
    candidates = []
    for u in range(p):
        for v in range(u + 1, p):
            candidates.append((pairwise_mutual_information(sigma, u, v), u, v))
    candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
    uf = _UnionFind(p)
    edges = []
    for _, u, v in candidates:
        if uf.union(u, v):
            edges.append((u, v))
            if len(edges) == p - 1:
                break
    tree = SpanningTree(p, tuple(edges))
    cov = tree_covariance(sigma, tree)
    kl = _clamp_tree_kl(kl_tree_simplified(sigma, cov))
    return TreeApproxResult(tree=tree, cov=cov, kl=kl)


def brute_force_optimal_tree(sigma: CovMatrix) -> TreeApproxResult:
    """Exhaustive minimum-KL spanning tree, the small-dimension oracle.

    Decodes every length-(p-2) vertex sequence into a labelled tree (each
    tree appears exactly once), builds each marginal-matching covariance,
    and returns the argmin of the approximation divergence. Exact ties are
    broken by lexicographic edge-list order. Rejects p > 8, where the
    p^(p-2) enumeration stops being practical.
    """
    p = sigma.dim
    if p < 2:
        raise ValueError(f"need at least two vertices, got {p}")
    if p > BRUTE_FORCE_MAX_VERTICES:
        raise ValueError(
            f"exhaustive search supports p <= {BRUTE_FORCE_MAX_VERTICES}, got {p}"
        )
    entries = sigma.entries
    std = np.sqrt(np.diag(entries))
    logdet_sigma = sigma.log_det
    best_kl = np.inf
    best_edges: tuple[tuple[int, int], ...] | None = None
    for seq in itertools.product(range(p), repeat=p - 2):
        edges = prufer_decode(seq, p)
        tilde = _tree_cov_entries(entries, std, edges)
        sign, logdet_tilde = np.linalg.slogdet(tilde)
        if sign <= 0:
            raise NumericalError("candidate tree covariance not positive definite")
        kl = 0.5 * (logdet_tilde - logdet_sigma)
        edges = tuple(sorted(edges))
        if kl < best_kl or (kl == best_kl and edges < best_edges):
            best_kl = kl
            best_edges = edges
    tree = SpanningTree(p, best_edges)
    cov = tree_covariance(sigma, tree)
    kl = _clamp_tree_kl(kl_tree_simplified(sigma, cov))
    return TreeApproxResult(tree=tree, cov=cov, kl=kl)
