"""Compiled kernels shared by the samplers and the exact oracles.

All kernels take plain arrays: ``edges`` is an ``(m, 2)`` int32 array of node
pairs and ``node_of`` maps every node to the node it is fused with (itself
unless it sits on a wired arc). Cluster labels are canonicalized to the least
node index in the cluster.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _find(parent, x):  # type: ignore[no-untyped-def]
    # Path halving.
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


@njit(cache=True, nogil=True)
def _union(parent, size, a, b):  # type: ignore[no-untyped-def]
    ra = _find(parent, a)
    rb = _find(parent, b)
    if ra == rb:
        return False
    if size[ra] < size[rb]:
        ra, rb = rb, ra
    parent[rb] = ra
    size[ra] += size[rb]
    return True


@njit(cache=True, nogil=True)
def _label_into(n_nodes, edges, bonds, node_of, parent, size, labels):  # type: ignore[no-untyped-def]
    for i in range(n_nodes):
        parent[i] = i
        size[i] = 1
    for i in range(n_nodes):
        if node_of[i] != i:
            _union(parent, size, i, node_of[i])
    for k in range(edges.shape[0]):
        if bonds[k]:
            _union(parent, size, edges[k, 0], edges[k, 1])
    # Roots to least member: nodes are visited in increasing order.
    least = np.full(n_nodes, -1, dtype=np.int32)
    count = 0
    for i in range(n_nodes):
        r = _find(parent, i)
        if least[r] < 0:
            least[r] = i
            count += 1
        labels[i] = least[r]
    return count


@njit(cache=True, nogil=True)
def label_components(n_nodes, edges, bonds, node_of):  # type: ignore[no-untyped-def]
    """Canonical cluster labels and cluster count for one bond configuration."""
    parent = np.empty(n_nodes, dtype=np.int32)
    size = np.empty(n_nodes, dtype=np.int32)
    labels = np.empty(n_nodes, dtype=np.int32)
    count = _label_into(n_nodes, edges, bonds, node_of, parent, size, labels)
    return labels, count


@njit(cache=True, nogil=True)
def label_batch(n_nodes, edges, bonds, node_of):  # type: ignore[no-untyped-def]
    """Row-wise :func:`label_components` over a ``(batch, m)`` bond array."""
    n_rows = bonds.shape[0]
    parent = np.empty(n_nodes, dtype=np.int32)
    size = np.empty(n_nodes, dtype=np.int32)
    labels = np.empty((n_rows, n_nodes), dtype=np.int32)
    counts = np.empty(n_rows, dtype=np.int32)
    for row in range(n_rows):
        counts[row] = _label_into(n_nodes, edges, bonds[row], node_of, parent, size, labels[row])
    return labels, counts


@njit(cache=True, nogil=True)
def sw_update(n_nodes, edges, spins, node_of, is_ghost, p, u_edges, u_flip):  # type: ignore[no-untyped-def]
    """One Swendsen-Wang update driven by pre-drawn uniforms.

    Aligned edges open when ``u_edges[k] < p``. Clusters holding a ghost take
    spin ``+1``; every other cluster takes ``+1`` when ``u_flip[label] < 0.5``.

    Returns:
        New spins, the bonds of the update and their cluster labels.
    """
    m = edges.shape[0]
    bonds = np.zeros(m, dtype=np.bool_)
    for k in range(m):
        a = edges[k, 0]
        b = edges[k, 1]
        if spins[a] == spins[b] and u_edges[k] < p:
            bonds[k] = True
    labels, _ = label_components(n_nodes, edges, bonds, node_of)

    pinned = np.zeros(n_nodes, dtype=np.bool_)
    for i in range(n_nodes):
        if is_ghost[i]:
            pinned[labels[i]] = True
    new_spins = np.empty(n_nodes, dtype=np.int8)
    for i in range(n_nodes):
        root = labels[i]
        if pinned[root] or u_flip[root] < 0.5:
            new_spins[i] = 1
        else:
            new_spins[i] = -1
    return new_spins, bonds, labels


@njit(cache=True, nogil=True)
def fk_chunk(n_nodes, edges, node_of, p, q, start, count):  # type: ignore[no-untyped-def]
    """Labels, cluster counts and weights of configurations ``start .. start+count-1``.

    Bit ``k`` of the configuration index is the state of edge ``k``; the weight
    is ``p**o * (1-p)**c * q**k``.
    """
    m = edges.shape[0]
    parent = np.empty(n_nodes, dtype=np.int32)
    size = np.empty(n_nodes, dtype=np.int32)
    labels = np.empty((count, n_nodes), dtype=np.int32)
    clusters = np.empty(count, dtype=np.int32)
    weights = np.empty(count, dtype=np.float64)
    bonds = np.empty(m, dtype=np.bool_)
    for row in range(count):
        index = start + row
        n_open = 0
        for k in range(m):
            bonds[k] = (index >> k) & 1
            n_open += bonds[k]
        k_clusters = _label_into(n_nodes, edges, bonds, node_of, parent, size, labels[row])
        clusters[row] = k_clusters
        weights[row] = p**n_open * (1.0 - p) ** (m - n_open) * q**k_clusters
    return labels, clusters, weights


@njit(cache=True, nogil=True)
def crossing_batch(n_nodes, edges, subset, left, right, bonds):  # type: ignore[no-untyped-def]
    """Row-wise: is some ``left`` node joined to some ``right`` node by open
    edges taken from ``subset`` only?"""
    n_rows = bonds.shape[0]
    parent = np.empty(n_nodes, dtype=np.int32)
    size = np.empty(n_nodes, dtype=np.int32)
    result = np.zeros(n_rows, dtype=np.bool_)
    for row in range(n_rows):
        for i in range(n_nodes):
            parent[i] = i
            size[i] = 1
        for j in range(subset.shape[0]):
            k = subset[j]
            if bonds[row, k]:
                _union(parent, size, edges[k, 0], edges[k, 1])
        for a in range(left.shape[0]):
            ra = _find(parent, left[a])
            for b in range(right.shape[0]):
                if ra == _find(parent, right[b]):
                    result[row] = True
                    break
            if result[row]:
                break
    return result
