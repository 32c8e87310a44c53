"""HDBSCAN* clustering (Campello, Moulavi & Sander) for 3-D point sets.

Exact mutual-reachability MST via dense Prim (O(n^2) time, O(n) memory),
single-linkage hierarchy, condensed tree and excess-of-mass selection.
"""
from __future__ import annotations

from collections import deque

import numpy as np
from numba import njit
from scipy.spatial import cKDTree

MIN_DIST = 1e-10   # floor on merge distances so that lambda = 1/d stays finite


def core_distances(points: np.ndarray, min_samples: int) -> np.ndarray:
    """Distance to the ``min_samples``-th nearest neighbour, the point itself counting as the first."""
    n = len(points)
    k = min(min_samples, n)
    if k <= 1:
        return np.zeros(n)
    d, _ = cKDTree(points).query(points, k=k)
    return d[:, -1]


@njit(cache=True)
def _prim(points, core):
    n = points.shape[0]
    in_tree = np.zeros(n, dtype=np.bool_)
    best = np.full(n, np.inf)
    parent = np.full(n, -1, dtype=np.int64)
    edges = np.empty((n - 1, 3))
    current = 0
    for step in range(n - 1):
        in_tree[current] = True
        cx, cy, cz = points[current, 0], points[current, 1], points[current, 2]
        cc = core[current]
        nxt = -1
        nbest = np.inf
        for j in range(n):
            if in_tree[j]:
                continue
            dx = points[j, 0] - cx
            dy = points[j, 1] - cy
            dz = points[j, 2] - cz
            d = np.sqrt(dx * dx + dy * dy + dz * dz)
            if core[j] > d:
                d = core[j]
            if cc > d:
                d = cc
            if d < best[j]:
                best[j] = d
                parent[j] = current
            # strict comparison keeps the lowest index on ties
            if best[j] < nbest:
                nbest = best[j]
                nxt = j
        edges[step, 0] = parent[nxt]
        edges[step, 1] = nxt
        edges[step, 2] = nbest
        current = nxt
    return edges


def mutual_reachability_mst(points: np.ndarray, core: np.ndarray) -> np.ndarray:
    """Prim's algorithm on the implicit complete mutual-reachability graph.

    Returns an ``(n-1, 3)`` array of ``(i, j, weight)`` sorted by weight, then
    by ``(min(i,j), max(i,j))``.
    """
    n = len(points)
    if n < 2:
        return np.zeros((0, 3))
    edges = _prim(np.ascontiguousarray(points, dtype=np.float64),
                  np.ascontiguousarray(core, dtype=np.float64))
    lo = np.minimum(edges[:, 0], edges[:, 1])
    hi = np.maximum(edges[:, 0], edges[:, 1])
    order = np.lexsort((hi, lo, edges[:, 2]))
    return np.column_stack([lo[order], hi[order], edges[order, 2]])


def single_linkage(mst: np.ndarray, n: int) -> np.ndarray:
    """Scipy-style linkage rows ``(left, right, distance, size)`` from sorted MST edges."""
    parent = np.arange(2 * n - 1)
    size = np.ones(2 * n - 1, dtype=np.int64)

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    out = np.zeros((n - 1, 4))
    nxt = n
    for k, (i, j, w) in enumerate(mst):
        a, b = find(int(i)), find(int(j))
        out[k] = (a, b, w, size[a] + size[b])
        parent[a] = parent[b] = nxt
        size[nxt] = size[a] + size[b]
        nxt += 1
    return out


def condense_tree(linkage: np.ndarray, n: int, min_cluster_size: int):
    """Collapse the single-linkage dendrogram; returns a list of rows
    ``(parent, child, lambda, child_size)`` where cluster labels start at ``n``."""
    root = 2 * n - 2

    def size_of(node):
        return 1 if node < n else int(linkage[node - n, 3])

    def leaves(node):
        out, stack = [], [node]
        while stack:
            x = stack.pop()
            if x < n:
                out.append(x)
            else:
                stack.append(int(linkage[x - n, 0]))
                stack.append(int(linkage[x - n, 1]))
        return out

    relabel = {root: n}
    next_label = n + 1
    rows = []
    queue = deque([root])
    while queue:
        node = queue.popleft()
        left, right, dist, _ = linkage[node - n]
        left, right = int(left), int(right)
        lam = 1.0 / max(dist, MIN_DIST)
        ls, rs = size_of(left), size_of(right)
        me = relabel[node]
        if ls >= min_cluster_size and rs >= min_cluster_size:
            for child, cs in ((left, ls), (right, rs)):
                relabel[child] = next_label
                rows.append((me, next_label, lam, cs))
                next_label += 1
                queue.append(child)
        else:
            for child, cs in ((left, ls), (right, rs)):
                if cs >= min_cluster_size:
                    relabel[child] = me
                    queue.append(child)
                else:
                    rows.extend((me, leaf, lam, 1) for leaf in leaves(child))
    return rows


def _select_eom(rows, n: int, allow_single_cluster: bool):
    birth = {n: 0.0}
    children = {}
    stability = {n: 0.0}
    for p, c, lam, cs in rows:
        if c >= n:
            birth[c] = lam
            stability.setdefault(c, 0.0)
            children.setdefault(p, []).append(c)
    for p, c, lam, cs in rows:
        stability[p] = stability.get(p, 0.0) + (lam - birth[p]) * cs
    nodes = sorted(stability, reverse=True)
    if not allow_single_cluster:
        nodes = [x for x in nodes if x != n]
    selected = {x: True for x in nodes}
    for node in nodes:
        kids = children.get(node, [])
        sub = sum(stability[k] for k in kids)
        if kids and sub > stability[node]:
            selected[node] = False
            stability[node] = sub
        else:
            stack = list(kids)
            while stack:
                x = stack.pop()
                if x in selected:
                    selected[x] = False
                stack.extend(children.get(x, []))
    return {x for x, s in selected.items() if s}, birth, children


def _epsilon_merge(chosen, birth, children, n: int, epsilon: float, allow_single_cluster: bool):
    """Replace clusters born below distance ``epsilon`` by their first ancestor born above it."""
    parent_of = {c: p for p, kids in children.items() for c in kids}
    out, done = set(), set()
    for leaf in sorted(chosen):
        if leaf in done:
            continue
        if leaf == n or 1.0 / birth[leaf] >= epsilon:
            out.add(leaf)
            continue
        node = leaf
        while True:
            par = parent_of[node]
            if par == n:
                node = par if allow_single_cluster else node
                break
            if 1.0 / birth[par] > epsilon:
                node = par
                break
            node = par
        out.add(node)
        stack = [node]
        while stack:
            x = stack.pop()
            done.add(x)
            stack.extend(children.get(x, []))
    # drop anything nested inside a promoted ancestor
    return {c for c in out if not any(_is_ancestor(a, c, parent_of) for a in out if a != c)}


def _is_ancestor(a, c, parent_of) -> bool:
    while c in parent_of:
        c = parent_of[c]
        if c == a:
            return True
    return False


def hdbscan(points, min_cluster_size: int = 50, min_samples: int = 10,
            allow_single_cluster: bool = True,
            cluster_selection_epsilon: float = 0.0) -> np.ndarray:
    """Cluster labels for each point; ``-1`` marks noise.

    ``cluster_selection_epsilon`` (metres) stops the excess-of-mass selection
    from splitting a cluster whose parts are closer than that distance.

    Cluster ids are contiguous, numbered by the smallest member index, so the
    labelling is canonical up to the input order.
    """
    if min_cluster_size < 2:
        raise ValueError("min_cluster_size must be >= 2")
    if min_samples < 1:
        raise ValueError("min_samples must be >= 1")
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    n = len(pts)
    labels = np.full(n, -1, dtype=np.int64)
    if n < min_cluster_size or n < 2:
        return labels
    core = core_distances(pts, min_samples)
    mst = mutual_reachability_mst(pts, core)
    rows = condense_tree(single_linkage(mst, n), n, min_cluster_size)
    chosen, birth, children = _select_eom(rows, n, allow_single_cluster)
    if cluster_selection_epsilon > 0 and chosen:
        chosen = _epsilon_merge(chosen, birth, children, n, cluster_selection_epsilon,
                                allow_single_cluster)
    if not chosen:
        return labels

    cluster_parent = {c: p for p, c, _, _ in rows if c >= n}
    root_max_lambda = max((lam for p, c, lam, _ in rows if p == n), default=0.0)
    if cluster_selection_epsilon > 0:
        root_max_lambda = min(root_max_lambda, 1.0 / cluster_selection_epsilon)
    raw = np.full(n, -1, dtype=np.int64)
    for p, c, lam, _ in rows:
        if c >= n:
            continue
        node = p
        while node not in chosen and node in cluster_parent:
            node = cluster_parent[node]
        if node in chosen:
            if node == n and lam < root_max_lambda:
                continue   # fell out of the root before its densest split: noise
            raw[c] = node
    # canonical numbering: by smallest member index
    order = {}
    for i in range(n):
        if raw[i] >= 0 and raw[i] not in order:
            order[raw[i]] = len(order)
    for i in range(n):
        if raw[i] >= 0:
            labels[i] = order[raw[i]]
    return labels
