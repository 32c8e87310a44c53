"""Quadric-error-metric edge contraction (Garland & Heckbert) for triangle meshes."""
from __future__ import annotations

import heapq
from typing import Dict, List, Set

import numpy as np

from .geom import EPS_AREA
from .mesh import TriMesh

BOUNDARY_WEIGHT = 1e3
COND_LIMIT = 1e8


def _plane_quadric(n: np.ndarray, d: float, w: float) -> np.ndarray:
    p = np.append(n, d)
    return w * np.outer(p, p)


def _initial_quadrics(V: np.ndarray, F: np.ndarray) -> np.ndarray:
    Q = np.zeros((len(V), 4, 4))
    tri = V[F]
    cr = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    area = 0.5 * np.linalg.norm(cr, axis=1)
    n = cr / np.maximum(2 * area, 1e-300)[:, None]
    d = -np.sum(n * tri[:, 0], axis=1)
    p = np.column_stack([n, d])
    Kp = area[:, None, None] * p[:, :, None] * p[:, None, :]
    for k in range(3):
        np.add.at(Q, F[:, k], Kp)
    # boundary edges: penalty planes perpendicular to the face through the edge
    edge_faces: Dict[tuple, List[int]] = {}
    for fi, f in enumerate(F):
        for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            edge_faces.setdefault((min(a, b), max(a, b)), []).append(fi)
    for (a, b), fs in edge_faces.items():
        if len(fs) != 1:
            continue
        e = V[b] - V[a]
        L = np.linalg.norm(e)
        if L == 0:
            continue
        m = np.cross(e, n[fs[0]])
        m /= np.linalg.norm(m)
        Kb = _plane_quadric(m, -float(m @ V[a]), BOUNDARY_WEIGHT * L * L)
        Q[a] += Kb
        Q[b] += Kb
    return Q


def _error(Q: np.ndarray, v: np.ndarray) -> float:
    h = np.append(v, 1.0)
    return float(h @ Q @ h)


def _best_position(Q: np.ndarray, va: np.ndarray, vb: np.ndarray):
    cands = [va, vb, 0.5 * (va + vb)]
    A = Q[:3, :3]
    if np.linalg.cond(A) < COND_LIMIT:
        cands.append(np.linalg.solve(A, -Q[:3, 3]))
    errs = [_error(Q, c) for c in cands]
    k = int(np.argmin(errs))
    return max(errs[k], 0.0), cands[k]


def simplify_qem(mesh: TriMesh, target_faces: int) -> TriMesh:
    """Contract edges by minimal quadric error until ``len(faces) <= target_faces``.

    Contractions that would flip a face (normal turning by 90 degrees or
    more), create a sliver below the area threshold, or break the link
    condition are skipped. Returns a compacted mesh.
    """
    if target_faces < 1:
        raise ValueError("target_faces must be >= 1")
    if len(mesh.faces) <= target_faces:
        return mesh
    V = mesh.vertices.copy()
    F = mesh.faces.copy()
    Q = _initial_quadrics(V, F)
    alive_face = np.ones(len(F), dtype=bool)
    vfaces: List[Set[int]] = [set() for _ in range(len(V))]
    for fi, f in enumerate(F):
        for v in f:
            vfaces[v].add(fi)
    stamp = np.zeros(len(V), dtype=np.int64)
    alive_vert = np.ones(len(V), dtype=bool)
    n_faces = len(F)

    def neighbours(a: int) -> Set[int]:
        out = set()
        for fi in vfaces[a]:
            out.update(int(x) for x in F[fi])
        out.discard(a)
        return out

    heap = []

    def push(a: int, b: int):
        if a > b:
            a, b = b, a
        cost, pos = _best_position(Q[a] + Q[b], V[a], V[b])
        heapq.heappush(heap, (cost, a, b, int(stamp[a]), int(stamp[b]), tuple(pos)))

    seen = set()
    for f in F:
        for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            key = (min(a, b), max(a, b))
            if key not in seen:
                seen.add(key)
                push(int(key[0]), int(key[1]))

    while n_faces > target_faces and heap:
        cost, a, b, sa, sb, pos = heapq.heappop(heap)
        if not (alive_vert[a] and alive_vert[b]) or stamp[a] != sa or stamp[b] != sb:
            continue
        shared = vfaces[a] & vfaces[b]
        if not shared:
            continue
        # link condition: common neighbours are exactly the apexes of shared faces
        apex = set()
        for fi in shared:
            apex.update(int(x) for x in F[fi] if x != a and x != b)
        if neighbours(a) & neighbours(b) != apex:
            continue
        p = np.asarray(pos)
        ok = True
        for fi in (vfaces[a] | vfaces[b]) - shared:
            tri = V[F[fi]].copy()
            old = np.cross(tri[1] - tri[0], tri[2] - tri[0])
            for k in range(3):
                if F[fi, k] == a or F[fi, k] == b:
                    tri[k] = p
            new = np.cross(tri[1] - tri[0], tri[2] - tri[0])
            if 0.5 * np.linalg.norm(new) <= 10 * EPS_AREA or float(old @ new) <= 0.0:
                ok = False
                break
        if not ok:
            continue
        # contract b into a
        for fi in shared:
            alive_face[fi] = False
            for v in F[fi]:
                vfaces[v].discard(fi)
            n_faces -= 1
        for fi in vfaces[b]:
            F[fi][F[fi] == b] = a
            vfaces[a].add(fi)
        vfaces[b] = set()
        alive_vert[b] = False
        V[a] = p
        Q[a] = Q[a] + Q[b]
        stamp[a] += 1
        stamp[b] += 1
        for nb in neighbours(a):
            push(a, nb)

    faces = F[alive_face]
    used, inv = np.unique(faces, return_inverse=True)
    return TriMesh(V[used], inv.reshape(-1, 3))
