"""Fault lines, crosses and contours of hard-core configurations.

Diamond vertices are the edges of the region, addressed by doubled midpoint
coordinates: the horizontal edge (x,y)-(x+1,y) is (2x+1, 2y) and the vertical
edge (x,y)-(x,y+1) is (2x, 2y+1).  Two diamond vertices are adjacent when
their edges are perpendicular and share an endpoint w; the diamond edge is
forward when it turns clockwise around an even w or counterclockwise around
an odd w.  Under (X, Y) -> ((X+Y-1)/2, (X-Y+1)/2) forward diamond edges are
exactly the legal steps of the Manhattan lattice.

A grid fault line is a simple diamond path through open edges (both
endpoints empty) from the top row to the bottom row, or from the left column
to the right column, that switches between forward and backward edges at
most once.  The switch happens where the path touches an edge without
crossing it (a cusp); that diamond vertex is the alternation point.
"""

from __future__ import annotations

import enum
import json
from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Sequence

import numba as nb
import numpy as np

from .errors import ContractError
from .hardcore import Configuration, Region, is_independent
from .lattice import Direction, direction_between
from .walks import is_taxi_walk

Coord = tuple[int, int]

# G^2 displacements joining same-parity vertices
SAME_PARITY_STEPS = ((1, 1), (1, -1), (-1, 1), (-1, -1), (2, 0), (-2, 0), (0, 2), (0, -2))
_SP_DX = np.array([s[0] for s in SAME_PARITY_STEPS], dtype=np.int64)
_SP_DY = np.array([s[1] for s in SAME_PARITY_STEPS], dtype=np.int64)

# search modes: 0 start, 1 forward, 2 backward, 3 forward then backward, 4 backward then forward
_TRANS = np.array([[2, 1], [3, 1], [2, 4], [3, -1], [-1, 4]], dtype=np.int64)
_ALT = np.array([0, 0, 0, 1, 1], dtype=np.int64)


class TopologyKind(enum.Enum):
    FAULT = "FaultLine"
    EVEN_CROSS = "EvenCross"
    ODD_CROSS = "OddCross"


# ---------------------------------------------------------------------------
# diamond graph


def manhattan_point(X: int, Y: int) -> Coord:
    return ((X + Y - 1) // 2, (X - Y + 1) // 2)


@dataclass(frozen=True, eq=False)
class DiamondGraph:
    region: Region
    coords: tuple[Coord, ...]
    index: dict
    ends: np.ndarray  # (n, 2) region vertex indices
    nbr: np.ndarray  # (n, 4) neighbour diamond index or -1
    fwd: np.ndarray  # (n, 4) 1 if v -> nbr is forward
    disp: np.ndarray  # (n, 4, 2) doubled-coordinate displacement to the neighbour

    @property
    def size(self) -> int:
        return len(self.coords)

    def is_horizontal(self, v: int) -> bool:
        return self.coords[v][0] % 2 == 1

    def slot(self, a: int, b: int) -> int:
        for k in range(4):
            if self.nbr[a, k] == b:
                return k
        raise ContractError(f"diamond vertices {self.coords[a]} and {self.coords[b]} are not adjacent")

    def is_forward(self, a: int, b: int) -> bool:
        return bool(self.fwd[a, self.slot(a, b)])

    def open_mask(self, c: Configuration) -> np.ndarray:
        occ = _occupancy(c)
        return (occ[self.ends[:, 0]] == 0) & (occ[self.ends[:, 1]] == 0)

    def edge(self, v: int) -> tuple[int, int]:
        return int(self.ends[v, 0]), int(self.ends[v, 1])


def _edge_ends(region: Region, X: int, Y: int) -> tuple[int, int]:
    if X % 2 == 1:
        return region.index((X - 1) // 2, Y // 2), region.index((X + 1) // 2, Y // 2)
    return region.index(X // 2, (Y - 1) // 2), region.index(X // 2, (Y + 1) // 2)


@lru_cache(maxsize=64)
def diamond_graph(region: Region) -> DiamondGraph:
    w, h = region.width, region.height
    torus = region.is_torus
    if torus and (w < 4 or h < 4):
        raise ContractError("diamond graphs on tori need both sides at least 4")
    pts = []
    for x in range(w if torus else w - 1):
        for y in range(h):
            pts.append((2 * x + 1, 2 * y))
    for x in range(w):
        for y in range(h if torus else h - 1):
            pts.append((2 * x, 2 * y + 1))
    pts.sort()
    index = {p: i for i, p in enumerate(pts)}
    n = len(pts)
    ends = np.array([_edge_ends(region, X, Y) for X, Y in pts], dtype=np.int64).reshape(n, 2)
    nbr = np.full((n, 4), -1, dtype=np.int64)
    fwd = np.zeros((n, 4), dtype=np.int64)
    disp = np.zeros((n, 4, 2), dtype=np.int64)
    for i, (X, Y) in enumerate(pts):
        for k, (dX, dY) in enumerate(((1, 1), (1, -1), (-1, 1), (-1, -1))):
            BX, BY = X + dX, Y + dY
            key = (BX % (2 * w), BY % (2 * h)) if torus else (BX, BY)
            if key not in index:
                continue
            # shared endpoint in doubled coordinates, then the turn around it
            wX, wY = (BX, Y) if X % 2 == 1 else (X, BY)
            a = (X - wX, Y - wY)
            b = (BX - wX, BY - wY)
            even = ((wX // 2) + (wY // 2)) % 2 == 0
            forward = b == (a[1], -a[0]) if even else b == (-a[1], a[0])
            nbr[i, k] = index[key]
            fwd[i, k] = int(forward)
            disp[i, k] = (dX, dY)
    return DiamondGraph(region, tuple(pts), index, ends, nbr, fwd, disp)


def _occupancy(c: Configuration) -> np.ndarray:
    n = c.region.n_vertices
    occ = np.zeros(n, dtype=np.uint8)
    for v in c.vertices():
        occ[v] = 1
    return occ


def transpose(c: Configuration) -> Configuration:
    r = c.region
    rt = Region(r.height, r.width, r.boundary)
    pts = [r.coords(v) for v in c.vertices()]
    return Configuration.from_points(rt, [(y, x) for x, y in pts])


# ---------------------------------------------------------------------------
# numba kernels


@nb.njit(cache=True)
def _fault_search(open_, nbr, fwd, is_src, is_tgt, max_alt, trans, alt):
    # Lexicographically least among the shortest paths with <= max_alt switches.
    n = open_.shape[0]
    inf = 1 << 40
    dist = np.full(n * 5, inf, np.int64)
    queue = np.empty(n * 5, np.int64)
    head = 0
    tail = 0
    for v in range(n):
        if open_[v] and is_tgt[v]:
            for m in range(5):
                if alt[m] <= max_alt:
                    dist[v * 5 + m] = 0
                    queue[tail] = v * 5 + m
                    tail += 1
    while head < tail:
        st = queue[head]
        head += 1
        v = st // 5
        m = st % 5
        d = dist[st]
        for k in range(4):
            u = nbr[v, k]
            if u < 0 or not open_[u]:
                continue
            f = 1 - fwd[v, k]  # orientation of u -> v
            for mp in range(5):
                if alt[mp] > max_alt:
                    continue
                if trans[mp, f] == m and dist[u * 5 + mp] == inf:
                    dist[u * 5 + mp] = d + 1
                    queue[tail] = u * 5 + mp
                    tail += 1
    best = -1
    bd = inf
    for s in range(n):
        if open_[s] and is_src[s] and dist[s * 5] < bd:
            bd = dist[s * 5]
            best = s
    if best < 0:
        return np.empty(0, np.int64)
    path = np.empty(bd + 1, np.int64)
    path[0] = best
    v = best
    cur = 1  # bitmask of modes
    rem = bd
    p = 1
    while rem > 0:
        bu = n
        bmask = 0
        for k in range(4):
            u = nbr[v, k]
            if u < 0 or not open_[u] or u > bu:
                continue
            f = fwd[v, k]
            mask = 0
            for m in range(5):
                if cur >> m & 1:
                    m2 = trans[m, f]
                    if m2 >= 0 and alt[m2] <= max_alt and dist[u * 5 + m2] == rem - 1:
                        mask |= 1 << m2
            if mask != 0 and u < bu:
                bu = u
                bmask = mask
        path[p] = bu
        p += 1
        v = bu
        cur = bmask
        rem -= 1
    return path


@nb.njit(cache=True)
def _grid_cross_flags(occ, w, h, dxs, dys):
    # flags[b, 0] = left-right bridge of parity b, flags[b, 1] = top-bottom
    n = w * h
    flags = np.zeros((2, 2), np.uint8)
    comp = np.full(n, -1, np.int64)
    stack = np.empty(n, np.int64)
    for s in range(n):
        if occ[s] == 0 or comp[s] >= 0:
            continue
        b = (s % w + s // w) & 1
        comp[s] = s
        top = 0
        stack[top] = s
        top += 1
        left = right = low = high = False
        while top > 0:
            top -= 1
            u = stack[top]
            x = u % w
            y = u // w
            if x <= 1:
                left = True
            if x >= w - 2:
                right = True
            if y <= 1:
                low = True
            if y >= h - 2:
                high = True
            for k in range(dxs.shape[0]):
                nx = x + dxs[k]
                ny = y + dys[k]
                if nx < 0 or nx >= w or ny < 0 or ny >= h:
                    continue
                v = ny * w + nx
                if occ[v] and comp[v] < 0:
                    comp[v] = s
                    stack[top] = v
                    top += 1
        if left and right:
            flags[b, 0] = 1
        if low and high:
            flags[b, 1] = 1
    return flags


@nb.njit(cache=True)
def _torus_cross_flags(occ, w, h, dxs, dys):
    # flags[b] = some parity-b component carries two independent windings
    n = w * h
    flags = np.zeros(2, np.uint8)
    comp = np.full(n, -1, np.int64)
    lx = np.zeros(n, np.int64)
    ly = np.zeros(n, np.int64)
    stack = np.empty(n, np.int64)
    for s in range(n):
        if occ[s] == 0 or comp[s] >= 0:
            continue
        b = (s % w + s // w) & 1
        comp[s] = s
        lx[s] = s % w
        ly[s] = s // w
        top = 0
        stack[top] = s
        top += 1
        have = False
        w1x = 0
        w1y = 0
        rank2 = False
        while top > 0:
            top -= 1
            u = stack[top]
            for k in range(dxs.shape[0]):
                tx = lx[u] + dxs[k]
                ty = ly[u] + dys[k]
                v = (ty % h) * w + (tx % w)
                if occ[v] == 0:
                    continue
                if comp[v] < 0:
                    comp[v] = s
                    lx[v] = tx
                    ly[v] = ty
                    stack[top] = v
                    top += 1
                else:
                    wx = tx - lx[v]
                    wy = ty - ly[v]
                    if wx != 0 or wy != 0:
                        if not have:
                            have = True
                            w1x = wx
                            w1y = wy
                        elif w1x * wy - w1y * wx != 0:
                            rank2 = True
        if rank2:
            flags[b] = 1
    return flags


@nb.njit(cache=True)
def _mask_to_occ(mask, n, occ):
    for i in range(n):
        occ[i] = (mask >> np.uint64(i)) & np.uint64(1)


@nb.njit(cache=True)
def _torus_cross_labels(masks, w, h, dxs, dys):
    # 0 no cross, 1 even cross, 2 odd cross, 3 both
    n = w * h
    out = np.empty(masks.shape[0], np.int8)
    occ = np.zeros(n, np.uint8)
    for i in range(masks.shape[0]):
        _mask_to_occ(masks[i], n, occ)
        f = _torus_cross_flags(occ, w, h, dxs, dys)
        out[i] = f[0] + 2 * f[1]
    return out


@nb.njit(cache=True)
def _grid_cross_labels(masks, w, h, dxs, dys):
    n = w * h
    out = np.empty(masks.shape[0], np.int8)
    occ = np.zeros(n, np.uint8)
    for i in range(masks.shape[0]):
        _mask_to_occ(masks[i], n, occ)
        f = _grid_cross_flags(occ, w, h, dxs, dys)
        out[i] = (f[0, 0] & f[0, 1]) + 2 * (f[1, 0] & f[1, 1])
    return out


def cross_labels(region: Region, masks: np.ndarray) -> np.ndarray:
    """Vectorised cross detection: 0 none, 1 even cross, 2 odd cross, 3 both."""
    masks = np.asarray(masks, dtype=np.uint64)
    kern = _torus_cross_labels if region.is_torus else _grid_cross_labels
    return kern(masks, region.width, region.height, _SP_DX, _SP_DY)


def cross_parities(c: Configuration) -> set[int]:
    """Parities b for which the configuration has a b-cross."""
    r = c.region
    occ = _occupancy(c)
    if r.is_torus:
        f = _torus_cross_flags(occ, r.width, r.height, _SP_DX, _SP_DY)
        return {b for b in (0, 1) if f[b]}
    f = _grid_cross_flags(occ, r.width, r.height, _SP_DX, _SP_DY)
    return {b for b in (0, 1) if f[b, 0] and f[b, 1]}


def has_odd_cross(c: Configuration) -> bool:
    return 1 in cross_parities(c)


# ---------------------------------------------------------------------------
# witnesses


@dataclass(frozen=True)
class FaultWitness:
    """A grid fault path (``axis`` vertical or horizontal) or a torus fault
    pair (``axis`` torus, with ``cycles``).  Vertices are doubled coordinates."""

    region: Region
    axis: str
    path: tuple[Coord, ...] = ()
    cycles: tuple[tuple[Coord, ...], ...] = ()
    alternations: int = 0

    @property
    def orientation_consistent(self) -> bool:
        return self.alternations == 0

    @property
    def length(self) -> int:
        """Transverse region edges the fault crosses (summed over both cycles on a torus)."""
        if self.axis == "torus":
            return sum(len(cy) for cy in self.cycles) // 2
        crossed = _crossed_vertices(self.path)
        want = 1 if self.axis == "vertical" else 0
        return sum(1 for i in crossed if self.path[i][0] % 2 == want)

    def to_json(self) -> dict:
        g = diamond_graph(self.region)
        out = {"class": TopologyKind.FAULT.value, "axis": self.axis, "alternations": self.alternations}
        if self.axis == "torus":
            out["cycles"] = [[g.index[p] for p in cy] for cy in self.cycles]
            out["coords"] = [[list(p) for p in cy] for cy in self.cycles]
        else:
            out["path"] = [g.index[p] for p in self.path]
            out["coords"] = [list(p) for p in self.path]
        out["length"] = self.length
        return out


@dataclass(frozen=True)
class CrossWitness:
    region: Region
    parity: int
    bridge_lr: tuple[int, ...] = ()
    bridge_tb: tuple[int, ...] = ()
    cycles: tuple[tuple[tuple[int, Coord], ...], ...] = ()  # torus: (vertex, lifted point) sequences

    def to_json(self) -> dict:
        kind = TopologyKind.EVEN_CROSS if self.parity == 0 else TopologyKind.ODD_CROSS
        out = {"class": kind.value, "parity": "even" if self.parity == 0 else "odd"}
        if self.region.is_torus:
            out["cycles"] = [[v for v, _ in cy] for cy in self.cycles]
        else:
            out["bridge_lr"] = list(self.bridge_lr)
            out["bridge_tb"] = list(self.bridge_tb)
        return out


@dataclass(frozen=True)
class TopologyClass:
    kind: TopologyKind
    witness: FaultWitness | CrossWitness

    def to_json(self) -> str:
        return json.dumps(self.witness.to_json())


# ---------------------------------------------------------------------------
# grid faults


def _crossed_vertices(path: Sequence[Coord]) -> list[int]:
    """Positions along a path where it crosses its edge (all but the cusps)."""
    out = []
    for i, (X, Y) in enumerate(path):
        if 0 < i < len(path) - 1:
            a, c = path[i - 1], path[i + 1]
            if X % 2 == 1 and a[1] == c[1]:
                continue
            if X % 2 == 0 and a[0] == c[0]:
                continue
        out.append(i)
    return out


def _grid_fault_vertical(c: Configuration, max_alt: int) -> tuple[Coord, ...] | None:
    r = c.region
    g = diamond_graph(r)
    open_ = g.open_mask(c).astype(np.uint8)
    top = 2 * (r.height - 1)
    src = np.array([X % 2 == 1 and Y == top for X, Y in g.coords], dtype=np.uint8)
    tgt = np.array([X % 2 == 1 and Y == 0 for X, Y in g.coords], dtype=np.uint8)
    path = _fault_search(open_, g.nbr, g.fwd, src, tgt, max_alt, _TRANS, _ALT)
    if path.size == 0:
        return None
    return tuple(g.coords[i] for i in path)


def _count_alternations(region: Region, path: Sequence[Coord]) -> int:
    g = diamond_graph(region)
    idx = [g.index[p] for p in path]
    dirs = [g.is_forward(a, b) for a, b in zip(idx, idx[1:])]
    return sum(1 for a, b in zip(dirs, dirs[1:]) if a != b)


def _grid_first_fault(c: Configuration) -> FaultWitness | None:
    if c.region.width < 2 or c.region.height < 1:
        return None
    for max_alt in (0, 1):
        p = _grid_fault_vertical(c, max_alt)
        if p is not None:
            return FaultWitness(c.region, "vertical", p, alternations=_count_alternations(c.region, p))
        ct = transpose(c)
        if ct.region.width >= 2:
            p = _grid_fault_vertical(ct, max_alt)
            if p is not None:
                path = tuple((Y, X) for X, Y in reversed(p))
                return FaultWitness(c.region, "horizontal", path, alternations=_count_alternations(c.region, path))
    return None


# ---------------------------------------------------------------------------
# torus faults


def _forward_adj(g: DiamondGraph, allowed: np.ndarray) -> list[list[tuple[int, int, int]]]:
    adj = []
    for v in range(g.size):
        row = []
        if allowed[v]:
            for k in range(4):
                u = g.nbr[v, k]
                if u >= 0 and g.fwd[v, k] and allowed[u]:
                    row.append((int(u), int(g.disp[v, k, 0]), int(g.disp[v, k, 1])))
        row.sort()
        adj.append(row)
    return adj


def _has_noncontractible_cycle(adj, allowed) -> bool:
    n = len(adj)
    # strongly connected components (iterative Tarjan)
    index = [-1] * n
    low = [0] * n
    on = [False] * n
    stack: list[int] = []
    comp = [-1] * n
    counter = 0
    ncomp = 0
    for s in range(n):
        if not allowed[s] or index[s] >= 0:
            continue
        work = [(s, 0)]
        index[s] = low[s] = counter
        counter += 1
        stack.append(s)
        on[s] = True
        while work:
            v, i = work[-1]
            if i < len(adj[v]):
                work[-1] = (v, i + 1)
                u = adj[v][i][0]
                if index[u] < 0:
                    index[u] = low[u] = counter
                    counter += 1
                    stack.append(u)
                    on[u] = True
                    work.append((u, 0))
                elif on[u]:
                    low[v] = min(low[v], index[u])
            else:
                work.pop()
                if work:
                    low[work[-1][0]] = min(low[work[-1][0]], low[v])
                if low[v] == index[v]:
                    while True:
                        u = stack.pop()
                        on[u] = False
                        comp[u] = ncomp
                        if u == v:
                            break
                    ncomp += 1
    # a lift inconsistency inside a strongly connected block is a winding cycle
    lift: dict[int, tuple[int, int]] = {}
    und: list[list[tuple[int, int, int]]] = [[] for _ in range(n)]
    for v in range(n):
        for u, dx, dy in adj[v]:
            if comp[u] == comp[v]:
                und[v].append((u, dx, dy))
                und[u].append((v, -dx, -dy))
    for s in range(n):
        if not allowed[s] or s in lift:
            continue
        lift[s] = (0, 0)
        q = deque([s])
        while q:
            v = q.popleft()
            lv = lift[v]
            for u, dx, dy in und[v]:
                t = (lv[0] + dx, lv[1] + dy)
                if u not in lift:
                    lift[u] = t
                    q.append(u)
                elif lift[u] != t:
                    return True
    return False


def _cycle_winding(g: DiamondGraph, cycle: Sequence[int]) -> tuple[int, int]:
    sx = sy = 0
    for a, b in zip(cycle, list(cycle[1:]) + [cycle[0]]):
        k = g.slot(a, b)
        sx += int(g.disp[a, k, 0])
        sy += int(g.disp[a, k, 1])
    return sx // (2 * g.region.width), sy // (2 * g.region.height)


def _iter_winding_cycles(adj, allowed) -> Iterator[tuple[int, ...]]:
    """Simple directed cycles with non-zero winding, by length then lexicographically
    (each cycle rotated to start at its smallest vertex)."""
    n = len(adj)
    verts = [v for v in range(n) if allowed[v]]
    for L in range(2, len(verts) + 1):
        for s in verts:
            # distance to s within vertices >= s, for pruning
            radj: dict[int, list[int]] = {}
            for v in verts:
                if v >= s:
                    for u, _, _ in adj[v]:
                        if u >= s:
                            radj.setdefault(u, []).append(v)
            dist = {s: 0}
            q = deque([s])
            while q:
                v = q.popleft()
                for u in radj.get(v, ()):
                    if u not in dist:
                        dist[u] = dist[v] + 1
                        q.append(u)
            path = [s]
            onp = {s}
            disp = [(0, 0)]
            yield from _cycles_dfs(adj, s, L, path, onp, disp, dist)


def _cycles_dfs(adj, s, L, path, onp, disp, dist):
    v = path[-1]
    depth = len(path)
    for u, dx, dy in adj[v]:
        cx, cy = disp[-1][0] + dx, disp[-1][1] + dy
        if u == s:
            if depth == L and (cx, cy) != (0, 0):
                yield tuple(path)
            continue
        if u < s or u in onp or depth >= L:
            continue
        if dist.get(u, L + 1) > L - depth:
            continue
        path.append(u)
        onp.add(u)
        disp.append((cx, cy))
        yield from _cycles_dfs(adj, s, L, path, onp, disp, dist)
        path.pop()
        onp.discard(u)
        disp.pop()


def _shortest_winding_cycle(g: DiamondGraph, adj, allowed) -> tuple[int, ...] | None:
    best = None
    for s in range(len(adj)):
        if not allowed[s]:
            continue
        start = (s, 0, 0)
        parent = {start: None}
        q = deque([start])
        found = None
        while q and found is None:
            st = q.popleft()
            v, ox, oy = st
            if best is not None and _depth(parent, st) + 1 >= len(best):
                break
            for u, dx, dy in adj[v]:
                nxt = (u, ox + dx, oy + dy)
                if u == s and (nxt[1], nxt[2]) != (0, 0):
                    found = st
                    break
                if nxt not in parent:
                    parent[nxt] = st
                    q.append(nxt)
        if found is None:
            continue
        cyc = []
        st = found
        while st is not None:
            cyc.append(st[0])
            st = parent[st]
        cyc.reverse()
        if len(set(cyc)) != len(cyc):
            continue
        if best is None or len(cyc) < len(best):
            best = tuple(cyc)
    return best


def _depth(parent, st) -> int:
    d = 0
    while parent[st] is not None:
        st = parent[st]
        d += 1
    return d


def _wraps_a_vertex(g: DiamondGraph, cycle: Sequence[int]) -> bool:
    """Four consecutive cycle vertices around one region vertex (a double turn)."""
    L = len(cycle)
    for i in range(L):
        common = set(g.edge(cycle[i]))
        for k in range(1, 4):
            common &= set(g.edge(cycle[(i + k) % L]))
        if common:
            return True
    return False


def _torus_first_fault(c: Configuration) -> FaultWitness | None:
    g = diamond_graph(c.region)
    allowed = g.open_mask(c)
    adj = _forward_adj(g, allowed)
    if not _has_noncontractible_cycle(adj, allowed):
        return None
    for c1 in _iter_winding_cycles(adj, allowed):
        if _wraps_a_vertex(g, c1):
            continue
        rest = allowed.copy()
        rest[list(c1)] = False
        adj2 = _forward_adj(g, rest)
        if not _has_noncontractible_cycle(adj2, rest):
            continue
        c2 = _shortest_winding_cycle(g, adj2, rest)
        if c2 is None:
            continue
        cycles = tuple(tuple(g.coords[i] for i in cy) for cy in (c1, c2))
        return FaultWitness(c.region, "torus", cycles=cycles)
    return None


# ---------------------------------------------------------------------------
# crosses with witnesses


def _sp_neighbors(region: Region, v: int):
    x, y = region.coords(v)
    for dx, dy in SAME_PARITY_STEPS:
        if region.contains(x + dx, y + dy):
            yield region.index(x + dx, y + dy), (dx, dy)


def _bfs_path(region: Region, occ: set[int], sources: set[int], targets: set[int]) -> tuple[int, ...] | None:
    parent = {s: None for s in sorted(sources)}
    q = deque(sorted(sources))
    while q:
        v = q.popleft()
        if v in targets:
            out = []
            while v is not None:
                out.append(v)
                v = parent[v]
            return tuple(reversed(out))
        for u, _ in _sp_neighbors(region, v):
            if u in occ and u not in parent:
                parent[u] = v
                q.append(u)
    return None


def _grid_cross_witness(c: Configuration, b: int) -> CrossWitness:
    r = c.region
    occ = {v for v in c.vertices() if r.parity(v) == b}
    xs = {v: r.coords(v) for v in occ}
    left = {v for v in occ if xs[v][0] <= 1}
    right = {v for v in occ if xs[v][0] >= r.width - 2}
    low = {v for v in occ if xs[v][1] <= 1}
    high = {v for v in occ if xs[v][1] >= r.height - 2}
    lr = _bfs_path(r, occ, left, right)
    tb = _bfs_path(r, occ, high, low)
    if lr is None or tb is None:
        raise ContractError(f"no parity-{b} cross")
    return CrossWitness(r, b, lr, tb)


def _torus_cross_witness(c: Configuration, b: int) -> CrossWitness:
    r = c.region
    w, h = r.width, r.height
    occ = {v for v in c.vertices() if r.parity(v) == b}
    for s in sorted(occ):
        lift = {s: r.coords(s)}
        parent = {s: None}
        order = [s]
        q = deque([s])
        extra = []
        while q:
            v = q.popleft()
            for u, (dx, dy) in _sp_neighbors(r, v):
                if u not in occ:
                    continue
                t = (lift[v][0] + dx, lift[v][1] + dy)
                if u not in lift:
                    lift[u] = t
                    parent[u] = v
                    order.append(u)
                    q.append(u)
                elif t != lift[u]:
                    extra.append((v, u, (dx, dy), ((t[0] - lift[u][0]) // w, (t[1] - lift[u][1]) // h)))
        for i, (_, _, _, w1) in enumerate(extra):
            for j in range(i + 1, len(extra)):
                w2 = extra[j][3]
                if w1[0] * w2[1] - w1[1] * w2[0] != 0:
                    cycles = tuple(_fundamental_cycle(r, parent, lift, e) for e in (extra[i], extra[j]))
                    return CrossWitness(r, b, cycles=cycles)
        occ -= set(order)
    raise ContractError(f"no parity-{b} cross")


def _fundamental_cycle(r: Region, parent, lift, edge) -> tuple[tuple[int, Coord], ...]:
    v, u, (dx, dy), _ = edge

    def chain(x):
        out = []
        while x is not None:
            out.append(x)
            x = parent[x]
        return out

    cv, cu = chain(v), chain(u)
    su = set(cu)
    lca = next(x for x in cv if x in su)
    down = cv[: cv.index(lca) + 1][::-1]  # lca .. v
    up = cu[: cu.index(lca)]  # u .. child of lca
    seq = down + up
    # lifted coordinates along the closed walk lca -> v -> u -> lca
    pts = [(x, lift[x]) for x in down]
    shift = (lift[v][0] + dx - lift[u][0], lift[v][1] + dy - lift[u][1])
    pts += [(x, (lift[x][0] + shift[0], lift[x][1] + shift[1])) for x in up]
    assert len(set(seq)) == len(seq)
    return tuple(pts)


# ---------------------------------------------------------------------------
# classification


def has_fault(c: Configuration) -> bool:
    return find_fault_or_none(c) is not None


def find_fault_or_none(c: Configuration) -> FaultWitness | None:
    return _torus_first_fault(c) if c.region.is_torus else _grid_first_fault(c)


def find_first_fault(c: Configuration) -> FaultWitness:
    """The first fault under the order (alternations, length, vertex sequence).

    Grid: vertical faults before horizontal ones; diamond vertices are
    ordered column-major.  Torus: the first cycle is the least winding
    taxi cycle (length, then sequence) that leaves room for a second one,
    which is then the shortest winding cycle of what remains.
    """
    w = find_fault_or_none(c)
    if w is None:
        raise ContractError("configuration has no fault")
    return w


def classify(c: Configuration) -> TopologyClass:
    if not is_independent(c):
        raise ContractError("configuration is not an independent set")
    parities = cross_parities(c)
    if len(parities) == 2:
        raise AssertionError("both parities carry a cross")
    if parities:
        b = parities.pop()
        wit = _torus_cross_witness(c, b) if c.region.is_torus else _grid_cross_witness(c, b)
        return TopologyClass(TopologyKind.EVEN_CROSS if b == 0 else TopologyKind.ODD_CROSS, wit)
    wit = find_fault_or_none(c)
    if wit is None:
        raise AssertionError("configuration has neither a cross nor a fault")
    return TopologyClass(TopologyKind.FAULT, wit)


# ---------------------------------------------------------------------------
# independent witness checks


def _manhattan_steps(points: Sequence[Coord]) -> list[Direction]:
    return [direction_between(a, b) for a, b in zip(points, points[1:])]


def _lifted_points(region: Region, seq: Sequence[Coord], closed: bool) -> list[Coord]:
    """Lift a diamond vertex sequence to the plane (doubled coords), checking adjacency."""
    W, H = 2 * region.width, 2 * region.height
    out = [seq[0]]
    nxt = list(seq[1:]) + ([seq[0]] if closed else [])
    for p in nxt:
        q = out[-1]
        dx, dy = p[0] - q[0], p[1] - q[1]
        if region.is_torus:
            dx = (dx + 1) % W - 1
            dy = (dy + 1) % H - 1
        if abs(dx) != 1 or abs(dy) != 1:
            raise ContractError(f"{q} and {p} are not diamond neighbours")
        out.append((q[0] + dx, q[1] + dy))
    return out


def _is_open(c: Configuration, X: int, Y: int) -> bool:
    try:
        a, b = _edge_ends(c.region, X, Y)
    except ContractError:
        return False
    return a not in c and b not in c


def _legal(points: Sequence[Coord]) -> list[bool]:
    """Whether each diamond step is forward, decided on the Manhattan lattice."""
    from .lattice import is_legal_step

    out = []
    for a, b in zip(points, points[1:]):
        pa, pb = manhattan_point(*a), manhattan_point(*b)
        out.append(is_legal_step(pa, direction_between(pa, pb)))
    return out


def validate_fault(c: Configuration, w: FaultWitness) -> bool:
    r = c.region
    try:
        if w.axis == "torus":
            if len(w.cycles) != 2:
                return False
            seen = set()
            for cy in w.cycles:
                if len(set(cy)) != len(cy) or seen & set(cy):
                    return False
                seen |= set(cy)
                if not all(_is_open(c, X % (2 * r.width), Y % (2 * r.height)) for X, Y in cy):
                    return False
                pts = _lifted_points(r, cy, closed=True)
                if pts[-1] == pts[0]:
                    return False
                fw = _legal(pts)
                if not (all(fw) or not any(fw)):
                    return False
            return True
        path = w.path
        if len(set(path)) != len(path) or not all(_is_open(c, X, Y) for X, Y in path):
            return False
        if w.axis == "vertical":
            ok_ends = path[0][0] % 2 == 1 and path[0][1] == 2 * (r.height - 1) and path[-1][0] % 2 == 1 and path[-1][1] == 0
        elif w.axis == "horizontal":
            ok_ends = path[0][1] % 2 == 1 and path[0][0] == 0 and path[-1][1] % 2 == 1 and path[-1][0] == 2 * (r.width - 1)
        else:
            return False
        if not ok_ends:
            return False
        pts = _lifted_points(r, path, closed=False)
        fw = _legal(pts)
        alts = sum(1 for a, b in zip(fw, fw[1:]) if a != b)
        return alts <= 1 and alts == w.alternations
    except ContractError:
        return False


def validate_cross(c: Configuration, w: CrossWitness) -> bool:
    r = c.region
    occ = {v for v in c.vertices() if r.parity(v) == w.parity}

    def linked(a, b):
        return any(u == b for u, _ in _sp_neighbors(r, a))

    if not r.is_torus:
        for bridge, axis in ((w.bridge_lr, 0), (w.bridge_tb, 1)):
            if not bridge or not set(bridge) <= occ:
                return False
            if not all(linked(a, b) for a, b in zip(bridge, bridge[1:])):
                return False
            span = r.width if axis == 0 else r.height
            vals = [r.coords(v)[axis] for v in bridge]
            if not (min(vals) <= 1 and max(vals) >= span - 2):
                return False
        return True
    winds = []
    for cy in w.cycles:
        verts = [v for v, _ in cy]
        if len(set(verts)) != len(verts) or not set(verts) <= occ:
            return False
        pts = [p for _, p in cy]
        for (v, p), (u, q) in zip(cy, cy[1:]):
            d = (q[0] - p[0], q[1] - p[1])
            if d not in SAME_PARITY_STEPS or r.index(*q) != u:
                return False
        # closing step from the last vertex back to the first
        last, first = pts[-1], pts[0]
        found = None
        for dx, dy in SAME_PARITY_STEPS:
            q = (last[0] + dx, last[1] + dy)
            if r.index(*q) == verts[0]:
                wv = ((q[0] - first[0]) // r.width, (q[1] - first[1]) // r.height)
                if (q[0] - first[0]) % r.width == 0 and (q[1] - first[1]) % r.height == 0 and wv != (0, 0):
                    found = wv
                    break
        if found is None:
            return False
        winds.append(found)
    return len(winds) == 2 and winds[0][0] * winds[1][1] - winds[0][1] * winds[1][0] != 0


def validate_class(c: Configuration, t: TopologyClass) -> bool:
    if t.kind is TopologyKind.FAULT:
        return isinstance(t.witness, FaultWitness) and validate_fault(c, t.witness)
    want = 0 if t.kind is TopologyKind.EVEN_CROSS else 1
    return isinstance(t.witness, CrossWitness) and t.witness.parity == want and validate_cross(c, t.witness)


# ---------------------------------------------------------------------------
# normalisation of faults to taxi walks


def _segments(path: Sequence[Coord], region: Region) -> list[list[Coord]]:
    pts = _lifted_points(region, path, closed=False) if len(path) > 1 else list(path)
    fw = _legal(pts)
    for i in range(1, len(fw)):
        if fw[i] != fw[i - 1]:
            return [list(path[: i + 1]), list(path[i:])]
    return [list(path)]


def _remove_double_turns(points: list[Coord], period: Coord | None = None) -> list[Coord]:
    """Replace the five diamond edges around a double turn by the single edge
    joining their ends.  ``points`` must be forward and lifted to the plane;
    for a cycle pass the lifted displacement ``period`` of one full turn."""
    pts = list(points)
    cyclic = period is not None
    changed = True
    while changed:
        changed = False
        if cyclic:
            ext = pts + [(X + period[0], Y + period[1]) for X, Y in pts[:6]]
            m_ext = [manhattan_point(*p) for p in ext]
        else:
            m = [manhattan_point(*p) for p in pts]
            m_ext = m
        steps = _manhattan_steps(m_ext)
        turns = [False] + [(steps[i] - steps[i - 1]) % 2 == 1 for i in range(1, len(steps))]
        n = len(steps)
        for i in range(1, n - 1):
            if turns[i] and turns[i + 1]:
                lo, hi = i - 2, i + 3  # points p_{i-2} .. p_{i+3} in step numbering from 0
                if lo < 0 or hi > len(m_ext) - 1:
                    continue
                if cyclic:
                    L = len(pts)
                    drop = {(lo + k) % L for k in range(1, 5)}
                    if len(drop) < 4 or L - 4 < 3:
                        continue
                    pts = [p for k, p in enumerate(pts) if k not in drop]
                else:
                    pts = pts[: lo + 1] + pts[hi:]
                changed = True
                break
    return pts


def taxi_normalize_fault(w: FaultWitness) -> FaultWitness:
    """Shorten each alternation-free piece until it takes no two turns in a row."""
    r = w.region
    if w.axis == "torus":
        new = []
        for cy in w.cycles:
            full = _lifted_points(r, cy, closed=True)
            forward = all(_legal(full))
            if not forward:
                full = full[::-1]
            period = (full[-1][0] - full[0][0], full[-1][1] - full[0][1])
            short = _remove_double_turns(full[:-1], period)
            if not forward:
                short = short[::-1]
            new.append(tuple((X % (2 * r.width), Y % (2 * r.height)) for X, Y in short))
        return FaultWitness(r, "torus", cycles=tuple(new))
    out: list[Coord] = []
    for seg in _segments(w.path, r):
        fw = _legal(seg) if len(seg) > 1 else [True]
        forward = all(fw)
        pts = seg if forward else seg[::-1]
        short = _remove_double_turns(pts)
        if not forward:
            short = short[::-1]
        out = short if not out else out + short[1:]
    return FaultWitness(r, w.axis, tuple(out), alternations=w.alternations)


def fault_taxi_segments(w: FaultWitness) -> list[tuple[Coord, list[Direction]]]:
    """Each alternation-free piece as (start point, forward Manhattan steps)."""
    r = w.region
    out = []
    if w.axis == "torus":
        for cy in w.cycles:
            pts = _lifted_points(r, cy, closed=True)
            if not all(_legal(pts)):
                pts = pts[::-1]
            m = [manhattan_point(*p) for p in pts]
            out.append((m[0], _manhattan_steps(m)))
        return out
    for seg in _segments(w.path, r):
        if len(seg) > 1 and not all(_legal(seg)):
            seg = seg[::-1]
        m = [manhattan_point(*p) for p in seg]
        out.append((m[0], _manhattan_steps(m)))
    return out


def is_taxi_fault(w: FaultWitness) -> bool:
    """Every piece (a torus cycle with one edge removed) is a taxi walk; cycles
    must also avoid a double turn across the closing vertex."""
    for start, steps in fault_taxi_segments(w):
        if w.axis == "torus":
            ring = steps + steps[:2]
            turns = [(ring[i] - ring[i - 1]) % 2 == 1 for i in range(1, len(ring))]
            if any(a and b for a, b in zip(turns, turns[1:])):
                return False
            if not is_taxi_walk(steps[:-1], start=start):
                return False
        elif not is_taxi_walk(steps, start=start):
            return False
    return True


# ---------------------------------------------------------------------------
# shifting across a fault


@dataclass(frozen=True)
class ShiftResult:
    configuration: Configuration
    between: tuple[int, ...]
    excluded: int | None
    shift: Coord
    moved_side: frozenset[int]

    @property
    def addable(self) -> tuple[int, ...]:
        return tuple(v for v in self.between if v != self.excluded)


def _sides(region: Region, crossed_edges: set[frozenset]) -> tuple[set[int], set[int]]:
    """Split vertices by the parity of fault crossings on a path from vertex 0.

    Pockets cut off by a double turn, or by two faults that touch, still land
    on the correct side; an inconsistent labelling means the edges do not bound.
    """
    side = {0: 0}
    q = deque([0])
    while q:
        v = q.popleft()
        for u in region.neighbors[v]:
            t = side[v] ^ (frozenset((u, v)) in crossed_edges)
            if u not in side:
                side[u] = t
                q.append(u)
            elif side[u] != t:
                raise ContractError("fault edges do not split the region into two sides")
    stay = {v for v, t in side.items() if t == 0}
    move = {v for v, t in side.items() if t == 1}
    if not move:
        raise ContractError("fault does not separate the region")
    return stay, move


def fault_sides(c_or_region, w: FaultWitness) -> tuple[set[int], set[int], Coord]:
    """(stay, move, shift): the side holding vertex 0, the side that moves, and the unit shift."""
    region = c_or_region.region if isinstance(c_or_region, Configuration) else c_or_region
    W, H = 2 * region.width, 2 * region.height
    if w.axis == "torus":
        crossed = {frozenset(_edge_ends(region, X % W, Y % H)) for cy in w.cycles for X, Y in cy}
        stay, move = _sides(region, crossed)
        g = diamond_graph(region)
        wx, wy = _cycle_winding(g, [g.index[p] for p in w.cycles[0]])
        shift = (1, 0) if wy != 0 else (0, 1)
        return stay, move, shift
    crossed = {frozenset(_edge_ends(region, *w.path[i])) for i in _crossed_vertices(w.path)}
    stay, move = _sides(region, crossed)
    shift = (1, 0) if w.axis == "vertical" else (0, 1)
    return stay, move, shift


def _translate(region: Region, v: int, d: Coord) -> int | None:
    x, y = region.coords(v)
    if not region.contains(x + d[0], y + d[1]):
        return None
    return region.index(x + d[0], y + d[1])


def alternation_vertex(w: FaultWitness) -> Coord | None:
    if w.alternations == 0 or w.axis == "torus":
        return None
    segs = _segments(w.path, w.region)
    return segs[0][-1]


def shift_across_fault(c: Configuration, w: FaultWitness) -> ShiftResult:
    """Move one side of the fault by one unit; report the vacated "between" vertices."""
    if not validate_fault(c, w):
        raise ContractError("witness is not a fault of this configuration")
    r = c.region
    stay, move, d = fault_sides(r, w)
    occ = set(c.vertices())
    new = {v for v in occ if v in stay}
    for v in occ & move:
        t = _translate(r, v, d)
        if t is not None:
            new.add(t)
    back = (-d[0], -d[1])
    between = tuple(sorted(v for v in move if (u := _translate(r, v, back)) is not None and u in stay))
    excluded = None
    alt = alternation_vertex(w)
    if alt is not None:
        # the alternation edge of the translated fault has both ends in between
        a, b = (_translate(r, v, d) for v in _edge_ends(r, *alt))
        odd = a if a is not None and r.parity(a) == 1 else b
        if odd is not None and odd in between:
            excluded = odd
    out = Configuration.from_vertices(r, new)
    return ShiftResult(out, between, excluded, d, frozenset(move))


def shifted_fault(w: FaultWitness, d: Coord) -> FaultWitness:
    r = w.region
    W, H = 2 * r.width, 2 * r.height

    def mv(p):
        X, Y = p[0] + 2 * d[0], p[1] + 2 * d[1]
        return (X % W, Y % H) if r.is_torus else (X, Y)

    if w.axis == "torus":
        return FaultWitness(r, "torus", cycles=tuple(tuple(mv(p) for p in cy) for cy in w.cycles))
    return FaultWitness(r, w.axis, tuple(mv(p) for p in w.path), alternations=w.alternations)


def last_line(c: Configuration, w: FaultWitness) -> Configuration:
    """The restriction of ``c`` to the column (or row) that the shift pushes out."""
    r = c.region
    if w.axis == "vertical":
        keep = [v for v in c.vertices() if r.coords(v)[0] == r.width - 1]
    elif w.axis == "horizontal":
        keep = [v for v in c.vertices() if r.coords(v)[1] == r.height - 1]
    else:
        keep = []
    return Configuration.from_vertices(r, keep)


def phi_injection(c: Configuration, w: FaultWitness, r_bits: Sequence[int],
                  last_column: Configuration | None = None) -> Configuration:
    """Shift across the fault, then occupy the addable in-between vertices chosen by ``r_bits``.

    On a grid the last column (row for horizontal faults) is deleted first;
    ``last_column`` defaults to the restriction of ``c`` and must agree with it.
    """
    reg = c.region
    if not reg.is_torus:
        J = last_line(c, w)
        if last_column is not None and last_column.occupied != J.occupied:
            raise ContractError("last_column does not match the configuration")
        c = Configuration(reg, c.occupied & ~J.occupied)
    res = shift_across_fault(c, w)
    slots = res.addable
    if len(r_bits) > len(slots):
        raise ContractError(f"r has {len(r_bits)} bits but only {len(slots)} vertices are available")
    occ = res.configuration.occupied
    for bit, v in zip(r_bits, slots):
        if bit:
            occ |= 1 << v
    return Configuration(reg, occ)


# ---------------------------------------------------------------------------
# contours


@dataclass(frozen=True)
class Contour:
    region: Region
    gamma: frozenset[tuple[int, int]]  # (exterior vertex, interior vertex)
    cycle: tuple[Coord, ...]  # forward cyclic order of diamond vertices
    interior: frozenset[int]
    exterior: frozenset[int]

    @property
    def size(self) -> int:
        return len(self.gamma)


def _components(region: Region, verts: set[int]) -> list[set[int]]:
    seen: set[int] = set()
    out = []
    for s in sorted(verts):
        if s in seen:
            continue
        comp = {s}
        seen.add(s)
        q = deque([s])
        while q:
            v = q.popleft()
            for u in region.neighbors[v]:
                if u in verts and u not in seen:
                    seen.add(u)
                    comp.add(u)
                    q.append(u)
        out.append(comp)
    return out


def odd_contour(c: Configuration, seed: int | None = None) -> Contour:
    """The outer cutset around the component of (odd occupied + neighbours) containing ``seed``."""
    r = c.region
    if r.is_torus:
        raise ContractError("contours are defined on boxes")
    odd = [v for v in c.vertices() if r.parity(v) == 1]
    if not odd:
        raise ContractError("no odd occupied vertex")
    if seed is None:
        seed = odd[0]
    if seed not in odd:
        raise ContractError("seed must be an odd occupied vertex")
    plus = set(odd)
    for v in odd:
        plus.update(r.neighbors[v])
    R = next(cp for cp in _components(r, plus) if seed in cp)
    w, h = r.width, r.height
    if any(x in (0, w - 1) or y in (0, h - 1) for x, y in map(r.coords, R)):
        raise ContractError("the odd component touches the boundary")
    rest = set(range(r.n_vertices)) - R
    W = next(cp for cp in _components(r, rest) if 0 in cp)
    C = set(range(r.n_vertices)) - W
    gamma = frozenset((a, b) for b in C for a in r.neighbors[b] if a in W)
    g = diamond_graph(r)
    dv = {g.index[_diamond_of(r, a, b)] for a, b in gamma}
    cycle = _trace_cycle(g, dv)
    return Contour(r, gamma, tuple(g.coords[i] for i in cycle), frozenset(C), frozenset(W))


def _diamond_of(region: Region, a: int, b: int) -> Coord:
    (xa, ya), (xb, yb) = region.coords(a), region.coords(b)
    return (xa + xb, ya + yb)


def _trace_cycle(g: DiamondGraph, dv: set[int]) -> list[int]:
    start = min(dv)
    succ = [int(g.nbr[start, k]) for k in range(4) if g.nbr[start, k] in dv and g.fwd[start, k]]
    if len(succ) != 1:
        raise ContractError("contour is not a uniformly oriented cycle")
    cyc = [start]
    v = succ[0]
    while v != start:
        cyc.append(v)
        nxt = [int(g.nbr[v, k]) for k in range(4) if g.nbr[v, k] in dv and g.fwd[v, k]]
        if len(nxt) != 1 or len(cyc) > len(dv):
            raise ContractError("contour is not a uniformly oriented cycle")
        v = nxt[0]
    if len(cyc) != len(dv):
        raise ContractError("contour diamond set is not a single cycle")
    return cyc


def contour_is_taxi_cycle(k: Contour) -> bool:
    """Closed, no double turns around the cycle, and minus one edge a taxi walk."""
    m = [manhattan_point(*p) for p in k.cycle]
    steps = _manhattan_steps(m + [m[0]])
    ring = steps + steps[:1]
    turns = [(ring[i] - ring[i - 1]) % 2 == 1 for i in range(1, len(ring))]
    turns = turns + turns[:1]
    if any(a and b for a, b in zip(turns, turns[1:])):
        return False
    return is_taxi_walk(steps[:-1], start=m[0])


def shift_interior(c: Configuration, k: Contour, d: Direction) -> tuple[Configuration, frozenset[int]]:
    """Shift the interior of the contour one unit in ``d``; return the result and the freed vertices."""
    r = c.region
    if k.region != r:
        raise ContractError("contour belongs to another region")
    dx, dy = Direction(d).dx, Direction(d).dy
    occ = set(c.vertices())
    out = {v for v in occ if v in k.exterior}
    for v in occ & k.interior:
        t = _translate(r, v, (dx, dy))
        if t is None or t not in k.interior:
            raise ContractError("interior point leaves the interior under the shift")
        out.add(t)
    freed = frozenset(v for v in k.interior if (u := _translate(r, v, (-dx, -dy))) is not None and u in k.exterior)
    return Configuration.from_vertices(r, out), freed
