"""Exact enumeration of taxi walks and bridges.

A taxi walk starts at the origin, follows the Manhattan orientation, never
revisits a vertex and never turns twice in a row.  The reflection across the
diagonal x = y preserves the orientation and swaps East with North, so only
East-first walks are enumerated and the total is doubled.

The search is a depth-first backtrack over a bitboard arena.  The tree is cut
at a fixed prefix depth; each prefix is an independent unit of work, which
gives deterministic worker-count independent results and cheap checkpoints.
"""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numba as nb
import numpy as np

from .errors import CheckpointError, ContractError, DataFormatError
from .lattice import Direction, Point, avenue_direction, street_direction, transport_steps

MAX_LENGTH = 64
DEFAULT_PREFIX_LENGTH = 12
CHECKPOINT_VERSION = 1
_INT64_MAX = 2**63 - 1

_DX = np.array([1, 0, -1, 0], dtype=np.int64)
_DY = np.array([0, 1, 0, -1], dtype=np.int64)


# ---------------------------------------------------------------------------
# walks as values


@dataclass(frozen=True)
class TaxiWalk:
    steps: tuple[Direction, ...]

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(Direction(d) for d in self.steps))

    @classmethod
    def parse(cls, text: str) -> "TaxiWalk":
        try:
            return cls(tuple(Direction[ch] for ch in text.strip().upper()))
        except KeyError as exc:
            raise DataFormatError(f"bad step letter {exc} in {text!r}") from None

    def __len__(self) -> int:
        return len(self.steps)

    def __str__(self) -> str:
        return "".join(d.name for d in self.steps)

    def vertices(self, start: Sequence[int] = (0, 0)) -> list[Point]:
        p = Point(*start)
        out = [p]
        for d in self.steps:
            p = p.step(d)
            out.append(p)
        return out

    @property
    def end(self) -> Point:
        return self.vertices()[-1]

    def is_valid(self) -> bool:
        return is_taxi_walk(self.steps)


def _as_steps(steps) -> tuple[Direction, ...]:
    if isinstance(steps, TaxiWalk):
        return steps.steps
    if isinstance(steps, str):
        return TaxiWalk.parse(steps).steps
    return tuple(Direction(d) for d in steps)


def is_taxi_walk(steps, start: Sequence[int] = (0, 0)) -> bool:
    """Definitional check: oriented, self-avoiding, no two consecutive turns."""
    steps = _as_steps(steps)
    p = Point(*start)
    seen = {p}
    prev = None
    turned = False
    for d in steps:
        if d != street_direction(p.y) and d != avenue_direction(p.x):
            return False
        turn = prev is not None and (d - prev) % 2 == 1
        if turn and turned:
            return False
        p = p.step(d)
        if p in seen:
            return False
        seen.add(p)
        prev, turned = d, turn
    return True


def is_bridge(steps) -> bool:
    """A taxi walk whose first step is East, whose later vertices all have
    x > 0, and whose last step is East onto the largest x of the walk."""
    steps = _as_steps(steps)
    if not steps or steps[0] != Direction.E or steps[-1] != Direction.E or not is_taxi_walk(steps):
        return False
    xs = [p.x for p in TaxiWalk(steps).vertices()]
    return min(xs[1:]) > 0 and xs[-1] == max(xs)


def split_walk(w, i: int) -> tuple[TaxiWalk, TaxiWalk]:
    """Cut ``w`` after ``i`` steps; the tail is moved to the origin by the
    orientation preserving map attached to the cut vertex."""
    steps = _as_steps(w)
    if not 1 <= i <= len(steps) - 1:
        raise ContractError(f"split index {i} outside 1..{len(steps) - 1}")
    head = TaxiWalk(steps[:i])
    tail = TaxiWalk(transport_steps(steps[i:], head.end))
    return head, tail


def join_walk(head, tail) -> TaxiWalk:
    """Inverse of ``split_walk``."""
    head = TaxiWalk(_as_steps(head))
    return TaxiWalk(head.steps + transport_steps(_as_steps(tail), head.end))


def _iter_step_tuples(n: int, first: Sequence[int] = (0, 1)) -> Iterator[tuple[int, ...]]:
    # iterative DFS, children in increasing direction order, so output is lexicographic
    if n == 0:
        yield ()
        return
    steps: list[int] = []
    pts = [(0, 0)]
    seen = {(0, 0)}
    turned = [False]
    stack = [iter(sorted(first))]
    while stack:
        d = next(stack[-1], None)
        if d is None:
            stack.pop()
            if steps:
                steps.pop()
                seen.discard(pts.pop())
                turned.pop()
            continue
        x, y = pts[-1]
        if len(steps) > 0:
            if d != street_direction(y) and d != avenue_direction(x):
                continue
            turn = (d - steps[-1]) % 2 == 1
            if turn and turned[-1]:
                continue
        else:
            turn = False
        q = (x + int(_DX[d]), y + int(_DY[d]))
        if q in seen:
            continue
        steps.append(d)
        pts.append(q)
        seen.add(q)
        turned.append(turn)
        if len(steps) == n:
            yield tuple(steps)
            steps.pop()
            seen.discard(pts.pop())
            turned.pop()
        else:
            qx, qy = q
            stack.append(iter(sorted((int(street_direction(qy)), int(avenue_direction(qx))))))


def iter_taxi_walks(n: int) -> Iterator[TaxiWalk]:
    """All taxi walks of length ``n`` in lexicographic step order (E < N < W < S)."""
    if n < 0:
        raise ContractError("length must be non-negative")
    for s in _iter_step_tuples(n):
        yield TaxiWalk(s)


def enumerate_with_visitor(n: int, visitor: Callable[[TaxiWalk], object]) -> int:
    """Call ``visitor`` once per taxi walk of length ``n`` in lexicographic
    order and return the number of calls.  Invocation is sequential."""
    if n < 1:
        raise ContractError("n must be at least 1")
    count = 0
    for w in iter_taxi_walks(n):
        visitor(w)
        count += 1
    return count


# ---------------------------------------------------------------------------
# counting kernels


@nb.njit(cache=True)
def _is_taxi_walk_dirs(dirs):
    n = dirs.shape[0]
    side = 2 * n + 3
    off = n + 1
    seen = np.zeros(side * side, np.uint8)
    x = 0
    y = 0
    seen[off * side + off] = 1
    turned = False
    for k in range(n):
        d = dirs[k]
        street = 0 if (y & 1) == 0 else 2
        avenue = 1 if (x & 1) == 0 else 3
        if d != street and d != avenue:
            return False
        turn = k > 0 and ((d - dirs[k - 1]) & 1) == 1
        if turn and turned:
            return False
        x += _DX[d]
        y += _DY[d]
        idx = (x + off) * side + y + off
        if seen[idx]:
            return False
        seen[idx] = 1
        turned = turn
    return True


@nb.njit(cache=True)
def _brute_force_count(n):
    dirs = np.empty(n, np.int64)
    total = 0
    for code in range(4**n):
        c = code
        for k in range(n - 1, -1, -1):
            dirs[k] = c & 3
            c >>= 2
        if _is_taxi_walk_dirs(dirs):
            total += 1
    return total


def brute_force_count(n: int) -> int:
    """Count length-``n`` strings over {E,N,W,S} accepted by the definitional check."""
    if not 0 <= n <= 16:
        raise ContractError("brute force is limited to n <= 16")
    return int(_brute_force_count(n))


@nb.njit(cache=True)
def _subtree_counts(prefix, n_max, counts, bridges):
    # Counts walks of every length > len(prefix) extending an East-first prefix.
    p = prefix.shape[0]
    side = 2 * n_max + 3
    off = n_max + 1
    visited = np.zeros(side * side, np.uint8)
    L = n_max - p + 2
    xs = np.empty(L, np.int64)
    ys = np.empty(L, np.int64)
    ds = np.empty(L, np.int64)
    ts = np.empty(L, np.int64)
    ch = np.empty(L, np.int64)
    cand = np.empty(L, np.int64)
    mx = np.empty(L, np.int64)

    x = 0
    y = 0
    visited[off * side + off] = 1
    turned = 0
    ok = 1
    maxx = 0
    for k in range(p):
        d = prefix[k]
        turned = 1 if k > 0 and ((d - prefix[k - 1]) & 1) == 1 else 0
        x += _DX[d]
        y += _DY[d]
        visited[(x + off) * side + y + off] = 1
        if x <= 0:
            ok = 0
        if x > maxx:
            maxx = x
    xs[0] = x
    ys[0] = y
    ds[0] = prefix[p - 1]
    ts[0] = turned
    ch[0] = 0
    cand[0] = ok
    mx[0] = maxx
    k = 0
    while k >= 0:
        c = ch[k]
        if c >= 2 or p + k >= n_max:
            if k > 0:
                visited[(xs[k] + off) * side + ys[k] + off] = 0
            k -= 1
            continue
        ch[k] = c + 1
        x = xs[k]
        y = ys[k]
        if c == 0:
            d = 0 if (y & 1) == 0 else 2
        else:
            d = 1 if (x & 1) == 0 else 3
        turn = (d - ds[k]) & 1
        if turn == 1 and ts[k] == 1:
            continue
        nx = x + _DX[d]
        ny = y + _DY[d]
        idx = (nx + off) * side + ny + off
        if visited[idx]:
            continue
        depth = p + k + 1
        counts[depth] += 1
        ok = cand[k]
        if nx <= 0:
            ok = 0
        if ok == 1 and d == 0 and nx >= mx[k]:
            bridges[depth] += 1
        visited[idx] = 1
        k += 1
        xs[k] = nx
        ys[k] = ny
        ds[k] = d
        ts[k] = turn
        ch[k] = 0
        cand[k] = ok
        mx[k] = nx if nx > mx[k - 1] else mx[k - 1]


def _prefix_to_array(prefix: str) -> np.ndarray:
    return np.array([Direction[ch] for ch in prefix], dtype=np.int64)


def _count_prefix(prefix: str, n_max: int) -> tuple[list[int], list[int]]:
    counts = np.zeros(n_max + 1, np.int64)
    bridges = np.zeros(n_max + 1, np.int64)
    _subtree_counts(_prefix_to_array(prefix), n_max, counts, bridges)
    return counts.tolist(), bridges.tolist()


def _count_prefix_batch(prefixes: list[str], n_max: int) -> list[tuple[list[int], list[int]]]:
    return [_count_prefix(p, n_max) for p in prefixes]


# ---------------------------------------------------------------------------
# tables and checkpoints


@dataclass(frozen=True)
class WalkTable:
    """Exact counts indexed by length; ``c[0] = 1`` is the empty walk."""

    c: tuple[int, ...]
    b: tuple[int, ...] | None = None

    @property
    def n_max(self) -> int:
        return len(self.c) - 1

    def c_n(self, n: int) -> int:
        if not 0 <= n < len(self.c):
            raise ContractError(f"c_{n} is not in the table (n_max = {self.n_max})")
        return self.c[n]

    def b_n(self, n: int) -> int:
        if self.b is None or not 1 <= n < len(self.b):
            raise ContractError(f"b_{n} is not in the table")
        return self.b[n]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "c_n", "b_n"])
        for n, c in enumerate(self.c):
            w.writerow([n, c, "" if self.b is None else self.b[n]])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "WalkTable":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows or set(rows[0]) != {"n", "c_n", "b_n"}:
            raise DataFormatError("counts file must have header n,c_n,b_n")
        try:
            ns = [int(r["n"]) for r in rows]
            cs = [int(r["c_n"]) for r in rows]
            bs = [r["b_n"].strip() for r in rows]
        except (TypeError, ValueError) as exc:
            raise DataFormatError(f"bad counts row: {exc}") from None
        if ns[0] == 1:
            ns, cs, bs = [0] + ns, [1] + cs, ["1" if bs[0] else ""] + bs
        if ns != list(range(len(ns))):
            raise DataFormatError("counts rows must be consecutive lengths")
        b = tuple(int(v) for v in bs) if all(bs) else None
        return cls(tuple(cs), b)

    @classmethod
    def load(cls, path) -> "WalkTable":
        with open(path) as fh:
            return cls.from_csv(fh.read())


@dataclass
class EnumCheckpoint:
    """Progress of a prefix-partitioned enumeration.

    ``head_*`` hold the counts for lengths up to the prefix depth; each
    entry of ``results`` is either None (pending) or the subtree counts of
    the matching prefix.
    """

    n_max: int
    prefix_length: int
    prefixes: list[str]
    head_c: list[int]
    head_b: list[int]
    results: list[tuple[list[int], list[int]] | None] = field(default_factory=list)

    def __post_init__(self):
        if not self.results:
            self.results = [None] * len(self.prefixes)

    @property
    def pending(self) -> list[int]:
        return [i for i, r in enumerate(self.results) if r is None]

    @property
    def done(self) -> bool:
        return not self.pending

    def to_json(self) -> dict:
        return {
            "version": CHECKPOINT_VERSION,
            "n_max": self.n_max,
            "prefix_length": self.prefix_length,
            "head_c": self.head_c,
            "head_b": self.head_b,
            "entries": [
                {"prefix": p, "c": None if r is None else r[0], "b": None if r is None else r[1]}
                for p, r in zip(self.prefixes, self.results)
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "EnumCheckpoint":
        if not isinstance(obj, dict) or obj.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {obj.get('version') if isinstance(obj, dict) else None!r}")
        try:
            entries = obj["entries"]
            ck = cls(
                n_max=int(obj["n_max"]),
                prefix_length=int(obj["prefix_length"]),
                prefixes=[e["prefix"] for e in entries],
                head_c=[int(v) for v in obj["head_c"]],
                head_b=[int(v) for v in obj["head_b"]],
                results=[None if e["c"] is None else ([int(v) for v in e["c"]], [int(v) for v in e["b"]]) for e in entries],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"corrupt checkpoint: {exc}") from None
        for r in ck.results:
            if r is not None and (len(r[0]) != ck.n_max + 1 or len(r[1]) != ck.n_max + 1):
                raise CheckpointError("checkpoint entry has the wrong length")
        return ck


def new_checkpoint(n_max: int, prefix_length: int = DEFAULT_PREFIX_LENGTH) -> EnumCheckpoint:
    _check_length(n_max)
    if prefix_length < 1:
        raise ContractError("prefix_length must be positive")
    d = min(prefix_length, n_max)
    head_c = [0] * (n_max + 1)
    head_b = [0] * (n_max + 1)
    prefixes = []
    for k in range(1, d + 1):
        for s in _iter_step_tuples(k, first=(0,)):
            head_c[k] += 1
            if k < d:
                continue
            prefixes.append("".join(Direction(v).name for v in s))
    # bridges of length <= d are read off the prefixes themselves
    for k in range(1, d + 1):
        head_b[k] = sum(1 for s in _iter_step_tuples(k, first=(0,)) if is_bridge(s))
    return EnumCheckpoint(n_max, d, prefixes, head_c, head_b)


def checkpoint_save(state: EnumCheckpoint, path) -> EnumCheckpoint:
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(state.to_json(), fh)
    os.replace(tmp, path)
    return state


def checkpoint_resume(path, n_max: int | None = None) -> EnumCheckpoint:
    """Load a checkpoint; ``n_max`` (if given) must match the stored run."""
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"checkpoint is not valid JSON: {exc}") from None
    ck = EnumCheckpoint.from_json(obj)
    if n_max is not None and ck.n_max != n_max:
        raise CheckpointError(f"checkpoint was written for n_max={ck.n_max}, not {n_max}")
    return ck


def advance(state: EnumCheckpoint, workers: int = 1, max_prefixes: int | None = None,
            checkpoint_path=None, save_every: int = 64) -> EnumCheckpoint:
    """Process pending prefixes (all of them unless ``max_prefixes`` is set)."""
    todo = state.pending
    if max_prefixes is not None:
        todo = todo[:max_prefixes]
    if not todo:
        return state
    workers = max(1, int(workers))
    chunks = [todo[i:i + save_every] for i in range(0, len(todo), save_every)]
    if workers == 1:
        for chunk in chunks:
            for i in chunk:
                state.results[i] = _count_prefix(state.prefixes[i], state.n_max)
            if checkpoint_path is not None:
                checkpoint_save(state, checkpoint_path)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for chunk in chunks:
                # round-robin slices keep the work roughly balanced
                parts = [chunk[j::workers] for j in range(workers) if chunk[j::workers]]
                futs = [pool.submit(_count_prefix_batch, [state.prefixes[i] for i in part], state.n_max) for part in parts]
                for part, fut in zip(parts, futs):
                    for i, r in zip(part, fut.result()):
                        state.results[i] = r
                if checkpoint_path is not None:
                    checkpoint_save(state, checkpoint_path)
    return state


def finish(state: EnumCheckpoint) -> WalkTable:
    if not state.done:
        raise ContractError(f"{len(state.pending)} prefixes still pending")
    c = list(state.head_c)
    b = list(state.head_b)
    for rc, rb in state.results:
        for n in range(state.prefix_length + 1, state.n_max + 1):
            c[n] += rc[n]
            b[n] += rb[n]
    c = [1] + [2 * v for v in c[1:]]
    b[0] = 1
    for v in c:
        if v > _INT64_MAX:
            raise OverflowError("count exceeds the signed 64-bit range")
    return WalkTable(tuple(c), tuple(b))


def _check_length(n_max: int) -> None:
    if n_max < 1:
        raise ContractError("n_max must be at least 1")
    if n_max > MAX_LENGTH:
        raise ContractError(f"lengths above {MAX_LENGTH} are outside the validated range")


def enumerate_table(n_max: int, workers: int = 1, prefix_length: int = DEFAULT_PREFIX_LENGTH,
                    checkpoint_path=None) -> WalkTable:
    """Counts of walks and bridges for every length up to ``n_max``.

    With ``checkpoint_path`` an existing compatible checkpoint is resumed and
    progress is saved as prefixes complete.
    """
    _check_length(n_max)
    if checkpoint_path is not None and os.path.exists(checkpoint_path):
        state = checkpoint_resume(checkpoint_path, n_max)
    else:
        state = new_checkpoint(n_max, prefix_length)
    advance(state, workers=workers, checkpoint_path=checkpoint_path)
    return finish(state)


def count_taxi_walks(n_max: int, workers: int = 1, **kw) -> WalkTable:
    """Exact c_n for 0 <= n <= n_max (the bridge column is filled as a by-product)."""
    return enumerate_table(n_max, workers, **kw)


def count_bridges(n_max: int, workers: int = 1, **kw) -> WalkTable:
    """Exact b_n for 1 <= n <= n_max together with c_n."""
    return enumerate_table(n_max, workers, **kw)


def turn_string_count(n: int) -> int:
    """Number of oriented no-double-turn strings of length n, ignoring self-avoidance."""
    if n == 0:
        return 1
    a, b = 2, 4
    if n == 1:
        return a
    for _ in range(n - 2):
        a, b = b, a + b
    return b
