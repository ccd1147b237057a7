"""Hard-core configurations on rectangles and tori.

Vertices are indexed row-major, ``index = y * width + x`` with (0, 0) at
the bottom left.  A configuration stores its occupied set as a Python int
bitmask, so regions of any size work and sets hash cheaply.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Iterator

import numpy as np

from .errors import ContractError, DataFormatError, ResourceCapError

DEFAULT_VERTEX_CAP = 36


class Boundary(enum.Enum):
    FREE = "free"
    TORUS = "torus"


@dataclass(frozen=True)
class Region:
    width: int
    height: int
    boundary: Boundary = Boundary.FREE

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ContractError("region dimensions must be positive")
        if self.boundary is Boundary.TORUS and (self.width % 2 or self.height % 2):
            raise ContractError("a torus needs even width and height")

    @classmethod
    def parse(cls, text: str) -> "Region":
        """``torus:8``, ``torus:6x4``, ``grid:4``, ``grid:3x5``."""
        try:
            kind, dims = text.strip().lower().split(":")
            parts = [int(v) for v in dims.split("x")]
        except ValueError:
            raise DataFormatError(f"region must look like 'grid:4x4' or 'torus:6', got {text!r}") from None
        if len(parts) == 1:
            parts = parts * 2
        if kind in ("grid", "free", "box"):
            return cls(parts[0], parts[1], Boundary.FREE)
        if kind == "torus":
            return cls(parts[0], parts[1], Boundary.TORUS)
        raise DataFormatError(f"unknown region kind {kind!r}")

    def __str__(self) -> str:
        kind = "torus" if self.is_torus else "grid"
        return f"{kind}:{self.width}x{self.height}"

    @property
    def is_torus(self) -> bool:
        return self.boundary is Boundary.TORUS

    @property
    def n_vertices(self) -> int:
        return self.width * self.height

    def index(self, x: int, y: int) -> int:
        if self.is_torus:
            x %= self.width
            y %= self.height
        elif not (0 <= x < self.width and 0 <= y < self.height):
            raise ContractError(f"({x},{y}) is outside {self}")
        return y * self.width + x

    def coords(self, i: int) -> tuple[int, int]:
        return i % self.width, i // self.width

    def parity(self, i: int) -> int:
        x, y = self.coords(i)
        return (x + y) & 1

    def contains(self, x: int, y: int) -> bool:
        return self.is_torus or (0 <= x < self.width and 0 <= y < self.height)

    @cached_property
    def neighbors(self) -> tuple[tuple[int, ...], ...]:
        out = []
        for i in range(self.n_vertices):
            x, y = self.coords(i)
            nb = []
            for dx, dy in ((1, 0), (0, 1), (-1, 0), (0, -1)):
                if self.contains(x + dx, y + dy):
                    j = self.index(x + dx, y + dy)
                    if j != i and j not in nb:
                        nb.append(j)
            out.append(tuple(nb))
        return tuple(out)

    @cached_property
    def neighbor_masks(self) -> tuple[int, ...]:
        return tuple(sum(1 << j for j in nb) for nb in self.neighbors)

    @cached_property
    def edges(self) -> tuple[tuple[int, int], ...]:
        """Each region edge once as (u, v) with v the East or North neighbour of u."""
        out = []
        for i in range(self.n_vertices):
            x, y = self.coords(i)
            for dx, dy in ((1, 0), (0, 1)):
                if self.contains(x + dx, y + dy):
                    j = self.index(x + dx, y + dy)
                    if j != i:
                        out.append((i, j))
        return tuple(out)

    def parity_mask(self, parity: int) -> int:
        return sum(1 << i for i in range(self.n_vertices) if self.parity(i) == parity)


@dataclass(frozen=True)
class GibbsParams:
    lam: float | Fraction

    def __post_init__(self):
        if not self.lam > 0:
            raise ContractError("activity must be positive")


def _activity(p) -> float | Fraction:
    lam = p.lam if isinstance(p, GibbsParams) else p
    if not lam > 0:
        raise ContractError("activity must be positive")
    return lam


@dataclass(frozen=True)
class Configuration:
    region: Region
    occupied: int = 0

    @classmethod
    def from_vertices(cls, region: Region, vertices: Iterable[int]) -> "Configuration":
        mask = 0
        for v in vertices:
            if not 0 <= v < region.n_vertices:
                raise ContractError(f"vertex {v} outside {region}")
            mask |= 1 << v
        return cls(region, mask)

    @classmethod
    def from_points(cls, region: Region, points: Iterable[tuple[int, int]]) -> "Configuration":
        return cls.from_vertices(region, (region.index(x, y) for x, y in points))

    @classmethod
    def from_text(cls, text: str, boundary: Boundary = Boundary.FREE) -> "Configuration":
        """Parse rows of '.' (empty) and 'o' (occupied), top row first."""
        rows = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
        if not rows:
            raise DataFormatError("empty configuration text")
        width = len(rows[0])
        if any(len(r) != width for r in rows):
            raise DataFormatError("configuration rows have different lengths")
        bad = set("".join(rows)) - set(".o")
        if bad:
            raise DataFormatError(f"unexpected characters {sorted(bad)} in configuration")
        region = Region(width, len(rows), boundary)
        pts = [(x, len(rows) - 1 - r) for r, row in enumerate(rows) for x, ch in enumerate(row) if ch == "o"]
        return cls.from_points(region, pts)

    def to_text(self) -> str:
        r = self.region
        lines = []
        for y in range(r.height - 1, -1, -1):
            lines.append("".join("o" if self.occupied >> (y * r.width + x) & 1 else "." for x in range(r.width)))
        return "\n".join(lines) + "\n"

    def __contains__(self, v: int) -> bool:
        return bool(self.occupied >> v & 1)

    def vertices(self) -> list[int]:
        m, out, i = self.occupied, [], 0
        while m:
            if m & 1:
                out.append(i)
            m >>= 1
            i += 1
        return out

    @property
    def size(self) -> int:
        return self.occupied.bit_count()

    def toggled(self, v: int) -> "Configuration":
        return Configuration(self.region, self.occupied ^ (1 << v))

    def parity_counts(self) -> tuple[int, int]:
        even = (self.occupied & self.region.parity_mask(0)).bit_count()
        return even, self.size - even


def checkerboard(region: Region, parity: int = 0) -> Configuration:
    """All vertices of the given parity occupied."""
    return Configuration(region, region.parity_mask(parity))


def is_independent(c: Configuration) -> bool:
    occ = c.occupied
    nm = c.region.neighbor_masks
    for v in c.vertices():
        if occ & nm[v]:
            return False
    return True


def can_add(c: Configuration, v: int) -> bool:
    return not (c.occupied >> v & 1) and not (c.occupied & c.region.neighbor_masks[v])


# ---------------------------------------------------------------------------
# exhaustive enumeration


def _row_masks(width: int, wrap: bool) -> np.ndarray:
    out = []
    for m in range(1 << width):
        if m & (m >> 1):
            continue
        if wrap and width > 1 and (m & 1) and (m >> (width - 1) & 1):
            continue
        out.append(m)
    return np.array(out, dtype=np.uint64)


def independent_masks(region: Region, cap: int = DEFAULT_VERTEX_CAP) -> np.ndarray:
    """All independent sets as a sorted uint64 array of bitmasks.

    Rows are stacked bottom to top; each extension keeps the partial
    configurations whose top row is disjoint from the new row.
    """
    if region.n_vertices > cap:
        raise ResourceCapError(f"{region} has {region.n_vertices} vertices, cap is {cap}")
    if region.n_vertices > 64:
        raise ResourceCapError("bitmask enumeration is limited to 64 vertices")
    w, h = region.width, region.height
    rows = _row_masks(w, region.is_torus)
    full = rows.copy()
    first = rows.copy()
    last = rows.copy()
    for y in range(1, h):
        shift = np.uint64(y * w)
        parts_full, parts_first, parts_last = [], [], []
        for r in rows:
            keep = (last & r) == 0
            parts_full.append(full[keep] | (r << shift))
            parts_first.append(first[keep])
            parts_last.append(np.full(int(keep.sum()), r, dtype=np.uint64))
        full = np.concatenate(parts_full)
        first = np.concatenate(parts_first)
        last = np.concatenate(parts_last)
    if region.is_torus and h > 1:
        full = full[(first & last) == 0]
    return np.sort(full)


def enumerate_configurations(region: Region, cap: int = DEFAULT_VERTEX_CAP) -> Iterator[Configuration]:
    """Every independent set exactly once, in increasing bitmask order."""
    for m in independent_masks(region, cap):
        yield Configuration(region, int(m))


def occupancy_histogram(masks: np.ndarray) -> list[int]:
    sizes = np.bitwise_count(masks)
    return np.bincount(sizes).astype(object).tolist() if sizes.size else [0]


@dataclass(frozen=True)
class PartitionFunction:
    coefficients: tuple[int, ...]
    value: float | Fraction

    def evaluate(self, lam) -> float | Fraction:
        return polynomial_value(self.coefficients, lam)


def polynomial_value(coeffs, lam):
    total = 0 * lam
    for k in range(len(coeffs) - 1, -1, -1):
        total = total * lam + coeffs[k]
    return total


def partition_function_exact(region: Region, p, cap: int = DEFAULT_VERTEX_CAP) -> PartitionFunction:
    """Z(lambda) together with the number of independent sets of each size.

    Pass a Fraction (or int) activity to get an exact rational Z.
    """
    lam = _activity(p)
    coeffs = tuple(int(v) for v in occupancy_histogram(independent_masks(region, cap)))
    return PartitionFunction(coeffs, polynomial_value(coeffs, lam))


def transfer_matrix_polynomial(region: Region) -> tuple[int, ...]:
    """Independence polynomial by a row-to-row transfer recursion.

    Kept independent of the bitmask enumerator so the two can check each other.
    """
    w, h = region.width, region.height
    wrap = region.is_torus
    rows = []
    for m in range(1 << w):
        ok = all(not (m >> x & 1 and m >> ((x + 1) % w) & 1) for x in range(w if wrap and w > 1 else w - 1))
        if ok:
            rows.append(m)
    pop = {m: bin(m).count("1") for m in rows}

    def add(a, b, shift):
        out = list(a) + [0] * max(0, len(b) + shift - len(a))
        for k, v in enumerate(b):
            out[k + shift] += v
        return out

    starts = rows if (wrap and h > 1) else [None]
    total = [0]
    for s in starts:
        if s is None:
            state = {m: [0] * pop[m] + [1] for m in rows}
        else:
            state = {s: [0] * pop[s] + [1]}
        for _ in range(1, h):
            nxt: dict[int, list[int]] = {}
            for m in rows:
                acc = [0]
                for prev, poly in state.items():
                    if prev & m == 0:
                        acc = add(acc, poly, 0)
                nxt[m] = add([0], acc, pop[m])
            state = nxt
        for m, poly in state.items():
            if s is None or m & s == 0:
                total = add(total, poly, 0)
    while len(total) > 1 and total[-1] == 0:
        total.pop()
    return tuple(total)


# ---------------------------------------------------------------------------
# one-row strips


def strip_partition_function(n: int, p) -> float | Fraction:
    """T_n for a 1 x n strip: T_0 = 1, T_1 = 1 + lambda, T_i = T_{i-1} + lambda T_{i-2}."""
    if n < 0:
        raise ContractError("n must be non-negative")
    lam = _activity(p)
    a, b = 1 + 0 * lam, 1 + lam
    if n == 0:
        return a
    for _ in range(n - 1):
        a, b = b, b + lam * a
    return b


def strip_growth_rate(p) -> float:
    """(1 + sqrt(1 + 4 lambda)) / 2, the exponential growth rate of T_n."""
    lam = float(_activity(p))
    return (1.0 + (1.0 + 4.0 * lam) ** 0.5) / 2.0


def gibbs_weight(c: Configuration, p) -> float | Fraction:
    return _activity(p) ** c.size
