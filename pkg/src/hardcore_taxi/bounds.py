"""Bounds on the taxi-walk connective constant and the activity thresholds
they imply.

Upper bounds come from submultiplicativity (c_n^{1/n}) and from the top
eigenvalue of the Alm matrix A(m, n); lower bounds from bridges.  The
eigenvalue is enclosed by Collatz-Wielandt ratios of a positive iterate, so
the upper end is an honest bound and not just an estimate.
"""

from __future__ import annotations

import json
import math
import os
import warnings
from dataclasses import asdict, dataclass, field
from typing import Literal

import numba as nb
import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import ContractError, DataFormatError, ResourceCapError
from .walks import WalkTable, _iter_step_tuples, count_taxi_walks, turn_string_count

CW_INFLATION = 2.0**-40
ALM_BUDGET_ENV = "HARDCORE_TAXI_ALM_MAX_WALKS"
DEFAULT_ALM_BUDGET = 500_000_000


# ---------------------------------------------------------------------------
# subadditive and bridge bounds


def fekete_upper(table: WalkTable, n: int) -> float:
    """c_n^{1/n}; an upper bound on mu for every n since log c_n is subadditive."""
    if n < 1:
        raise ContractError("n must be at least 1")
    return table.c_n(n) ** (1.0 / n)


def bridge_lower(table: WalkTable, n: int) -> float:
    """b_n^{1/n}; a lower bound on mu since bridges are supermultiplicative."""
    if n < 1:
        raise ContractError("n must be at least 1")
    return table.b_n(n) ** (1.0 / n)


# ---------------------------------------------------------------------------
# walk codes
#
# A taxi walk leaving the origin is fixed by whether its first step is an
# avenue move and by which later steps are turns.  Bit 0 of the code is the
# avenue flag and bit j the turn flag of step j.  The diagonal reflection
# only flips bit 0.


def walk_code(steps) -> int:
    steps = [int(d) for d in steps]
    if not steps:
        return 0
    code = steps[0] & 1
    for j in range(1, len(steps)):
        if (steps[j] - steps[j - 1]) & 1:
            code |= 1 << j
    return code


def canonical_walks(m: int) -> list[tuple[int, ...]]:
    """Length-m taxi walks in lexicographic order; position is the class index."""
    return list(_iter_step_tuples(m))


def code_rank_table(m: int) -> np.ndarray:
    """Array mapping walk code to lexicographic rank, -1 for codes that are not walks."""
    table = np.full(1 << max(m, 0), -1, dtype=np.int64)
    for r, w in enumerate(canonical_walks(m)):
        table[walk_code(w)] = r
    return table


@nb.njit(cache=True)
def _alm_counts(n, m, rank, dim):
    # DFS over East-first walks of length n; each leaf adds itself and its diagonal mirror.
    side = 2 * n + 3
    off = n + 1
    visited = np.zeros(side * side, np.uint8)
    acc = dict()
    acc[np.int64(0)] = np.int64(0)
    xs = np.empty(n + 1, np.int64)
    ys = np.empty(n + 1, np.int64)
    ds = np.empty(n + 1, np.int64)
    ts = np.empty(n + 1, np.int64)
    ch = np.empty(n + 1, np.int64)
    dx = (1, 0, -1, 0)
    dy = (0, 1, 0, -1)
    visited[off * side + off] = 1
    visited[(1 + off) * side + off] = 1
    # level k holds the endpoint after k steps
    xs[1] = 1
    ys[1] = 0
    ds[1] = 0
    ts[1] = 0
    ch[1] = 0
    k = 1
    while k >= 1:
        if k == n:
            ci = 0
            for j in range(1, m):
                ci |= ts[j + 1] << j
            cj = ds[n - m + 1] & 1
            for j in range(1, m):
                cj |= ts[n - m + 1 + j] << j
            i = rank[ci]
            jj = rank[cj]
            key = i * dim + jj
            acc[key] = acc.get(key, 0) + 1
            key = rank[ci ^ 1] * dim + rank[cj ^ 1]
            acc[key] = acc.get(key, 0) + 1
            visited[(xs[k] + off) * side + ys[k] + off] = 0
            k -= 1
            continue
        c = ch[k]
        if c >= 2:
            if k > 1:
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
        nx = x + dx[d]
        ny = y + dy[d]
        idx = (nx + off) * side + ny + off
        if visited[idx]:
            continue
        visited[idx] = 1
        k += 1
        xs[k] = nx
        ys[k] = ny
        ds[k] = d
        ts[k] = turn
        ch[k] = 0
    if acc[np.int64(0)] == 0:
        del acc[np.int64(0)]
    keys = np.empty(len(acc), np.int64)
    vals = np.empty(len(acc), np.int64)
    p = 0
    for key, v in acc.items():
        keys[p] = key
        vals[p] = v
        p += 1
    return keys, vals


@dataclass
class AlmMatrix:
    """A(m, n): entry (i, j) counts length-n walks whose first m steps are
    canonical walk i and whose last m steps, moved to the origin, are walk j."""

    m: int
    n: int
    matrix: sp.csr_matrix

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def total(self) -> int:
        return int(self.matrix.sum(dtype=np.int64))

    def partner(self) -> np.ndarray:
        """Index of the diagonal mirror of each canonical walk."""
        if self.m == 0:
            return np.zeros(1, np.int64)
        rank = code_rank_table(self.m)
        out = np.empty(self.dim, np.int64)
        for code, r in enumerate(rank):
            if r >= 0:
                out[r] = rank[code ^ 1]
        return out

    def reduced(self) -> sp.csr_matrix:
        """The mirror-symmetric block acting on symmetric vectors (half the dimension)."""
        if self.m == 0:
            return self.matrix.astype(float)
        rank = code_rank_table(self.m)
        reps = np.sort(rank[(np.arange(rank.size) & 1 == 0) & (rank >= 0)])
        part = self.partner()
        rows = self.matrix.astype(float)[reps]
        return (rows[:, reps] + rows[:, part[reps]]).tocsr()

    def to_triplets(self) -> str:
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        lines = [f"{self.dim} {self.m} {self.n}"]
        lines += [f"{coo.row[k]} {coo.col[k]} {coo.data[k]}" for k in order]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_triplets(cls, text: str) -> "AlmMatrix":
        try:
            lines = text.strip().splitlines()
            dim, m, n = (int(v) for v in lines[0].split())
            arr = np.array([[int(v) for v in ln.split()] for ln in lines[1:]], dtype=np.int64).reshape(-1, 3)
        except (ValueError, IndexError) as exc:
            raise DataFormatError(f"bad matrix dump: {exc}") from None
        mat = sp.csr_matrix((arr[:, 2], (arr[:, 0], arr[:, 1])), shape=(dim, dim), dtype=np.int64)
        return cls(m, n, mat)


def alm_budget() -> int:
    raw = os.environ.get(ALM_BUDGET_ENV)
    if raw is None:
        return DEFAULT_ALM_BUDGET
    try:
        return int(float(raw))
    except ValueError:
        raise DataFormatError(f"{ALM_BUDGET_ENV} must be a number, got {raw!r}") from None


def build_alm_matrix(m: int, n: int, max_walks: int | None = None) -> AlmMatrix:
    if not 0 <= m < n:
        raise ContractError(f"need 0 <= m < n, got m={m}, n={n}")
    budget = alm_budget() if max_walks is None else max_walks
    c_n = count_taxi_walks(n).c[n] if n <= 44 else turn_string_count(n)
    if c_n > budget:
        raise ResourceCapError(f"A({m},{n}) needs about {c_n} walks, budget is {budget} (set {ALM_BUDGET_ENV})")
    if m == 0:
        return AlmMatrix(0, n, sp.csr_matrix(np.array([[c_n]], dtype=np.int64)))
    rank = code_rank_table(m)
    dim = int(rank.max()) + 1
    keys, vals = _alm_counts(n, m, rank, dim)
    mat = sp.csr_matrix((vals, (keys // dim, keys % dim)), shape=(dim, dim), dtype=np.int64)
    mat.sum_duplicates()
    return AlmMatrix(m, n, mat)


# ---------------------------------------------------------------------------
# Collatz-Wielandt enclosure


@nb.njit(cache=True)
def _matvec(indptr, indices, data, v, out):
    # Neumaier summation; all terms are non-negative
    for i in range(indptr.shape[0] - 1):
        s = 0.0
        comp = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            t = data[k] * v[indices[k]]
            u = s + t
            if abs(s) >= abs(t):
                comp += (s - u) + t
            else:
                comp += (t - u) + s
            s = u
        out[i] = s + comp


@dataclass
class Enclosure:
    lower: float
    upper: float
    iterations: int
    converged: bool
    rayleigh: float

    @property
    def width(self) -> float:
        return self.upper - self.lower


def _as_csr(M) -> sp.csr_matrix:
    if isinstance(M, AlmMatrix):
        M = M.matrix
    M = sp.csr_matrix(M, dtype=float)
    if M.shape[0] != M.shape[1]:
        raise ContractError("matrix must be square")
    if M.nnz and M.data.min() < 0:
        raise ContractError("matrix must be non-negative")
    return M


def _enclose_irreducible(M: sp.csr_matrix, tol: float, max_iter: int):
    indptr = M.indptr.astype(np.int64)
    indices = M.indices.astype(np.int64)
    data = M.data
    size = M.shape[0]
    v = np.ones(size)
    mv = np.empty(size)
    shift = 0.0
    lo = hi = 0.0
    history = []
    for it in range(1, max_iter + 1):
        _matvec(indptr, indices, data, v, mv)
        ratios = mv / v
        lo = float(ratios.min()) * (1.0 - CW_INFLATION)
        hi = float(ratios.max()) * (1.0 + CW_INFLATION)
        rq = float(v @ mv / (v @ v))
        if hi - lo <= tol * hi:
            return lo, hi, it, True, rq
        history.append(hi - lo)
        # a periodic block makes the plain iteration oscillate; a shift makes it primitive
        if shift == 0.0 and it >= 200 and history[-1] > 0.5 * history[-100]:
            shift = hi
        w = mv + shift * v
        top = w.max()
        if not top > 0:
            return lo, hi, it, False, rq
        v = w / top
        if v.min() <= 0.0:
            # underflow on a positive vector would void the ratio bounds
            v = np.maximum(v, np.finfo(float).tiny)
    return lo, hi, max_iter, False, rq


def certified_top_eigenvalue(M, tol: float = 1e-11, max_iter: int = 10_000) -> Enclosure:
    """Enclose the spectral radius of a non-negative square matrix.

    ``tol`` bounds the relative width (upper - lower) / upper.  The spectral
    radius is the largest one over strongly connected blocks; each block is
    handled by power iteration from the all-ones vector with ratio bounds
    inflated by 2^-40 relative to absorb rounding.
    """
    M = _as_csr(M)
    if tol <= 2.5 * CW_INFLATION:
        raise ContractError(f"relative tolerance at or below {2.5 * CW_INFLATION:.1e} cannot be certified")
    ncomp, labels = connected_components(M, directed=True, connection="strong")
    best = None
    worst_upper = 0.0
    all_converged = True
    total_it = 0
    order = np.argsort(labels, kind="stable")
    bounds = np.searchsorted(labels[order], np.arange(ncomp + 1))
    for comp in range(ncomp):
        idx = order[bounds[comp]:bounds[comp + 1]]
        block = M[idx][:, idx]
        if block.nnz == 0:
            continue
        lo, hi, it, ok, rq = _enclose_irreducible(block.tocsr(), tol, max_iter)
        total_it = max(total_it, it)
        all_converged &= ok
        worst_upper = max(worst_upper, hi)
        if best is None or lo > best[0]:
            best = (lo, rq)
    if best is None:
        return Enclosure(0.0, 0.0, 0, True, 0.0)
    if not all_converged:
        warnings.warn("eigenvalue enclosure did not reach the requested width", RuntimeWarning, stacklevel=2)
    return Enclosure(best[0], worst_upper, total_it, all_converged, best[1])


def alm_upper(m: int, n: int, tol: float = 1e-11, reduce: bool = False, max_walks: int | None = None) -> float:
    """lambda_1(A(m,n))^{1/(n-m)}, an upper bound on mu."""
    A = build_alm_matrix(m, n, max_walks=max_walks)
    enc = certified_top_eigenvalue(A.reduced() if reduce else A, tol)
    return enc.upper ** (1.0 / (n - m))


# ---------------------------------------------------------------------------
# thresholds


def lambda_torus(mu: float) -> float:
    """Activity above which the contour sum converges: mu^4 - 1."""
    if mu < 1:
        raise ContractError("mu must be at least 1")
    return mu**4 - 1.0


def box_quadratic(lam: float, mu: float) -> float:
    return lam * lam + (2.0 - mu**2 - mu**4) * lam + (1.0 - mu**2)


def box_condition_one(lam: float, mu: float) -> bool:
    return lam > mu**4 - 1.0


def box_condition_two(lam: float, mu: float) -> bool:
    return 2.0 * (1.0 + lam) > mu**2 * (1.0 + math.sqrt(1.0 + 4.0 * lam))


def lambda_box(mu: float) -> float:
    """Smallest activity above which both slow-mixing conditions hold."""
    if mu < 1:
        raise ContractError("mu must be at least 1")
    b = 2.0 - mu**2 - mu**4
    c = 1.0 - mu**2
    disc = b * b - 4.0 * c
    # c <= 0 so the roots are real with opposite signs (or a double root at 0)
    if b <= 0:
        root = (-b + math.sqrt(disc)) / 2.0
    else:
        root = (2.0 * -c) / (b + math.sqrt(disc)) if b + math.sqrt(disc) > 0 else 0.0
    return max(mu**4 - 1.0, root)


def _log_tail(L: int, q: float) -> float:
    # log of sum_{l >= L} l q^l = q^L (L(1-q) + q) / (1-q)^2
    return L * math.log(q) + math.log(L * (1.0 - q) + q) - 2.0 * math.log1p(-q)


def peierls_sum(m: int, lam: float, mu: float, start: Literal["m", "m/4"] = "m") -> float:
    """68 m^2 sum_{l >= L} l (mu^4/(1+lam))^l with L = m or ceil(m/4)."""
    q = mu**4 / (1.0 + lam)
    if not q < 1:
        return math.inf
    L = m if start == "m" else -(-m // 4)
    L = max(L, 1)
    return math.exp(math.log(68.0) + 2.0 * math.log(m) + _log_tail(L, q))


def peierls_cutoff(lam: float, mu: float, start: Literal["m", "m/4"] = "m") -> int:
    """Smallest m with peierls_sum(m) <= 1/3.

    The log of the sum is concave in m (and in the block index for the m/4
    reading), so the admissible m form a final segment once m = 1 fails; a
    galloping search followed by bisection finds its start.
    """
    if start not in ("m", "m/4"):
        raise ContractError("start must be 'm' or 'm/4'")
    if not lam > mu**4 - 1.0:
        raise ContractError(f"no finite cutoff: lambda={lam} does not exceed mu^4 - 1 = {mu**4 - 1}")
    q = mu**4 / (1.0 + lam)
    target = math.log(1.0 / 3.0)

    if start == "m":
        def ok(m):
            return math.log(68.0) + 2.0 * math.log(m) + _log_tail(m, q) <= target
        to_m = lambda k: k  # noqa: E731
    else:
        # within a block of equal ceil(m/4) the sum grows with m, so only 4L-3 can be first
        def ok(L):
            return math.log(68.0) + 2.0 * math.log(4 * L - 3) + _log_tail(L, q) <= target
        to_m = lambda k: 4 * k - 3  # noqa: E731

    if ok(1):
        return 1
    lo, hi = 1, 2
    while not ok(hi):
        lo, hi = hi, hi * 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return to_m(hi)


# ---------------------------------------------------------------------------
# report


@dataclass
class BoundsReport:
    m: int | None
    n: int
    mu_upper: float
    mu_lower: float | None
    lambda_torus: float
    lambda_box: float
    method: str
    tolerances: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def bounds_report(table: WalkTable | None, n: int, m: int | None = None, method: str = "fekete",
                  tol: float = 1e-11, lower_n: int | None = None) -> BoundsReport:
    if method == "fekete":
        if table is None:
            raise ContractError("the Fekete bound needs a counts table")
        mu_up = fekete_upper(table, n)
    elif method == "alm":
        if m is None:
            raise ContractError("the Alm bound needs m")
        mu_up = alm_upper(m, n, tol)
    else:
        raise ContractError(f"unknown method {method!r}")
    mu_lo = None
    if table is not None and table.b is not None:
        k = min(lower_n or table.n_max, table.n_max)
        mu_lo = bridge_lower(table, k)
    return BoundsReport(m, n, mu_up, mu_lo, lambda_torus(mu_up), lambda_box(mu_up),
                        "alm-collatz-wielandt" if method == "alm" else "fekete-subadditive",
                        {"relative_width": tol, "inflation": CW_INFLATION})


__all__ = [
    "AlmMatrix", "BoundsReport", "Enclosure", "alm_upper", "bounds_report", "bridge_lower",
    "build_alm_matrix", "certified_top_eigenvalue", "code_rank_table", "fekete_upper",
    "lambda_box", "lambda_torus", "peierls_cutoff", "peierls_sum", "walk_code",
]
