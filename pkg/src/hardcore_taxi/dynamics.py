"""Metropolis Glauber dynamics for the hard-core model.

One step picks a vertex uniformly from all |V| vertices and proposes to
toggle it.  Removals are accepted with probability min(1, 1/lambda),
additions with min(1, lambda) provided no neighbour is occupied; all other
proposals leave the state unchanged.

Random numbers come from numpy's Philox generator, two uniforms per step
(vertex, acceptance), drawn in blocks.  The stream position is therefore
just twice the step count, independent of the block size.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numba as nb
import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, milp

from .errors import ContractError, ResourceCapError
from .hardcore import (
    Configuration,
    GibbsParams,
    Region,
    checkerboard,
    independent_masks,
    is_independent,
)
from .topology import TopologyKind, cross_labels

DEFAULT_STATE_CAP = 20_000
BLOCK = 1 << 16

_LABEL_NAMES = {0: TopologyKind.FAULT.value, 1: TopologyKind.EVEN_CROSS.value, 2: TopologyKind.ODD_CROSS.value}
_KIND_LABEL = {TopologyKind.FAULT: 0, TopologyKind.EVEN_CROSS: 1, TopologyKind.ODD_CROSS: 2}


def _lam(p) -> float | Fraction:
    lam = p.lam if isinstance(p, GibbsParams) else p
    if not lam > 0:
        raise ContractError("activity must be positive")
    return lam


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


# ---------------------------------------------------------------------------
# single steps


@dataclass
class ChainState:
    configuration: Configuration
    seed: int
    step: int = 0
    rng: np.random.Generator | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not is_independent(self.configuration):
            raise ContractError("chain state must be an independent set")
        if self.rng is None:
            self.rng = make_rng(self.seed)
            if self.step:
                self.rng.random(2 * self.step)

    @property
    def stream_position(self) -> int:
        return 2 * self.step


def metropolis_move(c: Configuration, v: int, u: float, lam) -> Configuration:
    """Apply the proposal "toggle v" with acceptance uniform u."""
    if v in c:
        return c.toggled(v) if u < min(1.0, 1.0 / float(lam)) else c
    if c.occupied & c.region.neighbor_masks[v]:
        return c
    return c.toggled(v) if u < min(1.0, float(lam)) else c


def transition_step(s: ChainState, p) -> ChainState:
    lam = _lam(p)
    a, u = s.rng.random(2)
    v = min(int(a * s.configuration.region.n_vertices), s.configuration.region.n_vertices - 1)
    nxt = metropolis_move(s.configuration, v, u, lam)
    return ChainState(nxt, s.seed, s.step + 1, s.rng)


# ---------------------------------------------------------------------------
# exact chain at small sizes


@dataclass(frozen=True)
class ExactChain:
    region: Region
    lam: Fraction
    states: np.ndarray  # sorted uint64 masks
    pi: tuple[Fraction, ...]
    rows: tuple[dict, ...]  # rows[i][j] = P(i, j) as Fraction

    @property
    def size(self) -> int:
        return len(self.states)

    def dense(self) -> np.ndarray:
        P = np.zeros((self.size, self.size))
        for i, row in enumerate(self.rows):
            for j, q in row.items():
                P[i, j] = float(q)
        return P

    def detailed_balance_exact(self) -> bool:
        for i, row in enumerate(self.rows):
            for j, q in row.items():
                if self.pi[i] * q != self.pi[j] * self.rows[j].get(i, Fraction(0)):
                    return False
        return True

    def rows_stochastic(self) -> bool:
        return all(sum(row.values()) == 1 for row in self.rows)

    def stationary_exact(self) -> bool:
        out = [Fraction(0)] * self.size
        for i, row in enumerate(self.rows):
            for j, q in row.items():
                out[j] += self.pi[i] * q
        return tuple(out) == self.pi


def exact_transition_matrix(r: Region, p, cap: int = DEFAULT_STATE_CAP) -> ExactChain:
    lam = Fraction(_lam(p))
    states = independent_masks(r, cap=64)
    if len(states) > cap:
        raise ResourceCapError(f"{r} has {len(states)} states, cap is {cap}")
    index = {int(m): i for i, m in enumerate(states)}
    n = r.n_vertices
    weights = [lam ** int(k) for k in np.bitwise_count(states)]
    Z = sum(weights)
    pi = tuple(wt / Z for wt in weights)
    up, down = min(Fraction(1), lam), min(Fraction(1), 1 / lam)
    rows = []
    for m in states:
        m = int(m)
        row: dict[int, Fraction] = {}
        stay = Fraction(1)
        for v in range(n):
            if m >> v & 1:
                q = down / n
            elif m & r.neighbor_masks[v]:
                continue
            else:
                q = up / n
            j = index[m ^ (1 << v)]
            row[j] = row.get(j, Fraction(0)) + q
            stay -= q
        if stay:
            row[index[m]] = row.get(index[m], Fraction(0)) + stay
        rows.append(row)
    return ExactChain(r, lam, states, pi, tuple(rows))


def spectral_gap(chain: ExactChain) -> float:
    """1 - (second largest eigenvalue), via the symmetrised matrix D^1/2 P D^-1/2."""
    P = chain.dense()
    s = np.sqrt(np.array([float(x) for x in chain.pi]))
    A = (s[:, None] * P) / s[None, :]
    A = (A + A.T) / 2
    ev = np.linalg.eigvalsh(A)
    return float(1.0 - ev[-2]) if len(ev) > 1 else 1.0


def _flows(chain: ExactChain):
    """Undirected edges (i, j, Q(i, j)) with Q = pi_i P_ij, i < j."""
    out = []
    for i, row in enumerate(chain.rows):
        for j, q in row.items():
            if i < j:
                out.append((i, j, float(chain.pi[i] * q)))
    return out


def cut_conductance(chain: ExactChain, S) -> float:
    S = set(S)
    piS = sum(float(chain.pi[i]) for i in S)
    if piS == 0:
        raise ContractError("empty cut")
    flow = sum(q for i, j, q in _flows(chain) if (i in S) != (j in S))
    return flow / piS


def _min_ratio_cut(pi: np.ndarray, edges, t: float):
    """min over S (pi(S) <= 1/2, S nonempty) of Q(S, S^c) - t pi(S), as a MILP."""
    n, m = len(pi), len(edges)
    c = np.concatenate([-t * pi, np.array([q for _, _, q in edges])])
    rows, cols, vals = [], [], []
    lo, hi = [], []
    k = 0
    for e, (i, j, _) in enumerate(edges):
        for a, b in ((i, j), (j, i)):
            # y_e >= x_a - x_b
            rows += [k, k, k]
            cols += [n + e, a, b]
            vals += [1.0, -1.0, 1.0]
            lo.append(0.0)
            hi.append(np.inf)
            k += 1
    rows += [k] * n
    cols += list(range(n))
    vals += list(pi)
    lo.append(-np.inf)
    hi.append(0.5)
    k += 1
    rows += [k] * n
    cols += list(range(n))
    vals += [1.0] * n
    lo.append(1.0)
    hi.append(np.inf)
    k += 1
    A = sp.csr_array((vals, (rows, cols)), shape=(k, n + m))
    integrality = np.concatenate([np.ones(n), np.zeros(m)])
    res = milp(c, constraints=LinearConstraint(A, lo, hi), integrality=integrality,
               bounds=Bounds(0, 1), options={"mip_rel_gap": 0.0})
    if res.x is None:
        raise RuntimeError(f"conductance MILP failed: {res.message}")
    S = [i for i in range(n) if res.x[i] > 0.5]
    return S


def exact_conductance(chain: ExactChain, max_iter: int = 100) -> tuple[float, list[int]]:
    """Phi = min over pi(S) <= 1/2 of Q(S, S^c) / pi(S), by Dinkelbach iteration."""
    pi = np.array([float(x) for x in chain.pi])
    edges = _flows(chain)
    # start from the best single state
    best = None
    for i in range(chain.size):
        if pi[i] <= 0.5:
            phi = cut_conductance(chain, [i])
            if best is None or phi < best[0]:
                best = (phi, [i])
    t, S = best
    for _ in range(max_iter):
        S_new = _min_ratio_cut(pi, edges, t)
        phi_new = cut_conductance(chain, S_new)
        if phi_new >= t * (1 - 1e-12):
            break
        t, S = phi_new, S_new
    return t, sorted(S)


def brute_force_conductance(chain: ExactChain) -> float:
    n = chain.size
    if n > 20:
        raise ResourceCapError("brute-force conductance is limited to 20 states")
    pi = [float(x) for x in chain.pi]
    edges = _flows(chain)
    best = math.inf
    for mask in range(1, 1 << n):
        piS = sum(pi[i] for i in range(n) if mask >> i & 1)
        if piS > 0.5 + 1e-15:
            continue
        flow = sum(q for i, j, q in edges if (mask >> i & 1) != (mask >> j & 1))
        best = min(best, flow / piS)
    return best


@dataclass(frozen=True)
class ConductanceReport:
    region: str
    lam: float
    cut: str
    phi_cut: float
    phi: float
    phi_side: tuple[int, ...]
    pi_fault: float
    pi_even: float
    pi_odd: float
    gap: float
    sandwich_ok: bool
    ratio_bound: float
    ratio_chain_ok: bool

    def to_json(self) -> dict:
        d = asdict(self)
        d["phi_side"] = list(self.phi_side)
        return d


def state_labels(r: Region, states: np.ndarray) -> np.ndarray:
    """0 fault, 1 even cross, 2 odd cross for each state mask."""
    lab = cross_labels(r, states)
    if (lab == 3).any():
        raise AssertionError("state with crosses of both parities")
    return lab


def spectral_gap_and_conductance(r: Region, p, cap: int = DEFAULT_STATE_CAP, tol: float = 1e-10) -> ConductanceReport:
    chain = exact_transition_matrix(r, p, cap)
    lab = state_labels(r, chain.states)
    pi = np.array([float(x) for x in chain.pi])
    pF, p0, p1 = (float(pi[lab == k].sum()) for k in (0, 1, 2))
    # the cut is Omega_0 unless it carries more than half the mass
    name, k = ("Omega_0", 1) if p0 <= 0.5 else ("Omega_1", 2)
    S = np.flatnonzero(lab == k)
    phi_S = cut_conductance(chain, S) if len(S) else math.inf
    phi, side = exact_conductance(chain)
    gap = spectral_gap(chain)
    sandwich = phi * phi / 2 <= gap + tol and gap <= 2 * phi + tol
    piS = p0 if k == 1 else p1
    bound = pF / piS if piS > 0 else math.inf
    return ConductanceReport(str(r), float(chain.lam), name, phi_S, phi, tuple(side), pF, p0, p1, gap,
                             bool(sandwich), bound, bool(phi <= phi_S + tol and phi_S <= bound + tol))


def class_weights(r: Region, p, cap: int = 64) -> dict[str, Fraction]:
    """Exact pi of the fault / even-cross / odd-cross classes (fault = no cross)."""
    lam = Fraction(_lam(p))
    masks = independent_masks(r, cap=cap)
    lab = state_labels(r, masks)
    sizes = np.bitwise_count(masks)
    total = Fraction(0)
    out = {}
    for k, name in _LABEL_NAMES.items():
        hist = np.bincount(sizes[lab == k], minlength=r.n_vertices + 1)
        wt = sum(int(c) * lam ** i for i, c in enumerate(hist) if c)
        out[name] = wt
        total += wt
    return {name: wt / total for name, wt in out.items()}


# ---------------------------------------------------------------------------
# fast chains


@nb.njit(cache=True)
def _cross_label(occ, w, h, torus, dxs, dys):
    # 0 none, 1 even cross, 2 odd cross (inlined copy of the topology kernels)
    n = w * h
    comp = np.full(n, -1, np.int64)
    lx = np.zeros(n, np.int64)
    ly = np.zeros(n, np.int64)
    stack = np.empty(n, np.int64)
    label = 0
    for s in range(n):
        if occ[s] == 0 or comp[s] >= 0:
            continue
        b = (s % w + s // w) & 1
        comp[s] = s
        lx[s] = s % w
        ly[s] = s // w
        top = 1
        stack[0] = s
        have = False
        w1x = 0
        w1y = 0
        hit = False
        left = right = low = high = False
        while top > 0:
            top -= 1
            u = stack[top]
            if not torus:
                if lx[u] <= 1:
                    left = True
                if lx[u] >= w - 2:
                    right = True
                if ly[u] <= 1:
                    low = True
                if ly[u] >= h - 2:
                    high = True
            for k in range(dxs.shape[0]):
                tx = lx[u] + dxs[k]
                ty = ly[u] + dys[k]
                if torus:
                    v = (ty % h) * w + (tx % w)
                else:
                    if tx < 0 or tx >= w or ty < 0 or ty >= h:
                        continue
                    v = ty * w + tx
                if occ[v] == 0:
                    continue
                if comp[v] < 0:
                    comp[v] = s
                    lx[v] = tx
                    ly[v] = ty
                    stack[top] = v
                    top += 1
                elif torus:
                    wx = tx - lx[v]
                    wy = ty - ly[v]
                    if wx != 0 or wy != 0:
                        if not have:
                            have = True
                            w1x = wx
                            w1y = wy
                        elif w1x * wy - w1y * wx != 0:
                            hit = True
        if torus and hit:
            label |= 1 << b
        if not torus and left and right:
            # a left-right bridge; pair with a top-bottom bridge of the same parity
            label |= 4 << b
        if not torus and low and high:
            label |= 16 << b
    if not torus:
        out = 0
        for b in range(2):
            if (label >> (2 + b)) & 1 and (label >> (4 + b)) & 1:
                out |= 1 << b
        return out
    return label


@nb.njit(cache=True)
def _run(occ, nbr, deg, lam, u, n_steps, w, h, torus, dxs, dys, record_every, rec, target, start_step):
    # Advance n_steps using uniforms u[2k], u[2k+1].  Records (step, size, even-odd, label)
    # every record_every steps into rec.  If target >= 0 stop when the label equals it.
    n = occ.shape[0]
    up = min(1.0, lam)
    down = min(1.0, 1.0 / lam)
    nrec = 0
    size = 0
    diff = 0
    for v in range(n):
        if occ[v]:
            size += 1
            diff += 1 if ((v % w + v // w) & 1) == 0 else -1
    for k in range(n_steps):
        v = int(u[2 * k] * n)
        if v >= n:
            v = n - 1
        a = u[2 * k + 1]
        changed = False
        if occ[v]:
            if a < down:
                occ[v] = 0
                changed = True
        else:
            free = True
            for j in range(deg[v]):
                if occ[nbr[v, j]]:
                    free = False
                    break
            if free and a < up:
                occ[v] = 1
                changed = True
        sgn = 1 if ((v % w + v // w) & 1) == 0 else -1
        if changed:
            if occ[v]:
                size += 1
                diff += sgn
            else:
                size -= 1
                diff -= sgn
        step = start_step + k + 1
        if target >= 0 and changed:
            # a cross of parity b can only appear when a parity-b vertex is added,
            # and the fault class only when something is removed
            check = False
            if target == 0 and occ[v] == 0:
                check = True
            elif target == 1 and occ[v] == 1 and sgn == 1:
                check = True
            elif target == 2 and occ[v] == 1 and sgn == -1:
                check = True
            if check:
                lab = _cross_label(occ, w, h, torus, dxs, dys)
                if lab == target:
                    return k + 1, nrec
        if record_every > 0 and step % record_every == 0:
            rec[nrec, 0] = step
            rec[nrec, 1] = size
            rec[nrec, 2] = diff
            rec[nrec, 3] = _cross_label(occ, w, h, torus, dxs, dys)
            nrec += 1
    return -1, nrec


def _arrays(r: Region):
    deg = np.array([len(nb_) for nb_ in r.neighbors], dtype=np.int64)
    nbr = np.zeros((r.n_vertices, 4), dtype=np.int64)
    for v, nb_ in enumerate(r.neighbors):
        nbr[v, : len(nb_)] = nb_
    return nbr, deg


def _occ(c: Configuration) -> np.ndarray:
    occ = np.zeros(c.region.n_vertices, dtype=np.uint8)
    for v in c.vertices():
        occ[v] = 1
    return occ


def _label_of(c: Configuration) -> int:
    from .topology import _SP_DX, _SP_DY

    r = c.region
    return int(_cross_label(_occ(c), r.width, r.height, r.is_torus, _SP_DX, _SP_DY))


@dataclass(frozen=True)
class Trace:
    region: str
    lam: float
    seed: int
    record_every: int
    steps: tuple[int, ...]
    occupancy: tuple[int, ...]
    even_minus_odd: tuple[int, ...]
    classes: tuple[str, ...]
    final: Configuration

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["step", "occupancy", "even_minus_odd", "class"])
        for row in zip(self.steps, self.occupancy, self.even_minus_odd, self.classes):
            wr.writerow(row)
        return buf.getvalue()

    def longest_class_run(self) -> int:
        best = cur = 0
        prev = None
        for c in self.classes:
            cur = cur + 1 if c == prev else 1
            prev = c
            best = max(best, cur)
        return best


def simulate(r: Region, p, steps: int, seed: int, record_every: int = 1,
             start: Configuration | None = None) -> Trace:
    """Run the chain for ``steps`` steps, recording every ``record_every`` steps (step 0 is not recorded)."""
    from .topology import _SP_DX, _SP_DY

    if steps < 0 or record_every < 1:
        raise ContractError("steps must be >= 0 and record_every >= 1")
    lam = float(_lam(p))
    c = checkerboard(r, 0) if start is None else start
    if c.region != r or not is_independent(c):
        raise ContractError("start must be an independent set of the region")
    occ = _occ(c)
    nbr, deg = _arrays(r)
    rng = make_rng(seed)
    recs = []
    done = 0
    while done < steps:
        k = min(BLOCK, steps - done)
        u = rng.random(2 * k)
        rec = np.zeros((k // record_every + 1, 4), dtype=np.int64)
        _, nrec = _run(occ, nbr, deg, lam, u, k, r.width, r.height, r.is_torus, _SP_DX, _SP_DY,
                       record_every, rec, -1, done)
        recs.append(rec[:nrec])
        done += k
    rec = np.concatenate(recs) if recs else np.zeros((0, 4), dtype=np.int64)
    final = Configuration.from_vertices(r, np.flatnonzero(occ).tolist())
    return Trace(str(r), lam, seed, record_every, tuple(int(x) for x in rec[:, 0]), tuple(int(x) for x in rec[:, 1]),
                 tuple(int(x) for x in rec[:, 2]), tuple(_LABEL_NAMES[int(x)] for x in rec[:, 3]), final)


def escape_time_experiment(r: Region, p, start: Configuration | None = None,
                           target_class: TopologyKind = TopologyKind.ODD_CROSS, seed: int = 0,
                           max_steps: int = 10_000_000) -> int | None:
    """Steps until the chain first reaches ``target_class``; None on timeout."""
    from .topology import _SP_DX, _SP_DY

    lam = float(_lam(p))
    c = checkerboard(r, 0) if start is None else start
    target = _KIND_LABEL[target_class]
    if _label_of(c) == target:
        return 0
    occ = _occ(c)
    nbr, deg = _arrays(r)
    rng = make_rng(seed)
    rec = np.zeros((1, 4), dtype=np.int64)
    done = 0
    while done < max_steps:
        k = min(BLOCK * 16, max_steps - done)
        u = rng.random(2 * k)
        hit, _ = _run(occ, nbr, deg, lam, u, k, r.width, r.height, r.is_torus, _SP_DX, _SP_DY, 0, rec, target, done)
        if hit >= 0:
            return done + hit
        done += k
    return None


def _escape_job(args):
    r, lam, seed, max_steps = args
    return escape_time_experiment(r, lam, seed=seed, max_steps=max_steps)


@dataclass(frozen=True)
class EscapeSummary:
    lam: float
    seeds: tuple[int, ...]
    times: tuple[int | None, ...]
    max_steps: int

    @property
    def median(self) -> float:
        """Median hitting time, timeouts counted as max_steps (a lower bound)."""
        vals = [self.max_steps if t is None else t for t in self.times]
        return float(np.median(vals))

    @property
    def timeouts(self) -> int:
        return sum(t is None for t in self.times)


def escape_time_median(r: Region, p, seeds: int = 20, base_seed: int = 0,
                       max_steps: int = 10_000_000, workers: int = 1) -> EscapeSummary:
    """Run ``seeds`` independent chains (seeds base_seed, base_seed+1, ...) from the even checkerboard."""
    lam = float(_lam(p))
    ids = tuple(range(base_seed, base_seed + seeds))
    jobs = [(r, lam, s, max_steps) for s in ids]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            times = tuple(ex.map(_escape_job, jobs))
    else:
        times = tuple(_escape_job(j) for j in jobs)
    return EscapeSummary(lam, ids, times, max_steps)


@nb.njit(cache=True)
def _visit_masks(occ, nbr, deg, lam, u, n_steps, thin, out):
    n = occ.shape[0]
    up = min(1.0, lam)
    down = min(1.0, 1.0 / lam)
    mask = np.uint64(0)
    for v in range(n):
        if occ[v]:
            mask |= np.uint64(1) << np.uint64(v)
    m = 0
    for k in range(n_steps):
        v = int(u[2 * k] * n)
        if v >= n:
            v = n - 1
        a = u[2 * k + 1]
        if occ[v]:
            if a < down:
                occ[v] = 0
                mask ^= np.uint64(1) << np.uint64(v)
        else:
            free = True
            for j in range(deg[v]):
                if occ[nbr[v, j]]:
                    free = False
                    break
            if free and a < up:
                occ[v] = 1
                mask ^= np.uint64(1) << np.uint64(v)
        if (k + 1) % thin == 0:
            out[m] = mask
            m += 1
    return m


def sample_states(r: Region, p, steps: int, seed: int, thin: int = 1,
                  start: Configuration | None = None) -> np.ndarray:
    """State bitmasks after every ``thin`` steps (regions up to 64 vertices)."""
    if r.n_vertices > 64:
        raise ResourceCapError("state sampling stores uint64 masks")
    lam = float(_lam(p))
    c = Configuration(r) if start is None else start
    occ = _occ(c)
    nbr, deg = _arrays(r)
    rng = make_rng(seed)
    out = []
    done = 0
    while done < steps:
        k = min(BLOCK - BLOCK % thin, steps - done)
        u = rng.random(2 * k)
        buf = np.zeros(k // thin + 1, dtype=np.uint64)
        m = _visit_masks(occ, nbr, deg, lam, u, k, thin, buf)
        out.append(buf[:m])
        done += k
    return np.concatenate(out) if out else np.zeros(0, dtype=np.uint64)
