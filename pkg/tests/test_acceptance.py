"""Acceptance suite: one check per criterion, each printing a PASS/FAIL line.

The lines are repeated in the pytest terminal summary.  The extended parts
of criteria 1 and 4 need the n <= 60 table, which takes hours on one core; point HARDCORE_TAXI_EXTENDED_TABLE at a counts CSV
from ``hardcore-taxi count --extended --n 60 --bridges`` to include them.
"""

import itertools
import os
import sys
import time
from collections import defaultdict
from fractions import Fraction

import numpy as np
import pytest

from hardcore_taxi.bounds import (
    alm_upper,
    box_condition_one,
    box_condition_two,
    box_quadratic,
    bridge_lower,
    fekete_upper,
    lambda_box,
    lambda_torus,
)
from hardcore_taxi.dynamics import (
    class_weights,
    escape_time_median,
    exact_transition_matrix,
    spectral_gap_and_conductance,
)
from hardcore_taxi.hardcore import (
    Boundary,
    Configuration,
    Region,
    can_add,
    enumerate_configurations,
    is_independent,
    partition_function_exact,
    strip_partition_function,
)
from hardcore_taxi.lattice import Direction
from hardcore_taxi.topology import (
    TopologyKind,
    classify,
    cross_parities,
    find_first_fault,
    has_fault,
    last_line,
    odd_contour,
    phi_injection,
    shift_across_fault,
    shift_interior,
    validate_class,
)
from hardcore_taxi.walks import WalkTable, brute_force_count, count_taxi_walks

EXTENDED_ENV = "HARDCORE_TAXI_EXTENDED_TABLE"
C60, B60 = 2189670407434, 80312795498
# collected for the terminal summary (see conftest.py)
RESULT_LINES: list[str] = []


def report(k: int, ok: bool, detail: str, skipped: str = "") -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {k:2d}: {detail}"
    if skipped:
        line += f" [skipped: {skipped}]"
    RESULT_LINES.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def table40():
    t0 = time.perf_counter()
    t = count_taxi_walks(40)
    return t, time.perf_counter() - t0


def _extended_table():
    path = os.environ.get(EXTENDED_ENV)
    if path and os.path.exists(path):
        t = WalkTable.load(path)
        if t.n_max >= 60:
            return t
    return None


def test_criterion_1_golden_counts(table40):
    count_taxi_walks(2)  # load compiled kernels
    t0 = time.perf_counter()
    c20 = count_taxi_walks(20).c[20]
    dt20 = time.perf_counter() - t0
    t, dt40 = table40
    ok = c20 == 20114 and dt20 < 1.0 and dt40 < 300 and t.c[40] == 219324398
    detail = f"c_20={c20} in {dt20:.2f}s, n<=40 table in {dt40:.1f}s"
    ext = _extended_table()
    skipped = ""
    if ext is None:
        skipped = "extended c_60/b_60 check, no n<=60 table"
    else:
        ok = ok and ext.c[60] == C60 and ext.b[60] == B60
        detail += f", c_60={ext.c[60]}, b_60={ext.b[60]}"
    report(1, ok, detail, skipped)


def test_criterion_2_oracle_equivalence(table40):
    t, _ = table40
    bad = [n for n in range(1, 15) if brute_force_count(n) != t.c[n]]
    report(2, not bad, f"brute force vs optimized for n<=14, mismatches: {bad}")


def test_criterion_3_sub_super_multiplicativity(table40):
    t, _ = table40
    c, b = t.c, t.b
    pairs = [(i, n) for n in range(2, 41) for i in range(1, n)]
    sub = all(c[n] <= c[i] * c[n - i] for i, n in pairs)
    sup = all(b[n] >= b[i] * b[n - i] for i, n in pairs)
    report(3, sub and sup, f"{len(pairs)} (i,n) pairs, c submultiplicative={sub}, b supermultiplicative={sup}")


def test_criterion_4_connective_bounds(table40):
    t, _ = table40
    up40, up30 = fekete_upper(t, 40), fekete_upper(t, 30)
    alm = alm_upper(10, 30)
    low = bridge_lower(t, 40)
    zero = max(abs(alm_upper(0, n) - fekete_upper(t, n)) for n in (5, 10, 15, 20))
    ok = up40 >= low and alm >= low and alm < up30 - 1e-6 and zero <= 1e-12
    detail = (f"fekete(40)={up40:.6f}, alm(10,30)={alm:.6f}, fekete(30)={up30:.6f}, "
              f"bridge(40)={low:.6f}, |alm(0,n)-fekete(n)|<={zero:.1e}")
    ext = _extended_table()
    skipped = ""
    if ext is None:
        skipped = "fekete_upper(60), no n<=60 table"
    else:
        f60 = fekete_upper(ext, 60)
        ok = ok and f60 < 1.6058
        detail += f", fekete(60)={f60:.6f}"
    report(4, ok, detail, skipped)


def test_criterion_5_thresholds():
    lt = lambda_torus(1.5883)
    flips = True
    for mu in np.linspace(1.01, 3.0, 60):
        lb = lambda_box(mu)
        above, below = lb * (1 + 1e-9), lb * (1 - 1e-9)
        flips &= box_condition_one(above, mu) and box_condition_two(above, mu)
        flips &= not (box_condition_one(below, mu) and box_condition_two(below, mu))
        flips &= abs(box_quadratic(lb, mu)) < 1e-9 * max(1.0, lb * lb)
    ok = abs(lt - 5.3646) <= 1e-3 and flips
    report(5, ok, f"lambda_torus(1.5883)={lt:.6f}, box conditions flip at lambda_box for 60 mu values: {flips}")


def test_criterion_6_trichotomy():
    t0 = time.perf_counter()
    counts = {}
    ok = True
    for name in ("grid:4x4", "grid:5x5", "torus:4x4"):
        r = Region.parse(name)
        label = {}
        for c in enumerate_configurations(r):
            cls = classify(c)
            ok &= len(cross_parities(c)) + has_fault(c) == 1
            ok &= validate_class(c, cls)
            label[c.occupied] = cls.kind
        for m, kind in label.items():
            if kind is TopologyKind.FAULT:
                continue
            for v in range(r.n_vertices):
                other = label.get(m ^ (1 << v))
                ok &= other is None or other is TopologyKind.FAULT or other is kind
        counts[name] = len(label)
    dt = time.perf_counter() - t0
    report(6, ok and dt < 60, f"classified {counts} with re-validated witnesses in {dt:.1f}s")


def _injection_ok(r: Region, lam: Fraction) -> tuple[bool, int]:
    Z = partition_function_exact(r, lam).value
    groups = defaultdict(list)
    for c in enumerate_configurations(r):
        if has_fault(c):
            w = find_first_fault(c)
            J = None if r.is_torus else last_line(c, w).occupied
            groups[(w, J)].append(c)
    ok, n_images = True, 0
    for (w, J), cs in groups.items():
        images = set()
        j = 0 if J is None else bin(J).count("1")
        for c in cs:
            base = c if r.is_torus else Configuration(r, c.occupied & ~J)
            k = len(shift_across_fault(base, w).addable)
            for bits in itertools.product((0, 1), repeat=k):
                img = phi_injection(c, w, bits)
                ok &= is_independent(img) and img.occupied not in images
                images.add(img.occupied)
                # pi(phi(I, r)) = pi(I) lambda^(|r| - |J|), exactly
                ok &= lam ** img.size / Z == lam ** c.size / Z * lam ** (sum(bits) - j)
        n_images += len(images)
    return ok, n_images


def test_criterion_7_injection():
    lam = Fraction(17, 10)
    ok_t, n_t = _injection_ok(Region(4, 4, Boundary.TORUS), lam)
    ok_g, n_g = _injection_ok(Region(4, 4), lam)
    report(7, ok_t and ok_g, f"torus 4x4: {n_t} images ok={ok_t}; grid 4x4: {n_g} images ok={ok_g}")


def test_criterion_8_strip():
    ok = True
    for lam in (Fraction(1), Fraction(3, 2), Fraction(7, 3)):
        ok &= strip_partition_function(0, lam) == 1 and strip_partition_function(1, lam) == 1 + lam
        for n in range(1, 13):
            ok &= strip_partition_function(n, lam) == partition_function_exact(Region(n, 1), lam).value
    report(8, ok, "T_n equals brute-force 1 x n partition functions for n<=12 at three rational activities")


def test_criterion_9_dynamics_exactness():
    ok = True
    parts = []
    for name in ("grid:3x3", "grid:2x4"):
        r = Region.parse(name)
        ch = exact_transition_matrix(r, Fraction(3, 2))
        rep = spectral_gap_and_conductance(r, Fraction(3, 2))
        sandwich = rep.phi ** 2 / 2 <= rep.gap + 1e-10 and rep.gap <= 2 * rep.phi + 1e-10
        ok &= ch.detailed_balance_exact() and ch.rows_stochastic() and sandwich
        parts.append(f"{name} ({ch.size} states) gap={rep.gap:.5f} phi={rep.phi:.5f}")
    report(9, ok, "; ".join(parts))


def test_criterion_10_slow_mixing_trend():
    t0 = time.perf_counter()
    ok = True
    parts = []
    for side in (4, 6):
        r = Region(side, side, Boundary.TORUS)
        ratios = []
        for lam in (1, 2, 4, 8):
            w = class_weights(r, lam)
            ratios.append(w["FaultLine"] / w["EvenCross"])
        ok &= all(a > b for a, b in zip(ratios, ratios[1:]))
        parts.append(f"{side}x{side} ratio " + ",".join(f"{float(x):.3g}" for x in ratios))
    r8 = Region(8, 8, Boundary.TORUS)
    lo = escape_time_median(r8, 0.5, seeds=20, max_steps=2 * 10**7)
    hi = escape_time_median(r8, 8.0, seeds=20, max_steps=2 * 10**7)
    ok &= hi.median >= 10 * lo.median
    dt = time.perf_counter() - t0
    ok &= dt < 600
    parts.append(f"escape median {lo.median:.0f} -> {hi.median:.0f} ({hi.timeouts} timeouts)")
    report(10, ok, "; ".join(parts) + f"; {dt:.0f}s")


def _random_box(rng, w=12, h=12):
    r = Region(w, h)
    c = Configuration(r)
    odd = [r.index(x, y) for x in range(2, w - 2) for y in range(2, h - 2) if (x + y) % 2 == 1]
    rng.shuffle(odd)
    for v in odd[: rng.integers(1, 8)]:
        if can_add(c, v):
            c = c.toggled(v)
    order = list(range(r.n_vertices))
    rng.shuffle(order)
    for v in order:
        if r.parity(v) == 0 and can_add(c, v) and rng.random() < 0.7:
            c = c.toggled(v)
    return c


def test_criterion_11_contours():
    rng = np.random.default_rng(2024)
    ok = True
    sizes = []
    for _ in range(100):
        c = _random_box(rng)
        k = odd_contour(c)
        even = sum(1 for v in k.interior if c.region.parity(v) == 0)
        excess = even - (len(k.interior) - even)
        ok &= k.size % 4 == 0 and k.size >= 12 and k.size // 4 == excess
        for d in Direction:
            _, freed = shift_interior(c, k, d)
            ok &= len(freed) == k.size // 4
        sizes.append(k.size)
    report(11, ok, f"100 instances, |gamma| in [{min(sizes)}, {max(sizes)}]")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
