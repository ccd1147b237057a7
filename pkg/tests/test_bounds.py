import math
from collections import Counter
from fractions import Fraction
import warnings

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from hardcore_taxi.bounds import (
    AlmMatrix,
    alm_upper,
    box_condition_one,
    box_condition_two,
    box_quadratic,
    bounds_report,
    bridge_lower,
    build_alm_matrix,
    canonical_walks,
    certified_top_eigenvalue,
    code_rank_table,
    fekete_upper,
    lambda_box,
    lambda_torus,
    peierls_cutoff,
    peierls_sum,
    walk_code,
)
from hardcore_taxi.errors import ContractError, ResourceCapError
from hardcore_taxi.walks import WalkTable, count_taxi_walks, iter_taxi_walks, split_walk

C60_REFERENCE = 2189670407434
B60_REFERENCE = 80312795498
# frozen from the first run of the implementation
ALM_10_30_UPPER = 1.599928725703977
PEIERLS_DOUBLE_CRITICAL = {"m": 27, "m/4": 125}
LAMBDA_BOX_15884 = 7.103034482642641


@pytest.fixture(scope="module")
def table():
    return count_taxi_walks(40)


def reference_alm(m, n):
    # independent construction through split_walk and a lookup of canonical walks
    index = {w: i for i, w in enumerate(canonical_walks(m))}
    dim = len(index)
    A = np.zeros((dim, dim), dtype=np.int64)
    for w in iter_taxi_walks(n):
        steps = tuple(int(d) for d in w.steps)
        _, tail = split_walk(w, n - m)
        A[index[steps[:m]], index[tuple(int(d) for d in tail.steps)]] += 1
    return A


def test_fekete_examples(table):
    assert fekete_upper(table, 1) == 2.0
    assert fekete_upper(table, 20) == pytest.approx(20114 ** (1 / 20))
    # frozen: 20114 ** (1/20) = exp(ln(20114)/20)
    assert fekete_upper(table, 20) == pytest.approx(math.exp(math.log(20114) / 20), rel=1e-15)
    assert fekete_upper(table, 20) == pytest.approx(1.641250692, abs=1e-9)


def test_length_60_table_arithmetic():
    c = [1] * 61
    b = [1] * 61
    c[60], b[60] = C60_REFERENCE, B60_REFERENCE
    t = WalkTable(tuple(c), tuple(b))
    assert 1.6057 < fekete_upper(t, 60) < 1.6058
    assert bridge_lower(t, 60) == pytest.approx(1.5196, abs=1e-4)


def test_bridge_lower_examples(table):
    assert bridge_lower(table, 1) == 1.0
    lows = [bridge_lower(table, n) for n in range(1, 41)]
    ups = [fekete_upper(table, n) for n in range(1, 41)]
    assert max(lows) <= min(ups)


def test_a12_by_hand():
    A = build_alm_matrix(1, 2)
    assert A.dim == 2
    assert A.matrix.toarray().tolist() == [[1, 1], [1, 1]]


@pytest.mark.parametrize("m,n", [(1, 5), (2, 7), (3, 9), (4, 12), (5, 14), (6, 10)])
def test_alm_matches_reference(m, n):
    assert np.array_equal(build_alm_matrix(m, n).matrix.toarray(), reference_alm(m, n))


def test_alm_totals(table):
    A = build_alm_matrix(10, 25)
    assert A.total() == table.c[25]
    assert A.dim == table.c[10]
    B = build_alm_matrix(4, 12)
    starts = Counter(tuple(int(d) for d in w.steps[:4]) for w in iter_taxi_walks(12))
    row_sums = np.asarray(B.matrix.sum(axis=1)).ravel()
    assert [starts[w] for w in canonical_walks(4)] == row_sums.tolist()


def test_codes_are_injective():
    for m in range(1, 12):
        walks = canonical_walks(m)
        codes = [walk_code(w) for w in walks]
        assert len(set(codes)) == len(walks)
        rank = code_rank_table(m)
        # mirror pairs differ only in the avenue bit
        for c in codes:
            assert rank[c ^ 1] >= 0


def test_triplet_roundtrip():
    A = build_alm_matrix(3, 8)
    text = A.to_triplets()
    assert text.splitlines()[0] == f"{A.dim} 3 8"
    B = AlmMatrix.from_triplets(text)
    assert (B.matrix != A.matrix).nnz == 0


def test_enclosure_trivial_cases():
    enc = certified_top_eigenvalue(np.diag([3.0, 3.0, 3.0]))
    assert enc.lower <= 3.0 <= enc.upper and enc.width < 1e-9
    enc = certified_top_eigenvalue(np.array([[20114.0]]))
    assert enc.lower <= 20114 <= enc.upper
    assert certified_top_eigenvalue(np.zeros((2, 2))).upper == 0.0


def test_enclosure_periodic_and_reducible():
    # a 2-cycle has eigenvalues +-2; plain iteration would not settle without a shift
    P = np.array([[0, 2.0, 0], [2.0, 0, 0], [1.0, 1.0, 0.5]])
    enc = certified_top_eigenvalue(P)
    assert enc.lower <= 2.0 <= enc.upper and enc.converged


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 8), st.integers(0, 10**6))
def test_enclosure_contains_true_radius(n, seed):
    rng = np.random.default_rng(seed)
    M = rng.integers(0, 4, size=(n, n)).astype(float)
    rho = max(abs(np.linalg.eigvals(M)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        enc = certified_top_eigenvalue(M, max_iter=20000)
    assert enc.lower <= rho * (1 + 1e-9) and rho <= enc.upper * (1 + 1e-9)
    if enc.upper > 0:
        assert enc.lower <= enc.rayleigh * (1 + 1e-12) or enc.lower == 0


def test_alm_enclosure_and_rayleigh():
    A = build_alm_matrix(10, 30)
    enc = certified_top_eigenvalue(A, tol=1e-11, max_iter=10_000)
    assert enc.converged and enc.iterations <= 10_000
    assert enc.width / enc.upper < 1e-11
    assert enc.lower <= enc.rayleigh <= enc.upper


@pytest.mark.parametrize("m,n", [(2, 8), (4, 12), (6, 16), (8, 20)])
def test_symmetry_reduction(m, n):
    A = build_alm_matrix(m, n)
    full = certified_top_eigenvalue(A)
    red = certified_top_eigenvalue(A.reduced())
    assert A.reduced().shape[0] * 2 == A.dim
    assert abs(full.upper - red.upper) <= 1e-8 * full.upper


def test_alm_bounds(table):
    up = alm_upper(10, 30)
    assert up == pytest.approx(ALM_10_30_UPPER, abs=1e-9)
    assert up < fekete_upper(table, 30) - 1e-6
    assert up >= bridge_lower(table, 40)
    for n in (5, 12, 20):
        assert abs(alm_upper(0, n) - fekete_upper(table, n)) < 1e-12


def test_alm_guards(monkeypatch):
    with pytest.raises(ContractError):
        build_alm_matrix(5, 5)
    with pytest.raises(ResourceCapError):
        build_alm_matrix(2, 20, max_walks=1000)
    monkeypatch.setenv("HARDCORE_TAXI_ALM_MAX_WALKS", "100")
    with pytest.raises(ResourceCapError):
        build_alm_matrix(2, 20)


def test_lambda_torus():
    assert lambda_torus(1.5883) == pytest.approx(5.3646, abs=1e-3)
    assert lambda_torus(1.0) == 0.0
    # frozen from 1.6058**4 - 1 evaluated with fractions
    assert lambda_torus(1.6058) == pytest.approx(float(Fraction(16058, 10000) ** 4 - 1), rel=1e-14)
    assert lambda_torus(1.6058) == pytest.approx(5.649145, abs=1e-6)


def test_lambda_box_threshold():
    assert lambda_box(1.0) == 0.0
    lb = lambda_box(1.5884)
    assert 5.36 < lb < 7.5
    assert lb == pytest.approx(LAMBDA_BOX_15884, rel=1e-12)
    assert abs(box_quadratic(lb, 1.5884)) < 1e-9


@settings(max_examples=200, deadline=None)
@given(st.floats(1.0001, 3.0))
def test_lambda_box_flips(mu):
    lb = lambda_box(mu)
    above = lb * (1 + 1e-9)
    below = lb * (1 - 1e-9)
    assert box_condition_one(above, mu) and box_condition_two(above, mu)
    assert not (box_condition_one(below, mu) and box_condition_two(below, mu))


def test_lambda_box_grid_crosscheck():
    mu = 1.5884
    grid = np.linspace(0.0, 20.0, 20001)
    ok = [box_condition_one(x, mu) and box_condition_two(x, mu) for x in grid]
    first = grid[ok.index(True)]
    assert abs(first - lambda_box(mu)) <= 1e-3


@given(st.floats(1.0, 2.5), st.floats(1.0, 2.5))
def test_thresholds_monotone(a, b):
    lo, hi = sorted((a, b))
    assert lambda_torus(lo) <= lambda_torus(hi)
    assert lambda_box(lo) <= lambda_box(hi) + 1e-12


def direct_peierls(m, lam, mu, start):
    q = mu**4 / (1 + lam)
    L = m if start == "m" else -(-m // 4)
    total, l = 0.0, L
    while True:
        term = l * q**l
        total += term
        if term < 1e-12 * total and l > L + 10:
            break
        l += 1
    return 68 * m * m * total


@pytest.mark.parametrize("start", ["m", "m/4"])
def test_peierls_fixture_and_minimality(start):
    mu = 1.5884
    lam = 2 * lambda_torus(mu)
    m = peierls_cutoff(lam, mu, start)
    assert m == PEIERLS_DOUBLE_CRITICAL[start]
    assert direct_peierls(m, lam, mu, start) <= 1 / 3
    assert direct_peierls(m - 1, lam, mu, start) > 1 / 3
    assert peierls_sum(m, lam, mu, start) == pytest.approx(direct_peierls(m, lam, mu, start), rel=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.floats(1.2, 2.0), st.floats(1.01, 20.0), st.sampled_from(["m", "m/4"]))
def test_peierls_minimality_property(mu, factor, start):
    lam = (mu**4 - 1) * factor + 1e-3
    m = peierls_cutoff(lam, mu, start)
    assert peierls_sum(m, lam, mu, start) <= 1 / 3 * (1 + 1e-12)
    if m > 1:
        assert peierls_sum(m - 1, lam, mu, start) > 1 / 3 * (1 - 1e-12)


def test_peierls_near_critical_and_errors():
    mu = 1.5884
    m = peierls_cutoff(lambda_torus(mu) + 1e-6, mu)
    assert 10**6 < m < 10**12
    with pytest.raises(ContractError):
        peierls_cutoff(lambda_torus(mu), mu)
    assert peierls_cutoff(1e6, 1.0) == 1


def test_bounds_report(table):
    rep = bounds_report(table, 40, method="fekete")
    assert rep.mu_lower <= rep.mu_upper
    assert '"lambda_box"' in rep.to_json()
    rep = bounds_report(table, 30, m=10, method="alm")
    assert rep.mu_upper == pytest.approx(ALM_10_30_UPPER, abs=1e-9)
