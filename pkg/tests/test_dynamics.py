from fractions import Fraction

import numpy as np
import pytest

from hardcore_taxi.dynamics import (
    ChainState,
    brute_force_conductance,
    class_weights,
    escape_time_experiment,
    exact_conductance,
    exact_transition_matrix,
    metropolis_move,
    sample_states,
    simulate,
    spectral_gap,
    spectral_gap_and_conductance,
    transition_step,
)
from hardcore_taxi.errors import ContractError, ResourceCapError
from hardcore_taxi.hardcore import Boundary, Configuration, Region, checkerboard, is_independent
from hardcore_taxi.topology import TopologyKind

TORUS4 = Region(4, 4, Boundary.TORUS)


def test_metropolis_rule():
    r = Region(3, 1)
    c = Configuration(r)
    # lambda = 1: adding an isolated vertex always succeeds
    assert metropolis_move(c, 0, 0.999, 1) == c.toggled(0)
    blocked = Configuration.from_vertices(r, [1])
    assert metropolis_move(blocked, 0, 0.0, 5) == blocked
    assert metropolis_move(blocked, 1, 0.49, 2) == Configuration(r)
    assert metropolis_move(blocked, 1, 0.51, 2) == blocked


def test_transition_step_deterministic():
    r = Region(3, 3)
    a = ChainState(Configuration(r), seed=5)
    b = ChainState(Configuration(r), seed=5)
    for _ in range(200):
        a = transition_step(a, 2.0)
        b = transition_step(b, 2.0)
        assert is_independent(a.configuration)
    assert a.configuration == b.configuration and a.step == 200
    # restoring from (seed, step) continues the same stream
    c = ChainState(a.configuration, seed=5, step=200)
    assert transition_step(a, 2.0).configuration == transition_step(c, 2.0).configuration
    with pytest.raises(ContractError):
        ChainState(Configuration.from_vertices(r, [0, 1]), seed=0)


@pytest.mark.parametrize("name", ["grid:2x2", "grid:3x3", "grid:2x4", "torus:4x4"])
def test_exact_chain_reversible(name):
    ch = exact_transition_matrix(Region.parse(name), Fraction(3, 2))
    assert ch.rows_stochastic()
    assert ch.detailed_balance_exact()
    assert ch.stationary_exact()


def test_top_eigenvector_is_pi():
    ch = exact_transition_matrix(Region(3, 3), Fraction(3, 2))
    assert ch.size == 63
    P = ch.dense()
    w, v = np.linalg.eig(P.T)
    k = int(np.argmax(w.real))
    assert w[k].real == pytest.approx(1.0, abs=1e-12)
    vec = np.abs(v[:, k].real)
    vec /= vec.sum()
    assert np.allclose(vec, [float(x) for x in ch.pi], atol=1e-12)


def test_state_cap():
    with pytest.raises(ResourceCapError):
        exact_transition_matrix(Region(3, 3), 1, cap=50)


@pytest.mark.parametrize("name", ["grid:2x2", "grid:1x4", "grid:2x3"])
@pytest.mark.parametrize("lam", [Fraction(1, 2), 1, 4])
def test_conductance_matches_brute_force(name, lam):
    ch = exact_transition_matrix(Region.parse(name), lam)
    phi, side = exact_conductance(ch)
    assert phi == pytest.approx(brute_force_conductance(ch), rel=1e-10)
    assert sum(float(ch.pi[i]) for i in side) <= 0.5 + 1e-12


@pytest.mark.parametrize("name", ["grid:3x3", "grid:2x4"])
def test_sandwich(name):
    rep = spectral_gap_and_conductance(Region.parse(name), Fraction(3, 2))
    assert rep.sandwich_ok
    assert rep.phi ** 2 / 2 <= rep.gap + 1e-10
    assert rep.gap <= 2 * rep.phi + 1e-10
    assert rep.phi_cut >= rep.gap / 2 - 1e-10
    assert rep.ratio_chain_ok and rep.phi_cut <= rep.ratio_bound + 1e-10
    assert rep.to_json()["cut"] in ("Omega_0", "Omega_1")


def test_gap_of_two_state_chain():
    # a single vertex: P = [[1-a, a], [b, 1-b]] with a = min(1, lam), b = min(1, 1/lam)
    ch = exact_transition_matrix(Region(1, 1), 3)
    assert spectral_gap(ch) == pytest.approx(1 + 1 / 3)


def test_class_weight_trend():
    ratios = []
    for lam in (1, 2, 4, 8):
        w = class_weights(TORUS4, lam)
        assert sum(w.values()) == 1
        assert w["EvenCross"] == w["OddCross"]
        ratios.append(w["FaultLine"] / w["EvenCross"])
    assert all(a > b for a, b in zip(ratios, ratios[1:]))
    # tiny activity: the empty set dominates, and it has a fault
    assert class_weights(Region(4, 4), Fraction(1, 10**6))["FaultLine"] > 0.9999


def test_empirical_stationary_distribution():
    r = Region(2, 2)
    ch = exact_transition_matrix(r, 2)
    # thinning makes successive samples close to independent
    s = sample_states(r, 2, 10**6, seed=7, thin=50)
    N = len(s)
    for m, p in zip(ch.states, ch.pi):
        p = float(p)
        count = int((s == m).sum())
        assert abs(count - N * p) <= 3 * np.sqrt(N * p * (1 - p))


def test_simulate_trace():
    r = Region(6, 6, Boundary.TORUS)
    a = simulate(r, 3.0, 5000, seed=1, record_every=10)
    b = simulate(r, 3.0, 5000, seed=1, record_every=10)
    assert a.to_csv() == b.to_csv()
    assert a.steps == tuple(range(10, 5001, 10))
    assert simulate(r, 3.0, 0, seed=1).to_csv() == "step,occupancy,even_minus_odd,class\n"
    c = simulate(r, 3.0, 5000, seed=2, record_every=10)
    assert c.to_csv() != a.to_csv()
    assert is_independent(a.final)
    even, odd = a.final.parity_counts()
    assert a.occupancy[-1] == even + odd and a.even_minus_odd[-1] == even - odd


def test_trace_never_jumps_between_crosses():
    for name, lam in (("torus:6x6", 1.0), ("torus:4x4", 2.0), ("grid:5x5", 1.5)):
        t = simulate(Region.parse(name), lam, 20000, seed=3)
        for x, y in zip(t.classes, t.classes[1:]):
            assert {x, y} != {"EvenCross", "OddCross"}


def test_block_size_independence(monkeypatch):
    import hardcore_taxi.dynamics as dyn

    r = Region(4, 4, Boundary.TORUS)
    ref = simulate(r, 2.0, 3000, seed=9, record_every=7)
    monkeypatch.setattr(dyn, "BLOCK", 100)
    assert simulate(r, 2.0, 3000, seed=9, record_every=7) == ref


def test_escape_time():
    r = Region(8, 8, Boundary.TORUS)
    assert escape_time_experiment(r, 1.0, start=checkerboard(r, 1)) == 0
    t = escape_time_experiment(r, 0.5, seed=0, max_steps=10**6)
    assert t is not None and 0 < t < 10**5
    assert escape_time_experiment(r, 50.0, seed=0, max_steps=1000) is None
    assert escape_time_experiment(r, 0.5, seed=0, max_steps=10**6) == t
