import itertools
import json

import pytest
from hypothesis import given, settings, strategies as st

from hardcore_taxi.errors import CheckpointError, ContractError
from hardcore_taxi.lattice import Direction
from hardcore_taxi.walks import (
    TaxiWalk,
    WalkTable,
    advance,
    brute_force_count,
    checkpoint_resume,
    checkpoint_save,
    count_bridges,
    count_taxi_walks,
    enumerate_with_visitor,
    finish,
    is_bridge,
    is_taxi_walk,
    iter_taxi_walks,
    join_walk,
    new_checkpoint,
    split_walk,
    turn_string_count,
)

E, N, W, S = Direction

# frozen from the brute-force oracle below
C_1_TO_16 = [2, 4, 6, 10, 16, 26, 42, 68, 110, 178, 288, 460, 740, 1192, 1918, 3064]
B_1_TO_16 = [1, 1, 1, 2, 3, 5, 7, 11, 16, 25, 37, 57, 86, 132, 201, 309]


@pytest.fixture(scope="module")
def table30():
    return count_taxi_walks(30)


def test_is_taxi_walk_examples():
    assert is_taxi_walk([E])
    assert not is_taxi_walk([E, N, E])
    assert not is_taxi_walk([E, S, E, S])
    assert is_taxi_walk([])
    assert is_taxi_walk("EEEE")


def test_double_turn_rejected():
    # E then S at (1,0) is a turn, then W at (1,-1) is a second turn
    assert is_taxi_walk("ES")
    assert not is_taxi_walk("ESW")


def test_brute_force_small_lengths():
    assert [brute_force_count(n) for n in range(1, 4)] == [2, 4, 6]


def test_known_counts(table30):
    assert list(table30.c[1:17]) == C_1_TO_16
    assert list(table30.b[1:17]) == B_1_TO_16
    assert table30.c[20] == 20114
    assert table30.c[0] == 1


def test_oracle_equivalence_through_12(table30):
    for n in range(1, 13):
        assert brute_force_count(n) == table30.c[n]


def test_bridge_brute_force():
    for n in range(1, 11):
        expected = sum(1 for w in iter_taxi_walks(n) if is_bridge(w))
        assert count_bridges(n).b[n] == expected


def test_bridge_first_values():
    assert is_bridge("E") and is_bridge("EE")
    assert not is_bridge("ES")


def test_turn_string_bound(table30):
    t = [turn_string_count(n) for n in range(31)]
    assert t[1:4] == [2, 4, 6]
    for n in range(3, 31):
        assert t[n] == t[n - 1] + t[n - 2]
    for n in range(31):
        assert table30.c[n] <= t[n]
    # self-avoidance first binds at length 12
    assert all(table30.c[n] == t[n] for n in range(12))
    assert table30.c[12] < t[12]


def test_growth_bounds(table30):
    for n in range(1, 31):
        assert 2 ** (n / 2) < table30.c[n] < 4 * 3 ** (n - 1) or n == 1
        assert table30.b[n] <= table30.c[n]


def test_sub_and_super_multiplicativity(table30):
    c, b = table30.c, table30.b
    for n in range(2, 31):
        for i in range(1, n):
            assert c[n] <= c[i] * c[n - i]
            assert b[n] >= b[i] * b[n - i]


def test_visitor_order_and_count():
    seen = []
    assert enumerate_with_visitor(1, seen.append) == 2
    assert [str(w) for w in seen] == ["E", "N"]
    seen = []
    enumerate_with_visitor(6, seen.append)
    keys = [w.steps for w in seen]
    assert keys == sorted(keys)
    assert len(keys) == 26 and len(set(keys)) == 26
    assert enumerate_with_visitor(20, lambda w: None) == 20114
    with pytest.raises(ContractError):
        enumerate_with_visitor(0, lambda w: None)


def test_split_walk_exhaustive():
    for n in range(2, 11):
        for w in iter_taxi_walks(n):
            for i in range(1, n):
                head, tail = split_walk(w, i)
                assert is_taxi_walk(head.steps) and is_taxi_walk(tail.steps)
                assert join_walk(head, tail) == w


def test_split_example():
    head, tail = split_walk("ES", 1)
    assert str(head) == "E" and str(tail) == "N"
    with pytest.raises(ContractError):
        split_walk("ES", 2)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 12), st.data())
def test_split_roundtrip_property(n, data):
    walks = list(iter_taxi_walks(n))
    w = data.draw(st.sampled_from(walks))
    i = data.draw(st.integers(1, n - 1))
    head, tail = split_walk(w, i)
    assert len(head) + len(tail) == n
    assert join_walk(head, tail) == w


def test_worker_independence():
    a = count_taxi_walks(22, workers=1)
    b = count_taxi_walks(22, workers=2)
    c = count_taxi_walks(22, workers=1, prefix_length=5)
    assert a == b == c


def test_checkpoint_resume(tmp_path):
    path = tmp_path / "ck.json"
    direct = count_taxi_walks(26)
    state = new_checkpoint(26, prefix_length=8)
    advance(state, max_prefixes=5)
    checkpoint_save(state, path)
    resumed = checkpoint_resume(path, 26)
    assert len(resumed.pending) == len(state.prefixes) - 5
    advance(resumed, workers=2)
    assert finish(resumed) == direct
    with pytest.raises(CheckpointError):
        checkpoint_resume(path, 27)


def test_checkpoint_corrupt(tmp_path):
    path = tmp_path / "ck.json"
    path.write_text("{not json")
    with pytest.raises(CheckpointError):
        checkpoint_resume(path)
    path.write_text(json.dumps({"version": 99}))
    with pytest.raises(CheckpointError):
        checkpoint_resume(path)


def test_length_envelope():
    with pytest.raises(ContractError):
        count_taxi_walks(0)
    with pytest.raises(ContractError):
        count_taxi_walks(65)


def test_csv_roundtrip(table30):
    text = table30.to_csv()
    assert text.splitlines()[0] == "n,c_n,b_n"
    assert "20,20114," in text
    assert WalkTable.from_csv(text) == table30
    partial = WalkTable((1, 2, 4))
    assert WalkTable.from_csv(partial.to_csv()) == partial


def test_taxiwalk_value():
    w = TaxiWalk.parse("EEN")
    assert len(w) == 3 and str(w) == "EEN"
    assert w.vertices()[-1] == (2, 1)
    assert w.is_valid()
    assert list(itertools.islice(iter_taxi_walks(2), 4)) == [TaxiWalk.parse(s) for s in ("EE", "ES", "NN", "NW")]
