import random

import pytest
from hypothesis import given, strategies as st

from ralin.model import (
    History, Label, OpId, Timestamp, UnknownLabel, is_acyclic, is_strict_partial_order,
    transitive_closure, ts_less, ts_max, vis_downward_closure,
)
from ralin import runtime

from conftest import replay


def test_bottom_is_below_everything():
    assert ts_less(None, Timestamp(0, 0))
    assert not ts_less(Timestamp(0, 0), None)
    assert not ts_less(None, None)


def test_equal_counters_fall_back_to_replica():
    assert ts_less(Timestamp(1, 1), Timestamp(1, 2))
    assert not ts_less(Timestamp(1, 2), Timestamp(1, 1))


def test_counter_dominates_replica():
    assert not ts_less(Timestamp(2, 0), Timestamp(1, 5))


def test_ts_max_skips_bottom():
    assert ts_max([None, Timestamp(1, 3), Timestamp(2, 0), None]) == Timestamp(2, 0)
    assert ts_max([]) is None


timestamps = st.one_of(st.none(), st.builds(Timestamp, st.integers(0, 5), st.integers(0, 3)))


@given(timestamps, timestamps)
def test_ts_order_is_total_and_strict(a, b):
    assert not (ts_less(a, b) and ts_less(b, a))
    if a != b:
        assert ts_less(a, b) or ts_less(b, a)


@given(timestamps, timestamps, timestamps)
def test_ts_order_is_transitive(a, b, c):
    if ts_less(a, b) and ts_less(b, c):
        assert ts_less(a, c)


def test_opid_text_roundtrip():
    for op in (OpId(0, 3), OpId(2, 0, 1), OpId(1, 7, 2)):
        assert OpId.parse(str(op)) == op
    assert OpId(1, 7, 2).base == OpId(1, 7)


def test_unknown_label_on_empty_history():
    with pytest.raises(UnknownLabel):
        vis_downward_closure(History(()), OpId(0, 0))


def test_history_rejects_edges_to_missing_labels():
    lab = Label("o", "inc", (), None, OpId(0, 0))
    with pytest.raises(UnknownLabel):
        History((lab,), frozenset({(OpId(0, 0), OpId(0, 1))}))


def test_read_after_two_local_inserts_sees_both():
    _, h = replay(
        "obj name=o crdt=rga\n"
        'op r=0 obj=o m=addAfter args=["@","a"]\n'
        'op r=0 obj=o m=addAfter args=["a","c"]\n'
        "op r=0 obj=o m=read args=[]\n"
    )
    seen = vis_downward_closure(h, OpId(0, 2))
    assert {lab.id for lab in seen} == {OpId(0, 0), OpId(0, 1)}


def test_downward_closure_matches_edge_scan():
    rng = random.Random(5)
    for _ in range(50):
        _, cfg = runtime.random_op_run({"o": "orset"}, 3, 6, rng)
        h = runtime.extract_history(cfg)
        for op in h.ids():
            direct = {a for a, b in h.vis if b == op}
            assert {lab.id for lab in vis_downward_closure(h, op)} == direct


def test_partial_order_checks():
    a, b, c = OpId(0, 0), OpId(0, 1), OpId(0, 2)
    assert is_strict_partial_order(set())
    assert not is_strict_partial_order({(a, b), (b, c)})
    assert is_strict_partial_order({(a, b), (b, c), (a, c)})
    assert not is_strict_partial_order({(a, a)})


def test_simulated_vis_is_a_strict_partial_order():
    rng = random.Random(9)
    for kind in ("counter", "orset", "rga", "wooki", "lww"):
        for _ in range(30):
            _, cfg = runtime.random_op_run({"o": kind}, 3, 8, rng)
            assert is_strict_partial_order(cfg.vis)


def test_cycle_detection_and_closure():
    a, b, c = OpId(0, 0), OpId(0, 1), OpId(0, 2)
    assert is_acyclic({(a, b), (b, c)})
    assert not is_acyclic({(a, b), (b, c), (c, a)})
    assert transitive_closure({(a, b), (b, c)}) == {(a, b), (b, c), (a, c)}


def test_project_keeps_only_one_object():
    _, h = replay(
        "obj name=x crdt=counter\nobj name=y crdt=counter\n"
        "op r=0 obj=x m=inc args=[]\nop r=0 obj=y m=inc args=[]\nop r=0 obj=x m=read args=[]\n"
    )
    px = h.project("x")
    assert [lab.id for lab in px.labels] == [OpId(0, 0), OpId(0, 2)]
    assert px.vis == {(OpId(0, 0), OpId(0, 2))}
    assert h.objects() == ["x", "y"]
