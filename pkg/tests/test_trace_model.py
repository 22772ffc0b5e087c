"""Event tree construction, self-time accounting, and energy integration."""

import random

import pytest
from hypothesis import given, strategies as st

from opchar.errors import ChildEscapesParent, DanglingParentId, InvalidTrace, OverlappingSiblings
from opchar.trace_model import (EventKind, Trace, build_event_trees,
                                check_sibling_overlap, total_energy_joules)

from conftest import make_event


# --- independent oracle -------------------------------------------------------

def random_tree_events(rng: random.Random, n_events: int):
    """Random properly nested forest; returns (events, expected_self_by_id).

    The oracle computes each event's self time by interval accounting: carve
    non-overlapping child slots out of the parent interval and measure what
    remains uncovered, independently of the tree-walk the library does.
    """
    events = []
    expected = {}
    next_id = [1]

    def build(start, end, parent, depth):
        eid = next_id[0]
        next_id[0] += 1
        dur = end - start
        events.append(make_event(eid, f"op_{eid}", start, dur, parent=parent))
        remaining = n_events - (next_id[0] - 1)
        n_children = 0
        if depth < 6 and dur >= 8 and remaining > 0:
            n_children = rng.randint(0, min(3, remaining, (dur - 1) // 2))
        if n_children == 0:
            expected[eid] = dur
            return
        # carve disjoint child slots
        cuts = sorted(rng.sample(range(start + 1, end), 2 * n_children))
        covered = 0
        for i in range(n_children):
            lo, hi = cuts[2 * i], cuts[2 * i + 1]
            if lo == hi:
                continue
            build(lo, hi, eid, depth + 1)
            covered += hi - lo
        expected[eid] = dur - covered

    while next_id[0] <= n_events:
        base = (next_id[0]) * 10_000
        build(base, base + rng.randint(10, 5_000), None, 0)
    return events, expected


def test_parent_minus_child_self_time():
    events = [make_event(1, "outer", 0, 10_000), make_event(2, "inner", 1_000, 4_000, parent=1)]
    tree = build_event_trees(Trace(events=tuple(events)))
    assert tree.self_time_us[1] == 6_000
    assert tree.self_time_us[2] == 4_000


def test_single_event_self_time_is_duration():
    tree = build_event_trees(Trace(events=(make_event(1, "solo", 5, 123),)))
    assert tree.self_time_us[1] == 123
    assert tree.roots[(1, 1)] == (1,)


def test_random_nested_tree_conserves_self_time():
    rng = random.Random(42)
    events, expected = random_tree_events(rng, 1_000)
    tree = build_event_trees(Trace(events=tuple(events)))
    assert tree.self_time_us == expected
    by_id = {e.id: e for e in events}
    for track_roots in tree.roots.values():
        for root in track_roots:
            total = sum(tree.self_time_us[i] for i in tree.subtree_ids(root))
            assert total == by_id[root].duration_us


def test_build_is_order_insensitive():
    rng = random.Random(7)
    events, _ = random_tree_events(rng, 200)
    tree_a = build_event_trees(Trace(events=tuple(events)))
    shuffled = list(events)
    rng.shuffle(shuffled)
    tree_b = build_event_trees(Trace(events=tuple(shuffled)))
    assert tree_a.self_time_us == tree_b.self_time_us
    assert tree_a.roots == tree_b.roots
    assert tree_a.children == tree_b.children


@given(st.integers(0, 2**31), st.lists(st.integers(0, 10_000), min_size=1, max_size=9))
def test_chain_conservation_property(start, self_times):
    # one strictly nested chain: event k spans the tail of its parent interval
    events = []
    cursor = start
    for k, _ in enumerate(self_times):
        dur = sum(self_times[k:])
        events.append(make_event(k + 1, f"n{k}", cursor, dur, parent=k if k else None))
        cursor += self_times[k]
    tree = build_event_trees(Trace(events=tuple(events)))
    assert [tree.self_time_us[k + 1] for k in range(len(self_times))] == self_times
    assert sum(tree.self_time_us.values()) == sum(self_times) == events[0].duration_us


def test_dangling_parent_rejected():
    events = (make_event(1, "a", 0, 10, parent=99),)
    with pytest.raises(DanglingParentId):
        build_event_trees(Trace(events=events))


def test_child_escaping_parent_rejected():
    events = (make_event(1, "a", 0, 10), make_event(2, "b", 5, 10, parent=1))
    with pytest.raises(ChildEscapesParent) as exc:
        build_event_trees(Trace(events=events))
    assert (2, 1) in exc.value.offenders


def test_child_on_other_track_rejected():
    events = (make_event(1, "a", 0, 100), make_event(2, "b", 10, 5, track=(1, 2), parent=1))
    with pytest.raises(ChildEscapesParent):
        build_event_trees(Trace(events=events))


def test_overlapping_siblings_detected():
    events = (make_event(1, "a", 0, 100), make_event(2, "b", 50, 100))
    with pytest.raises(OverlappingSiblings):
        check_sibling_overlap(Trace(events=events))


def test_touching_siblings_allowed():
    events = (make_event(1, "a", 0, 100), make_event(2, "b", 100, 50))
    check_sibling_overlap(Trace(events=events))


def test_kernels_attach_by_correlation_not_nesting():
    events = (
        make_event(1, "aten::gelu", 0, 100, corr=11),
        make_event(2, "elementwise_kernel", 500, 40, kind=EventKind.GPU_KERNEL, track=(2, 1), corr=11),
        make_event(3, "stray_kernel", 600, 10, kind=EventKind.GPU_KERNEL, track=(2, 1)),
    )
    tree = build_event_trees(Trace(events=events))
    assert tree.kernels_of[1] == (2,)
    assert tree.unattached_kernels == (3,)
    assert 2 not in tree.self_time_us  # kernels carry no CPU self time


def test_duplicate_launch_correlation_rejected():
    events = (make_event(1, "a", 0, 10, corr=5), make_event(2, "b", 20, 10, corr=5))
    with pytest.raises(InvalidTrace):
        build_event_trees(Trace(events=events))


def test_markers_and_counters_excluded_from_trees():
    events = (
        make_event(1, "op", 0, 100),
        make_event(2, "prefill", 0, 50, kind=EventKind.MARKER),
        make_event(3, "power", 10, 0, kind=EventKind.COUNTER_SAMPLE),
    )
    tree = build_event_trees(Trace(events=events))
    assert set(tree.events) == {1}
    assert tree.roots[(1, 1)] == (1,)


def test_trace_invariants():
    with pytest.raises(InvalidTrace):
        Trace(events=(make_event(1, "a", 0, 10), make_event(1, "b", 20, 10)))
    with pytest.raises(InvalidTrace):
        Trace(events=(), energy_samples=((10, 5.0), (5, 5.0)))
    with pytest.raises(InvalidTrace):
        Trace(events=(), energy_samples=((0, -1.0),))


# --- energy --------------------------------------------------------------------

def test_constant_power_rectangle():
    trace = Trace(energy_samples=((0, 10.0), (2_000_000, 10.0)))
    assert total_energy_joules(trace) == pytest.approx(20.0)


def test_single_sample_absent():
    assert total_energy_joules(Trace(energy_samples=((0, 10.0),))) is None
    assert total_energy_joules(Trace()) is None


def test_linear_ramp_matches_analytic_integral():
    # P(t) = 5 t watts over t in [0, 2] s integrates to 10 J; the trapezoid rule
    # is exact for a linear ramp regardless of sampling.
    samples = tuple((int(t * 1e6), 5.0 * t) for t in (0.0, 0.25, 0.8, 1.5, 2.0))
    trace = Trace(energy_samples=samples)
    assert total_energy_joules(trace) == pytest.approx(10.0)


@given(st.lists(st.tuples(st.integers(0, 10**9), st.floats(0, 1e4)), min_size=2, max_size=50))
def test_energy_nonnegative(samples):
    samples = sorted(samples)
    trace = Trace(energy_samples=tuple(samples))
    energy = total_energy_joules(trace)
    assert energy is not None and energy >= 0.0
