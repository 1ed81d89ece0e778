"""Value types: resource vectors, constraint sets, and constraint bitmaps."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedsched.core import (ConstraintBitmap, ConstraintSet, Partition,
                           ResourceVector, TaskRequest, WorkerNode,
                           constraint_superset, iter_ordinals, resource_geq)
from fedsched.errors import ConfigurationError

from oracles import brute_force_match


class TestResourceVector:
    def test_dominates(self):
        assert resource_geq(ResourceVector.of(8, 16384), ResourceVector.of(2, 4096))

    def test_equality_boundary_dominates(self):
        assert resource_geq(ResourceVector.of(8, 16384), ResourceVector.of(8, 16384))

    def test_one_dimension_insufficient(self):
        assert not resource_geq(ResourceVector.of(8, 2048), ResourceVector.of(2, 4096))

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ConfigurationError):
            ResourceVector.of(1, 2).geq(ResourceVector.of(1, 2, 3))

    def test_add_subtract(self):
        a = ResourceVector.of(6, 12288)
        b = ResourceVector.of(2, 4096)
        assert (a + b).quantities == (8, 16384)
        assert (a - b).quantities == (4, 8192)

    def test_subtract_underflow_rejected(self):
        with pytest.raises(ValueError):
            ResourceVector.of(1, 100) - ResourceVector.of(2, 50)

    def test_no_negative_or_fractional_quantities(self):
        with pytest.raises(ConfigurationError):
            ResourceVector.of(-1, 5)
        with pytest.raises(ConfigurationError):
            ResourceVector.of(1.5, 5)

    def test_needs_a_dimension(self):
        with pytest.raises(ConfigurationError):
            ResourceVector(())

    def test_zeros_and_iteration(self):
        z = ResourceVector.zeros(3)
        assert list(z) == [0, 0, 0]
        assert z.is_zero()
        assert not ResourceVector.of(0, 1).is_zero()


class TestConstraintSet:
    def test_superset(self):
        assert constraint_superset(ConstraintSet.of(1, 4, 7), ConstraintSet.of(4))

    def test_empty_task_matches_any_machine(self):
        assert constraint_superset(ConstraintSet.of(1, 4, 7), ConstraintSet.empty())

    def test_missing_id_fails(self):
        assert not constraint_superset(ConstraintSet.of(1, 4), ConstraintSet.of(4, 9))

    def test_iteration_is_sorted(self):
        assert list(ConstraintSet.of(9, 1, 4)) == [1, 4, 9]

    def test_negative_id_rejected(self):
        with pytest.raises(ConfigurationError):
            ConstraintSet.of(-1)


class TestTaskRequestValidation:
    def test_duration_positive(self):
        with pytest.raises(ConfigurationError):
            TaskRequest("t", "j", "u", ResourceVector.of(1, 1),
                        ConstraintSet.empty(), 0.0, 0.0)

    def test_arrival_non_negative(self):
        with pytest.raises(ConfigurationError):
            TaskRequest("t", "j", "u", ResourceVector.of(1, 1),
                        ConstraintSet.empty(), -1.0, 1.0)

    def test_demand_non_zero(self):
        with pytest.raises(ConfigurationError):
            TaskRequest("t", "j", "u", ResourceVector.zeros(2),
                        ConstraintSet.empty(), 0.0, 1.0)


class TestWorkerNodeValidation:
    def test_available_bounded_by_capacity(self):
        with pytest.raises(ConfigurationError):
            WorkerNode("n", "lm", "p", capacity=ResourceVector.of(1, 1),
                       available=ResourceVector.of(2, 1),
                       machine_constraints=ConstraintSet.empty())

    def test_logical_requires_parent(self):
        with pytest.raises(ConfigurationError):
            WorkerNode("n", "lm", "p", capacity=ResourceVector.of(1, 1),
                       available=ResourceVector.of(1, 1),
                       machine_constraints=ConstraintSet.empty(), is_logical=True)


def bitmap_from_sets(m, sets):
    return ConstraintBitmap.from_constraint_sets(m, sets)


class TestConstraintBitmap:
    def test_two_constraint_intersection_example(self):
        # node membership: c0 on nodes {0,2}, c1 on nodes {1,2}; the only
        # common node is ordinal 2
        bitmap = bitmap_from_sets(2, [
            ConstraintSet.of(0), ConstraintSet.of(1),
            ConstraintSet.of(0, 1), ConstraintSet.empty(),
        ])
        assert bitmap.bits[0] == 0b0101
        assert bitmap.bits[1] == 0b0110
        mask, word_ops = bitmap.candidates(ConstraintSet.of(0, 1))
        assert mask == 0b0100
        assert list(iter_ordinals(mask)) == [2]
        assert word_ops == 2  # two constraint vectors of one word each

    def test_no_constraints_all_candidates_no_word_ops(self):
        bitmap = bitmap_from_sets(3, [ConstraintSet.empty()] * 5)
        mask, word_ops = bitmap.candidates(ConstraintSet.empty())
        assert mask == 0b11111
        assert word_ops == 0

    def test_unknown_constraint_id(self):
        bitmap = bitmap_from_sets(2, [ConstraintSet.empty()])
        with pytest.raises(ConfigurationError):
            bitmap.candidates(ConstraintSet.of(5))
        with pytest.raises(ConfigurationError):
            bitmap.append_node(ConstraintSet.of(2))

    def test_append_assigns_sequential_ordinals(self):
        bitmap = ConstraintBitmap(4)
        assert bitmap.append_node(ConstraintSet.of(1)) == 0
        assert bitmap.append_node(ConstraintSet.of(2)) == 1
        assert bitmap.length == 2
        assert bitmap.satisfies(1, 0) and not bitmap.satisfies(1, 1)

    def test_remove_ordinal_splices_bits(self):
        sets = [ConstraintSet.of(0), ConstraintSet.of(1), ConstraintSet.of(0, 1),
                ConstraintSet.empty(), ConstraintSet.of(0)]
        bitmap = bitmap_from_sets(2, sets)
        bitmap.remove_ordinal(2)
        survivors = [sets[i] for i in (0, 1, 3, 4)]
        expected = bitmap_from_sets(2, survivors)
        assert bitmap.bits == expected.bits
        assert bitmap.length == 4

    def test_remove_out_of_range(self):
        bitmap = bitmap_from_sets(2, [ConstraintSet.empty()])
        with pytest.raises(ConfigurationError):
            bitmap.remove_ordinal(1)

    def test_words_spans_64_bit_boundaries(self):
        bitmap = ConstraintBitmap(1)
        assert bitmap.words == 0
        for _ in range(64):
            bitmap.append_node(ConstraintSet.empty())
        assert bitmap.words == 1
        bitmap.append_node(ConstraintSet.empty())
        assert bitmap.words == 2


node_sets = st.lists(
    st.sets(st.integers(min_value=0, max_value=7)).map(lambda s: ConstraintSet.of(*s)),
    min_size=0, max_size=40,
)


@given(sets=node_sets, task_ids=st.sets(st.integers(min_value=0, max_value=7)))
@settings(max_examples=200)
def test_candidates_match_per_node_superset_oracle(sets, task_ids):
    task_constraints = ConstraintSet.of(*task_ids)
    bitmap = bitmap_from_sets(8, sets)
    mask, _ = bitmap.candidates(task_constraints)
    expected = {i for i, machine in enumerate(sets)
                if machine.issuperset(task_constraints)}
    assert set(iter_ordinals(mask)) == expected


@given(sets=node_sets,
       task_ids=st.sets(st.integers(min_value=0, max_value=7)),
       cpus=st.lists(st.integers(min_value=0, max_value=8), min_size=40, max_size=40),
       demand_cpu=st.integers(min_value=1, max_value=8))
@settings(max_examples=200)
def test_masked_scan_equals_brute_force(sets, task_ids, cpus, demand_cpu):
    """Bitmap AND + ordered availability scan == naive per-node oracle."""
    task_constraints = ConstraintSet.of(*task_ids)
    available = [ResourceVector.of(c, 1024) for c in cpus[:len(sets)]]
    demand = ResourceVector.of(demand_cpu, 512)
    bitmap = bitmap_from_sets(8, sets)
    mask, _ = bitmap.candidates(task_constraints)
    hit = next((o for o in iter_ordinals(mask) if available[o].geq(demand)), None)
    assert hit == brute_force_match(sets, available, task_constraints, demand)


@given(st.integers(min_value=0, max_value=2 ** 70 - 1))
def test_iter_ordinals_enumerates_set_bits(mask):
    assert list(iter_ordinals(mask)) == [i for i in range(70) if mask >> i & 1]


@given(sets=node_sets, drop=st.integers(min_value=0, max_value=39))
@settings(max_examples=200)
def test_remove_matches_rebuild(sets, drop):
    """Removing an ordinal leaves exactly the bitmap of the survivors."""
    if drop >= len(sets):
        drop = drop % len(sets) if sets else 0
    if not sets:
        return
    bitmap = bitmap_from_sets(8, sets)
    bitmap.remove_ordinal(drop)
    survivors = sets[:drop] + sets[drop + 1:]
    assert bitmap.bits == bitmap_from_sets(8, survivors).bits


class TestPartition:
    def test_bitmap_length_tracks_membership(self):
        part = Partition("p", "lm", "gm", node_ids=[], bitmap=ConstraintBitmap(3))
        part.append_node("a", ConstraintSet.of(1))
        part.append_node("b", ConstraintSet.of(2))
        assert part.bitmap.length == 2
        part.remove_node("a")
        assert part.node_ids == ["b"]
        assert part.bitmap.length == 1
        assert part.bitmap.satisfies(2, 0)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ConfigurationError):
            Partition("p", "lm", "gm", node_ids=["a"], bitmap=ConstraintBitmap(3))
