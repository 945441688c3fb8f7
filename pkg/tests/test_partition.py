import numpy as np
import pytest

from mvtda.array_core import ImageStack
from mvtda.partition import (build_slice_complexes, induced_subcomplex, is_closed, load_masks,
                             partition_stack, save_masks, subset, threshold_slices)
from mvtda.persistence import betti_at
from mvtda.filtration import assign_filtration
from mvtda.simgen import pattern_spec, ring_masks, cap_mask, truth_stack
import toy_loops
from oracles import betti_of_masks


def test_threshold_above_max_is_empty():
    s = ImageStack(np.random.default_rng(0).normal(size=(4, 4, 3)))
    assert not any(m.any() for m in threshold_slices(s, s.values.max() + 1))


def test_threshold_at_min_is_full():
    s = ImageStack(np.random.default_rng(0).normal(size=(4, 4, 3)))
    assert all(m.all() for m in threshold_slices(s, s.values.min()))


def test_ring_pixels_at_ring_threshold():
    spec = pattern_spec("A2")
    masks = threshold_slices(truth_stack(spec), 10.0)
    for o, m in enumerate(masks, start=1):
        if o in spec.caps:
            np.testing.assert_array_equal(m, cap_mask(spec))
        else:
            np.testing.assert_array_equal(m, ring_masks(spec, o)[0])


def test_induced_subcomplex_is_closed():
    seq = build_slice_complexes([np.random.default_rng(1).random((4, 5)) > 0.4])
    assert is_closed(seq.complex, seq.slices[0])


def test_empty_slice_is_union_identity():
    full = np.random.default_rng(2).random((4, 4)) > 0.5
    seq = build_slice_complexes([np.zeros((4, 4), bool), full])
    for a, b in zip(seq.joins[0], seq.slices[1]):
        np.testing.assert_array_equal(a, b)
    assert not any(m.any() for m in seq.slices[0])


def test_identical_slices_union_equals_slice():
    m = np.random.default_rng(3).random((4, 4)) > 0.5
    seq = build_slice_complexes([m, m])
    for a, b in zip(seq.joins[0], seq.slices[0]):
        np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("op", ["union", "intersection"])
def test_joins_relate_to_neighbours(op):
    rng = np.random.default_rng(4)
    seq = build_slice_complexes([rng.random((4, 4)) > 0.5 for _ in range(4)], set_op=op)
    for o, j in enumerate(seq.joins):
        for s in (seq.slices[o], seq.slices[o + 1]):
            assert subset(s, j) if op == "union" else subset(j, s)
        assert is_closed(seq.complex, j)


def test_union_of_disjoint_rings_has_two_loops():
    frames = toy_loops.frames()
    seq = build_slice_complexes(frames)
    union = seq.at(4)  # t2 u t3
    assert betti_of_masks(seq.complex, union, 1) == 3
    two = build_slice_complexes([toy_loops.ring(toy_loops.RED), toy_loops.ring(toy_loops.PURPLE)])
    assert betti_of_masks(two.complex, two.at(2), 1) == 2
    # the same count through the filtration route
    vals = (toy_loops.ring(toy_loops.RED) | toy_loops.ring(toy_loops.PURPLE)).astype(float).ravel()
    assert betti_at(assign_filtration(two.complex, vals), 1.0)[1] == 2


def test_positions_interleave():
    rng = np.random.default_rng(5)
    seq = build_slice_complexes([rng.random((3, 3)) > 0.5 for _ in range(3)])
    assert seq.sequence_length == 5
    pos = seq.positions()
    assert pos[0] is seq.slices[0] and pos[1] is seq.joins[0] and pos[4] is seq.slices[2]
    with pytest.raises(IndexError):
        seq.at(6)


def test_partition_stack_records_threshold():
    seq = partition_stack(truth_stack(pattern_spec("A2")), 10.0)
    assert seq.theta == 10.0 and seq.n_frames == 5


def test_shape_mismatch():
    with pytest.raises(ValueError):
        build_slice_complexes([np.zeros((3, 3), bool), np.zeros((3, 4), bool)])


def test_bad_op():
    with pytest.raises(ValueError):
        build_slice_complexes([np.zeros((3, 3), bool)] * 2, set_op="xor")


def test_mask_round_trip(tmp_path):
    rng = np.random.default_rng(6)
    seq = build_slice_complexes([rng.random((3, 4)) > 0.5 for _ in range(3)])
    paths = save_masks(seq, tmp_path)
    back = load_masks(paths)
    for a, b in zip(back, seq.vertex_masks):
        np.testing.assert_array_equal(a, b)


def test_induced_subcomplex_size_check():
    seq = build_slice_complexes([np.zeros((3, 3), bool)])
    with pytest.raises(ValueError):
        induced_subcomplex(seq.complex, np.zeros(8, bool))
