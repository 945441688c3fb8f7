import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mvtda.array_core import (ImageStack, StackFormatError, from_flat, load_stack,
                              permute_stack, save_stack, save_text, slice_at_time, stack_frames)


def _write_manifest(tmp_path, frames, spacing=8.0):
    names = []
    for i, f in enumerate(frames, start=1):
        name = f"f{i}.csv"
        np.savetxt(tmp_path / name, f, delimiter=",")
        names.append(name)
    p = tmp_path / "m.json"
    p.write_text(json.dumps({"frames": names, "time_spacing_seconds": spacing}))
    return p


def test_manifest_of_three_2x2_frames(tmp_path):
    frames = [np.arange(4.0).reshape(2, 2) + 10 * k for k in range(3)]
    s = load_stack(_write_manifest(tmp_path, frames))
    assert s.dims == (2, 2, 3)
    assert s.time_spacing == 8.0
    for k in range(3):
        np.testing.assert_array_equal(slice_at_time(s, k + 1).values, frames[k])


def test_wrong_frame_shape_names_the_frame(tmp_path):
    frames = [np.zeros((2, 2)), np.zeros((2, 3))]
    with pytest.raises(StackFormatError, match="f2.csv"):
        load_stack(_write_manifest(tmp_path, frames))


def test_non_numeric_cell_is_reported(tmp_path):
    (tmp_path / "f1.csv").write_text("1,2\n3,x\n")
    (tmp_path / "m.json").write_text(json.dumps({"frames": ["f1.csv"]}))
    with pytest.raises(StackFormatError, match="row 2, column 2"):
        load_stack(tmp_path / "m.json")


def test_missing_file():
    with pytest.raises(StackFormatError):
        load_stack("/nonexistent/stack.json")


def test_thirty_frames_at_eight_seconds():
    s = ImageStack(np.zeros((2, 2, 30)), 8.0)
    assert s.time_of(1) == 0.0
    assert s.time_of(30) == 232.0


def test_slice_values_in_order():
    vals = np.arange(12.0).reshape(2, 2, 3)
    s = ImageStack(vals)
    np.testing.assert_array_equal(slice_at_time(s, 2).values, vals[..., 1])


@pytest.mark.parametrize("o", [0, 4])
def test_slice_out_of_range(o):
    with pytest.raises(IndexError):
        slice_at_time(ImageStack(np.zeros((2, 2, 3))), o)


def test_flat_layout_time_slowest():
    vals = np.arange(12.0).reshape(2, 2, 3)
    flat = ImageStack(vals).flat()
    # id = t*d1*d2 + x*d2 + y
    assert flat[1 * 4 + 1 * 2 + 0] == vals[1, 0, 1]


def test_rejects_non_finite():
    with pytest.raises(ValueError):
        ImageStack(np.array([[1.0, np.nan], [0.0, 0.0]]))


def test_constant_stack_permutes_to_itself():
    s = ImageStack(np.full((3, 3, 2), 4.0))
    assert permute_stack(s, 123) == s


def test_distinct_values_differ_between_seeds():
    s = ImageStack(np.arange(60.0).reshape(3, 4, 5))
    a, b = permute_stack(s, 1), permute_stack(s, 2)
    assert not np.array_equal(a.values, b.values)


def test_permutation_is_deterministic_per_stream():
    s = ImageStack(np.arange(60.0).reshape(3, 4, 5))
    assert permute_stack(s, 9, stream=3) == permute_stack(s, 9, stream=3)
    assert permute_stack(s, 9, stream=3) != permute_stack(s, 9, stream=4)


@given(arrays(np.float64, st.tuples(st.integers(2, 4), st.integers(2, 4), st.integers(1, 4)),
              elements=st.floats(-100, 100)), st.integers(0, 2**32))
def test_permutation_preserves_value_multiset(vals, seed):
    s = ImageStack(vals)
    p = permute_stack(s, seed)
    np.testing.assert_array_equal(np.sort(p.flat()), np.sort(s.flat()))


@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4)),
              elements=st.floats(-100, 100)))
def test_slice_round_trip(vals):
    s = ImageStack(vals, 2.5)
    back = stack_frames([slice_at_time(s, o) for o in range(1, s.n_frames + 1)], 2.5)
    assert back == s
    assert from_flat(s.flat(), s.dims, 2.5) == s


def test_save_and_load_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    s = ImageStack(rng.normal(size=(3, 4, 2)), 8.0)
    assert load_stack(save_stack(s, tmp_path / "a")) == s
    save_text(s, tmp_path / "s.txt")
    assert load_stack(tmp_path / "s.txt") == s


def test_text_format_checks_value_count(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("dims: 2 2 2\n1 2 3\n")
    with pytest.raises(StackFormatError, match="need 8"):
        load_stack(p)
