import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roial.space import ActionSpace, DimensionSpec, SpaceError, build_grid


def test_gait_grid_size():
    space = build_grid([(0, 1, 10), (0, 1, 7), (0, 1, 5), (0, 1, 5)])
    assert space.size == 1750


def test_cube_grid_size():
    space = build_grid([(0, 1, 20), (0, 1, 20), (0, 1, 20)])
    assert space.size == 8000


def test_single_bin_grid():
    space = build_grid([(0, 1, 1)])
    assert space.size == 1
    assert space.index_to_action(0) == pytest.approx([0.0])


def test_first_and_last_actions_hit_bounds():
    space = build_grid([(-2.0, 3.0, 4), (10.0, 20.0, 5)])
    assert space.index_to_action(0) == pytest.approx([-2.0, 10.0])
    assert space.index_to_action(space.size - 1) == pytest.approx([3.0, 20.0])


def test_row_major_order_2x3():
    space = build_grid([(0.0, 1.0, 2), (0.0, 2.0, 3)])
    # enumerate all six points with the first dimension slowest
    expected = [(r, c) for r in [0.0, 1.0] for c in [0.0, 1.0, 2.0]]
    got = [tuple(space.index_to_action(k)) for k in range(6)]
    assert got == pytest.approx(expected)
    assert tuple(space.index_to_action(4)) == pytest.approx((1.0, 1.0))


def test_round_trip_bijection_exhaustive():
    space = build_grid([(0, 1, 10), (0, 1, 7), (0, 1, 5), (0, 1, 5)])
    ks = np.arange(space.size)
    coords = space.index_to_action(ks)
    back = space.action_to_index(coords)
    assert np.array_equal(back, ks)


def test_spacing_invariant():
    dim = DimensionSpec("x", 0.3, 2.7, 13)
    vals = dim.values
    assert np.all(np.abs(np.diff(vals) - dim.spacing) < 1e-12)
    assert dim.spacing == pytest.approx((2.7 - 0.3) / 12, abs=1e-15)


def test_invalid_dims_rejected():
    with pytest.raises(SpaceError):
        build_grid([])
    with pytest.raises(SpaceError):
        DimensionSpec("x", 0.0, 1.0, 0)
    with pytest.raises(SpaceError):
        DimensionSpec("x", 2.0, 1.0, 5)


def test_out_of_range_index_rejected():
    space = build_grid([(0, 1, 3)])
    with pytest.raises(SpaceError):
        space.index_to_action(3)
    with pytest.raises(SpaceError):
        space.index_to_action(-1)


def test_normalized_coords_unit_box():
    space = build_grid([(-5.0, 5.0, 4), (0.0, 100.0, 3), (1.0, 1.0, 1)])
    norm = space.normalized_coords()
    assert norm.min() == 0.0
    assert norm.max() == 1.0
    assert np.all(norm[:, 2] == 0.0)  # single-bin dimension contributes nothing


def test_serialization_round_trip():
    space = build_grid([DimensionSpec("SL", 0.1, 0.5, 10), DimensionSpec("SD", 0.8, 1.2, 7)])
    again = ActionSpace.from_dict(space.to_dict())
    assert again.names == ["SL", "SD"]
    assert again.shape == space.shape


@settings(max_examples=30, deadline=None)
@given(
    bins=st.lists(st.integers(min_value=1, max_value=9), min_size=1, max_size=4),
    data=st.data(),
)
def test_bijection_property(bins, data):
    space = build_grid([(0.0, 1.0, b) for b in bins])
    k = data.draw(st.integers(min_value=0, max_value=space.size - 1))
    assert space.action_to_index(space.index_to_action(k)) == k
