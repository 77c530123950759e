import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from setinv.geometry import (
    INNER,
    OUTER,
    UNCERTAIN,
    Box,
    Interval,
    Subpaving,
    box_bisect,
    box_contains,
    interval_add,
    interval_mul,
    interval_sq,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)


@st.composite
def intervals(draw):
    a, b = draw(finite), draw(finite)
    return Interval(min(a, b), max(a, b))


def test_interval_rejects_reversed_and_nan():
    with pytest.raises(ValueError):
        Interval(1.0, 0.0)
    with pytest.raises(ValueError):
        Interval(float("nan"), 0.0)


def test_interval_width_and_center():
    iv = Interval(-1.0, 3.0)
    assert iv.width == 4.0
    assert iv.center == 1.0
    assert Interval(2.0, 2.0).width == 0.0


@pytest.mark.parametrize("a, b, expected", [
    ((0, 0), (1, 2), (1, 2)),
    ((1, 2), (3, 4), (4, 6)),
    ((-1, 1), (-1, 1), (-2, 2)),
])
def test_interval_add_examples(a, b, expected):
    assert tuple(interval_add(Interval(*a), Interval(*b))) == expected


@pytest.mark.parametrize("a, b, expected", [
    ((1, 1), (3, 5), (3, 5)),
    ((-1, 2), (-3, 1), (-6, 3)),
    ((0, 0), (-9, 9), (0, 0)),
])
def test_interval_mul_examples(a, b, expected):
    assert tuple(interval_mul(Interval(*a), Interval(*b))) == expected


@pytest.mark.parametrize("a, expected", [((-1, 2), (0, 4)), ((2, 3), (4, 9)), ((0, 0), (0, 0)), ((-3, -2), (4, 9))])
def test_interval_sq_examples(a, expected):
    assert tuple(interval_sq(Interval(*a))) == expected


def test_interval_sq_is_tighter_than_self_product():
    a = Interval(-1, 2)
    assert tuple(interval_mul(a, a)) == (-2, 4)
    assert tuple(interval_sq(a)) == (0, 4)


@settings(max_examples=200, deadline=None)
@given(intervals(), intervals(), st.integers(0, 2 ** 32 - 1))
def test_interval_ops_contain_pointwise_results(a, b, seed):
    r = np.random.default_rng(seed)
    x = r.uniform(a.lo, a.hi, 1000) if a.width > 0 else np.full(1000, a.lo)
    y = r.uniform(b.lo, b.hi, 1000) if b.width > 0 else np.full(1000, b.lo)
    s, p, q = interval_add(a, b), interval_mul(a, b), interval_sq(a)
    assert np.all((s.lo <= x + y) & (x + y <= s.hi))
    assert np.all((p.lo <= x * y) & (x * y <= p.hi))
    assert np.all((q.lo <= x * x) & (x * x <= q.hi))


@settings(max_examples=100, deadline=None)
@given(intervals())
def test_interval_sq_endpoints_are_attained(a):
    x = np.linspace(a.lo, a.hi, 20001)
    if a.lo < 0 < a.hi:
        x = np.append(x, 0.0)
    q = interval_sq(a)
    step = a.width / 20000
    slack = 2 * max(abs(a.lo), abs(a.hi)) * step + 1e-12
    assert abs((x * x).min() - q.lo) <= slack
    assert abs((x * x).max() - q.hi) <= slack


def test_box_width_is_largest_side():
    b = Box.from_bounds([[0, 2], [0, 5], [1, 1]])
    assert b.width == 5.0
    assert b.dim == 3


@pytest.mark.parametrize("bounds, left, right", [
    ([[0, 2], [0, 1]], [[0, 1], [0, 1]], [[1, 2], [0, 1]]),
    ([[0, 1], [0, 1]], [[0, 0.5], [0, 1]], [[0.5, 1], [0, 1]]),
    ([[-3, 3]], [[-3, 0]], [[0, 3]]),
])
def test_box_bisect_examples(bounds, left, right):
    a, b = box_bisect(Box.from_bounds(bounds))
    assert a.to_list() == left
    assert b.to_list() == right


def test_box_bisect_zero_width_raises():
    with pytest.raises(ValueError):
        box_bisect(Box.from_bounds([[1, 1], [2, 2]]))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(finite, st.floats(1e-3, 1e3)), min_size=1, max_size=6))
def test_box_bisect_halves_cover_the_cut(sides):
    b = Box.from_bounds([[lo, lo + w] for lo, w in sides])
    a, c = box_bisect(b)
    k = int(np.argmax(b.widths))
    assert a.hi[k] == c.lo[k]
    assert a.lo[k] == b.lo[k] and c.hi[k] == b.hi[k]
    assert np.isclose(a.widths[k] + c.widths[k], b.widths[k])
    others = np.arange(b.dim) != k
    for half in (a, c):
        assert np.array_equal(half.lo[others], b.lo[others])
        assert np.array_equal(half.hi[others], b.hi[others])


@pytest.mark.parametrize("x, inside", [((0, 0), True), ((1, 0), True), ((1.1, 0), False)])
def test_box_contains_examples(x, inside):
    assert box_contains(Box.cube(-1, 1, 2), x) is inside


def test_box_contains_dimension_mismatch():
    with pytest.raises(ValueError):
        box_contains(Box.cube(-1, 1, 2), (0, 0, 0))


def test_box_json_roundtrip():
    b = Box.from_bounds([[-3, 3], [0.01, 0.1]])
    assert json.loads(b.to_json()) == [[-3, 3], [0.01, 0.1]]
    assert Box.from_json(b.to_json()) == b


def test_subpaving_sorts_by_precedence_and_roundtrips_csv(tmp_path):
    omega = Box.cube(0, 2, 1)
    sp = Subpaving(omega, 0.5, [[1.0], [0.0], [1.5]], [[1.5], [1.0], [2.0]], [OUTER, INNER, UNCERTAIN])
    assert sp.kind.tolist() == [INNER, UNCERTAIN, OUTER]
    assert sp.count() == 3 and sp.count(OUTER) == 1
    assert sp.volume(INNER) == 1.0
    assert [b.to_list() for b in sp.uncertain] == [[[1.5, 2.0]]]
    path = tmp_path / "sp.csv"
    sp.to_csv(path)
    back = Subpaving.from_csv(path)
    assert back.epsilon == 0.5 and back.search_box == omega
    assert np.array_equal(back.lo, sp.lo) and np.array_equal(back.hi, sp.hi)
    assert np.array_equal(back.kind, sp.kind)
