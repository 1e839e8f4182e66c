import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from groundlogic.spatial import (
    Bitmask,
    BoundingBox,
    DepthField,
    DimensionMismatch,
    EmptyRegion,
    InvalidBox,
    UnknownDepthRelation,
    UnknownSpatialRelation,
    box_iou,
    clip_box,
    depth_relation,
    entity_depth,
    geometric_relation,
    mask_intersection_union,
    normalize_relation,
)


def centered(cx, width=20, y1=10, y2=50):
    return BoundingBox(cx - width // 2, y1, cx + width // 2, y2)


def test_left_of_formula():
    # 12 * 400 / 800 = 6; logistic(6) evaluated independently here.
    expected = 1 / (1 + math.exp(-6))
    got = geometric_relation(centered(100), centered(500), "left of", 800, 600)
    assert got == pytest.approx(expected, abs=1e-15)
    assert got == pytest.approx(0.9975, abs=5e-5)


def test_identical_boxes_are_undecided():
    a = BoundingBox(10, 10, 50, 50)
    assert geometric_relation(a, a, "left of", 100, 100) == 0.5
    assert geometric_relation(a, a, "above", 100, 100) == 0.5


def test_inside_and_contains():
    inner, outer = BoundingBox(20, 20, 30, 30), BoundingBox(10, 10, 50, 50)
    assert geometric_relation(inner, outer, "inside", 100, 100) == 1.0
    assert geometric_relation(outer, inner, "contains", 100, 100) == 1.0
    assert geometric_relation(outer, inner, "inside", 100, 100) == pytest.approx(100 / 1600)


def test_above_uses_image_height():
    top, bottom = BoundingBox(0, 0, 10, 10), BoundingBox(0, 90, 10, 100)
    expected = 1 / (1 + math.exp(-12 * 90 / 100))
    assert geometric_relation(top, bottom, "above", 10, 100) == pytest.approx(expected)
    assert geometric_relation(bottom, top, "below", 10, 100) == pytest.approx(expected)


def test_aliases_and_unknown():
    a, b = centered(100), centered(500)
    assert normalize_relation("to_the_left_of") == "left of"
    assert geometric_relation(a, b, "to the left of", 800, 600) == geometric_relation(
        a, b, "left of", 800, 600
    )
    with pytest.raises(UnknownSpatialRelation):
        geometric_relation(a, b, "holding", 800, 600)


def test_box_outside_image():
    with pytest.raises(InvalidBox):
        geometric_relation(BoundingBox(0, 0, 200, 10), centered(50), "left of", 100, 100)


def test_degenerate_box():
    with pytest.raises(InvalidBox):
        BoundingBox(5, 5, 5, 10)


def test_clip_box():
    assert clip_box([-5, 2.4, 120, 50.6], 100, 40) == BoundingBox(0, 2, 100, 40)
    assert clip_box([150, 0, 160, 10], 100, 100) is None


def test_depth_relation_examples():
    assert depth_relation(0.2, 0.8, "in front of") == pytest.approx(1 / (1 + math.exp(-7.2)))
    assert depth_relation(0.2, 0.8, "in front of") == pytest.approx(0.99925, abs=5e-6)
    assert depth_relation(0.4, 0.4, "behind") == 0.5
    back = depth_relation(0.8, 0.2, "in front of")
    assert back == pytest.approx(0.00075, abs=5e-6)
    assert back == pytest.approx(1 - depth_relation(0.2, 0.8, "in front of"), abs=1e-12)
    with pytest.raises(UnknownDepthRelation):
        depth_relation(0.1, 0.2, "next to")


def test_entity_depth():
    const = DepthField(4, 3, np.full((3, 4), 0.3))
    assert entity_depth(const, BoundingBox(0, 0, 2, 2)) == pytest.approx(0.3)
    row = DepthField(4, 1, np.array([[0.1, 0.2, 0.8, 0.9]]))
    assert entity_depth(row, BoundingBox(0, 0, 4, 1)) == pytest.approx(0.5)
    rng = np.random.default_rng(0)
    values = rng.random((5, 6))
    field = DepthField(6, 5, values)
    assert entity_depth(field, BoundingBox(0, 0, 6, 5)) == pytest.approx(float(np.median(values)))
    with pytest.raises(EmptyRegion):
        entity_depth(field, BoundingBox(10, 10, 12, 12))


def test_depth_field_normalization():
    field = DepthField.from_raw(np.array([[10.0, 20.0], [30.0, 50.0]]), near_is_zero=False)
    assert field.values.min() == 0.0 and field.values.max() == 1.0
    assert field.values[1, 1] == 0.0  # largest raw value was nearest


def test_box_iou_examples():
    a = BoundingBox(0, 0, 10, 10)
    assert box_iou(a, a) == 1.0
    assert box_iou(a, BoundingBox(20, 20, 30, 30)) == 0.0
    assert box_iou(a, BoundingBox(5, 0, 15, 10)) == pytest.approx(1 / 3)


def test_mask_examples():
    full = np.zeros((10, 20), dtype=bool)
    full[:, :10] = True
    m = Bitmask(full)
    assert mask_intersection_union(m, m) == (100, 100)

    a = np.zeros((10, 10), dtype=bool)
    a[:4, :] = True
    b = np.zeros((10, 10), dtype=bool)
    b[4:, :] = True
    assert mask_intersection_union(Bitmask(a), Bitmask(b)) == (0, 100)

    p = np.array([[1, 1, 0], [1, 1, 0], [0, 0, 0]], dtype=bool)
    g = np.array([[0, 1, 1], [0, 1, 1], [0, 0, 1]], dtype=bool)
    assert p.sum() == 4 and g.sum() == 5
    assert mask_intersection_union(Bitmask(p), Bitmask(g)) == (2, 7)

    with pytest.raises(DimensionMismatch):
        mask_intersection_union(Bitmask(p), Bitmask(a))


def test_rle_known_encoding():
    # Column-major: column 0 = [0, 1], column 1 = [1, 1].
    m = Bitmask(np.array([[0, 1], [1, 1]], dtype=bool))
    assert m.to_rle() == {"w": 2, "h": 2, "counts": [1, 3]}
    starts_on = Bitmask(np.array([[1, 0]], dtype=bool))
    assert starts_on.to_rle()["counts"] == [0, 1, 1]
    with pytest.raises(DimensionMismatch):
        Bitmask.from_rle({"w": 2, "h": 2, "counts": [1, 2]})


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.data())
def test_rle_roundtrip(w, h, data):
    bits = data.draw(st.lists(st.booleans(), min_size=w * h, max_size=w * h))
    m = Bitmask(np.array(bits, dtype=bool).reshape(h, w))
    assert Bitmask.from_rle(m.to_rle()) == m


boxes = st.tuples(
    st.integers(0, 380), st.integers(0, 280), st.integers(1, 200), st.integers(1, 200)
).map(lambda t: BoundingBox(t[0], t[1], t[0] + t[2], t[1] + t[3]))


@settings(max_examples=300, deadline=None)
@given(boxes, boxes, st.integers(0, 200), st.integers(0, 200))
def test_spatial_properties(a, b, dx, dy):
    w, h = 800, 700
    assert geometric_relation(a, b, "left of", w, h) == geometric_relation(b, a, "right of", w, h)
    assert geometric_relation(a, b, "above", w, h) == geometric_relation(b, a, "below", w, h)
    total = geometric_relation(a, b, "left of", w, h) + geometric_relation(b, a, "left of", w, h)
    assert abs(total - 1) <= 1e-12
    iou = box_iou(a, b)
    assert iou == box_iou(b, a) and 0 <= iou <= 1
    assert (iou == 1) == (a == b)
    shift = lambda box: BoundingBox(box.x1 + dx, box.y1 + dy, box.x2 + dx, box.y2 + dy)
    for rel in ("left of", "right of", "above", "below", "inside", "contains", "overlapping"):
        assert geometric_relation(shift(a), shift(b), rel, w, h) == geometric_relation(a, b, rel, w, h)


@given(st.floats(0, 1), st.floats(0, 1))
def test_depth_mirror(a, b):
    assert depth_relation(a, b, "in front of") == depth_relation(b, a, "behind")
    assert abs(depth_relation(a, b, "in front of") + depth_relation(b, a, "in front of") - 1) <= 1e-12


@given(st.lists(st.floats(0, 1), min_size=6, max_size=6), st.randoms())
def test_entity_depth_permutation_invariant(values, rnd):
    field = DepthField(3, 2, np.array(values).reshape(2, 3))
    shuffled = list(values)
    rnd.shuffle(shuffled)
    other = DepthField(3, 2, np.array(shuffled).reshape(2, 3))
    box = BoundingBox(0, 0, 3, 2)
    assert entity_depth(field, box) == entity_depth(other, box)
