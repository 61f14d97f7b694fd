import math
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from services.geometry import (
    AffineMap, Box, DimensionMismatchError, apply_affine, disjoint_measure, intersect, invert_affine,
    log_softplus, log_softplus_grad, log_softplus_volume, softplus, softplus_grad, softplus_volume, volume,
)


coord = st.floats(min_value=-5, max_value=5, allow_nan=False)


@st.composite
def boxes(draw, dim=None):
    n = dim if dim is not None else draw(st.integers(1, 4))
    lower = np.array(draw(st.lists(coord, min_size=n, max_size=n)))
    sides = np.array(draw(st.lists(st.floats(-1, 4, allow_nan=False), min_size=n, max_size=n)))
    return Box(lower, lower + sides)


@st.composite
def box_triples(draw):
    n = draw(st.integers(1, 4))
    return draw(boxes(n)), draw(boxes(n)), draw(boxes(n))


def test_volume_examples():
    assert volume(Box([0, 0], [2, 3])) == 6
    assert volume(Box([0, 0], [-1, 3])) == 0
    assert volume(Box([0, 0], [8, 5])) == 40


def test_softplus_volume_examples():
    assert softplus_volume(Box([0.0], [0.0]), 1.0) == pytest.approx(math.log(2))
    assert softplus_volume(Box([0, 0], [2, 3]), 1e-4) == pytest.approx(6, abs=1e-6)
    with pytest.raises(ValueError):
        softplus_volume(Box([0.0], [1.0]), 0.0)


def test_softplus_stable_for_large_inputs():
    x = np.array([-1e4, 0.0, 1e4])
    out = softplus(x, 1e-3)
    assert np.all(np.isfinite(out))
    assert out[2] == pytest.approx(1e4)
    assert out[0] == pytest.approx(0.0, abs=1e-300)
    assert softplus_grad(x, 1e-3).tolist() == pytest.approx([0.0, 0.5, 1.0])


def test_log_softplus_matches_log_of_softplus():
    x = np.array([-2.0, 0.0, 3.0])
    assert log_softplus(x, 0.5).tolist() == pytest.approx(np.log(softplus(x, 0.5)).tolist())
    # 远离时 softplus 下溢为 0，对数形式仍然有限且与尾部近似一致
    far = log_softplus(np.array([-1e4]), 1e-3)
    assert np.isfinite(far[0])
    assert far[0] == pytest.approx(math.log(1e-3) - 1e7)
    assert log_softplus_grad(np.array([-1e4]), 1e-3)[0] == pytest.approx(1e3)
    edge = np.array([-30.0 - 1e-9, -30.0 + 1e-9])
    assert log_softplus(edge, 1.0)[0] == pytest.approx(log_softplus(edge, 1.0)[1], abs=1e-8)
    with pytest.raises(ValueError):
        log_softplus_volume(Box([0.0], [1.0]), 0.0)


def test_log_softplus_grad_matches_finite_differences():
    h = 1e-6
    for t in (0.1, 1.0):
        x = np.array([-40.0, -3.0, -0.2, 0.0, 0.7, 5.0]) * t
        numeric = (log_softplus(x + h, t) - log_softplus(x - h, t)) / (2 * h)
        assert log_softplus_grad(x, t).tolist() == pytest.approx(numeric.tolist(), rel=1e-5)


def test_intersect_examples():
    r = intersect(Box([0, 0], [4, 4]), Box([2, 2], [6, 6]))
    assert r == Box([2, 2], [4, 4])
    assert volume(r) == 4
    r = intersect(Box([0, 0], [1, 1]), Box([2, 0], [3, 1]))
    assert np.any(r.sides < 0)
    assert volume(r) == 0
    a = Box([1, 1], [2, 2])
    assert intersect(a, Box([0, 0], [5, 5])) == a


def test_dimension_mismatch():
    try:
        intersect(Box([0], [1]), Box([0, 0], [1, 1]))
        assert False
    except DimensionMismatchError:
        assert True
    with pytest.raises(DimensionMismatchError):
        Box([0, 0], [1])
    with pytest.raises(ValueError):
        AffineMap([1.0, 0.0], [0.0, 0.0])


def test_disjoint_measure_examples():
    b = Box([0, 0], [2, 1])
    assert disjoint_measure(b, b) == 0
    assert disjoint_measure(b, Box([5, 5], [6, 6])) == 1
    assert disjoint_measure(b, Box([1, 0], [3, 1])) == pytest.approx(0.5)
    # 零体积分母取下限 ε
    assert disjoint_measure(Box([0, 0], [0, 1]), b) == 1


def test_affine_examples():
    f = AffineMap([2, 3], [1, 1])
    assert apply_affine(f, Box([0, 0], [1, 1])) == Box([1, 1], [3, 4])
    b = Box([0.5, -1], [2, 3])
    assert apply_affine(AffineMap.identity(2), b) == b
    g = invert_affine(f)
    assert g.diag.tolist() == pytest.approx([0.5, 1 / 3])
    assert g.offset.tolist() == pytest.approx([-0.5, -1 / 3])


@given(boxes())
def test_volume_non_negative_and_below_softplus(b):
    assert volume(b) >= 0
    assert softplus_volume(b, 0.5) >= volume(b) - 1e-12


@given(boxes(), st.floats(1e-3, 1.0), st.floats(1e-3, 1.0))
def test_softplus_volume_decreases_with_temperature(b, t1, t2):
    lo, hi = sorted((t1, t2))
    assert volume(b) - 1e-12 <= softplus_volume(b, lo) <= softplus_volume(b, hi) * (1 + 1e-12)


@given(box_triples())
def test_intersect_algebra(triple):
    a, b, c = triple
    assert intersect(a, b) == intersect(b, a)
    assert intersect(intersect(a, b), c) == intersect(a, intersect(b, c))
    assert intersect(a, a) == a
    v = volume(intersect(a, b))
    assert v <= min(volume(a), volume(b)) + 1e-12


@given(box_triples())
def test_disjoint_measure_range(triple):
    a, b, _ = triple
    d = disjoint_measure(a, b)
    assert 0.0 <= d <= 1.0
    if volume(a) > 1e-6 and volume(intersect(a, b)) == volume(a):
        assert d == 0


@settings(max_examples=50)
@given(
    st.integers(1, 4).flatmap(lambda n: st.tuples(
        st.lists(st.floats(0.5, 2.0), min_size=n, max_size=n),
        st.lists(coord, min_size=n, max_size=n),
        st.lists(coord, min_size=n, max_size=n),
    ))
)
def test_affine_round_trip(parts):
    diag, offset, x = (np.array(p) for p in parts)
    f = AffineMap(diag, offset)
    back = invert_affine(f)(f(x))
    assert np.max(np.abs(back - x)) <= 1e-12
    b = Box(x, x + 1.0)
    mapped = apply_affine(f, b)
    # 对角为正，角点顺序保持
    assert np.all(mapped.upper >= mapped.lower)


@given(boxes(), st.floats(0.1, 1.0))
def test_log_softplus_volume_is_log_of_softplus_volume(b, t):
    assert log_softplus_volume(b, t) == pytest.approx(math.log(softplus_volume(b, t)), abs=1e-9)
