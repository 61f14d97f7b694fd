import numpy as np
import pytest
from models.concepts import TOP, And, Atomic, Conditional, Exists
from models.embedding import BoxEmbedding
from services.inference import (
    DegenerateBodyError, EmptyEnsembleError, GeometricInterpretation, TopConceptError, box_of, chain_concept,
    ensemble_interval, point_estimate, point_estimates, runtime_profile, satisfies,
)
from services.losses import LossConfig, UnknownNameError, total_loss
from services.oracle import query_bounds
from services.parser import parse_tbox


S, UG, CS = Atomic("Student"), Atomic("UG"), Atomic("CS")
A, B = Atomic("A"), Atomic("B")
HARD = LossConfig(hard_volume=True, use_loc=False, use_vol=False)


def setup_students(**meta):
    e = BoxEmbedding.from_boxes({
        "Student": ([0, 0], [8, 5]),
        "UG": ([0, 0], [3.4, 5]),
        "CS": ([1.8, 0], [3.8, 4]),
    }, **meta)
    return GeometricInterpretation(e)


def setup_pair(body, head):
    return GeometricInterpretation(BoxEmbedding.from_boxes({"A": body, "B": head}))


def test_box_of():
    i = setup_students()
    assert box_of(i, UG) == i.box_of(UG)
    assert i.box_of(S).upper.tolist() == pytest.approx([8, 5])
    assert i.box_of(And(UG, UG)) == i.box_of(UG)
    assert i.box_of(And(UG, CS)).lower.tolist() == pytest.approx([1.8, 0])
    assert i.box_of(And(UG, CS)).upper.tolist() == pytest.approx([3.4, 4])


def test_box_of_exists():
    e = BoxEmbedding.from_boxes({"B": ([1, 2], [3, 4])}, {"r": ([1, 1], [0, 0])})
    i = GeometricInterpretation(e)
    assert i.box_of(Exists("r", B)) == i.box_of(B)
    e = BoxEmbedding.from_boxes({"B": ([1, 2], [3, 4])}, {"r": ([2, 1], [1, 0])})
    # 原像 {x : T(x) ∈ B}
    pre = GeometricInterpretation(e).box_of(Exists("r", B))
    assert pre.lower.tolist() == pytest.approx([0, 2])
    assert pre.upper.tolist() == pytest.approx([1, 4])


def test_box_of_errors():
    i = setup_students()
    try:
        i.box_of(TOP)
        assert False
    except TopConceptError:
        assert True
    with pytest.raises(UnknownNameError):
        i.box_of(Atomic("Professor"))
    with pytest.raises(UnknownNameError):
        i.box_of(Exists("r", UG))


def test_point_estimate_student_example():
    i = setup_students()
    assert point_estimate(i, And(UG, CS), S) == pytest.approx(0.16)
    assert point_estimate(i, S, S) == pytest.approx(1.0)
    disjoint = setup_pair(([0], [1]), ([2], [3]))
    assert point_estimate(disjoint, B, A) == 0


def test_point_estimate_degenerate_body():
    i = setup_pair(([0, 0], [1e-5, 1e-5]), ([0, 0], [1, 1]))
    try:
        point_estimate(i, B, A)
        assert False
    except DegenerateBodyError:
        assert True
    # 空交集作为条件体同样无定义
    with pytest.raises(DegenerateBodyError):
        point_estimate(setup_pair(([0], [1]), ([2], [3])), A, And(A, B))


def test_satisfies():
    i = setup_pair(([0], [10]), ([6], [20]))
    result = satisfies(i, Conditional(B, A, 0.5, 0.7))
    assert not result
    assert result.violation == pytest.approx(1.0)
    assert satisfies(i, Conditional(B, A, 0.3, 0.5))
    # 体积为 0 的条件体空真满足
    empty = setup_pair(([0], [1]), ([2], [3]))
    assert satisfies(empty, Conditional(A, And(A, B), 0.9, 0.9)).satisfied
    top = satisfies(i, Conditional(B, TOP, 0.0, 1.0))
    assert not top.satisfied
    assert top.violation == float("inf")


def test_ensemble_interval():
    first = setup_pair(([0, 0], [8, 5]), ([0, 0], [3.4, 5]))
    second = setup_pair(([0, 0], [10, 6]), ([0, 0], [10, 5]))
    interval = ensemble_interval([first, second], B, A)
    assert interval.lower == pytest.approx(0.425)
    assert interval.upper == pytest.approx(50 / 60)
    single = ensemble_interval([first], B, A)
    assert single.lower == single.upper
    other = setup_pair(([0, 0], [10, 6]), ([0, 0], [2, 6]))
    inner = setup_pair(([0, 0], [8, 5]), ([1.8, 0], [3.4, 4]))
    assert point_estimates([inner, other], B, A) == pytest.approx([0.16, 0.2])


def test_ensemble_skips_degenerate_members():
    good = setup_pair(([0], [2]), ([0], [1]))
    bad = setup_pair(([0], [1e-9]), ([0], [1]))
    interval = ensemble_interval([good, bad], B, A)
    assert (interval.lower, interval.upper) == pytest.approx((0.5, 0.5))
    assert ensemble_interval([bad], B, A).vacuous
    try:
        ensemble_interval([], B, A)
        assert False
    except EmptyEnsembleError:
        assert True


def test_interval_nesting():
    members = [setup_pair(([0], [4]), ([0], [k])) for k in (1, 2, 3)]
    small = ensemble_interval(members[:2], B, A)
    large = ensemble_interval(members, B, A)
    assert large.contains(small)


def test_chain_concept_and_runtime_profile():
    c = chain_concept("A", 3)
    assert c == And(And(A, A), A)
    i = setup_pair(([0], [2]), ([0], [1]))
    profile = runtime_profile(i, (2, 8), repeats=5)
    assert sorted(profile) == [2, 8]
    assert all(v >= 0 for v in profile.values())


def test_runtime_grows_linearly_with_query_size():
    rng = np.random.default_rng(0)
    lower = rng.uniform(0.0, 1.0, size=16)
    e = BoxEmbedding.from_boxes({"A": (lower, lower + 5.0), "B": (lower, lower + 2.0)})
    sizes = (2, 8, 32, 128)
    profile = runtime_profile(GeometricInterpretation(e), sizes, repeats=300)
    x = np.array(sizes, dtype=float)
    y = np.array([profile[s] for s in sizes])
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    r2 = 1.0 - np.sum((y - fitted) ** 2) / np.sum((y - y.mean()) ** 2)
    assert slope > 0
    assert r2 >= 0.95
    assert all(profile[s] < 1.0 for s in (2, 8, 32))


@pytest.mark.parametrize("offset,extra", [(0.0, 0.0), (0.0, 8.0), (2.0, 1.0), (5.0, 3.0), (8.0, 0.0)])
def test_zero_loss_estimates_lie_in_entailed_interval(offset, extra):
    kb = parse_tbox("cond 0.2 0.2 CS | Student\ncond 0.8 0.8 UG | CS\n"
                    "cond 1 1 Student | CS\ncond 1 1 Student | UG\n")
    e = BoxEmbedding.from_boxes({
        "Student": ([0.0], [10.0]),
        "CS": ([offset], [offset + 2.0]),
        "UG": ([offset + 0.4], [offset + 2.0 + extra]),
    })
    assert total_loss(kb, e, HARD) < 1e-9
    entailed = query_bounds(kb, UG, S)
    p = point_estimate(GeometricInterpretation(e), UG, S)
    assert entailed.contains_value(p, 1e-6)
