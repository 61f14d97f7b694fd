import math
import pytest
from hypothesis import given, strategies as st
from models.concepts import And, Atomic, Conditional, Exists
from models.intervals import ProbInterval
from services.metrics import (
    EmptyInputError, MetricReport, approximation_gap, embedding_error_report, inference_error_report, mae,
    mean_report, mre, pnf_type, soundness_accuracy, soundness_error, stratum,
)


A, B, C = Atomic("A"), Atomic("B"), Atomic("C")
prob = st.floats(0.0, 1.0, allow_nan=False)


@st.composite
def interval(draw):
    lo, up = sorted((draw(prob), draw(prob)))
    return ProbInterval(lo, up)


items_strategy = st.lists(st.tuples(interval(), interval()), min_size=1, max_size=20)


def test_mae_mre_examples():
    assert mae([(0.2, 0.1), (0.4, 0.5)]) == pytest.approx(0.1)
    assert mae([(0.5, 0.5)]) == 0
    assert mre([(0.5, 0.5)]) == 0
    assert mre([(0.0, 0.01)]) == pytest.approx(1e6)
    assert mre([(0.5, 0.4)]) == pytest.approx(0.2)


def test_empty_inputs():
    for fn in (mae, mre, soundness_error, soundness_accuracy, approximation_gap):
        try:
            fn([])
            assert False
        except EmptyInputError:
            assert True
    with pytest.raises(EmptyInputError):
        soundness_error([(ProbInterval.make_vacuous(), ProbInterval(0.1, 0.2))])


def test_soundness_examples():
    true = ProbInterval(0.2, 0.5)
    inside = [(true, ProbInterval(0.3, 0.4))]
    assert soundness_error(inside) == 0
    assert soundness_accuracy(inside) == 1
    outside = [(true, ProbInterval(0.1, 0.6))]
    assert soundness_error(outside) == pytest.approx(0.2)
    assert soundness_accuracy(outside) == 0
    equal = [(true, ProbInterval(0.2, 0.5))]
    assert soundness_error(equal) == 0
    assert soundness_accuracy(equal) == 1
    # 按查询数取平均
    assert soundness_error(inside + outside) == pytest.approx(0.1)
    assert soundness_accuracy(inside + outside) == pytest.approx(0.5)


def test_approximation_gap_examples():
    true = ProbInterval(0.2, 0.5)
    assert approximation_gap([(true, true), (true, true)]) == 0
    assert approximation_gap([(true, ProbInterval(0.1, 0.6))]) == pytest.approx(0.2)
    assert approximation_gap([(true, ProbInterval(0.3, 0.4))]) == pytest.approx(0.2)


@given(items_strategy)
def test_ag_bounds_se(items):
    assert approximation_gap(items) >= soundness_error(items) - 1e-12
    assert 0.0 <= soundness_accuracy(items) <= 1.0
    if soundness_accuracy(items) == 1.0:
        assert soundness_error(items) == pytest.approx(0.0, abs=1e-12)


@given(items_strategy, st.randoms())
def test_metrics_permutation_invariant(items, rnd):
    shuffled = list(items)
    rnd.shuffle(shuffled)
    assert soundness_error(shuffled) == pytest.approx(soundness_error(items))
    assert soundness_accuracy(shuffled) == pytest.approx(soundness_accuracy(items))
    assert approximation_gap(shuffled) == pytest.approx(approximation_gap(items))
    pairs = [(t.lower, e.upper) for t, e in items]
    assert mae(list(reversed(pairs))) == pytest.approx(mae(pairs))


@given(interval(), st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_ag_shrinks_for_nested_sound_estimates(true, a, b, c, d):
    # true ⊇ wide ⊇ narrow
    lo = true.lower + a * true.width
    up = lo + b * (true.upper - lo)
    wide = ProbInterval.clipped(lo, up)
    nlo = wide.lower + c * wide.width
    narrow = ProbInterval.clipped(nlo, nlo + d * (wide.upper - nlo))
    assert approximation_gap([(true, wide)]) <= approximation_gap([(true, narrow)]) + 1e-12


def test_pnf_type():
    assert pnf_type(Conditional(B, A, 0.5, 0.5)) == "pnf1"
    assert pnf_type(Conditional(B, And(A, C), 0.5, 0.5)) == "pnf2"
    assert pnf_type(Conditional(B, Exists("r", A), 0.5, 0.5)) == "pnf3"
    assert pnf_type(Conditional(Exists("r", B), A, 0.5, 0.5)) == "pnf4"
    assert pnf_type(Conditional(And(A, B), C, 0.5, 0.5)) == "other"


def test_stratum_boundary():
    assert stratum(0.1) == "low"
    assert stratum(0.05) == "low"
    assert stratum(0.1000001) == "high"


def test_embedding_error_report():
    records = [
        (Conditional(B, A, 0.5, 0.5), 0.4),
        (Conditional(B, And(A, C), 0.1, 0.1), 0.1),
        (Conditional(Exists("r", B), A, 0.0, 0.0), 0.01),
        (Conditional(C, A, 0.6, 0.8), 0.7),
    ]
    report = embedding_error_report(records)
    assert report.get("conditionals") == 4
    assert report.get("mae", "pnf1") == pytest.approx(0.05)
    assert report.get("mre", "pnf4") == pytest.approx(1e6)
    assert report.get("mae", "pnf2") == 0
    assert math.isnan(report.get("mae", "pnf3"))
    # p = 0.1 计入低概率层
    assert report.get("conditionals_low") == 2
    assert report.get("conditionals_low") + report.get("conditionals_high") == report.get("conditionals")
    # 没有条件句的列是 NaN 而不是 0
    assert math.isnan(report.get("conditionals", "pnf3"))
    assert report.get("degenerate") == 0
    assert math.isnan(report.get("degenerate", "pnf3"))
    single = embedding_error_report([(Conditional(B, A, 0.5, 0.5), 0.4)])
    assert single.mae == pytest.approx(0.1)
    assert single.mre == pytest.approx(0.2)
    with pytest.raises(EmptyInputError):
        embedding_error_report([])


def test_inference_error_report(tmp_path):
    true = ProbInterval(0.2, 0.5)
    records = [
        (Conditional(B, A, 0.3, 0.3), true, ProbInterval(0.1, 0.6)),
        (Conditional(C, A, 0.3, 0.3), true, ProbInterval(0.3, 0.4)),
        (Conditional(C, And(A, B), 0.3, 0.3), ProbInterval.make_vacuous(), ProbInterval(0.3, 0.4)),
    ]
    report = inference_error_report(records)
    assert report.get("queries") == 2
    assert report.se == pytest.approx(0.1)
    assert report.sa == pytest.approx(0.5)
    assert report.ag == pytest.approx(0.2)
    assert math.isnan(report.get("se", "pnf2"))
    with pytest.raises(EmptyInputError):
        inference_error_report(records[2:])

    merged = report.merge(embedding_error_report([(Conditional(B, A, 0.5, 0.5), 0.4)]))
    path = tmp_path / "metrics.csv"
    merged.to_csv(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "metric,total,pnf1,pnf2,pnf3,pnf4,other"
    assert lines[1] == "queries,2.000000,2.000000,,,,"
    assert any(line.startswith("mae,0.100000,0.100000") for line in lines)
    assert "-" in merged.format_table()


def test_metric_report_defaults():
    report = MetricReport()
    assert math.isnan(report.mae)
    assert list(report.to_frame().columns) == ["metric", "total", "pnf1", "pnf2", "pnf3", "pnf4", "other"]


def test_degenerate_row():
    bad = Conditional(B, And(A, C), 0.3, 0.3)
    report = embedding_error_report([(bad, 0.0), (Conditional(B, A, 0.5, 0.5), 0.5)], degenerate=[bad])
    assert report.get("degenerate") == 1
    assert report.get("degenerate", "pnf2") == 1
    assert report.get("degenerate", "pnf1") == 0
    assert report.get("mae", "pnf2") == pytest.approx(0.3)
    assert report.mae == pytest.approx(0.15)


def test_mean_report():
    first = embedding_error_report([(Conditional(B, A, 0.5, 0.5), 0.4), (Conditional(C, And(A, B), 0.2, 0.2), 0.2)])
    second = embedding_error_report([(Conditional(B, A, 0.5, 0.5), 0.2)])
    merged = mean_report([first, second])
    assert merged.get("conditionals") == pytest.approx(1.5)
    assert merged.mae == pytest.approx((0.05 + 0.3) / 2)
    assert merged.get("mae", "pnf1") == pytest.approx(0.2)
    # 只有一张表有样本的格取该表的值
    assert merged.get("mae", "pnf2") == pytest.approx(0.0)
    assert math.isnan(merged.get("mae", "pnf3"))
    assert list(merged.rows)[:3] == ["conditionals", "mae", "mre"]
    assert mean_report([first]).mae == pytest.approx(first.mae)
    with pytest.raises(EmptyInputError):
        mean_report([])
