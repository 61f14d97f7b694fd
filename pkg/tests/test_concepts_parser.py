import pytest
from models.concepts import (
    TOP, And, Atomic, Conditional, Exists, InvalidConditionalError, TBox, concept_size, has_exists, signature_of,
)
from models.intervals import ProbInterval
from services.parser import (
    ParseError, format_query, load_tbox, parse_concept, parse_query, parse_query_records, parse_tbox,
    save_tbox, serialize_tbox,
)


A, B, C = Atomic("A"), Atomic("B"), Atomic("C")


def test_parse_deterministic():
    t = parse_tbox("cond 1 1 B | A")
    assert len(t) == 1
    c = t.conditionals[0]
    assert c == Conditional(B, A, 1.0, 1.0)
    assert c.is_deterministic


def test_parse_chest_pain():
    t = parse_tbox("cond 0.19 0.21 (some has ChestPain) | (some has LungDisease)")
    c = t.conditionals[0]
    assert c.head == Exists("has", Atomic("ChestPain"))
    assert c.body == Exists("has", Atomic("LungDisease"))
    assert c.lower == pytest.approx(0.19)
    assert c.upper == pytest.approx(0.21)
    assert t.signature.roles == frozenset({"has"})
    assert t.signature.concepts == frozenset({"ChestPain", "LungDisease"})


def test_parse_lower_above_upper():
    try:
        parse_tbox("cond 0.6 0.4 B | A")
        assert False
    except ParseError as e:
        assert e.line == 1
        # 报错位置指向上界
        assert e.column == 10


def test_conditional_invariants():
    try:
        Conditional(B, A, 0.6, 0.4)
        assert False
    except InvalidConditionalError:
        assert True
    try:
        Conditional(B, A, 0.0, 1.5)
        assert False
    except InvalidConditionalError:
        assert True


def test_gci_comments_and_blank_lines():
    text = "# 注释行\n\ngci (and A B) C   # 行尾注释\ncond 0.5 0.5 top | A\n"
    t = parse_tbox(text)
    assert t.conditionals == (Conditional(C, And(A, B), 1.0, 1.0), Conditional(TOP, A, 0.5, 0.5))


def test_parse_error_position():
    text = "# header\ncond 1 1 B | (foo A)"
    try:
        parse_tbox(text)
        assert False
    except ParseError as e:
        assert e.line == 2
        assert e.column == 15
        assert "line 2, column 15" in str(e)


@pytest.mark.parametrize("line", [
    "cond 1 B | A",
    "cond 1 1 B A",
    "cond 1 1 B | (and A",
    "cond 1 1 B | A C",
    "cond x 1 B | A",
    "cond 1 1.2 B | A",
    "rule 1 1 B | A",
    "cond 1 1 bottom | A",
])
def test_malformed_lines(line):
    with pytest.raises(ParseError):
        parse_tbox(line)


def test_reserved_prefix():
    with pytest.raises(ParseError):
        parse_tbox("cond 1 1 _N0 | A")
    with pytest.raises(ParseError):
        parse_concept("(and _N3 A)")
    with pytest.raises(ParseError):
        parse_query("A | _N1")
    # 读取规范化输出时允许
    t = parse_tbox("cond 1 1 _N0 | A", allow_reserved=True)
    assert t.conditionals[0].head == Atomic("_N0")


def test_serialize_empty():
    assert serialize_tbox(TBox()) == ""


def test_serialize_one_line():
    text = serialize_tbox(parse_tbox("cond 0.25 0.75 B | (some r A)"))
    assert text == "cond 0.25 0.75 B | (some r A)\n"
    assert text.count("\n") == 1


def test_round_trip():
    t = TBox((
        Conditional(B, A, 0.3, 0.5),
        Conditional(Exists("r", C), And(A, B), 1.0, 1.0),
        Conditional(A, TOP, 0.1, 0.2),
    ))
    assert parse_tbox(serialize_tbox(t)) == t


def test_decimal_text_preserved():
    text = "cond 0.10 0.300 B | A\n"
    assert serialize_tbox(parse_tbox(text)) == text


def test_concept_size():
    assert concept_size(A) == 1
    assert concept_size(And(A, Exists("r", B))) == 4
    assert concept_size(TOP) == 1
    assert Conditional(B, And(A, C), 1.0, 1.0).size == 4


def test_signature_and_exists():
    sig = signature_of(And(A, Exists("r", B)), C)
    assert sig.concepts == frozenset({"A", "B", "C"})
    assert sig.roles == frozenset({"r"})
    assert has_exists(Exists("r", TOP))
    assert not has_exists(And(A, B))


def test_parse_query():
    head, body = parse_query("(and UG CS) | Student")
    assert head == And(Atomic("UG"), Atomic("CS"))
    assert body == Atomic("Student")
    assert format_query(head, body) == "(and UG CS) | Student"
    assert parse_concept("(some r top)") == Exists("r", TOP)
    with pytest.raises(ParseError):
        parse_query("A B")


def test_parse_query_records():
    text = "query M 0.2 0.2 B | A\n\n# skip\nquery N 0 1 (and B C) | A\n"
    records = parse_query_records(text)
    assert [(n, m) for n, m, _ in records] == [(1, "M"), (4, "N")]
    assert records[0][2] == Conditional(B, A, 0.2, 0.2)
    assert records[1][2].head == And(B, C)
    with pytest.raises(ParseError):
        parse_query_records("cond 1 1 B | A")


def test_load_and_save(tmp_path):
    t = parse_tbox("cond 0.5 0.5 B | A\ngci A C\n")
    path = tmp_path / "kb.tbox"
    save_tbox(t, path)
    assert load_tbox(path) == t
    with pytest.raises(ParseError):
        load_tbox(tmp_path / "missing.tbox")


def test_prob_interval():
    i = ProbInterval(0.2, 0.5)
    assert i.contains(ProbInterval(0.3, 0.4))
    assert not i.contains(ProbInterval(0.1, 0.4))
    assert i.width == pytest.approx(0.3)
    assert str(ProbInterval.make_vacuous()) == "VACUOUS"
    assert ProbInterval.make_vacuous().contains(i)
    assert not i.contains(ProbInterval.make_vacuous())
    assert ProbInterval.clipped(-1e-13, 1.0 + 1e-13) == ProbInterval(0.0, 1.0)
    with pytest.raises(ValueError):
        ProbInterval(0.6, 0.4)


def test_load_tbox_rejects_reserved_names_by_default(tmp_path):
    path = tmp_path / "kb.tbox"
    path.write_text("cond 0.5 0.5 B | _N2\n", encoding="utf-8")
    try:
        load_tbox(path)
        assert False
    except ParseError as e:
        assert e.line == 1
        assert e.column == 18
    assert load_tbox(path, allow_reserved=True).conditionals[0].body == Atomic("_N2")
    path.write_text("cond 1 1 A | bottom\n", encoding="utf-8")
    with pytest.raises(ParseError):
        load_tbox(path)


def test_statement_words_are_valid_names():
    t = parse_tbox("cond 0.5 0.5 and | (and some cond)\ngci query (some gci top)\n")
    assert t.conditionals[0].head == Atomic("and")
    assert t.conditionals[0].body == And(Atomic("some"), Atomic("cond"))
    assert t.conditionals[1].head == Exists("gci", TOP)
    assert parse_tbox(serialize_tbox(t)) == t
    assert parse_tbox("cond 1 1 top | A").conditionals[0].head == TOP
    with pytest.raises(ParseError):
        parse_tbox("cond 1 1 B | (some top A)")
