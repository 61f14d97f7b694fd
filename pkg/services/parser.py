import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional
from errors import SelboxError
from models.concepts import (
    BOTTOM, FRESH_PREFIX, TOP, And, Atomic, Concept, Conditional, Exists, TBox, format_concept, is_valid_name,
)


logger = logging.getLogger(__name__)

_TOKEN = re.compile(r"\(|\)|\||[^\s()|]+")
_NUMBER = re.compile(r"[+]?(\d+(\.\d*)?|\.\d+)([eE][-+]?\d+)?\Z")


class ParseError(SelboxError):
    """TBox 文本解析失败，携带 1 起始的行号与列号。"""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        super().__init__(f"line {line}, column {column}: {message}")
        self.message = message
        self.line = line
        self.column = column


@dataclass(frozen=True)
class _Token:
    text: str
    line: int
    column: int


class _Cursor:
    def __init__(self, tokens: list[_Token], line: int, allow_reserved: bool):
        self.tokens = tokens
        self.pos = 0
        self.line = line
        self.allow_reserved = allow_reserved

    def peek(self) -> Optional[_Token]:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self, expected: str = "token") -> _Token:
        tok = self.peek()
        if tok is None:
            end = self.tokens[-1].column + len(self.tokens[-1].text) if self.tokens else 1
            raise ParseError(f"unexpected end of line, expected {expected}", self.line, end)
        self.pos += 1
        return tok

    def expect(self, text: str) -> _Token:
        tok = self.next(repr(text))
        if tok.text != text:
            raise ParseError(f"expected {text!r}, found {tok.text!r}", tok.line, tok.column)
        return tok

    def name(self, kind: str) -> str:
        tok = self.next(f"{kind} name")
        if not is_valid_name(tok.text):
            raise ParseError(f"invalid {kind} name {tok.text!r}", tok.line, tok.column)
        if tok.text.startswith(FRESH_PREFIX) and not self.allow_reserved:
            raise ParseError(f"name {tok.text!r} uses the reserved prefix {FRESH_PREFIX!r}", tok.line, tok.column)
        return tok.text

    def probability(self) -> tuple[float, str]:
        tok = self.next("probability")
        if not _NUMBER.match(tok.text):
            raise ParseError(f"invalid probability {tok.text!r}", tok.line, tok.column)
        value = float(tok.text)
        if not 0.0 <= value <= 1.0:
            raise ParseError(f"probability {tok.text} out of [0,1]", tok.line, tok.column)
        return value, tok.text

    def concept(self) -> Concept:
        tok = self.peek()
        if tok is None:
            self.next("concept")
        if tok.text == "(":
            self.next()
            head = self.next("constructor")
            if head.text == "and":
                left = self.concept()
                right = self.concept()
                self.expect(")")
                return And(left, right)
            if head.text == "some":
                role = self.name("role")
                filler = self.concept()
                self.expect(")")
                return Exists(role, filler)
            raise ParseError(f"unknown constructor {head.text!r}", head.line, head.column)
        if tok.text == "top":
            self.next()
            return TOP
        if tok.text == "bottom" and self.allow_reserved:
            self.next()
            return BOTTOM
        if tok.text in (")", "|"):
            raise ParseError(f"unexpected {tok.text!r}, expected concept", tok.line, tok.column)
        return Atomic(self.name("concept"))

    def done(self) -> None:
        tok = self.peek()
        if tok is not None:
            raise ParseError(f"unexpected trailing token {tok.text!r}", tok.line, tok.column)


def _tokenize(line: str, lineno: int) -> list[_Token]:
    code = line.split("#", 1)[0]
    return [_Token(m.group(0), lineno, m.start() + 1) for m in _TOKEN.finditer(code)]


def _conditional(cur: _Cursor) -> Conditional:
    keyword = cur.next("statement")
    if keyword.text == "cond":
        lower, lower_text = cur.probability()
        upper_tok = cur.peek()
        upper, upper_text = cur.probability()
        if lower > upper:
            raise ParseError(f"lower bound {lower_text} exceeds upper bound {upper_text}", upper_tok.line, upper_tok.column)
        head = cur.concept()
        cur.expect("|")
        body = cur.concept()
        cur.done()
        return Conditional(head, body, lower, upper, lower_text, upper_text)
    if keyword.text == "gci":
        body = cur.concept()
        head = cur.concept()
        cur.done()
        return Conditional(head, body, 1.0, 1.0)
    raise ParseError(f"unknown statement {keyword.text!r}", keyword.line, keyword.column)


def parse_tbox(text: str, allow_reserved: bool = False) -> TBox:
    """解析 TBox 文本。

    每行一条语句（`cond l u HEAD | BODY` 或 `gci BODY HEAD`），`#` 之后为注释。
    `allow_reserved=True` 时允许 `_N` 前缀名称与内部 `bottom`，用于读取规范化输出。
    异常：`ParseError`（含行列号）。
    """
    conditionals = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        tokens = _tokenize(line, lineno)
        if not tokens:
            continue
        conditionals.append(_conditional(_Cursor(tokens, lineno, allow_reserved)))
    return TBox(tuple(conditionals))


def serialize_tbox(t: TBox) -> str:
    return "".join(c.format() + "\n" for c in t.conditionals)


def parse_concept(text: str, allow_reserved: bool = False) -> Concept:
    cur = _Cursor(_tokenize(text, 1), 1, allow_reserved)
    c = cur.concept()
    cur.done()
    return c


def parse_query(text: str, allow_reserved: bool = False) -> tuple[Concept, Concept]:
    """解析查询 `HEAD | BODY`，返回 (head, body)。"""
    cur = _Cursor(_tokenize(text, 1), 1, allow_reserved)
    head = cur.concept()
    cur.expect("|")
    body = cur.concept()
    cur.done()
    return head, body


def format_query(head: Concept, body: Concept) -> str:
    return f"{format_concept(head)} | {format_concept(body)}"


def load_tbox(path: str | Path, allow_reserved: bool = False) -> TBox:
    """读取 TBox 文件；只有读回规范化输出时才传 `allow_reserved=True`。"""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e}") from e
    t = parse_tbox(text, allow_reserved=allow_reserved)
    logger.info("tbox_loaded", extra={"path": str(path), "conditionals": len(t), "size": t.size})
    return t


def save_tbox(t: TBox, path: str | Path) -> None:
    Path(path).write_text(serialize_tbox(t), encoding="utf-8")


def parse_query_records(text: str) -> list[tuple[int, str, Conditional]]:
    """解析查询文件中的 `query <A> <l> <u> <HEAD> | <BODY>` 行，返回 (行号, 中介名, 条件句)。"""
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        tokens = _tokenize(line, lineno)
        if not tokens:
            continue
        cur = _Cursor(tokens, lineno, allow_reserved=True)
        cur.expect("query")
        mediator = cur.name("concept")
        lower, lower_text = cur.probability()
        upper_tok = cur.peek()
        upper, upper_text = cur.probability()
        if lower > upper:
            raise ParseError(f"lower bound {lower_text} exceeds upper bound {upper_text}", upper_tok.line, upper_tok.column)
        head = cur.concept()
        cur.expect("|")
        body = cur.concept()
        cur.done()
        records.append((lineno, mediator, Conditional(head, body, lower, upper, lower_text, upper_text)))
    return records
