import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Optional, Union
from errors import SelboxError


NAME_PATTERN = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
FRESH_PREFIX = "_N"
# 概念位置上 top 表示 ⊤、bottom 表示内部的 ⊥，两者不能作名称；and、some 只在 "(" 之后、
# cond、gci、query 只在行首有语法含义，仍可作名称
KEYWORDS = frozenset({"top", "bottom"})


class InvalidConditionalError(SelboxError, ValueError):
    """条件句不合法：概率越界或下界大于上界。"""
    pass


@dataclass(frozen=True)
class Top:
    pass


@dataclass(frozen=True)
class Bottom:
    # 仅供内部使用：文本语法中不存在 ⊥，生成器也不会产生
    pass


@dataclass(frozen=True)
class Atomic:
    name: str


@dataclass(frozen=True)
class And:
    left: "Concept"
    right: "Concept"


@dataclass(frozen=True)
class Exists:
    role: str
    filler: "Concept"


Concept = Union[Top, Bottom, Atomic, And, Exists]

TOP = Top()
BOTTOM = Bottom()


def is_valid_name(name: str) -> bool:
    return bool(NAME_PATTERN.match(name)) and name not in KEYWORDS


def is_basic(c: Concept) -> bool:
    """名称、⊤ 或 ⊥，即规范形中允许出现在构造子参数位置的概念。"""
    return isinstance(c, (Atomic, Top, Bottom))


def concept_size(c: Concept) -> int:
    """构造子个数：原子与 ⊤ 计 1，⊓ 与 ∃ 计 1 加子项。"""
    if isinstance(c, And):
        return 1 + concept_size(c.left) + concept_size(c.right)
    if isinstance(c, Exists):
        return 1 + concept_size(c.filler)
    return 1


def iter_names(c: Concept) -> Iterator[tuple[str, str]]:
    """遍历概念中出现的名称，产出 ("concept"|"role", name)。"""
    if isinstance(c, Atomic):
        yield "concept", c.name
    elif isinstance(c, And):
        yield from iter_names(c.left)
        yield from iter_names(c.right)
    elif isinstance(c, Exists):
        yield "role", c.role
        yield from iter_names(c.filler)


def has_exists(c: Concept) -> bool:
    return any(kind == "role" for kind, _ in iter_names(c))


def contains_top(c: Concept) -> bool:
    if isinstance(c, Top):
        return True
    if isinstance(c, And):
        return contains_top(c.left) or contains_top(c.right)
    if isinstance(c, Exists):
        return contains_top(c.filler)
    return False


def format_concept(c: Concept) -> str:
    if isinstance(c, Atomic):
        return c.name
    if isinstance(c, Top):
        return "top"
    if isinstance(c, Bottom):
        return "bottom"
    if isinstance(c, And):
        return f"(and {format_concept(c.left)} {format_concept(c.right)})"
    return f"(some {c.role} {format_concept(c.filler)})"


def format_probability(value: float, text: Optional[str] = None) -> str:
    if text is not None:
        return text
    return repr(float(value)) if value not in (0.0, 1.0) else str(int(value))


@dataclass(frozen=True)
class Conditional:
    """统计条件句 (head | body)[lower, upper]。

    `lower_text`/`upper_text` 保存解析时的十进制原文，仅用于序列化回显，不参与相等比较。
    """
    head: Concept
    body: Concept
    lower: float
    upper: float
    lower_text: Optional[str] = field(default=None, compare=False, repr=False)
    upper_text: Optional[str] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not (0.0 <= self.lower <= 1.0) or not (0.0 <= self.upper <= 1.0):
            raise InvalidConditionalError(f"probability out of [0,1]: [{self.lower}, {self.upper}]")
        if self.lower > self.upper:
            raise InvalidConditionalError(f"lower bound {self.lower} exceeds upper bound {self.upper}")

    @property
    def is_deterministic(self) -> bool:
        return self.lower == 1.0 and self.upper == 1.0

    @property
    def is_point(self) -> bool:
        return self.lower == self.upper

    @property
    def size(self) -> int:
        return concept_size(self.body) + concept_size(self.head)

    def format(self) -> str:
        lower = format_probability(self.lower, self.lower_text)
        upper = format_probability(self.upper, self.upper_text)
        return f"cond {lower} {upper} {format_concept(self.head)} | {format_concept(self.body)}"

    def __str__(self) -> str:
        return f"({format_concept(self.head)} | {format_concept(self.body)})[{self.lower:g}, {self.upper:g}]"


@dataclass(frozen=True)
class Signature:
    concepts: frozenset[str]
    roles: frozenset[str]

    def union(self, other: "Signature") -> "Signature":
        return Signature(self.concepts | other.concepts, self.roles | other.roles)


def signature_of(*concepts: Concept) -> Signature:
    names: set[str] = set()
    roles: set[str] = set()
    for c in concepts:
        for kind, name in iter_names(c):
            (names if kind == "concept" else roles).add(name)
    return Signature(frozenset(names), frozenset(roles))


@dataclass(frozen=True)
class TBox:
    conditionals: tuple[Conditional, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "conditionals", tuple(self.conditionals))

    @cached_property
    def signature(self) -> Signature:
        sig = Signature(frozenset(), frozenset())
        for c in self.conditionals:
            sig = sig.union(signature_of(c.body, c.head))
        return sig

    @property
    def size(self) -> int:
        return sum(c.size for c in self.conditionals)

    def __len__(self) -> int:
        return len(self.conditionals)

    def __iter__(self) -> Iterator[Conditional]:
        return iter(self.conditionals)

    def __contains__(self, item) -> bool:
        return item in self.conditionals

    def without(self, removed) -> "TBox":
        removed = set(removed)
        return TBox(tuple(c for c in self.conditionals if c not in removed))
