import logging
import re
from dataclasses import dataclass
from typing import Iterator
from errors import SelboxError
from models.concepts import (
    FRESH_PREFIX, And, Atomic, Concept, Conditional, Exists, TBox, Top, is_basic,
)


logger = logging.getLogger(__name__)

_FRESH = re.compile(re.escape(FRESH_PREFIX) + r"(\d+)\Z")


class NonDeterministicError(SelboxError, ValueError):
    """对非确定性条件句调用 conditional_to_gci。"""
    pass


class NotNormalizedError(SelboxError):
    """输入 TBox 不是 SEL 规范形。"""
    pass


@dataclass
class FreshNameCounter:
    next_index: int = 0
    prefix: str = FRESH_PREFIX

    def fresh(self) -> Atomic:
        name = f"{self.prefix}{self.next_index}"
        self.next_index += 1
        return Atomic(name)

    @classmethod
    def after(cls, t: TBox) -> "FreshNameCounter":
        """从输入中已存在的最大 `_N` 编号之后开始编号，避免与已规范化输入冲突。"""
        used = [int(m.group(1)) for name in t.signature.concepts if (m := _FRESH.match(name))]
        return cls(next_index=max(used) + 1 if used else 0)


def gci_to_conditional(body: Concept, head: Concept) -> Conditional:
    return Conditional(head, body, 1.0, 1.0)


def conditional_to_gci(c: Conditional) -> tuple[Concept, Concept]:
    if not c.is_deterministic:
        raise NonDeterministicError(f"conditional {c} is not deterministic")
    return c.body, c.head


def _is_el_normal(lhs: Concept, rhs: Concept) -> bool:
    # A ⊑ B, A1 ⊓ A2 ⊑ B, A ⊑ ∃r.B, ∃r.A ⊑ B；A、B 可为名称、⊤ 或 ⊥
    if is_basic(lhs) and is_basic(rhs):
        return True
    if is_basic(rhs):
        if isinstance(lhs, And):
            return is_basic(lhs.left) and is_basic(lhs.right)
        if isinstance(lhs, Exists):
            return is_basic(lhs.filler)
        return False
    return is_basic(lhs) and isinstance(rhs, Exists) and is_basic(rhs.filler)


def _normalize_gci(lhs: Concept, rhs: Concept, counter: FreshNameCounter) -> Iterator[tuple[Concept, Concept]]:
    """用 NF0–NF4 规则把一条 GCI 展开为 EL 规范形 GCI 序列（深度优先，按遍历顺序取新名）。"""
    if _is_el_normal(lhs, rhs):
        yield lhs, rhs
        return
    if not is_basic(lhs) and not is_basic(rhs):
        # NF0
        a = counter.fresh()
        yield from _normalize_gci(lhs, a, counter)
        yield from _normalize_gci(a, rhs, counter)
    elif isinstance(rhs, And):
        # NF4
        yield from _normalize_gci(lhs, rhs.left, counter)
        yield from _normalize_gci(lhs, rhs.right, counter)
    elif isinstance(lhs, And):
        # NF1，左右两侧分别命名
        left, right = lhs.left, lhs.right
        if not is_basic(left):
            a = counter.fresh()
            yield from _normalize_gci(left, a, counter)
            left = a
        if not is_basic(right):
            a = counter.fresh()
            yield from _normalize_gci(right, a, counter)
            right = a
        yield And(left, right), rhs
    elif isinstance(lhs, Exists):
        # NF2
        a = counter.fresh()
        yield from _normalize_gci(lhs.filler, a, counter)
        yield Exists(lhs.role, a), rhs
    else:
        # NF3：lhs 为基本概念，rhs = ∃r.D，D 复杂
        a = counter.fresh()
        yield lhs, Exists(rhs.role, a)
        yield from _normalize_gci(a, rhs.filler, counter)


def _is_atomic_side(c: Concept) -> bool:
    return isinstance(c, (Atomic, Top))


def normalize(t: TBox) -> TBox:
    """把任意 SEL TBox 变换为 SEL 规范形。

    流程：
    1. 概率条件句若任一侧复杂，把体与头各换成新名 A1、A2，
       输出 (A2|A1)[l,u] 及等价式 C ≡ A1、D ≡ A2（以 GCI 形式）；
    2. 确定性条件句视为 GCI，连同第 1 步的等价式用 NF0–NF4 展开；
    3. 每条 GCI 按 C ⊑ D ↔ (D|C)[1,1] 还原为条件句。
    新名按输入顺序、深度优先遍历依次编号，且从输入中已有 `_N` 编号之后开始。
    """
    counter = FreshNameCounter.after(t)
    out: list[Conditional] = []
    for c in t.conditionals:
        if c.is_deterministic:
            gcis = [(c.body, c.head)]
        elif _is_atomic_side(c.body) and _is_atomic_side(c.head):
            out.append(c)
            continue
        else:
            a1 = counter.fresh()
            a2 = counter.fresh()
            out.append(Conditional(a2, a1, c.lower, c.upper, c.lower_text, c.upper_text))
            gcis = [(c.body, a1), (a1, c.body), (c.head, a2), (a2, c.head)]
        for lhs, rhs in gcis:
            out.extend(gci_to_conditional(l, r) for l, r in _normalize_gci(lhs, rhs, counter))
    result = TBox(tuple(out))
    logger.info("normalized", extra={"input_size": t.size, "output_size": result.size,
                                     "fresh_names": counter.next_index})
    return result


def is_normal_form(t: TBox) -> bool:
    for c in t.conditionals:
        if c.is_deterministic:
            if not _is_el_normal(c.body, c.head):
                return False
        elif not (_is_atomic_side(c.body) and _is_atomic_side(c.head)):
            return False
    return True


def top_equivalent_names(t: TBox) -> set[str]:
    """语法闭包：⊤ ⊑ A（即 (A|⊤)[1,1]）的名称 A 与 ⊤ 等价，沿确定性名称包含链传递。"""
    edges: dict[object, set[object]] = {}
    for c in t.conditionals:
        if c.is_deterministic and _is_atomic_side(c.body) and _is_atomic_side(c.head):
            src = "top" if isinstance(c.body, Top) else ("name", c.body.name)
            dst = "top" if isinstance(c.head, Top) else ("name", c.head.name)
            edges.setdefault(src, set()).add(dst)
    seen = {"top"}
    stack = ["top"]
    while stack:
        node = stack.pop()
        for nxt in edges.get(node, ()):
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return {node[1] for node in seen if node != "top"}


def is_safe(t: TBox) -> bool:
    if not is_normal_form(t):
        raise NotNormalizedError("safety is only defined for TBoxes in SEL normal form")
    top_like = top_equivalent_names(t)

    def _touches_top(c: Concept) -> bool:
        return isinstance(c, Top) or (isinstance(c, Atomic) and c.name in top_like)

    for c in t.conditionals:
        if not c.is_deterministic and (_touches_top(c.body) or _touches_top(c.head)):
            return False
    return True

