import logging
from collections import Counter
from dataclasses import dataclass
from typing import Literal, Optional
import numpy as np
from errors import SelboxError
from models.concepts import And, Atomic, Concept, Conditional, TBox, format_concept
from models.intervals import ProbInterval
from services.parser import ParseError, parse_query_records


logger = logging.getLogger(__name__)

PmpVariant = Literal["standard", "second_slack"]


class MalformedIntervalError(SelboxError, ValueError):
    pass


class NoEligibleQueriesError(SelboxError):
    pass


class MissingPremiseError(SelboxError):
    pass


def pmp(l1: float, u1: float, l2: float, u2: float, variant: PmpVariant = "standard") -> ProbInterval:
    """由 (A|Q1)[l1,u1] 与 (Q2|A⊓Q1)[l2,u2] 推出 (Q2|Q1)[l1·l2, min(1, u1·u2 + 1 − l1)]。

    `variant="second_slack"` 的上界改用 min(1, u1·u2 + 1 − l2)，仅用于对比。
    """
    for lo, up in ((l1, u1), (l2, u2)):
        if not (0.0 <= lo <= up <= 1.0):
            raise MalformedIntervalError(f"malformed interval [{lo}, {up}]")
    slack = 1.0 - (l1 if variant == "standard" else l2)
    return ProbInterval.clipped(l1 * l2, min(1.0, u1 * u2 + slack))


@dataclass(frozen=True)
class PmpPremises:
    """一条 PMP 查询 (Q2|Q1) 及其前提 (A|Q1) 与 (Q2|A⊓Q1)；`query` 是从训练集移除的原条件句。"""
    query: Conditional
    mediator: Atomic
    premise1: Conditional
    premise2: Conditional

    @property
    def head(self) -> Concept:
        return self.query.head

    @property
    def body(self) -> Concept:
        return self.query.body

    def format(self) -> str:
        return (f"query {self.mediator.name} {self.query.lower!r} {self.query.upper!r} "
                f"{format_concept(self.head)} | {format_concept(self.body)}")


def most_general_concept(t: TBox) -> str:
    """作为条件体出现次数最多的概念名，并列时取字典序最小者。"""
    counts = Counter(c.body.name for c in t.conditionals if isinstance(c.body, Atomic))
    if not counts:
        raise NoEligibleQueriesError("no conditional has an atomic body")
    best = max(counts.values())
    return min(name for name, n in counts.items() if n == best)


def _premise_index(t: TBox, body: Atomic) -> tuple[dict[Concept, list[Conditional]], dict[tuple[str, Concept], list[Conditional]]]:
    first: dict[Concept, list[Conditional]] = {}
    second: dict[tuple[str, Concept], list[Conditional]] = {}
    for c in t.conditionals:
        if c.body == body and isinstance(c.head, Atomic):
            first.setdefault(c.head, []).append(c)
        elif isinstance(c.body, And):
            parts = (c.body.left, c.body.right)
            if body in parts and all(isinstance(p, Atomic) for p in parts):
                other = parts[1] if parts[0] == body else parts[0]
                second.setdefault((other.name, c.head), []).append(c)
    return first, second


def find_premises(training: TBox, head: Concept, body: Concept) -> list[tuple[Atomic, Conditional, Conditional]]:
    """语法匹配所有中介概念 A：(A|body) 与 (head|A⊓body)（⊓ 两种顺序均可）都在训练集中。"""
    if not isinstance(body, Atomic):
        return []
    first, second = _premise_index(training, body)
    found = []
    for mediator in sorted(first, key=lambda a: a.name):
        if mediator == head or mediator == body:
            continue
        seconds = second.get((mediator.name, head))
        if seconds:
            found.append((mediator, first[mediator][0], seconds[0]))
    return found


def generate_query_set(t: TBox, fraction: float, seed: int) -> tuple[list[PmpPremises], TBox]:
    """按评测流程抽取 PMP 查询。

    流程：
    1. 取最一般概念 G（作为条件体出现最多的名称）；D′ = 体为 G 的条件句；
    2. 以种子化随机顺序遍历 D′，目标数量 round(fraction·|D′|)（至少 1）；
    3. 候选被接受当且仅当移除它后，它自身以及已接受的查询在剩余训练集中仍各有一组前提；
       不满足的候选被丢弃并由后续候选替补，直到候选耗尽；
    4. 训练集 = t 去掉被接受的查询。
    异常：`NoEligibleQueriesError` 没有任何查询具备前提。
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must be in (0, 1]")
    general = Atomic(most_general_concept(t))
    candidates = [c for c in t.conditionals if c.body == general]
    target = max(1, int(round(fraction * len(candidates))))
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(candidates))

    accepted: list[Conditional] = []
    training = t
    for k in order:
        cand = candidates[int(k)]
        if cand in accepted:
            continue
        trial = training.without([cand])
        if not find_premises(trial, cand.head, cand.body):
            continue
        if any(not find_premises(trial, q.head, q.body) for q in accepted):
            continue
        accepted.append(cand)
        training = trial
        if len(accepted) >= target:
            break
    if not accepted:
        raise NoEligibleQueriesError(f"no conditional with body {general.name} has both premises available")

    queries = []
    for q in accepted:
        mediator, p1, p2 = find_premises(training, q.head, q.body)[0]
        queries.append(PmpPremises(q, mediator, p1, p2))
    logger.info("query_set", extra={"general": general.name, "candidates": len(candidates),
                                    "target": target, "queries": len(queries), "training": len(training)})
    return queries, training


def pmp_bounds_for_query(training: TBox, q: PmpPremises, variant: PmpVariant = "standard") -> ProbInterval:
    if q.premise1 not in training or q.premise2 not in training:
        raise MissingPremiseError(f"premises of {q.query} are not in the training TBox")
    p1, p2 = q.premise1, q.premise2
    return pmp(p1.lower, p1.upper, p2.lower, p2.upper, variant)


def pmp_bounds(training: TBox, head: Concept, body: Concept,
               variant: PmpVariant = "standard") -> tuple[list[tuple[Atomic, ProbInterval]], Optional[ProbInterval]]:
    """对每个中介概念给出 PMP 区间，并返回所有区间的交（均为有效区间，交仍有效）。"""
    per_mediator = [(a, pmp(p1.lower, p1.upper, p2.lower, p2.upper, variant))
                    for a, p1, p2 in find_premises(training, head, body)]
    if not per_mediator:
        return [], None
    lower = max(iv.lower for _, iv in per_mediator)
    upper = min(iv.upper for _, iv in per_mediator)
    return per_mediator, ProbInterval.clipped(lower, upper)


def serialize_queries(queries: list[PmpPremises]) -> str:
    return "".join(q.format() + "\n" for q in queries)


def parse_queries(text: str, training: TBox) -> list[PmpPremises]:
    """读回查询文件，并在训练集中重新定位每条查询的前提。"""
    queries = []
    for lineno, mediator_name, query in parse_query_records(text):
        mediator = Atomic(mediator_name)
        match = [(p1, p2) for a, p1, p2 in find_premises(training, query.head, query.body) if a == mediator]
        if not match:
            raise ParseError(f"premises for mediator {mediator_name} are missing from the training TBox", lineno, 1)
        queries.append(PmpPremises(query, mediator, *match[0]))
    return queries
