import itertools
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Optional
import numpy as np
from errors import SelboxError
from models.concepts import And, Atomic, Bottom, Concept, TBox, Top, has_exists, signature_of
from models.intervals import ProbInterval
from services.simplex import TOL, LinearProgram, feasible, solve


logger = logging.getLogger(__name__)

MAX_NAMES = 12
BRUTE_FORCE_MAX_DOMAIN = 5
BRUTE_FORCE_MAX_NAMES = 3


class RolesPresentError(SelboxError):
    """精确推理只支持不含存在限制的片段。"""
    pass


class TooManyNamesError(SelboxError):
    pass


class InconsistentTBoxError(SelboxError):
    """齐次约束只有零解：任何解释都不满足该 TBox。"""
    pass


class BruteForceLimitError(SelboxError):
    pass


@dataclass(frozen=True)
class TypeSystem:
    """k 个概念名上的 2^k 个类型，类型 τ 的第 i 位表示是否属于第 i 个名称。"""
    names: tuple[str, ...]

    def __post_init__(self):
        if len(self.names) > MAX_NAMES:
            raise TooManyNamesError(f"{len(self.names)} concept names exceed the limit of {MAX_NAMES}")

    @property
    def size(self) -> int:
        return 1 << len(self.names)

    @cached_property
    def _bits(self) -> np.ndarray:
        types = np.arange(self.size)
        return ((types[:, None] >> np.arange(len(self.names))[None, :]) & 1).astype(bool)

    @cached_property
    def _index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.names)}

    def extension(self, c: Concept) -> np.ndarray:
        """概念在类型上的特征向量：原子取对应位，⊓ 取按位与，⊤ 为全部类型，⊥ 为空。"""
        if isinstance(c, Atomic):
            i = self._index.get(c.name)
            if i is None:
                raise KeyError(c.name)
            return self._bits[:, i]
        if isinstance(c, And):
            return self.extension(c.left) & self.extension(c.right)
        if isinstance(c, Top):
            return np.ones(self.size, dtype=bool)
        if isinstance(c, Bottom):
            return np.zeros(self.size, dtype=bool)
        raise RolesPresentError(f"concept {c} uses an existential restriction")

    @classmethod
    def for_concepts(cls, t: TBox, *extra: Concept) -> "TypeSystem":
        _reject_roles(t, *extra)
        names = set(t.signature.concepts) | set(signature_of(*extra).concepts)
        return cls(tuple(sorted(names)))


def _reject_roles(t: TBox, *extra: Concept) -> None:
    for c in t.conditionals:
        if has_exists(c.head) or has_exists(c.body):
            raise RolesPresentError(f"conditional {c} uses an existential restriction")
    for c in extra:
        if has_exists(c):
            raise RolesPresentError(f"query concept {c} uses an existential restriction")


def compile(t: TBox, ts: Optional[TypeSystem] = None) -> tuple[TypeSystem, np.ndarray]:
    """每条 (D|C)[l,u] 产生两行齐次约束：l·mass(C) − mass(C⊓D) ≤ 0 与 mass(C⊓D) − u·mass(C) ≤ 0。"""
    ts = ts or TypeSystem.for_concepts(t)
    rows = []
    for c in t.conditionals:
        body = ts.extension(c.body).astype(float)
        both = (ts.extension(c.body) & ts.extension(c.head)).astype(float)
        rows.append(c.lower * body - both)
        rows.append(both - c.upper * body)
    a_ub = np.array(rows) if rows else np.zeros((0, ts.size))
    return ts, a_ub


def _consistent(ts: TypeSystem, a_ub: np.ndarray) -> bool:
    lp = LinearProgram(np.zeros(ts.size), "min", a_ub, np.zeros(a_ub.shape[0]),
                       np.ones((1, ts.size)), np.ones(1))
    return feasible(lp)


def check_consistency(t: TBox) -> bool:
    ts, a_ub = compile(t)
    return _consistent(ts, a_ub)


def query_bounds(t: TBox, head: Concept, body: Concept, body_mass: float = 1.0) -> ProbInterval:
    """最紧的蕴含区间：在 mass(body) = body_mass 下分别最小化、最大化 mass(body⊓head)。

    齐次约束可行但 body 在所有模型中都为空时返回 Vacuous。
    异常：`RolesPresentError`、`TooManyNamesError`、`InconsistentTBoxError`。
    """
    if body_mass <= 0:
        raise ValueError("body_mass must be positive")
    ts, a_ub = compile(t, TypeSystem.for_concepts(t, head, body))
    if not _consistent(ts, a_ub):
        raise InconsistentTBoxError("the TBox has no model")
    body_ext = ts.extension(body)
    target = (body_ext & ts.extension(head)).astype(float)
    lp = LinearProgram(target, "min", a_ub, np.zeros(a_ub.shape[0]),
                       body_ext.astype(float)[None, :], np.array([body_mass]))
    low = solve(lp)
    if low.status == "infeasible":
        return ProbInterval.make_vacuous()
    high = solve(lp.with_objective(target, "max"))
    logger.debug("oracle_query", extra={"names": len(ts.names), "constraints": a_ub.shape[0]})
    return ProbInterval.clipped(low.objective / body_mass, high.objective / body_mass)


def _count_vectors(types: int, max_domain: int) -> np.ndarray:
    vectors = []
    for n in range(1, max_domain + 1):
        for combo in itertools.combinations_with_replacement(range(types), n):
            vectors.append(np.bincount(combo, minlength=types))
    return np.array(vectors, dtype=float)


def brute_force_bounds(t: TBox, head: Concept, body: Concept, max_domain: int = 4,
                       max_names: int = BRUTE_FORCE_MAX_NAMES) -> ProbInterval:
    """枚举论域不超过 max_domain 的全部有限解释（按类型计数），返回 body 非空时比例的最小、最大值。"""
    if max_domain > BRUTE_FORCE_MAX_DOMAIN or max_names > BRUTE_FORCE_MAX_NAMES:
        raise BruteForceLimitError(f"brute force is limited to domain {BRUTE_FORCE_MAX_DOMAIN} "
                                   f"and {BRUTE_FORCE_MAX_NAMES} names")
    ts = TypeSystem.for_concepts(t, head, body)
    if len(ts.names) > max_names:
        raise BruteForceLimitError(f"{len(ts.names)} concept names exceed max_names={max_names}")
    counts = _count_vectors(ts.size, max_domain)
    ok = np.ones(counts.shape[0], dtype=bool)
    for c in t.conditionals:
        c_mass = counts @ ts.extension(c.body).astype(float)
        both = counts @ (ts.extension(c.body) & ts.extension(c.head)).astype(float)
        ok &= (c_mass == 0) | ((c.lower * c_mass <= both + TOL) & (both <= c.upper * c_mass + TOL))
    if not ok.any():
        raise InconsistentTBoxError(f"no interpretation with at most {max_domain} elements satisfies the TBox")
    body_ext = ts.extension(body)
    q_mass = counts[ok] @ body_ext.astype(float)
    q_both = counts[ok] @ (body_ext & ts.extension(head)).astype(float)
    nonempty = q_mass > 0
    if not nonempty.any():
        return ProbInterval.make_vacuous()
    ratios = q_both[nonempty] / q_mass[nonempty]
    return ProbInterval(float(ratios.min()), float(ratios.max()))
