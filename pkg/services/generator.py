import logging
from collections import Counter
from typing import Iterator, Optional
import numpy as np
from pydantic import BaseModel, Field, model_validator
from errors import SelboxError
from models.concepts import And, Atomic, Conditional, Exists, TBox, has_exists
from models.ground_truth import GroundTruth
from services.metrics import PNF_TYPES, pnf_type


logger = logging.getLogger(__name__)


class DegenerateSamplingError(SelboxError):
    """重采样次数用尽仍得到空概念。"""
    pass


class GeneratorConfig(BaseModel):
    concepts: int = Field(default=20, ge=2)
    roles: int = Field(default=2, ge=0)
    domain: int = Field(default=1000, ge=10)
    seed: int = 0
    inclusion_low: float = Field(default=0.2, gt=0, le=1)
    inclusion_high: float = Field(default=0.8, gt=0, le=1)
    # 每个元素在每个角色下的期望后继数
    degree_low: float = Field(default=1.0, ge=0)
    degree_high: float = Field(default=5.0, ge=0)
    slack: float = Field(default=0.0, ge=0, le=0.5)
    max_retries: int = Field(default=100, ge=1)

    @model_validator(mode="after")
    def _check_ranges(self):
        if self.inclusion_low > self.inclusion_high:
            raise ValueError("inclusion_low must be <= inclusion_high")
        if self.degree_low > self.degree_high:
            raise ValueError("degree_low must be <= degree_high")
        return self


def concept_names(k: int) -> list[str]:
    return [f"C{i}" for i in range(k)]


def role_names(r: int) -> list[str]:
    return [f"r{i}" for i in range(r)]


def sample_ground_truth(cfg: GeneratorConfig) -> GroundTruth:
    """层次化采样：每个概念是随机父节点（论域或更早的概念）的随机子集，包含概率 ~ U[0.2, 0.8]。"""
    rng = np.random.default_rng(cfg.seed)
    m = cfg.domain
    names = concept_names(cfg.concepts)
    concepts: dict[str, np.ndarray] = {}
    parents: dict[str, Optional[str]] = {}
    for i, name in enumerate(names):
        pick = int(rng.integers(0, i + 1))
        parent = None if pick == 0 else names[pick - 1]
        base = np.ones(m, dtype=bool) if parent is None else concepts[parent]
        for _ in range(cfg.max_retries):
            q = rng.uniform(cfg.inclusion_low, cfg.inclusion_high)
            ext = base & (rng.random(m) < q)
            if ext.any():
                break
        else:
            raise DegenerateSamplingError(f"concept {name} stayed empty after {cfg.max_retries} draws")
        concepts[name] = ext
        parents[name] = parent
    roles = {}
    for name in role_names(cfg.roles):
        density = rng.uniform(cfg.degree_low, cfg.degree_high) / m
        roles[name] = rng.random((m, m)) < density
    return GroundTruth(m, concepts, roles, parents)


def _candidates(gt: GroundTruth) -> Iterator[Conditional]:
    names = [Atomic(n) for n in gt.concepts]
    for a in names:
        for b in names:
            if a != b:
                yield Conditional(b, a, 0.0, 1.0)
    for i, a1 in enumerate(names):
        for a2 in names[i + 1:]:
            for b in names:
                if b not in (a1, a2):
                    yield Conditional(b, And(a1, a2), 0.0, 1.0)
    for r in gt.roles:
        for a in names:
            for b in names:
                yield Conditional(b, Exists(r, a), 0.0, 1.0)
    for r in gt.roles:
        for a in names:
            for b in names:
                yield Conditional(Exists(r, b), a, 0.0, 1.0)


def _redundant(gt: GroundTruth, c: Conditional, p: float) -> bool:
    # 父概念已不相交时，子概念之间的 (B|A)[0,0] 可由父概念推出
    if p != 0.0 or pnf_type(c) != "pnf1":
        return False
    a, b = c.body.name, c.head.name
    for a_up in gt.ancestors(a):
        for b_up in gt.ancestors(b):
            if (a_up, b_up) == (a, b) or a_up == b_up:
                continue
            if not (gt.concepts[a_up] & gt.concepts[b_up]).any():
                return True
    return False


def tbox_from_ground_truth(gt: GroundTruth, slack: float = 0.0) -> TBox:
    """枚举 PNF1–PNF4 全部形状，按计数比例赋概率；丢弃体为空与冗余的条件句。"""
    kept = []
    undefined = redundant = 0
    for cand in _candidates(gt):
        p = gt.proportion(cand.head, cand.body)
        if p is None:
            undefined += 1
            continue
        if _redundant(gt, cand, p):
            redundant += 1
            continue
        lower, upper = (p, p) if slack == 0 else (max(0.0, p - slack), min(1.0, p + slack))
        kept.append(Conditional(cand.head, cand.body, lower, upper))
    logger.info("tbox_generated", extra={"conditionals": len(kept), "undefined": undefined, "redundant": redundant})
    return TBox(tuple(kept))


def generate(concepts: int = 20, roles: int = 2, domain: int = 1000, seed: int = 0,
             slack: float = 0.0) -> tuple[GroundTruth, TBox]:
    """采样真值解释并由它生成可满足的 TBox；真值解释即见证模型。同一种子结果相同。"""
    cfg = GeneratorConfig(concepts=concepts, roles=roles, domain=domain, seed=seed, slack=slack)
    gt = sample_ground_truth(cfg)
    return gt, tbox_from_ground_truth(gt, cfg.slack)


def role_free_projection(t: TBox) -> TBox:
    return TBox(tuple(c for c in t.conditionals if not has_exists(c.head) and not has_exists(c.body)))


def shape_ratios(t: TBox) -> dict[str, float]:
    counts = Counter(pnf_type(c) for c in t.conditionals)
    total = len(t)
    return {shape: (counts[shape] / total if total else 0.0) for shape in PNF_TYPES}


def check_witness(gt: GroundTruth, t: TBox, tol: float = 1e-9) -> list[Conditional]:
    """返回真值解释按计数语义不满足的条件句（空列表表示 gt 是 t 的模型）。"""
    return [c for c in t.conditionals if not gt.satisfies(c, tol)]
