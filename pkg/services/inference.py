import logging
import time
from dataclasses import dataclass
from typing import Sequence
import numpy as np
from errors import SelboxError
from models.concepts import And, Atomic, Concept, Conditional, Exists, Top
from models.embedding import BoxEmbedding
from models.intervals import ProbInterval
from services.geometry import AffineMap, Box, apply_affine, intersect, invert_affine, volume
from services.losses import UnknownNameError


logger = logging.getLogger(__name__)

BODY_EPS = 1e-8
SATISFACTION_TOL = 1e-9


class TopConceptError(SelboxError):
    """⊤ 没有有限盒子，不能求其几何像。"""
    pass


class DegenerateBodyError(SelboxError):
    """条件体的盒子体积不超过 1e-8，点估计无定义。"""
    pass


class EmptyEnsembleError(SelboxError):
    pass


class GeometricInterpretation:
    """把嵌入视作几何解释：概念 ↦ 盒子，角色 ↦ 正对角仿射变换。"""

    def __init__(self, embedding: BoxEmbedding):
        self.embedding = embedding
        upper = embedding.upper
        self._boxes = {name: Box(embedding.m[i], upper[i]) for i, name in enumerate(embedding.concepts)}
        diag = embedding.diag
        self._inverse_maps = {name: invert_affine(AffineMap(diag[i], embedding.b[i]))
                              for i, name in enumerate(embedding.roles)}

    @property
    def dim(self) -> int:
        return self.embedding.dim

    def box_of(self, c: Concept) -> Box:
        """原子取存储的盒子，⊓ 取交，∃r.C 取 T_r 下 C 的原像；代价与概念大小成线性。"""
        if isinstance(c, Atomic):
            box = self._boxes.get(c.name)
            if box is None:
                raise UnknownNameError(f"concept {c.name} has no box in the embedding")
            return box
        if isinstance(c, And):
            return intersect(self.box_of(c.left), self.box_of(c.right))
        if isinstance(c, Exists):
            inverse = self._inverse_maps.get(c.role)
            if inverse is None:
                raise UnknownNameError(f"role {c.role} has no map in the embedding")
            return apply_affine(inverse, self.box_of(c.filler))
        if isinstance(c, Top):
            raise TopConceptError("top has no finite box")
        raise TopConceptError(f"concept {c} has no box")


def box_of(i: GeometricInterpretation, c: Concept) -> Box:
    return i.box_of(c)


def point_estimate(i: GeometricInterpretation, head: Concept, body: Concept) -> float:
    body_box = i.box_of(body)
    body_volume = volume(body_box)
    if body_volume <= BODY_EPS:
        raise DegenerateBodyError(f"body box volume {body_volume:g} is below {BODY_EPS:g}")
    return min(1.0, volume(intersect(i.box_of(head), body_box)) / body_volume)


@dataclass(frozen=True)
class SatisfactionResult:
    satisfied: bool
    violation: float

    def __bool__(self) -> bool:
        return self.satisfied


def satisfies(i: GeometricInterpretation, c: Conditional) -> SatisfactionResult:
    """按硬体积检查 l·Vol(C) ≤ Vol(D∩C) ≤ u·Vol(C)（容差 1e-9）。

    体为空（体积 0）时视为空真满足；出现 ⊤（体积无穷）时视为违反，违反量为无穷。
    """
    try:
        body_box = i.box_of(c.body)
        head_box = i.box_of(c.head)
    except TopConceptError:
        return SatisfactionResult(False, float("inf"))
    body_volume = volume(body_box)
    if body_volume == 0.0:
        return SatisfactionResult(True, 0.0)
    inter = volume(intersect(head_box, body_box))
    low = c.lower * body_volume - inter
    up = inter - c.upper * body_volume
    violation = max(low, 0.0) + max(up, 0.0)
    return SatisfactionResult(low <= SATISFACTION_TOL and up <= SATISFACTION_TOL, violation)


def point_estimates(es: Sequence[GeometricInterpretation], head: Concept, body: Concept) -> list[float]:
    estimates = []
    for k, i in enumerate(es):
        try:
            estimates.append(point_estimate(i, head, body))
        except DegenerateBodyError:
            logger.warning("degenerate_body_skipped", extra={"member": k, "seed": i.embedding.meta.get("seed")})
    return estimates


def ensemble_interval(es: Sequence[GeometricInterpretation], head: Concept, body: Concept) -> ProbInterval:
    if not es:
        raise EmptyEnsembleError("ensemble_interval needs at least one embedding")
    estimates = point_estimates(es, head, body)
    if not estimates:
        return ProbInterval.make_vacuous()
    return ProbInterval(min(estimates), max(estimates))


def chain_concept(name: str, atoms: int) -> Concept:
    """由同一名称构成的左深合取链，含 `atoms` 个原子，大小为 2·atoms − 1。"""
    c: Concept = Atomic(name)
    for _ in range(atoms - 1):
        c = And(c, Atomic(name))
    return c


def runtime_profile(i: GeometricInterpretation, sizes: Sequence[int], repeats: int = 200) -> dict[int, float]:
    """每种查询大小 c+d 的点估计中位延迟（毫秒）。查询为 (A | A ⊓ … ⊓ A)，体为 size//2 个 A 的合取，总大小约为 size。"""
    names = i.embedding.concepts
    if not names:
        raise UnknownNameError("embedding has no concepts to profile")
    head = Atomic(names[0])
    result = {}
    for size in sizes:
        body = chain_concept(names[0], max(1, size // 2))
        samples = []
        for _ in range(repeats):
            started = time.perf_counter()
            try:
                point_estimate(i, head, body)
            except DegenerateBodyError:
                pass
            samples.append((time.perf_counter() - started) * 1000.0)
        result[size] = float(np.median(samples))
    return result
