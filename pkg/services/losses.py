import logging
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Literal, Optional
import numpy as np
from pydantic import BaseModel, Field
from errors import SelboxError
from models.concepts import And, Atomic, Bottom, Concept, Conditional, Exists, TBox, Top
from models.embedding import BoxEmbedding, EmbeddingGradient
from services.geometry import DISJOINT_EPS, log_softplus, log_softplus_grad, softplus, softplus_grad


logger = logging.getLogger(__name__)

RATIO_FLOOR = 1e-4


class UnsupportedAxiomError(SelboxError):
    """公理不属于可嵌入的规范形（例如 ⊤ 出现在被包含一侧，或概率条件句含复杂概念）。"""
    pass


class UnknownNameError(SelboxError):
    """概念名或角色名不在嵌入的签名中。"""
    pass


class LossConfig(BaseModel):
    """normalized 取比例形式的损失；log_scale 在此基础上改用对数体积（零点集合不变，盒子远离时梯度不消失）。"""
    beta: float = Field(default=10.0, gt=0)
    eps: float = Field(default=1e-8, ge=0)
    temperature: float = Field(default=1.0, gt=0)
    use_loc: bool = True
    use_vol: bool = True
    relation_mode: Literal["affine", "translation"] = "affine"
    hard_volume: bool = False
    normalized: bool = False
    log_scale: bool = False

    def hard(self) -> "LossConfig":
        return self.model_copy(update={"hard_volume": True, "log_scale": False})

    @property
    def uses_log(self) -> bool:
        return self.normalized and self.log_scale and not self.hard_volume

    def without_regularizers(self) -> "LossConfig":
        return self.model_copy(update={"use_loc": False, "use_vol": False})


class AxiomKind(IntEnum):
    TRIVIAL = 0
    PROB = 1
    SUB = 2            # C ⊑ D
    SUB_BOT = 3        # C ⊑ ⊥
    CONJ = 4           # C1 ⊓ C2 ⊑ D
    CONJ_BOT = 5       # C1 ⊓ C2 ⊑ ⊥
    RIGHT_EXISTS = 6   # C ⊑ ∃r.D
    LEFT_EXISTS = 7    # ∃r.C ⊑ D


@dataclass
class CompiledTBox:
    """按列存放的公理表：kind、概念下标 a/b/c、角色下标 r、概率上下界。

    未用到的下标为 -1；`skipped` 记录因无法嵌入而跳过的原公理位置。
    """
    kind: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    r: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    source: list[int] = field(default_factory=list)
    skipped: list[int] = field(default_factory=list)

    def __len__(self) -> int:
        return int(self.kind.size)


def _simplify(c: Concept) -> Concept:
    # ⊤ 是 ⊓ 的单位元，⊥ 是零元；∃r.⊥ = ⊥
    if isinstance(c, And):
        left, right = _simplify(c.left), _simplify(c.right)
        if isinstance(left, Bottom) or isinstance(right, Bottom):
            return Bottom()
        if isinstance(left, Top):
            return right
        if isinstance(right, Top):
            return left
        return And(left, right)
    if isinstance(c, Exists):
        filler = _simplify(c.filler)
        return Bottom() if isinstance(filler, Bottom) else Exists(c.role, filler)
    return c


def _concept(e: BoxEmbedding, c: Concept) -> int:
    idx = e.concept_index.get(c.name) if isinstance(c, Atomic) else None
    if idx is None:
        raise UnknownNameError(f"concept {c} has no box in the embedding")
    return idx


def _role(e: BoxEmbedding, role: str) -> int:
    idx = e.role_index.get(role)
    if idx is None:
        raise UnknownNameError(f"role {role} has no map in the embedding")
    return idx


def classify_axiom(axiom: Conditional, e: BoxEmbedding) -> tuple[AxiomKind, int, int, int, int]:
    """返回 (kind, a, b, c, r)。异常：`UnsupportedAxiomError`、`UnknownNameError`。"""
    if not axiom.is_deterministic:
        if isinstance(axiom.body, Bottom):
            return AxiomKind.TRIVIAL, -1, -1, -1, -1
        if isinstance(axiom.body, Atomic) and isinstance(axiom.head, Atomic):
            return AxiomKind.PROB, _concept(e, axiom.body), _concept(e, axiom.head), -1, -1
        raise UnsupportedAxiomError(f"probabilistic conditional {axiom} needs atomic body and head")

    lhs, rhs = _simplify(axiom.body), _simplify(axiom.head)
    if isinstance(rhs, Top) or isinstance(lhs, Bottom):
        return AxiomKind.TRIVIAL, -1, -1, -1, -1
    if isinstance(rhs, Exists) and isinstance(rhs.filler, Top):
        return AxiomKind.TRIVIAL, -1, -1, -1, -1
    if isinstance(rhs, Exists) and isinstance(rhs.filler, Bottom):
        rhs = Bottom()

    if isinstance(lhs, Atomic):
        a = _concept(e, lhs)
        if isinstance(rhs, Atomic):
            return AxiomKind.SUB, a, _concept(e, rhs), -1, -1
        if isinstance(rhs, Bottom):
            return AxiomKind.SUB_BOT, a, -1, -1, -1
        if isinstance(rhs, Exists) and isinstance(rhs.filler, Atomic):
            return AxiomKind.RIGHT_EXISTS, a, _concept(e, rhs.filler), -1, _role(e, rhs.role)
    elif isinstance(lhs, And) and isinstance(lhs.left, Atomic) and isinstance(lhs.right, Atomic):
        a, c = _concept(e, lhs.left), _concept(e, lhs.right)
        if isinstance(rhs, Atomic):
            return AxiomKind.CONJ, a, _concept(e, rhs), c, -1
        if isinstance(rhs, Bottom):
            return AxiomKind.CONJ_BOT, a, -1, c, -1
    elif isinstance(lhs, Exists) and isinstance(lhs.filler, Atomic) and isinstance(rhs, Atomic):
        return AxiomKind.LEFT_EXISTS, _concept(e, lhs.filler), _concept(e, rhs), -1, _role(e, lhs.role)
    raise UnsupportedAxiomError(f"axiom {axiom} is not an embeddable normal-form shape")


def compile_tbox(t: TBox, e: BoxEmbedding, strict: bool = True) -> CompiledTBox:
    """把规范形 TBox 编译为列式公理表。

    `strict=False` 时跳过无法嵌入的公理（⊤ 在被包含一侧等）并记录在 `skipped`，
    名称缺失仍然抛出 `UnknownNameError`。
    """
    rows: list[tuple[int, int, int, int, int, float, float]] = []
    source: list[int] = []
    skipped: list[int] = []
    for pos, axiom in enumerate(t.conditionals):
        try:
            kind, a, b, c, r = classify_axiom(axiom, e)
        except UnsupportedAxiomError:
            if strict:
                raise
            skipped.append(pos)
            continue
        rows.append((int(kind), a, b, c, r, axiom.lower, axiom.upper))
        source.append(pos)
    if skipped:
        logger.warning("axioms_skipped", extra={"count": len(skipped), "positions": skipped[:10]})
    cols = list(zip(*rows)) if rows else [()] * 7
    ints = [np.asarray(col, dtype=np.int64) for col in cols[:5]]
    return CompiledTBox(*ints, np.asarray(cols[5], dtype=float), np.asarray(cols[6], dtype=float),
                        source=source, skipped=skipped)


# ---- 反向传播用的盒子节点 ----

class _Boxes:
    lo: np.ndarray
    hi: np.ndarray

    def backward(self, dlo: np.ndarray, dhi: np.ndarray, grad: EmbeddingGradient) -> None:
        raise NotImplementedError


class _ConceptBoxes(_Boxes):
    def __init__(self, e: BoxEmbedding, idx: np.ndarray):
        self.idx = idx
        self.lo = e.m[idx]
        self.side = np.exp(e.delta[idx])
        self.hi = self.lo + self.side

    def backward(self, dlo, dhi, grad):
        np.add.at(grad.m, self.idx, dlo + dhi)
        np.add.at(grad.delta, self.idx, dhi * self.side)


class _ImageBoxes(_Boxes):
    """角色变换下的像 T_r(src) 或原像 T_r^{-1}(src)。"""

    def __init__(self, e: BoxEmbedding, src: _Boxes, roles: np.ndarray, inverse: bool, affine: bool):
        self.src = src
        self.roles = roles
        self.inverse = inverse
        self.affine = affine
        self.d = np.exp(e.log_diag[roles]) if affine else np.ones_like(e.b[roles])
        offset = e.b[roles]
        if inverse:
            self.lo = (src.lo - offset) / self.d
            self.hi = (src.hi - offset) / self.d
        else:
            self.lo = self.d * src.lo + offset
            self.hi = self.d * src.hi + offset

    def backward(self, dlo, dhi, grad):
        if self.inverse:
            self.src.backward(dlo / self.d, dhi / self.d, grad)
            np.add.at(grad.b, self.roles, -(dlo + dhi) / self.d)
            if self.affine:
                np.add.at(grad.log_diag, self.roles, -(dlo * self.lo + dhi * self.hi))
        else:
            self.src.backward(dlo * self.d, dhi * self.d, grad)
            np.add.at(grad.b, self.roles, dlo + dhi)
            if self.affine:
                np.add.at(grad.log_diag, self.roles, self.d * (dlo * self.src.lo + dhi * self.src.hi))


class _Intersection(_Boxes):
    def __init__(self, x: _Boxes, y: _Boxes):
        self.x, self.y = x, y
        self.lo_x = x.lo >= y.lo
        self.hi_x = x.hi <= y.hi
        self.lo = np.where(self.lo_x, x.lo, y.lo)
        self.hi = np.where(self.hi_x, x.hi, y.hi)

    def backward(self, dlo, dhi, grad):
        self.x.backward(np.where(self.lo_x, dlo, 0.0), np.where(self.hi_x, dhi, 0.0), grad)
        self.y.backward(np.where(self.lo_x, 0.0, dlo), np.where(self.hi_x, 0.0, dhi), grad)


def _prod_except(s: np.ndarray) -> np.ndarray:
    # 每一维除自身外其余维的乘积，不做除法，边长为 0 时仍然精确
    left = np.ones_like(s)
    right = np.ones_like(s)
    left[:, 1:] = np.cumprod(s[:, :-1], axis=1)
    right[:, :-1] = np.cumprod(s[:, :0:-1], axis=1)[:, ::-1]
    return left * right


def _sides(box: _Boxes, cfg: LossConfig) -> tuple[np.ndarray, np.ndarray]:
    x = box.hi - box.lo
    if cfg.hard_volume:
        return np.maximum(x, 0.0), (x > 0).astype(float)
    return softplus(x, cfg.temperature), softplus_grad(x, cfg.temperature)


def _volume(box: _Boxes, cfg: LossConfig) -> tuple[np.ndarray, np.ndarray]:
    s, ds = _sides(box, cfg)
    return np.prod(s, axis=1), _prod_except(s) * ds


def _log_volume(box: _Boxes, cfg: LossConfig) -> tuple[np.ndarray, np.ndarray]:
    x = box.hi - box.lo
    return log_softplus(x, cfg.temperature).sum(axis=1), log_softplus_grad(x, cfg.temperature)


def _push_volume(box: _Boxes, dv_dside: np.ndarray, upstream: np.ndarray, grad: Optional[EmbeddingGradient]) -> None:
    if grad is None:
        return
    g = upstream[:, None] * dv_dside
    box.backward(-g, g, grad)


def _disjoint(x: _Boxes, y: _Boxes, w: np.ndarray, cfg: LossConfig, grad) -> np.ndarray:
    inter = _Intersection(x, y)
    if cfg.uses_log:
        # log Vol(x) − log Vol(x∩y) ≥ 0，x ⊆ y 时为 0
        li, dli = _log_volume(inter, cfg)
        lx, dlx = _log_volume(x, cfg)
        gap = lx - li
        active = (gap > 0).astype(float)
        _push_volume(x, dlx, w * active, grad)
        _push_volume(inter, dli, -w * active, grad)
        return np.maximum(gap, 0.0)
    vi, dvi = _volume(inter, cfg)
    vx, dvx = _volume(x, cfg)
    den = np.maximum(vx, DISJOINT_EPS)
    _push_volume(inter, dvi, -w / den, grad)
    _push_volume(x, dvx, w * np.where(vx > DISJOINT_EPS, vi / den ** 2, 0.0), grad)
    return 1.0 - vi / den


def _probabilistic(body: _Boxes, head: _Boxes, lower, upper, w, cfg: LossConfig, grad) -> np.ndarray:
    inter = _Intersection(body, head)
    if cfg.uses_log:
        # 对数比例 ρ = log Vol(C⊓D) − log Vol(C) 上的铰链；l = 0 时下界项不起作用
        li, dli = _log_volume(inter, cfg)
        lb, dlb = _log_volume(body, cfg)
        rho = li - lb
        low = np.where(lower > 0, np.log(np.maximum(lower, RATIO_FLOOR)) - rho, 0.0)
        up = rho - np.log(np.maximum(upper, RATIO_FLOOR))
        d_rho = (up > 0).astype(float) - (low > 0).astype(float)
        _push_volume(inter, dli, w * d_rho, grad)
        _push_volume(body, dlb, -w * d_rho, grad)
        return np.maximum(low, 0.0) + np.maximum(up, 0.0)
    vi, dvi = _volume(inter, cfg)
    vb, dvb = _volume(body, cfg)
    if cfg.normalized:
        den = np.maximum(vb, DISJOINT_EPS)
        ratio = vi / den
        low, up = lower - ratio, ratio - upper
        d_ratio = (up > 0).astype(float) - (low > 0).astype(float)
        d_vi = d_ratio / den
        d_vb = np.where(vb > DISJOINT_EPS, -d_ratio * vi / den ** 2, 0.0)
    else:
        low, up = lower * vb - vi, vi - upper * vb
        d_vi = (up > 0).astype(float) - (low > 0).astype(float)
        d_vb = lower * (low > 0) - upper * (up > 0)
    _push_volume(inter, dvi, w * d_vi, grad)
    _push_volume(body, dvb, w * d_vb, grad)
    return np.maximum(low, 0.0) + np.maximum(up, 0.0)


def _axiom_block(kind: AxiomKind, ct: CompiledTBox, sel: np.ndarray, w: np.ndarray, e: BoxEmbedding,
                 cfg: LossConfig, grad: Optional[EmbeddingGradient]) -> np.ndarray:
    affine = cfg.relation_mode == "affine"
    a = _ConceptBoxes(e, ct.a[sel])
    if kind == AxiomKind.PROB:
        return _probabilistic(a, _ConceptBoxes(e, ct.b[sel]), ct.lower[sel], ct.upper[sel], w, cfg, grad)
    if kind == AxiomKind.SUB:
        return _disjoint(a, _ConceptBoxes(e, ct.b[sel]), w, cfg, grad)
    if kind == AxiomKind.SUB_BOT:
        # 只作用于第 0 维：[M_0 − m_0 + ε]⁺
        arg = a.hi[:, 0] - a.lo[:, 0] + cfg.eps
        if grad is not None:
            dhi = np.zeros_like(a.hi)
            dhi[:, 0] = w * (arg > 0)
            a.backward(-dhi, dhi, grad)
        return np.maximum(arg, 0.0)
    if kind == AxiomKind.CONJ:
        return _disjoint(_Intersection(a, _ConceptBoxes(e, ct.c[sel])), _ConceptBoxes(e, ct.b[sel]), w, cfg, grad)
    if kind == AxiomKind.CONJ_BOT:
        c = _ConceptBoxes(e, ct.c[sel])
        inter = _Intersection(a, c)
        vi, dvi = _volume(inter, cfg)
        va, dva = _volume(a, cfg)
        vc, dvc = _volume(c, cfg)
        den = np.maximum(va + vc, DISJOINT_EPS)
        _push_volume(inter, dvi, w / den, grad)
        scale = np.where(va + vc > DISJOINT_EPS, -vi / den ** 2, 0.0)
        _push_volume(a, dva, w * scale, grad)
        _push_volume(c, dvc, w * scale, grad)
        return vi / den
    if kind == AxiomKind.RIGHT_EXISTS:
        image = _ImageBoxes(e, a, ct.r[sel], inverse=False, affine=affine)
        return _disjoint(image, _ConceptBoxes(e, ct.b[sel]), w, cfg, grad)
    if kind == AxiomKind.LEFT_EXISTS:
        preimage = _ImageBoxes(e, a, ct.r[sel], inverse=True, affine=affine)
        return _disjoint(preimage, _ConceptBoxes(e, ct.b[sel]), w, cfg, grad)
    return np.zeros(sel.size)


def axiom_losses(ct: CompiledTBox, e: BoxEmbedding, cfg: LossConfig, positions: Optional[np.ndarray] = None,
                 weight: float = 1.0, grad: Optional[EmbeddingGradient] = None) -> np.ndarray:
    """计算选定公理（默认全部）的损失向量；给出 `grad` 时按 `weight` 累加梯度。"""
    positions = np.arange(len(ct)) if positions is None else np.asarray(positions, dtype=np.int64)
    out = np.zeros(positions.size)
    kinds = ct.kind[positions]
    for kind in AxiomKind:
        mask = kinds == kind
        if kind == AxiomKind.TRIVIAL or not mask.any():
            continue
        sel = positions[mask]
        w = np.full(sel.size, weight)
        out[mask] = _axiom_block(kind, ct, sel, w, e, cfg, grad)
    return out


def regularizer_terms(e: BoxEmbedding, cfg: LossConfig, weight: float = 1.0,
                      grad: Optional[EmbeddingGradient] = None) -> float:
    """位置与体积正则项。normalized 时两项都按概念取均值，与概念个数无关。"""
    if not e.concepts or not (cfg.use_loc or cfg.use_vol):
        return 0.0
    boxes = _ConceptBoxes(e, np.arange(len(e.concepts)))
    scale = 1.0 / len(e.concepts) if cfg.normalized else 1.0
    w = weight * scale
    total = 0.0
    if cfg.use_loc:
        over = boxes.hi - cfg.beta + cfg.eps
        under = -boxes.lo - cfg.eps
        total += scale * float(np.maximum(over, 0.0).sum() + np.maximum(under, 0.0).sum())
        if grad is not None:
            boxes.backward(-w * (under > 0), w * (over > 0), grad)
    if cfg.use_vol:
        n = e.dim
        if cfg.normalized:
            x = boxes.hi - boxes.lo
            if cfg.hard_volume:
                log_s, dlog_s = np.log(x), 1.0 / x
            else:
                log_s, dlog_s = log_softplus(x, cfg.temperature), log_softplus_grad(x, cfg.temperature)
            arg = np.log(cfg.beta) - log_s.mean(axis=1) - cfg.eps
            total += scale * float(np.maximum(arg, 0.0).sum())
            _push_volume(boxes, dlog_s / n, -w * (arg > 0).astype(float), grad)
        else:
            v, dv = _volume(boxes, cfg)
            arg = cfg.beta ** n - v - cfg.eps
            total += float(np.maximum(arg, 0.0).sum())
            _push_volume(boxes, dv, -w * (arg > 0).astype(float), grad)
    return total


def axiom_loss(axiom: Conditional, e: BoxEmbedding, cfg: LossConfig) -> float:
    ct = compile_tbox(TBox((axiom,)), e)
    return float(axiom_losses(ct, e, cfg).sum())


def regularizer_loss(e: BoxEmbedding, cfg: LossConfig) -> float:
    return regularizer_terms(e, cfg)


def total_loss(t: TBox, e: BoxEmbedding, cfg: LossConfig) -> float:
    ct = compile_tbox(t, e)
    return float(axiom_losses(ct, e, cfg).sum()) + regularizer_terms(e, cfg)


def loss_gradient(t: TBox, e: BoxEmbedding, cfg: LossConfig) -> EmbeddingGradient:
    """total_loss 对 m、δ、角色 log 对角与 b 的解析梯度；铰链拐点处取次梯度 0。"""
    ct = compile_tbox(t, e)
    grad = EmbeddingGradient.zeros_like(e)
    axiom_losses(ct, e, cfg, grad=grad)
    regularizer_terms(e, cfg, grad=grad)
    return grad
