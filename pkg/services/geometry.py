import math
from dataclasses import dataclass
from typing import Callable
import numpy as np
from errors import SelboxError


DISJOINT_EPS = 1e-8
LOG_TAIL = -30.0


class DimensionMismatchError(SelboxError, ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Box:
    """轴对齐盒子，lower 为 m，upper 为 M；允许 M < m（表示空集）。"""
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        if lower.ndim != 1 or lower.shape != upper.shape or lower.size == 0:
            raise DimensionMismatchError(f"box corners have shapes {lower.shape} and {upper.shape}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def sides(self) -> np.ndarray:
        return self.upper - self.lower

    def __eq__(self, other) -> bool:
        return isinstance(other, Box) and np.array_equal(self.lower, other.lower) and np.array_equal(self.upper, other.upper)

    def __repr__(self) -> str:
        return f"Box({self.lower.tolist()}, {self.upper.tolist()})"


@dataclass(frozen=True, eq=False)
class AffineMap:
    """对角仿射变换 T(x) = diag·x + offset，diag 严格为正。"""
    diag: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        diag = np.asarray(self.diag, dtype=float)
        offset = np.asarray(self.offset, dtype=float)
        if diag.shape != offset.shape:
            raise DimensionMismatchError(f"affine map parts have shapes {diag.shape} and {offset.shape}")
        if np.any(diag <= 0):
            raise ValueError("affine map diagonal must be strictly positive")
        object.__setattr__(self, "diag", diag)
        object.__setattr__(self, "offset", offset)

    @classmethod
    def identity(cls, n: int) -> "AffineMap":
        return cls(np.ones(n), np.zeros(n))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.diag * x + self.offset


def relu_side(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def softplus(x: np.ndarray, t: float) -> np.ndarray:
    """softplus_t(x) = t·log(1 + e^{x/t})，logaddexp 保证 |x|/t 很大时数值稳定。"""
    return t * np.logaddexp(0.0, np.asarray(x, dtype=float) / t)


def softplus_grad(x: np.ndarray, t: float) -> np.ndarray:
    # d/dx softplus_t(x) = sigmoid(x/t)
    return np.exp(-np.logaddexp(0.0, -np.asarray(x, dtype=float) / t))


def log_softplus(x: np.ndarray, t: float) -> np.ndarray:
    """log softplus_t(x)。x/t < −30 时 softplus 已与 t·e^{x/t} 相同，直接取 log t + x/t 以免下溢。"""
    z = np.asarray(x, dtype=float) / t
    sp = np.logaddexp(0.0, np.maximum(z, LOG_TAIL))
    return math.log(t) + np.where(z < LOG_TAIL, z, np.log(sp))


def log_softplus_grad(x: np.ndarray, t: float) -> np.ndarray:
    # d/dx log softplus_t(x) = sigmoid(x/t) / softplus_t(x)，尾部极限为 1/t
    z = np.asarray(x, dtype=float) / t
    zc = np.maximum(z, LOG_TAIL)
    sig = np.exp(-np.logaddexp(0.0, -zc))
    return np.where(z < LOG_TAIL, 1.0 / t, sig / (t * np.logaddexp(0.0, zc)))


def log_softplus_volume(b: Box, t: float) -> float:
    if t <= 0:
        raise ValueError("temperature must be positive")
    return float(np.sum(log_softplus(b.sides, t)))


def volume(b: Box) -> float:
    return float(np.prod(relu_side(b.sides)))


def softplus_volume(b: Box, t: float) -> float:
    if t <= 0:
        raise ValueError("temperature must be positive")
    return float(np.prod(softplus(b.sides, t)))


def _check_dims(a: Box, b: Box) -> None:
    if a.dim != b.dim:
        raise DimensionMismatchError(f"boxes have dimensions {a.dim} and {b.dim}")


def intersect(a: Box, b: Box) -> Box:
    _check_dims(a, b)
    return Box(np.maximum(a.lower, b.lower), np.minimum(a.upper, b.upper))


def disjoint_measure(a: Box, b: Box, vol: Callable[[Box], float] = volume) -> float:
    """Disjoint(a, b) = 1 − Vol(a∩b)/Vol(a)，分母下限 ε = 1e-8。"""
    inter = vol(intersect(a, b))
    denom = max(vol(a), DISJOINT_EPS)
    return min(1.0, max(0.0, 1.0 - inter / denom))


def apply_affine(f: AffineMap, b: Box) -> Box:
    if f.diag.size != b.dim:
        raise DimensionMismatchError(f"map of dimension {f.diag.size} applied to box of dimension {b.dim}")
    return Box(f(b.lower), f(b.upper))


def invert_affine(f: AffineMap) -> AffineMap:
    # x ↦ diag⁻¹(x − b) = diag⁻¹·x − diag⁻¹·b
    inv = 1.0 / f.diag
    return AffineMap(inv, -f.offset * inv)
