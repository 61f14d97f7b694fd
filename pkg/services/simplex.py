import logging
from dataclasses import dataclass
from typing import Literal, Optional
import numpy as np
from errors import SelboxError


logger = logging.getLogger(__name__)

TOL = 1e-9
MAX_ITER = 100_000


class SimplexError(SelboxError):
    """单纯形迭代超过上限或输入矩阵非法。"""
    pass


@dataclass
class LinearProgram:
    """min/max objective·x，约束 a_ub·x ≤ b_ub、a_eq·x = b_eq、x ≥ 0。"""
    objective: np.ndarray
    sense: Literal["min", "max"] = "min"
    a_ub: Optional[np.ndarray] = None
    b_ub: Optional[np.ndarray] = None
    a_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float).ravel()
        n = self.objective.size
        self.a_ub, self.b_ub = _block(self.a_ub, self.b_ub, n, "ub")
        self.a_eq, self.b_eq = _block(self.a_eq, self.b_eq, n, "eq")
        if self.sense not in ("min", "max"):
            raise SimplexError(f"unknown sense {self.sense!r}")
        for arr in (self.objective, self.a_ub, self.b_ub, self.a_eq, self.b_eq):
            if not np.all(np.isfinite(arr)):
                raise SimplexError("linear program coefficients must be finite")

    @property
    def num_vars(self) -> int:
        return self.objective.size

    def with_objective(self, objective: np.ndarray, sense: Literal["min", "max"]) -> "LinearProgram":
        return LinearProgram(objective, sense, self.a_ub, self.b_ub, self.a_eq, self.b_eq)


def _block(a, b, n: int, name: str) -> tuple[np.ndarray, np.ndarray]:
    if a is None:
        return np.zeros((0, n)), np.zeros(0)
    a = np.asarray(a, dtype=float).reshape(-1, n)
    b = np.asarray(b, dtype=float).ravel()
    if b.size != a.shape[0]:
        raise SimplexError(f"{name} constraints: {a.shape[0]} rows but {b.size} right-hand sides")
    return a, b


@dataclass(frozen=True)
class LPSolution:
    status: Literal["optimal", "infeasible", "unbounded"]
    x: Optional[np.ndarray] = None
    objective: Optional[float] = None

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def _pivot(t: np.ndarray, row: int, col: int) -> None:
    t[row] /= t[row, col]
    factors = t[:, col].copy()
    factors[row] = 0.0
    t -= np.outer(factors, t[row])


def _iterate(t: np.ndarray, basis: list[int], cols: int, tol: float, max_iter: int) -> bool:
    """以 Bland 规则最小化末行（既约成本）；返回 False 表示无界。"""
    for _ in range(max_iter):
        reduced = t[-1, :cols]
        entering = np.flatnonzero(reduced < -tol)
        if entering.size == 0:
            return True
        j = int(entering[0])
        column = t[:-1, j]
        rows = np.flatnonzero(column > tol)
        if rows.size == 0:
            return False
        ratios = t[rows, -1] / column[rows]
        best = ratios.min()
        ties = rows[ratios <= best + tol]
        i = int(min(ties, key=lambda r: basis[r]))
        _pivot(t, i, j)
        basis[i] = j
    raise SimplexError(f"simplex did not converge within {max_iter} pivots")


def solve(lp: LinearProgram, tol: float = TOL, max_iter: int = MAX_ITER) -> LPSolution:
    """稠密两阶段原始单纯形（Bland 规则防循环）。

    流程：
    1. 右端为负的行取反，≤ 行加松弛（取反后为剩余）变量，需要时加人工变量；
    2. 第一阶段最小化人工变量之和，最优值 > tol 即不可行；
    3. 把仍在基中的人工变量换出，换不出的行是冗余行，直接删去；
    4. 第二阶段在原目标上迭代。
    """
    n = lp.num_vars
    m_ub, m_eq = lp.a_ub.shape[0], lp.a_eq.shape[0]
    m = m_ub + m_eq
    a = np.vstack([lp.a_ub, lp.a_eq])
    b = np.concatenate([lp.b_ub, lp.b_eq])
    slack = np.zeros((m, m_ub))
    slack[np.arange(m_ub), np.arange(m_ub)] = 1.0
    flip = b < 0
    a[flip] *= -1
    slack[flip] *= -1
    b = np.abs(b)
    # 松弛系数为 +1 的 ≤ 行可直接以松弛变量入基
    needs_art = np.array([i >= m_ub or flip[i] for i in range(m)], dtype=bool)
    art_rows = np.flatnonzero(needs_art)
    n_art = art_rows.size
    cols = n + m_ub + n_art

    t = np.zeros((m + 1, cols + 1))
    t[:m, :n] = a
    t[:m, n:n + m_ub] = slack
    t[:m, -1] = b
    basis = [0] * m
    for i in range(m):
        if not needs_art[i]:
            basis[i] = n + i
    for k, i in enumerate(art_rows):
        t[i, n + m_ub + k] = 1.0
        basis[i] = n + m_ub + k
    t[-1, n + m_ub:cols] = 1.0
    for i in art_rows:
        t[-1] -= t[i]

    _iterate(t, basis, cols, tol, max_iter)
    if -t[-1, -1] > tol:
        return LPSolution("infeasible")

    art_start = n + m_ub
    keep = []
    for i in range(m):
        if basis[i] >= art_start:
            candidates = np.flatnonzero(np.abs(t[i, :art_start]) > tol)
            if candidates.size == 0:
                continue
            _pivot(t, i, int(candidates[0]))
            basis[i] = int(candidates[0])
        keep.append(i)
    if len(keep) < m:
        logger.debug("simplex_redundant_rows", extra={"dropped": m - len(keep)})

    body = np.hstack([t[keep, :art_start], t[keep, -1:]])
    basis = [basis[i] for i in keep]
    cost = np.zeros(art_start)
    cost[:n] = lp.objective if lp.sense == "min" else -lp.objective
    t2 = np.vstack([body, np.zeros(art_start + 1)])
    t2[-1, :art_start] = cost
    for i, j in enumerate(basis):
        if cost[j] != 0.0:
            t2[-1] -= cost[j] * t2[i]

    if not _iterate(t2, basis, art_start, tol, max_iter):
        return LPSolution("unbounded")
    x = np.zeros(art_start)
    x[basis] = t2[:-1, -1]
    x = np.maximum(x[:n], 0.0)
    value = float(lp.objective @ x)
    return LPSolution("optimal", x, value)


def feasible(lp: LinearProgram, tol: float = TOL) -> bool:
    return solve(lp.with_objective(np.zeros(lp.num_vars), "min"), tol).optimal
