import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence
import numpy as np
import pandas as pd
from errors import SelboxError
from models.concepts import And, Atomic, Conditional, Exists
from models.intervals import ProbInterval


logger = logging.getLogger(__name__)

MRE_FLOOR = 1e-8
LOW_THRESHOLD = 0.1
CONTAIN_TOL = 1e-12
PNF_TYPES = ("pnf1", "pnf2", "pnf3", "pnf4", "other")
COLUMNS = ("total",) + PNF_TYPES
FLOAT_FORMAT = "%.6f"


class EmptyInputError(SelboxError, ValueError):
    pass


def mae(pairs: Sequence[tuple[float, float]]) -> float:
    """(1/c)·Σ|p − p̄|，pairs 为 (真值 p, 估计 p̄)。"""
    p, est = _pairs(pairs)
    return float(np.mean(np.abs(p - est)))


def mre(pairs: Sequence[tuple[float, float]]) -> float:
    """(1/c)·Σ|p − p̄|/p，p = 0 时分母取 1e-8。"""
    p, est = _pairs(pairs)
    denom = np.where(p == 0.0, MRE_FLOOR, p)
    return float(np.mean(np.abs(p - est) / denom))


def _pairs(pairs: Sequence[tuple[float, float]]) -> tuple[np.ndarray, np.ndarray]:
    if len(pairs) == 0:
        raise EmptyInputError("metric needs at least one (p, estimate) pair")
    arr = np.asarray(pairs, dtype=float).reshape(-1, 2)
    return arr[:, 0], arr[:, 1]


def _evaluated(items: Sequence[tuple[ProbInterval, ProbInterval]]) -> list[tuple[ProbInterval, ProbInterval]]:
    # Vacuous 的真值或估计没有可比的端点
    kept = [(t, e) for t, e in items if not t.vacuous and not e.vacuous]
    if not kept:
        raise EmptyInputError("metric needs at least one non-vacuous (true, estimate) interval pair")
    return kept


def soundness_error(items: Sequence[tuple[ProbInterval, ProbInterval]]) -> float:
    """(1/q)·Σ([l − l̄]⁺ + [ū − u]⁺)：估计区间越出真区间的部分。"""
    kept = _evaluated(items)
    return float(np.mean([max(t.lower - e.lower, 0.0) + max(e.upper - t.upper, 0.0) for t, e in kept]))


def soundness_accuracy(items: Sequence[tuple[ProbInterval, ProbInterval]]) -> float:
    kept = _evaluated(items)
    return float(np.mean([t.contains(e, CONTAIN_TOL) for t, e in kept]))


def approximation_gap(items: Sequence[tuple[ProbInterval, ProbInterval]]) -> float:
    kept = _evaluated(items)
    return float(np.mean([abs(t.lower - e.lower) + abs(t.upper - e.upper) for t, e in kept]))


def pnf_type(c: Conditional) -> str:
    """按原始（规范化之前）条件句的语法形状归类：
    (B|A) → pnf1，(B|A1⊓A2) → pnf2，(B|∃r.A) → pnf3，(∃r.B|A) → pnf4，其余 → other。"""
    head, body = c.head, c.body
    if isinstance(head, Atomic):
        if isinstance(body, Atomic):
            return "pnf1"
        if isinstance(body, And) and isinstance(body.left, Atomic) and isinstance(body.right, Atomic):
            return "pnf2"
        if isinstance(body, Exists) and isinstance(body.filler, Atomic):
            return "pnf3"
    if isinstance(head, Exists) and isinstance(head.filler, Atomic) and isinstance(body, Atomic):
        return "pnf4"
    return "other"


def truth_value(c: Conditional) -> float:
    # 区间条件句取中点作为 MAE/MRE 的真值
    return (c.lower + c.upper) / 2


def stratum(p: float) -> str:
    return "low" if p <= LOW_THRESHOLD else "high"


@dataclass
class MetricReport:
    """指标表：每行一个指标，列为 total 与 pnf1..pnf4、other；无样本的格为 NaN。

    嵌入误差行：conditionals、mae、mre 及按 p ≤ 0.1 / p > 0.1 分层的 *_low、*_high；
    推理误差行：queries、se、sa、ag。
    """
    rows: dict[str, dict[str, float]] = field(default_factory=dict)

    def get(self, metric: str, column: str = "total") -> float:
        return self.rows.get(metric, {}).get(column, math.nan)

    @property
    def mae(self) -> float:
        return self.get("mae")

    @property
    def mre(self) -> float:
        return self.get("mre")

    @property
    def se(self) -> float:
        return self.get("se")

    @property
    def sa(self) -> float:
        return self.get("sa")

    @property
    def ag(self) -> float:
        return self.get("ag")

    def merge(self, other: "MetricReport") -> "MetricReport":
        return MetricReport({**self.rows, **other.rows})

    def to_frame(self) -> pd.DataFrame:
        records = [{"metric": name, **{col: row.get(col, math.nan) for col in COLUMNS}}
                   for name, row in self.rows.items()]
        return pd.DataFrame(records, columns=["metric", *COLUMNS])

    def to_csv(self, path: str | Path) -> None:
        self.to_frame().to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")

    def format_table(self) -> str:
        return self.to_frame().to_string(index=False, float_format=lambda v: f"{v:.4f}", na_rep="-")


def _row(groups: dict[str, list], fn: Callable[[list], float]) -> dict[str, float]:
    return {col: (fn(items) if items else math.nan) for col, items in groups.items()}


def _counts(groups: dict[str, list]) -> dict[str, float]:
    # 没有样本的列记为 NaN，不写成 0
    return _row(groups, lambda items: float(len(items)))


def _empty_groups() -> dict[str, list]:
    return {col: [] for col in COLUMNS}


def embedding_error_report(records: Sequence[tuple[Conditional, float]],
                           degenerate: Sequence[Conditional] = ()) -> MetricReport:
    """由 (原始条件句, 嵌入比例) 计算 MAE/MRE，含 PNF 分列与概率分层。

    `degenerate` 列出体盒子退化的条件句；它们应已以估计 0 计入 records，这里只另起一行计数。
    """
    if not records:
        raise EmptyInputError("embedding error needs at least one conditional")
    groups = _empty_groups()
    strata = {"low": _empty_groups(), "high": _empty_groups()}
    for c, estimate in records:
        p = truth_value(c)
        for col in ("total", pnf_type(c)):
            groups[col].append((p, estimate))
            strata[stratum(p)][col].append((p, estimate))
    report = MetricReport()
    report.rows["conditionals"] = _counts(groups)
    report.rows["mae"] = _row(groups, mae)
    report.rows["mre"] = _row(groups, mre)
    for name in ("low", "high"):
        report.rows[f"conditionals_{name}"] = _counts(strata[name])
        report.rows[f"mae_{name}"] = _row(strata[name], mae)
        report.rows[f"mre_{name}"] = _row(strata[name], mre)
    bad = Counter(pnf_type(c) for c in degenerate)
    bad["total"] = len(degenerate)
    report.rows["degenerate"] = {col: (float(bad[col]) if items else math.nan) for col, items in groups.items()}
    return report


def inference_error_report(records: Sequence[tuple[Conditional, ProbInterval, ProbInterval]]) -> MetricReport:
    """由 (查询, 真区间, 估计区间) 计算 SE/SA/AG；任一侧 Vacuous 的查询不计入。"""
    groups = _empty_groups()
    skipped = 0
    for q, true, est in records:
        if true.vacuous or est.vacuous:
            skipped += 1
            continue
        for col in ("total", pnf_type(q)):
            groups[col].append((true, est))
    if not groups["total"]:
        raise EmptyInputError("inference error needs at least one non-vacuous query")
    if skipped:
        logger.warning("vacuous_queries_skipped", extra={"skipped": skipped})
    report = MetricReport()
    report.rows["queries"] = _counts(groups)
    report.rows["se"] = _row(groups, soundness_error)
    report.rows["sa"] = _row(groups, soundness_accuracy)
    report.rows["ag"] = _row(groups, approximation_gap)
    return report


def mean_report(reports: Sequence[MetricReport]) -> MetricReport:
    """逐格求均值（忽略 NaN），把每个嵌入各自的指标表合成一张；行顺序取第一次出现的顺序。"""
    if not reports:
        raise EmptyInputError("mean_report needs at least one report")
    frame = pd.concat([r.to_frame() for r in reports], ignore_index=True)
    means = frame.groupby("metric", sort=False)[list(COLUMNS)].mean()
    return MetricReport({name: {col: float(row[col]) for col in COLUMNS} for name, row in means.iterrows()})
