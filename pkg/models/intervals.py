from dataclasses import dataclass


@dataclass(frozen=True)
class ProbInterval:
    """概率区间 [lower, upper] ⊆ [0,1]，或表示“任意区间均被蕴含”的 Vacuous 标记。"""
    lower: float = 0.0
    upper: float = 1.0
    vacuous: bool = False

    def __post_init__(self):
        if self.vacuous:
            return
        if not (0.0 <= self.lower <= self.upper <= 1.0):
            raise ValueError(f"invalid probability interval [{self.lower}, {self.upper}]")

    @classmethod
    def make_vacuous(cls) -> "ProbInterval":
        return cls(0.0, 1.0, vacuous=True)

    @classmethod
    def clipped(cls, lower: float, upper: float) -> "ProbInterval":
        # 数值求解的端点可能越界 1e-12 量级
        lower = min(max(lower, 0.0), 1.0)
        upper = min(max(upper, 0.0), 1.0)
        if lower > upper:
            lower = upper = (lower + upper) / 2
        return cls(lower, upper)

    @property
    def width(self) -> float:
        return 0.0 if self.vacuous else self.upper - self.lower

    def contains(self, other: "ProbInterval", tol: float = 0.0) -> bool:
        if self.vacuous:
            return True
        if other.vacuous:
            return False
        return self.lower - tol <= other.lower and other.upper <= self.upper + tol

    def contains_value(self, p: float, tol: float = 0.0) -> bool:
        return self.vacuous or self.lower - tol <= p <= self.upper + tol

    def __str__(self) -> str:
        if self.vacuous:
            return "VACUOUS"
        return f"{self.lower!r} {self.upper!r}"
