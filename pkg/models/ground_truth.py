import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional
import numpy as np
from pydantic import BaseModel, Field, ValidationError, model_validator
from errors import SelboxError
from models.concepts import And, Atomic, Bottom, Concept, Conditional, Exists, Top


class GroundTruthFileError(SelboxError):
    pass


class GroundTruthFile(BaseModel):
    domain: int = Field(ge=1)
    concepts: dict[str, list[int]]
    roles: dict[str, list[tuple[int, int]]] = Field(default_factory=dict)
    parents: dict[str, Optional[str]] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_elements(self):
        for name, members in self.concepts.items():
            if any(not 0 <= x < self.domain for x in members):
                raise ValueError(f"concept {name} has elements outside the domain")
        for name, pairs in self.roles.items():
            if any(not (0 <= x < self.domain and 0 <= y < self.domain) for x, y in pairs):
                raise ValueError(f"role {name} has pairs outside the domain")
        return self


@dataclass(eq=False)
class GroundTruth:
    """有限解释：论域 0..m−1，概念外延为布尔向量，角色外延为 m×m 邻接矩阵。"""
    domain: int
    concepts: dict[str, np.ndarray]
    roles: dict[str, np.ndarray] = field(default_factory=dict)
    parents: dict[str, Optional[str]] = field(default_factory=dict)

    def extension(self, c: Concept) -> np.ndarray:
        if isinstance(c, Atomic):
            return self.concepts[c.name]
        if isinstance(c, Top):
            return np.ones(self.domain, dtype=bool)
        if isinstance(c, Bottom):
            return np.zeros(self.domain, dtype=bool)
        if isinstance(c, And):
            return self.extension(c.left) & self.extension(c.right)
        if isinstance(c, Exists):
            return self.roles[c.role][:, self.extension(c.filler)].any(axis=1)
        raise TypeError(f"unknown concept {c!r}")

    def ancestors(self, name: str) -> list[str]:
        """name 自身及其父链上的概念（不含论域）。"""
        chain = []
        current: Optional[str] = name
        while current is not None:
            chain.append(current)
            current = self.parents.get(current)
        return chain

    def proportion(self, head: Concept, body: Concept) -> Optional[float]:
        body_ext = self.extension(body)
        size = int(np.count_nonzero(body_ext))
        if size == 0:
            return None
        return int(np.count_nonzero(body_ext & self.extension(head))) / size

    def satisfies(self, c: Conditional, tol: float = 1e-9) -> bool:
        p = self.proportion(c.head, c.body)
        return p is None or c.lower - tol <= p <= c.upper + tol

    def to_file(self) -> GroundTruthFile:
        return GroundTruthFile(
            domain=self.domain,
            concepts={name: np.flatnonzero(ext).tolist() for name, ext in self.concepts.items()},
            roles={name: [(int(x), int(y)) for x, y in zip(*np.nonzero(adj))] for name, adj in self.roles.items()},
            parents=dict(self.parents),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_file().model_dump(), indent=1)

    @classmethod
    def from_file(cls, data: GroundTruthFile) -> "GroundTruth":
        m = data.domain
        concepts = {}
        for name, members in data.concepts.items():
            ext = np.zeros(m, dtype=bool)
            ext[members] = True
            concepts[name] = ext
        roles = {}
        for name, pairs in data.roles.items():
            adj = np.zeros((m, m), dtype=bool)
            for x, y in pairs:
                adj[x, y] = True
            roles[name] = adj
        return cls(m, concepts, roles, dict(data.parents))

    @classmethod
    def from_json(cls, text: str) -> "GroundTruth":
        try:
            return cls.from_file(GroundTruthFile.model_validate_json(text))
        except ValidationError as ve:
            raise GroundTruthFileError(f"invalid ground truth file: {ve.errors()}") from ve

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "GroundTruth":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise GroundTruthFileError(f"cannot read ground truth {path}: {e}") from e
        return cls.from_json(text)
