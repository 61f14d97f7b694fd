import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Optional
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from errors import SelboxError


class EmbeddingFileError(SelboxError):
    """嵌入文件无法读取或不符合 schema。"""
    pass


class ConceptParams(BaseModel):
    m: list[float]
    delta: list[float]


class RoleParams(BaseModel):
    log_diag: list[float]
    b: list[float]


class EmbeddingMeta(BaseModel):
    model_config = ConfigDict(extra="allow")
    seed: int = 0
    epochs: int = 0
    beta: float = 10.0
    relation_mode: str = "affine"


class EmbeddingFile(BaseModel):
    dim: int = Field(ge=1)
    concepts: dict[str, ConceptParams]
    roles: dict[str, RoleParams] = Field(default_factory=dict)
    meta: EmbeddingMeta = Field(default_factory=EmbeddingMeta)

    @model_validator(mode="after")
    def _check_lengths(self):
        for name, p in self.concepts.items():
            if len(p.m) != self.dim or len(p.delta) != self.dim:
                raise ValueError(f"concept {name} has parameters of the wrong length")
        for name, p in self.roles.items():
            if len(p.log_diag) != self.dim or len(p.b) != self.dim:
                raise ValueError(f"role {name} has parameters of the wrong length")
        return self


@dataclass(eq=False)
class BoxEmbedding:
    """盒嵌入参数：每个概念 m 与 δ（M = m + exp(δ)），每个角色 log 对角与平移 b。

    参数按名称顺序存放在二维数组中，行号由 `concept_index` / `role_index` 给出。
    """
    dim: int
    concepts: list[str]
    roles: list[str]
    m: np.ndarray
    delta: np.ndarray
    log_diag: np.ndarray
    b: np.ndarray
    meta: dict[str, Any] = field(default_factory=dict)

    @cached_property
    def concept_index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.concepts)}

    @cached_property
    def role_index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.roles)}

    @property
    def upper(self) -> np.ndarray:
        return self.m + np.exp(self.delta)

    @property
    def diag(self) -> np.ndarray:
        return np.exp(self.log_diag)

    def copy(self) -> "BoxEmbedding":
        return BoxEmbedding(self.dim, list(self.concepts), list(self.roles), self.m.copy(), self.delta.copy(),
                            self.log_diag.copy(), self.b.copy(), dict(self.meta))

    def same_parameters(self, other: "BoxEmbedding") -> bool:
        return (self.concepts == other.concepts and self.roles == other.roles
                and np.array_equal(self.m, other.m) and np.array_equal(self.delta, other.delta)
                and np.array_equal(self.log_diag, other.log_diag) and np.array_equal(self.b, other.b))

    def to_file(self) -> EmbeddingFile:
        return EmbeddingFile(
            dim=self.dim,
            concepts={name: ConceptParams(m=self.m[i].tolist(), delta=self.delta[i].tolist())
                      for i, name in enumerate(self.concepts)},
            roles={name: RoleParams(log_diag=self.log_diag[i].tolist(), b=self.b[i].tolist())
                   for i, name in enumerate(self.roles)},
            meta=EmbeddingMeta(**self.meta),
        )

    def to_json(self) -> str:
        # json 使用 repr 写浮点数，最短且可精确往返
        return json.dumps(self.to_file().model_dump(), indent=1)

    @classmethod
    def from_boxes(cls, boxes: dict[str, tuple[Any, Any]], maps: Optional[dict[str, tuple[Any, Any]]] = None,
                   **meta) -> "BoxEmbedding":
        """由显式角点 {name: (m, M)} 与变换 {role: (diag, b)} 构造嵌入，要求 M > m、diag > 0。"""
        maps = maps or {}
        concepts = list(boxes)
        roles = list(maps)
        lower = np.array([np.atleast_1d(np.asarray(boxes[c][0], dtype=float)) for c in concepts])
        upper = np.array([np.atleast_1d(np.asarray(boxes[c][1], dtype=float)) for c in concepts])
        if np.any(upper <= lower):
            raise ValueError("every box needs M > m in all dimensions")
        n = lower.shape[1]
        diag = np.array([np.asarray(maps[r][0], dtype=float) for r in roles]).reshape(len(roles), n)
        offset = np.array([np.asarray(maps[r][1], dtype=float) for r in roles]).reshape(len(roles), n)
        return cls(n, concepts, roles, lower, np.log(upper - lower), np.log(diag), offset, dict(meta))

    @classmethod
    def from_file(cls, data: EmbeddingFile) -> "BoxEmbedding":
        concepts = list(data.concepts)
        roles = list(data.roles)
        n = data.dim

        def _rows(values: list[list[float]]) -> np.ndarray:
            return np.array(values, dtype=float).reshape(len(values), n)

        return cls(
            dim=n,
            concepts=concepts,
            roles=roles,
            m=_rows([data.concepts[c].m for c in concepts]),
            delta=_rows([data.concepts[c].delta for c in concepts]),
            log_diag=_rows([data.roles[r].log_diag for r in roles]),
            b=_rows([data.roles[r].b for r in roles]),
            meta=data.meta.model_dump(),
        )

    @classmethod
    def from_json(cls, text: str) -> "BoxEmbedding":
        try:
            return cls.from_file(EmbeddingFile.model_validate_json(text))
        except ValidationError as ve:
            raise EmbeddingFileError(f"invalid embedding file: {ve.errors()}") from ve

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "BoxEmbedding":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise EmbeddingFileError(f"cannot read embedding {path}: {e}") from e
        return cls.from_json(text)


@dataclass(eq=False)
class EmbeddingGradient:
    """与 BoxEmbedding 参数同形的梯度表。"""
    m: np.ndarray
    delta: np.ndarray
    log_diag: np.ndarray
    b: np.ndarray

    @classmethod
    def zeros_like(cls, e: BoxEmbedding) -> "EmbeddingGradient":
        return cls(np.zeros_like(e.m), np.zeros_like(e.delta), np.zeros_like(e.log_diag), np.zeros_like(e.b))

    def arrays(self) -> tuple[np.ndarray, ...]:
        return self.m, self.delta, self.log_diag, self.b

    def scale(self, factor: float) -> "EmbeddingGradient":
        return EmbeddingGradient(self.m * factor, self.delta * factor, self.log_diag * factor, self.b * factor)

    def add(self, other: "EmbeddingGradient") -> "EmbeddingGradient":
        return EmbeddingGradient(self.m + other.m, self.delta + other.delta,
                                 self.log_diag + other.log_diag, self.b + other.b)
