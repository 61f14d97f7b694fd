import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Literal, Optional
import numpy as np
from pydantic import BaseModel, Field, model_validator
from models.concepts import Signature, TBox
from models.embedding import BoxEmbedding, EmbeddingGradient
from services.losses import LossConfig, axiom_losses, compile_tbox, regularizer_terms
from services.normalizer import NotNormalizedError, is_normal_form, is_safe


logger = logging.getLogger(__name__)


class TrainConfig(BaseModel):
    dim: int = Field(default=16, ge=1)
    epochs: int = Field(default=30, ge=1)
    batch_size: int = Field(default=256, ge=1)
    learning_rate: float = Field(default=0.05, gt=0)
    lr_end: Optional[float] = Field(default=None, gt=0)
    seed: int = 0
    beta: float = Field(default=10.0, gt=0)
    t_start: float = Field(default=1.0, gt=0)
    t_end: float = Field(default=1e-3, gt=0)
    eps: float = Field(default=1e-8, ge=0)
    use_loc: bool = True
    use_vol: bool = True
    relation_mode: Literal["affine", "translation"] = "affine"
    normalized: bool = True
    adam_beta1: float = Field(default=0.9, ge=0, lt=1)
    adam_beta2: float = Field(default=0.999, ge=0, lt=1)
    adam_eps: float = Field(default=1e-8, gt=0)

    @model_validator(mode="after")
    def _check_schedule(self):
        if self.t_start < self.t_end:
            raise ValueError("t_start must be >= t_end")
        return self

    def loss_config(self, temperature: Optional[float] = None) -> LossConfig:
        return LossConfig(beta=self.beta, eps=self.eps, temperature=temperature or self.t_start,
                          use_loc=self.use_loc, use_vol=self.use_vol, relation_mode=self.relation_mode,
                          normalized=self.normalized, log_scale=self.normalized)

    def temperature(self, epoch: int) -> float:
        """几何降温：t_k = t_start·(t_end/t_start)^{k/(K−1)}，K=1 时恒为 t_start。"""
        return _geometric(self.t_start, self.t_end, epoch, self.epochs)

    def rate(self, epoch: int) -> float:
        if self.lr_end is None:
            return self.learning_rate
        return _geometric(self.learning_rate, self.lr_end, epoch, self.epochs)


def _geometric(start: float, end: float, k: int, total: int) -> float:
    if total <= 1:
        return start
    return start * (end / start) ** (k / (total - 1))


@dataclass
class TrainReport:
    seed: int
    epoch_losses: list[float] = field(default_factory=list)
    epoch_regularizer: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)
    initial_hard_loss: float = 0.0
    final_hard_loss: float = 0.0
    skipped_axioms: int = 0

    @property
    def seconds_per_epoch(self) -> float:
        return float(np.mean(self.epoch_seconds)) if self.epoch_seconds else 0.0


@dataclass
class TrainResult:
    embedding: BoxEmbedding
    report: TrainReport
    snapshots: dict[int, BoxEmbedding] = field(default_factory=dict)


def init_embedding(signature: Signature, cfg: TrainConfig, seed: int) -> BoxEmbedding:
    """按种子初始化：δ ~ U[log(0.1β), log(0.5β)]，m ~ U[0, β − e^δ]；
    角色 log 对角 ~ U[−0.1, 0.1]（translation 模式固定为 0），b ~ U[−0.1β, 0.1β]。"""
    rng = np.random.default_rng(seed)
    concepts = sorted(signature.concepts)
    roles = sorted(signature.roles)
    n, beta = cfg.dim, cfg.beta
    delta = rng.uniform(math.log(0.1 * beta), math.log(0.5 * beta), size=(len(concepts), n))
    m = rng.uniform(0.0, 1.0, size=(len(concepts), n)) * (beta - np.exp(delta))
    log_diag = rng.uniform(-0.1, 0.1, size=(len(roles), n))
    if cfg.relation_mode == "translation":
        log_diag = np.zeros_like(log_diag)
    b = rng.uniform(-0.1 * beta, 0.1 * beta, size=(len(roles), n))
    meta = {"seed": seed, "epochs": cfg.epochs, "beta": beta, "relation_mode": cfg.relation_mode,
            "learning_rate": cfg.learning_rate, "batch_size": cfg.batch_size}
    return BoxEmbedding(n, concepts, roles, m, delta, log_diag, b, meta)


class _Adam:
    def __init__(self, e: BoxEmbedding, cfg: TrainConfig):
        self.cfg = cfg
        self.step_count = 0
        self.first = EmbeddingGradient.zeros_like(e)
        self.second = EmbeddingGradient.zeros_like(e)

    def step(self, e: BoxEmbedding, grad: EmbeddingGradient, lr: float) -> None:
        b1, b2 = self.cfg.adam_beta1, self.cfg.adam_beta2
        self.step_count += 1
        c1 = 1.0 - b1 ** self.step_count
        c2 = 1.0 - b2 ** self.step_count
        for param, g, m1, m2 in zip((e.m, e.delta, e.log_diag, e.b), grad.arrays(),
                                    self.first.arrays(), self.second.arrays()):
            m1 *= b1
            m1 += (1.0 - b1) * g
            m2 *= b2
            m2 += (1.0 - b2) * g * g
            param -= lr * (m1 / c1) / (np.sqrt(m2 / c2) + self.cfg.adam_eps)


def _check_input(t: TBox) -> None:
    if not is_normal_form(t):
        raise NotNormalizedError("training requires a TBox in SEL normal form; run normalize first")
    if not is_safe(t):
        logger.warning("unsafe_tbox", extra={"conditionals": len(t)})


def fit(t: TBox, cfg: TrainConfig, seed: Optional[int] = None, checkpoints: Iterable[int] = (),
        on_epoch: Optional[Callable[[int, BoxEmbedding, float], None]] = None) -> TrainResult:
    """训练单个嵌入。

    流程：
    1. 校验规范形（不安全的 TBox 只告警）；按种子初始化参数并编译公理表；
    2. 每个 epoch 用种子化的随机排列切分 batch，batch 损失 = 公理损失均值 + 正则项 / batch 数；
    3. Adam 更新，温度（及可选学习率）按几何级数下降；
    4. 记录每个 epoch 的 TBox 损失（softplus）、正则项与耗时，结束时计算硬体积损失。
    `checkpoints` 中的 epoch（1 起始）结束时保存参数快照。
    """
    _check_input(t)
    seed = cfg.seed if seed is None else seed
    e = init_embedding(t.signature, cfg, seed)
    ct = compile_tbox(t, e, strict=False)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    adam = _Adam(e, cfg)
    report = TrainReport(seed=seed, skipped_axioms=len(ct.skipped))
    hard_cfg = cfg.loss_config(cfg.t_end).hard().without_regularizers()
    report.initial_hard_loss = float(axiom_losses(ct, e, hard_cfg).sum())
    wanted = set(checkpoints)
    snapshots: dict[int, BoxEmbedding] = {}
    count = len(ct)
    num_batches = max(1, math.ceil(count / cfg.batch_size))

    logger.info("train_start", extra={"seed": seed, "axioms": count, "concepts": len(e.concepts),
                                      "roles": len(e.roles), "batches": num_batches})
    for epoch in range(cfg.epochs):
        started = time.perf_counter()
        loss_cfg = cfg.loss_config(cfg.temperature(epoch))
        lr = cfg.rate(epoch)
        order = rng.permutation(count)
        batches = np.array_split(order, num_batches) if count else [order]
        epoch_loss = 0.0
        epoch_reg = 0.0
        for batch in batches:
            grad = EmbeddingGradient.zeros_like(e)
            if batch.size:
                epoch_loss += float(axiom_losses(ct, e, loss_cfg, batch, 1.0 / batch.size, grad).sum())
            epoch_reg += regularizer_terms(e, loss_cfg, 1.0 / num_batches, grad) / num_batches
            adam.step(e, grad, lr)
        report.epoch_losses.append(epoch_loss)
        report.epoch_regularizer.append(epoch_reg)
        report.epoch_seconds.append(time.perf_counter() - started)
        logger.info("train_epoch", extra={"seed": seed, "epoch": epoch + 1, "loss": epoch_loss,
                                          "regularizer": epoch_reg, "temperature": loss_cfg.temperature})
        if epoch + 1 in wanted:
            snapshots[epoch + 1] = e.copy()
        if on_epoch is not None:
            on_epoch(epoch + 1, e, epoch_loss)

    report.final_hard_loss = float(axiom_losses(ct, e, hard_cfg).sum())
    logger.info("train_done", extra={"seed": seed, "final_hard_loss": report.final_hard_loss,
                                     "seconds_per_epoch": report.seconds_per_epoch})
    return TrainResult(e, report, snapshots)


def train(t: TBox, cfg: TrainConfig) -> tuple[BoxEmbedding, TrainReport]:
    result = fit(t, cfg)
    return result.embedding, result.report


def fit_ensemble(t: TBox, cfg: TrainConfig, count: int, threads: int = 1,
                 checkpoints: Iterable[int] = ()) -> list[TrainResult]:
    """种子 seed, seed+1, …, seed+N−1 各训练一个嵌入；成员之间无共享状态，可并行。"""
    if count < 1:
        raise ValueError("ensemble size must be >= 1")
    _check_input(t)
    seeds = [cfg.seed + i for i in range(count)]
    checkpoints = tuple(checkpoints)
    if threads <= 1 or count == 1:
        return [fit(t, cfg, s, checkpoints) for s in seeds]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(lambda s: fit(t, cfg, s, checkpoints), seeds))


def train_ensemble(t: TBox, cfg: TrainConfig, count: int, threads: int = 1) -> list[BoxEmbedding]:
    return [r.embedding for r in fit_ensemble(t, cfg, count, threads)]
