import logging
import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Literal, Sequence
import numpy as np
import pandas as pd
from pydantic import BaseModel, Field
from errors import SelboxError
from models.concepts import Conditional, TBox
from models.embedding import BoxEmbedding
from models.intervals import ProbInterval
from services.generator import role_free_projection
from services.inference import (
    DegenerateBodyError, GeometricInterpretation, TopConceptError, ensemble_interval, point_estimate, runtime_profile,
)
from services.metrics import (
    FLOAT_FORMAT, EmptyInputError, MetricReport, approximation_gap, embedding_error_report, inference_error_report,
    mean_report,
)
from services.normalizer import normalize
from services.oracle import query_bounds
from services.parser import load_tbox, save_tbox
from services.pmp import PmpPremises, PmpVariant, generate_query_set, pmp_bounds_for_query, serialize_queries
from services.trainer import TrainConfig, TrainResult, fit_ensemble


logger = logging.getLogger(__name__)

ABLATION_REGULARIZERS = {"none": (False, False), "loc": (True, False), "vol": (False, True), "loc+vol": (True, True)}
ABLATION_MODES = ("translation", "affine")
GRID_DIMS = (8, 16, 32, 64, 128)
GRID_BETAS = (1.0, 10.0)
GRID_LRS = (0.001, 0.01, 0.05, 0.1)


class SignatureMismatchError(SelboxError):
    """嵌入没有覆盖 TBox 的签名。"""
    pass


class ExperimentStageError(SelboxError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage


class ExperimentConfig(BaseModel):
    tbox: Path
    output_dir: Path
    ensemble_size: int = Field(default=10, ge=1)
    query_fraction: float = Field(default=0.3, gt=0, le=1)
    repeats: int = Field(default=1, ge=1)
    train: TrainConfig = Field(default_factory=TrainConfig)
    pmp_variant: PmpVariant = "standard"
    truth: Literal["pmp", "oracle"] = "pmp"
    threads: int = Field(default=1, ge=1)
    seed: int = 0
    checkpoints: tuple[int, ...] = ()
    profile_sizes: tuple[int, ...] = (2, 8, 32, 128)


@contextmanager
def _stage(name: str) -> Iterator[None]:
    try:
        yield
    except ExperimentStageError:
        raise
    except (SelboxError, ValueError) as e:
        raise ExperimentStageError(name, e) from e
    except Exception:
        logger.exception("stage_failed", extra={"stage": name})
        raise


@dataclass
class RepeatOutcome:
    repeat: int
    queries: list[PmpPremises]
    training: TBox
    embedding_report: MetricReport
    inference_records: list[tuple[Conditional, ProbInterval, ProbInterval]]
    ag_curve: list[tuple[int, float]]
    seconds_per_epoch: float
    ms_per_query: float
    interpretations: list[GeometricInterpretation] = field(default_factory=list)
    epoch_curve: list[tuple[int, float, float]] = field(default_factory=list)

    @property
    def report(self) -> MetricReport:
        return self.embedding_report.merge(inference_error_report(self.inference_records))


def _check_signature(t: TBox, e: BoxEmbedding) -> None:
    missing = sorted((t.signature.concepts - set(e.concepts)) | (t.signature.roles - set(e.roles)))
    if missing:
        raise SignatureMismatchError(f"embedding lacks names {', '.join(missing)}")


def _embedding_records(t: TBox, i: GeometricInterpretation) -> tuple[list[tuple[Conditional, float]], list[Conditional]]:
    """单个嵌入对每条条件句的比例。体盒子退化时按估计 0 计分并单独列出；含 ⊤ 的条件句无法估计，不计入。"""
    records = []
    degenerate = []
    excluded = 0
    for c in t.conditionals:
        try:
            records.append((c, point_estimate(i, c.head, c.body)))
        except DegenerateBodyError:
            records.append((c, 0.0))
            degenerate.append(c)
        except TopConceptError:
            excluded += 1
    if excluded:
        logger.warning("top_conditionals_excluded", extra={"excluded": excluded, "seed": i.embedding.meta.get("seed")})
    return records, degenerate


def _embedding_report(t: TBox, interps: Sequence[GeometricInterpretation]) -> MetricReport:
    # 每个嵌入各算一张表，再逐格平均
    return mean_report([embedding_error_report(*_embedding_records(t, i)) for i in interps])


def run_embedding_error(t: TBox, embeddings: Sequence[BoxEmbedding]) -> MetricReport:
    """训练条件句的概率与嵌入比例之间的 MAE/MRE：每个嵌入单独计算，再对嵌入取平均。"""
    if not embeddings:
        raise EmptyInputError("at least one embedding is required")
    for e in embeddings:
        _check_signature(t, e)
    return _embedding_report(t, [GeometricInterpretation(e) for e in embeddings])


def _true_interval(cfg: ExperimentConfig, training: TBox, q: PmpPremises) -> ProbInterval:
    if cfg.truth == "oracle":
        return query_bounds(role_free_projection(training), q.head, q.body)
    return pmp_bounds_for_query(training, q, cfg.pmp_variant)


def _inference_records(cfg: ExperimentConfig, training: TBox, queries: Sequence[PmpPremises],
                       interps: Sequence[GeometricInterpretation]) -> list[tuple[Conditional, ProbInterval, ProbInterval]]:
    return [(q.query, _true_interval(cfg, training, q), ensemble_interval(interps, q.head, q.body)) for q in queries]


def _ag_curve(truth: Sequence[ProbInterval], queries: Sequence[PmpPremises],
              interps: Sequence[GeometricInterpretation]) -> list[tuple[int, float]]:
    """前 N 个嵌入构成的集成区间的近似差距，N = 1..集成大小。"""
    curve = []
    for n in range(1, len(interps) + 1):
        items = [(t, ensemble_interval(interps[:n], q.head, q.body)) for t, q in zip(truth, queries)]
        try:
            curve.append((n, approximation_gap(items)))
        except EmptyInputError:
            curve.append((n, math.nan))
    return curve


def _ms_per_query(interps: Sequence[GeometricInterpretation], queries: Sequence[PmpPremises]) -> float:
    samples = []
    for i in interps:
        for q in queries:
            started = time.perf_counter()
            try:
                point_estimate(i, q.head, q.body)
            except DegenerateBodyError:
                pass
            samples.append((time.perf_counter() - started) * 1000.0)
    return float(np.median(samples)) if samples else math.nan


def _epoch_curve(cfg: ExperimentConfig, training: TBox, queries: Sequence[PmpPremises],
                 results: Sequence[TrainResult]) -> list[tuple[int, float, float]]:
    curve = []
    for epoch in sorted(cfg.checkpoints):
        snaps = [r.snapshots[epoch] for r in results if epoch in r.snapshots]
        if not snaps:
            continue
        interps = [GeometricInterpretation(e) for e in snaps]
        report = _embedding_report(training, interps)
        try:
            se = inference_error_report(_inference_records(cfg, training, queries, interps)).se
        except EmptyInputError:
            se = math.nan
        curve.append((epoch, report.mae, se))
    return curve


def run_repeat(cfg: ExperimentConfig, repeat: int) -> RepeatOutcome:
    """单次重复：抽查询 → 规范化 → 训练集成 → 估计 → 打分。"""
    with _stage("load"):
        t = load_tbox(cfg.tbox)
    with _stage("queryset"):
        queries, training = generate_query_set(t, cfg.query_fraction, cfg.seed + repeat)
    with _stage("normalize"):
        normalized = normalize(training)
    with _stage("train"):
        train_cfg = cfg.train.model_copy(update={"seed": cfg.seed + repeat * cfg.ensemble_size})
        results = fit_ensemble(normalized, train_cfg, cfg.ensemble_size, cfg.threads, cfg.checkpoints)
        interps = [GeometricInterpretation(r.embedding) for r in results]
    with _stage("estimate"):
        embedding_report = _embedding_report(training, interps)
        inference_records = _inference_records(cfg, training, queries, interps)
    with _stage("score"):
        truth = [true for _, true, _ in inference_records]
        ag_curve = _ag_curve(truth, queries, interps)
        epoch_curve = _epoch_curve(cfg, training, queries, results) if cfg.checkpoints else []
    outcome = RepeatOutcome(
        repeat=repeat,
        queries=queries,
        training=training,
        embedding_report=embedding_report,
        inference_records=inference_records,
        ag_curve=ag_curve,
        seconds_per_epoch=float(np.mean([r.report.seconds_per_epoch for r in results])),
        ms_per_query=_ms_per_query(interps, queries),
        interpretations=interps,
        epoch_curve=epoch_curve,
    )
    logger.info("repeat_done", extra={"repeat": repeat, "queries": len(queries), "training": len(training)})
    return outcome


def _write_curve(rows: list[tuple[int, float]], out: Path) -> None:
    frame = pd.DataFrame(rows, columns=["N", "AG"])
    frame.to_csv(out / "ag_curve.csv", index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    lines = ["# N AG"] + [f"{n} {ag:.6f}" for n, ag in rows]
    (out / "ag_curve.dat").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _mean_curve(outcomes: Sequence[RepeatOutcome]) -> list[tuple[int, float]]:
    sizes = [n for n, _ in outcomes[0].ag_curve]
    return [(n, float(np.nanmean([o.ag_curve[k][1] for o in outcomes]))
             if any(not math.isnan(o.ag_curve[k][1]) for o in outcomes) else math.nan)
            for k, n in enumerate(sizes)]


def run_eval(cfg: ExperimentConfig) -> MetricReport:
    """完整评测：每次重复写入子目录，汇总写入 metrics.csv、ag_curve.csv/.dat、runtime.csv 与 summary.txt。

    metrics.csv 与 ag_curve.csv 在种子相同、单线程时逐字节一致；runtime.csv 记录墙钟时间，不在此列。
    """
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    outcomes = []
    for r in range(cfg.repeats):
        outcome = run_repeat(cfg, r)
        repeat_dir = out / f"repeat_{r}"
        repeat_dir.mkdir(exist_ok=True)
        with _stage("write"):
            outcome.report.to_csv(repeat_dir / "metrics.csv")
            (repeat_dir / "queries.txt").write_text(serialize_queries(outcome.queries), encoding="utf-8")
            save_tbox(outcome.training, repeat_dir / "training.tbox")
            emb_dir = repeat_dir / "embeddings"
            emb_dir.mkdir(exist_ok=True)
            for i in outcome.interpretations:
                i.embedding.save(emb_dir / f"seed_{i.embedding.meta['seed']}.json")
        outcomes.append(outcome)

    with _stage("write"):
        report = mean_report([o.report for o in outcomes])
        report.to_csv(out / "metrics.csv")
        curve = _mean_curve(outcomes)
        _write_curve(curve, out)
        runtime = pd.DataFrame({
            "repeat": [o.repeat for o in outcomes],
            "seconds_per_epoch": [o.seconds_per_epoch for o in outcomes],
            "ms_per_query": [o.ms_per_query for o in outcomes],
        })
        runtime.to_csv(out / "runtime.csv", index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        if cfg.checkpoints:
            rows = [row for o in outcomes for row in o.epoch_curve]
            frame = pd.DataFrame(rows, columns=["epoch", "mae", "se"]).groupby("epoch", as_index=False).mean()
            frame.to_csv(out / "epoch_curve.csv", index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        profile = {}
        if cfg.profile_sizes:
            profile = runtime_profile(outcomes[-1].interpretations[0], cfg.profile_sizes)
        (out / "summary.txt").write_text(_summary(cfg, report, curve, outcomes, profile), encoding="utf-8")
    logger.info("eval_done", extra={"output_dir": str(out), "mae": report.mae, "se": report.se, "sa": report.sa})
    return report


def _summary(cfg: ExperimentConfig, report: MetricReport, curve: list[tuple[int, float]],
             outcomes: Sequence[RepeatOutcome], profile: dict[int, float]) -> str:
    lines = [
        f"tbox: {cfg.tbox}",
        f"repeats: {cfg.repeats}  ensemble: {cfg.ensemble_size}  truth: {cfg.truth}  pmp: {cfg.pmp_variant}",
        "",
        report.format_table(),
        "",
        "approximation gap by ensemble size",
    ]
    lines += [f"  N={n:<4d} AG={ag:.4f}" for n, ag in curve]
    lines += [
        "",
        f"seconds/epoch: {np.mean([o.seconds_per_epoch for o in outcomes]):.4f}",
        f"ms/query: {np.nanmean([o.ms_per_query for o in outcomes]):.4f}",
    ]
    lines += [f"  size {size}: {ms:.4f} ms" for size, ms in sorted(profile.items())]
    return "\n".join(lines) + "\n"


def _ablation_row(cfg: ExperimentConfig, out: Path, update: dict) -> dict:
    sub = cfg.model_copy(update={"train": cfg.train.model_copy(update=update), "output_dir": out})
    report = run_eval(sub)
    return {"mae": report.mae, "mre": report.mre, "se": report.se, "sa": report.sa, "ag": report.ag}


def run_ablation(cfg: ExperimentConfig) -> pd.DataFrame:
    """正则项 {none, loc, vol, loc+vol} × 关系模式 {translation, affine} 的消融表，写入 ablation.csv。"""
    rows = []
    for mode in ABLATION_MODES:
        for name, (use_loc, use_vol) in ABLATION_REGULARIZERS.items():
            out = Path(cfg.output_dir) / f"{mode}_{name.replace('+', '_')}"
            row = _ablation_row(cfg, out, {"use_loc": use_loc, "use_vol": use_vol, "relation_mode": mode})
            rows.append({"relation_mode": mode, "regularizers": name, **row})
    frame = pd.DataFrame(rows)
    frame.to_csv(Path(cfg.output_dir) / "ablation.csv", index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return frame


def run_grid(cfg: ExperimentConfig, dims: Sequence[int] = GRID_DIMS, betas: Sequence[float] = GRID_BETAS,
             lrs: Sequence[float] = GRID_LRS) -> pd.DataFrame:
    """超参数网格 n × β × lr，写入 grid.csv。"""
    rows = []
    for dim in dims:
        for beta in betas:
            for lr in lrs:
                out = Path(cfg.output_dir) / f"n{dim}_b{beta:g}_lr{lr:g}"
                row = _ablation_row(cfg, out, {"dim": dim, "beta": beta, "learning_rate": lr})
                rows.append({"dim": dim, "beta": beta, "learning_rate": lr, **row})
    frame = pd.DataFrame(rows)
    frame.to_csv(Path(cfg.output_dir) / "grid.csv", index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return frame


def best_setting(grid: pd.DataFrame) -> dict:
    """按 (SE 升序, SA 降序, MAE 升序) 选出最佳超参数行。"""
    ranked = grid.assign(neg_sa=-grid["sa"]).sort_values(["se", "neg_sa", "mae"], kind="mergesort")
    return ranked.drop(columns="neg_sa").iloc[0].to_dict()
