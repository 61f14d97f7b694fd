import logging
from pathlib import Path
import click
from commands.common import (
    build_train_config, guarded, parse_float_list, parse_int_list, pop_train_options, seed_of, settings_of, train_options,
)
from services.experiment import GRID_BETAS, GRID_DIMS, GRID_LRS, ExperimentConfig, best_setting, run_ablation, run_eval, run_grid


logger = logging.getLogger(__name__)


def experiment_options(fn):
    options = [
        click.argument("tbox", type=click.Path(exists=True, dir_okay=False, path_type=Path)),
        click.option("-o", "--output", type=click.Path(file_okay=False, path_type=Path), default=None,
                     help="output directory (default: OUTPUT_DIR)"),
        click.option("--ensemble", type=click.IntRange(min=1), default=None, help="ensemble size N"),
        click.option("--fraction", type=click.FloatRange(0, 1, min_open=True), default=None),
        click.option("--repeats", type=click.IntRange(min=1), default=None),
        click.option("--truth", type=click.Choice(["pmp", "oracle"]), default="pmp", show_default=True),
        click.option("--variant", type=click.Choice(["standard", "second_slack"]), default=None),
        click.option("--seed", type=int, default=None),
        click.option("--checkpoints", default=None, help="comma separated epochs for the epoch curve"),
    ]
    for option in reversed(options):
        fn = option(fn)
    return train_options(fn)


def _experiment_config(obj: dict, kwargs: dict) -> ExperimentConfig:
    settings = settings_of(obj)
    seed = seed_of(obj, kwargs.pop("seed"))
    train = build_train_config(settings, seed, pop_train_options(kwargs))
    output = kwargs["output"] or Path(settings.OUTPUT_DIR)
    return ExperimentConfig(
        tbox=kwargs["tbox"],
        output_dir=output,
        ensemble_size=kwargs["ensemble"] or settings.ENSEMBLE_SIZE,
        query_fraction=kwargs["fraction"] or settings.QUERY_FRACTION,
        repeats=kwargs["repeats"] or settings.REPEATS,
        train=train,
        pmp_variant=kwargs["variant"] or settings.PMP_VARIANT,
        truth=kwargs["truth"],
        threads=obj["threads"],
        seed=seed,
        checkpoints=parse_int_list(kwargs["checkpoints"]),
    )


@click.command("eval")
@experiment_options
@click.pass_obj
@guarded
def eval_cmd(obj, **kwargs):
    """完整评测流程：抽查询 → 训练集成 → 估计 → 写出 metrics.csv、ag_curve.csv、runtime.csv 与 summary.txt。"""
    cfg = _experiment_config(obj, kwargs)
    report = run_eval(cfg)
    click.echo(report.format_table())


@click.command("ablation")
@experiment_options
@click.pass_obj
@guarded
def ablation(obj, **kwargs):
    """正则项与关系模式的消融实验。"""
    frame = run_ablation(_experiment_config(obj, kwargs))
    click.echo(frame.to_string(index=False, float_format=lambda v: f"{v:.4f}"))


@click.command("tune")
@experiment_options
@click.option("--dims", default=",".join(str(d) for d in GRID_DIMS), show_default=True)
@click.option("--betas", default=",".join(f"{b:g}" for b in GRID_BETAS), show_default=True)
@click.option("--lrs", default=",".join(f"{lr:g}" for lr in GRID_LRS), show_default=True)
@click.pass_obj
@guarded
def tune(obj, dims, betas, lrs, **kwargs):
    """超参数网格搜索，按 (SE, −SA, MAE) 选最佳设置。"""
    cfg = _experiment_config(obj, kwargs)
    frame = run_grid(cfg, parse_int_list(dims), parse_float_list(betas), parse_float_list(lrs))
    click.echo(frame.to_string(index=False, float_format=lambda v: f"{v:.4f}"))
    best = best_setting(frame)
    click.echo(f"best\tdim={int(best['dim'])}\tbeta={best['beta']:g}\tlr={best['learning_rate']:g}")


COMMANDS = (eval_cmd, ablation, tune)
