import logging
from pathlib import Path
from typing import Optional
import click
from commands.common import guarded, seed_of, settings_of
from services.generator import generate, shape_ratios
from services.normalizer import is_normal_form, is_safe, normalize
from services.parser import load_tbox, save_tbox, serialize_tbox
from services.pmp import generate_query_set, serialize_queries


logger = logging.getLogger(__name__)


def _emit(text: str, output: Optional[Path]) -> None:
    if output is None:
        click.echo(text, nl=False)
    else:
        output.write_text(text, encoding="utf-8")


@click.command("gen")
@click.option("--concepts", type=int, default=None, help="number of concept names k")
@click.option("--roles", type=int, default=None, help="number of role names r")
@click.option("--domain", type=int, default=None, help="ground-truth domain size m")
@click.option("--seed", type=int, default=None)
@click.option("--slack", type=float, default=0.0, show_default=True, help="widen every [p,p] to [p-s, p+s]")
@click.option("-o", "--output", type=click.Path(dir_okay=False, path_type=Path), default=None)
@click.option("--ground-truth", type=click.Path(dir_okay=False, path_type=Path), default=None)
@click.pass_obj
@guarded
def gen(obj, concepts, roles, domain, seed, slack, output, ground_truth):
    """从采样的有限真值解释生成 PNF1–PNF4 条件句组成的 TBox。"""
    settings = settings_of(obj)
    gt, t = generate(settings.GEN_CONCEPTS if concepts is None else concepts,
                     settings.GEN_ROLES if roles is None else roles,
                     settings.GEN_DOMAIN if domain is None else domain,
                     seed_of(obj, seed), slack)
    _emit(serialize_tbox(t), output)
    if ground_truth is not None:
        gt.save(ground_truth)
    logger.info("gen_done", extra={"conditionals": len(t), "output": str(output) if output else "-"})


@click.command("normalize")
@click.argument("tbox", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("-o", "--output", type=click.Path(dir_okay=False, path_type=Path), default=None)
@click.pass_obj
@guarded
def normalize_cmd(obj, tbox, output):
    """把 TBox 改写为 SEL 规范形。"""
    result = normalize(load_tbox(tbox))
    _emit(serialize_tbox(result), output)
    if not is_safe(result):
        click.echo("warning: normalized TBox is unsafe (a concept name is equivalent to top)", err=True)


@click.command("stats")
@click.argument("tbox", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.pass_obj
@guarded
def stats(obj, tbox):
    """数据集统计：条件句数、大小、PNF 比例、规范形与安全性。"""
    t = load_tbox(tbox, allow_reserved=True)
    normal = is_normal_form(t)
    click.echo(f"conditionals\t{len(t)}")
    click.echo(f"size\t{t.size}")
    click.echo(f"concepts\t{len(t.signature.concepts)}")
    click.echo(f"roles\t{len(t.signature.roles)}")
    for shape, ratio in shape_ratios(t).items():
        click.echo(f"{shape}\t{ratio:.4f}")
    click.echo(f"normal_form\t{str(normal).lower()}")
    click.echo(f"safe\t{str(is_safe(t)).lower() if normal else 'n/a'}")


@click.command("queryset")
@click.argument("tbox", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--fraction", type=click.FloatRange(0, 1, min_open=True), default=None,
              help="share of the candidate conditionals held out")
@click.option("--seed", type=int, default=None)
@click.option("-o", "--output", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.option("--train-out", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.pass_obj
@guarded
def queryset(obj, tbox, fraction, seed, output, train_out):
    """抽取 PMP 查询集，并写出移除查询后的训练 TBox。"""
    fraction = settings_of(obj).QUERY_FRACTION if fraction is None else fraction
    queries, training = generate_query_set(load_tbox(tbox), fraction, seed_of(obj, seed))
    output.write_text(serialize_queries(queries), encoding="utf-8")
    save_tbox(training, train_out)
    click.echo(f"queries\t{len(queries)}")
    click.echo(f"training\t{len(training)}")


COMMANDS = (gen, normalize_cmd, stats, queryset)
