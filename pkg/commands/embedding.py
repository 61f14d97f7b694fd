import logging
from pathlib import Path
import click
from commands.common import build_train_config, guarded, pop_train_options, seed_of, settings_of, train_options
from models.embedding import BoxEmbedding
from services.experiment import run_embedding_error
from services.inference import DegenerateBodyError, GeometricInterpretation, ensemble_interval, point_estimate
from services.normalizer import is_normal_form, normalize
from services.parser import load_tbox, parse_query
from services.trainer import fit_ensemble


logger = logging.getLogger(__name__)


@click.command("train")
@click.argument("tbox", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("-o", "--output", type=click.Path(file_okay=False, path_type=Path), required=True,
              help="directory receiving one seed_<k>.json per ensemble member")
@click.option("--ensemble", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--normalize/--no-normalize", "auto_normalize", default=False,
              help="normalize the TBox first instead of rejecting non-normal input")
@train_options
@click.pass_obj
@guarded
def train_cmd(obj, tbox, output, ensemble, seed, auto_normalize, **kwargs):
    """训练盒嵌入（集成成员使用种子 seed, seed+1, …）。"""
    cfg = build_train_config(settings_of(obj), seed_of(obj, seed), pop_train_options(kwargs))
    t = load_tbox(tbox, allow_reserved=True)
    if auto_normalize and not is_normal_form(t):
        t = normalize(t)
    results = fit_ensemble(t, cfg, ensemble, obj["threads"])
    output.mkdir(parents=True, exist_ok=True)
    click.echo("seed\tinitial_hard_loss\tfinal_hard_loss\tseconds_per_epoch\tpath")
    for r in results:
        path = output / f"seed_{r.report.seed}.json"
        r.embedding.save(path)
        click.echo(f"{r.report.seed}\t{r.report.initial_hard_loss:.6g}\t{r.report.final_hard_loss:.6g}\t"
                   f"{r.report.seconds_per_epoch:.4f}\t{path}")


@click.command("infer")
@click.argument("embeddings", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--query", required=True, help='"<HEAD> | <BODY>"')
@click.pass_obj
@guarded
def infer(obj, embeddings, query):
    """每个嵌入一行点估计，最后一行为集成区间（制表符分隔）。"""
    head, body = parse_query(query, allow_reserved=True)
    interps = [GeometricInterpretation(BoxEmbedding.load(p)) for p in embeddings]
    for path, i in zip(embeddings, interps):
        try:
            click.echo(f"{path}\t{point_estimate(i, head, body)!r}")
        except DegenerateBodyError:
            click.echo(f"{path}\tdegenerate")
    interval = ensemble_interval(interps, head, body)
    if interval.vacuous:
        click.echo("interval\tVACUOUS")
    else:
        click.echo(f"interval\t{interval.lower!r}\t{interval.upper!r}")


@click.command("emb-error")
@click.argument("tbox", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument("embeddings", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False, path_type=Path), default=None)
@click.pass_obj
@guarded
def emb_error(obj, tbox, embeddings, csv_path):
    """训练条件句上的嵌入误差 MAE/MRE（PNF 分列与 p ≤ 0.1 / p > 0.1 分层）。"""
    report = run_embedding_error(load_tbox(tbox), [BoxEmbedding.load(p) for p in embeddings])
    click.echo(report.format_table())
    if csv_path is not None:
        report.to_csv(csv_path)


COMMANDS = (train_cmd, infer, emb_error)
