from pathlib import Path
from typing import Optional
import click
from commands.common import guarded
from services.oracle import InconsistentTBoxError, brute_force_bounds, query_bounds
from services.parser import load_tbox, parse_query
from services.pmp import MissingPremiseError, pmp_bounds


@click.command("pmp")
@click.argument("tbox", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--query", required=True, help='"<HEAD> | <BODY>"')
@click.option("--variant", type=click.Choice(["standard", "second_slack"]), default="standard", show_default=True)
@click.pass_obj
@guarded
def pmp_cmd(obj, tbox, query, variant):
    """对每个中介概念输出 PMP 区间，最后一行为所有区间的交。"""
    head, body = parse_query(query)
    per_mediator, combined = pmp_bounds(load_tbox(tbox), head, body, variant)
    if combined is None:
        raise MissingPremiseError("no mediator has both premises in the TBox")
    for mediator, interval in per_mediator:
        click.echo(f"{mediator.name}\t{interval.lower!r}\t{interval.upper!r}")
    click.echo(f"interval\t{combined.lower!r}\t{combined.upper!r}")


@click.command("oracle")
@click.argument("tbox", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--query", required=True, help='"<HEAD> | <BODY>"')
@click.option("--brute-force", "max_domain", type=click.IntRange(1, 5), default=None,
              help="enumerate interpretations up to this domain size instead of solving the linear program")
@click.pass_obj
@guarded
def oracle_cmd(obj, tbox, query, max_domain: Optional[int]):
    """无角色片段上的精确区间：输出 "l u"、"VACUOUS" 或 "INCONSISTENT"。"""
    head, body = parse_query(query)
    t = load_tbox(tbox)
    try:
        interval = query_bounds(t, head, body) if max_domain is None else brute_force_bounds(t, head, body, max_domain)
    except InconsistentTBoxError:
        click.echo("INCONSISTENT")
        return
    click.echo(str(interval))


COMMANDS = (pmp_cmd, oracle_cmd)
