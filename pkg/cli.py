import logging
import sys
from typing import Optional
import click
from commands import embedding, evaluation, ontology, reasoning
from config import Settings, get_settings


def create_cli(settings: Optional[Settings] = None) -> click.Group:
    """命令行应用工厂：全局选项、日志与各组命令的注册。"""

    @click.group()
    @click.option("--seed", type=int, default=None, help="default seed for every command (SEED)")
    @click.option("--threads", type=click.IntRange(min=1), default=None, help="ensemble parallelism (THREADS)")
    @click.option("--env", default=None, help="settings environment: dev | test | prod")
    @click.pass_context
    def cli(ctx: click.Context, seed: Optional[int], threads: Optional[int], env: Optional[str]):
        """SEL 本体的盒嵌入、近似推理与精确推理校验。"""
        try:
            s = settings or get_settings(env)
        except ValueError as e:
            raise click.ClickException(str(e)) from e
        logging.basicConfig(level=s.LOG_LEVEL, format="%(asctime)s %(levelname)s %(message)s", stream=sys.stderr)
        ctx.obj = {
            "settings": s,
            "seed": s.SEED if seed is None else seed,
            "threads": s.THREADS if threads is None else threads,
        }

    for module in (ontology, embedding, reasoning, evaluation):
        for command in module.COMMANDS:
            cli.add_command(command)
    return cli
