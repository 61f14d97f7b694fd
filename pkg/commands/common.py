import functools
import logging
from typing import Any, Callable, Optional
import click
from pydantic import ValidationError
from config import Settings
from errors import SelboxError
from services.trainer import TrainConfig


logger = logging.getLogger(__name__)


def guarded(fn: Callable) -> Callable:
    """命令出错时的退出码：领域错误与参数校验失败为 1，其余异常为 2；信息写到 stderr。"""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        ctx = click.get_current_context()
        try:
            return fn(*args, **kwargs)
        except (click.ClickException, click.exceptions.Exit, click.Abort):
            raise
        except SelboxError as e:
            logger.warning("command_failed", extra={"command": ctx.info_name, "error": type(e).__name__})
            click.echo(f"error: {e}", err=True)
            ctx.exit(1)
        except ValidationError as ve:
            click.echo(f"error: invalid parameters: {ve}", err=True)
            ctx.exit(1)
        except Exception:
            logger.exception("internal_error", extra={"command": ctx.info_name})
            click.echo(f"internal error in {ctx.info_name}", err=True)
            ctx.exit(2)
    return wrapper


def settings_of(obj: dict) -> Settings:
    return obj["settings"]


def seed_of(obj: dict, seed: Optional[int]) -> int:
    return obj["seed"] if seed is None else seed


def parse_int_list(text: Optional[str]) -> tuple[int, ...]:
    if not text:
        return ()
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError as e:
        raise click.BadParameter(f"expected comma separated integers, got {text!r}") from e


def parse_float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as e:
        raise click.BadParameter(f"expected comma separated numbers, got {text!r}") from e


_TRAIN_OPTIONS = [
    click.option("--dim", type=int, default=None, help="box dimension n"),
    click.option("--epochs", type=int, default=None),
    click.option("--batch-size", type=int, default=None),
    click.option("--lr", "learning_rate", type=float, default=None, help="Adam learning rate"),
    click.option("--lr-end", type=float, default=None, help="geometric learning-rate decay target"),
    click.option("--beta", type=float, default=None, help="upper bound of the box domain [0, beta]^n"),
    click.option("--t-start", type=float, default=None),
    click.option("--t-end", type=float, default=None),
    click.option("--relation-mode", type=click.Choice(["affine", "translation"]), default=None),
    click.option("--loc/--no-loc", "use_loc", default=None, help="location regularizer"),
    click.option("--vol/--no-vol", "use_vol", default=None, help="volume regularizer"),
    click.option("--normalized-loss/--literal-loss", "normalized", default=None,
                 help="ratio-form probabilistic loss (default) or the literal volume hinge"),
]


def train_options(fn: Callable) -> Callable:
    for option in reversed(_TRAIN_OPTIONS):
        fn = option(fn)
    return fn


TRAIN_KEYS = ("dim", "epochs", "batch_size", "learning_rate", "lr_end", "beta", "t_start", "t_end",
              "relation_mode", "use_loc", "use_vol", "normalized")


def build_train_config(settings: Settings, seed: int, options: dict[str, Any]) -> TrainConfig:
    """命令行参数覆盖 Settings 中的默认值。"""
    values = {
        "dim": settings.EMBED_DIM,
        "epochs": settings.EPOCHS,
        "batch_size": settings.BATCH_SIZE,
        "learning_rate": settings.LEARNING_RATE,
        "lr_end": settings.LR_END,
        "beta": settings.BETA,
        "t_start": settings.T_START,
        "t_end": settings.T_END,
        "relation_mode": settings.RELATION_MODE,
        "use_loc": settings.USE_LOC,
        "use_vol": settings.USE_VOL,
        "normalized": settings.NORMALIZED_LOSS,
    }
    values.update({k: v for k, v in options.items() if k in TRAIN_KEYS and v is not None})
    return TrainConfig(seed=seed, **values)


def pop_train_options(kwargs: dict[str, Any]) -> dict[str, Any]:
    return {k: kwargs.pop(k) for k in TRAIN_KEYS if k in kwargs}
