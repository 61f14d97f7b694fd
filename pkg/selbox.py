import sys
import click
from cli import create_cli


cli = create_cli()


def main() -> int:
    # standalone_mode=False 时 ctx.exit(n) 以返回值 n 结束
    try:
        rv = cli.main(standalone_mode=False)
    except click.ClickException as e:
        e.show()
        return 1
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    return rv if isinstance(rv, int) else 0


if __name__ == "__main__":
    sys.exit(main())
