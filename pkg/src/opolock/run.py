import argparse
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from dotenv import load_dotenv

from .config import load_config
from .errors import ConfigError, NumericalError
from .workflow import COMMANDS, render, run_command


# Load environment variables.
# When installed as a console script, __file__ lives in site-packages, so we
# prefer CWD. Allow override via OPOLOCK_DOTENV env var.
_explicit_env = os.environ.get("OPOLOCK_DOTENV")
if _explicit_env and Path(_explicit_env).exists():
    load_dotenv(dotenv_path=_explicit_env, override=False)
else:
    load_dotenv(override=False)

OUT_DIR_ENV = "OPOLOCK_OUT_DIR"

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="opolock-run",
        description="Oscillation thresholds and locking zones of an OPO with an intracavity waveplate",
    )
    parser.add_argument("command", choices=COMMANDS, help="What to compute")
    parser.add_argument("--config", type=Path, help="key=value or JSON config file (a sidecar works too)")
    parser.add_argument("--out", type=Path, help=f"Output directory (overrides {OUT_DIR_ENV} and output.dir)")
    parser.add_argument("--format", choices=["csv", "json"], help="Data file format (overrides output.format)")
    parser.add_argument("--threads", type=int, help="Worker threads for sweeps, 0 = one per CPU")
    parser.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override one config key (repeatable)",
    )
    parser.add_argument(
        "--debug",
        action="store_true",
        help="Print tagged progress lines to stderr",
    )
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    overrides: dict = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(item, "--set expects KEY=VALUE")
        overrides[key.strip()] = value
    env_out = os.environ.get(OUT_DIR_ENV)
    if env_out:
        overrides["output.dir"] = env_out
    if args.out is not None:
        overrides["output.dir"] = str(args.out)
    if args.format is not None:
        overrides["output.format"] = args.format
    if args.threads is not None:
        overrides["run.threads"] = args.threads
    return overrides


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    try:
        rc = load_config(args.config, _overrides(args))
    except ConfigError as e:
        print(f"[ERROR] config {e.field}: {e.message}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        session = run_command(rc, args.command, debug=args.debug)
    except ConfigError as e:
        print(f"[ERROR] config {e.field}: {e.message}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as e:
        print(f"[ERROR] {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as e:
        print(f"[ERROR] I/O failure: {e}", file=sys.stderr)
        return EXIT_RUNTIME

    print(render(session))
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
