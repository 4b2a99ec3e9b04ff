import argparse
import logging
import os
import sys

from dotenv import load_dotenv

from pama_tts.commands import eval as eval_command
from pama_tts.commands import gen as gen_command
from pama_tts.commands import synth as synth_command
from pama_tts.commands import train as train_command
from pama_tts.errors import CommandError, PamaError

load_dotenv()

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pama-tts",
        description="Progression-aware monotonic attention TTS on a synthetic corpus",
    )
    subparsers = parser.add_subparsers(dest="command", metavar="{gen,train,synth,eval}")
    subparsers.required = True

    # Commands
    gen_command.add_parser(subparsers)
    train_command.add_parser(subparsers)
    synth_command.add_parser(subparsers)
    eval_command.add_parser(subparsers)
    return parser


def setup_logging() -> None:
    level = os.getenv("PAMA_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format=LOG_FORMAT, stream=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging()
    try:
        return args.handler(args)
    except CommandError as e:
        print(f"pama-tts {args.command}: error: {e.detail}", file=sys.stderr)
        return e.exit_code
    except PamaError as e:
        print(f"pama-tts {args.command}: error: {e}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print(f"pama-tts {args.command}: interrupted", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
