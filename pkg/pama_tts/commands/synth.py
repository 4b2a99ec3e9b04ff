import argparse
import logging
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, Field, ValidationError

from pama_tts.errors import CommandError, PamaError
from pama_tts.models import RunManifest
from pama_tts.services.inference_scheduler import synthesize
from pama_tts.services.token_model import parse_utterance
from pama_tts.services.trainer import model_from_checkpoint
from pama_tts.storage.artifacts import (
    DURATIONS_FILE,
    MEL_FILE,
    TRACE_FILE,
    write_durations,
    write_manifest,
    write_mel,
    write_trace,
)
from pama_tts.storage.checkpoint import load_checkpoint

logger = logging.getLogger(__name__)


class SynthRequest(BaseModel):
    ckpt: str
    text: str = Field(min_length=1)
    factor: float = Field(1.0, gt=0)
    out: str
    mode: Literal["hard", "soft"] | None = None


def add_parser(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(
        "synth",
        help="synthesize one utterance from token text",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("--ckpt", required=True, help="checkpoint written by train")
    parser.add_argument("--text", required=True, help="token names, e.g. 'p3 p7 t3 #1 p2 t5 #3'")
    parser.add_argument("--factor", type=float, default=1.0, help="duration factor (speech rate)")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--mode", choices=["hard", "soft"], default=None, help="attention mode (config value if unset)")
    parser.set_defaults(handler=run)
    return parser


def run(args: argparse.Namespace) -> int:
    try:
        body = SynthRequest(ckpt=args.ckpt, text=args.text, factor=args.factor, out=args.out, mode=args.mode)
    except ValidationError as e:
        first = e.errors()[0]
        raise CommandError(2, f"--{first['loc'][0]}: {first['msg']}") from None

    try:
        seq = parse_utterance(body.text)
        ckpt = load_checkpoint(body.ckpt)
        model = model_from_checkpoint(ckpt, {"attention_mode": body.mode, "duration_factor": body.factor})
        result = synthesize(model, seq, body.factor)

        out = Path(body.out)
        write_mel(out / MEL_FILE, result.mel)
        write_trace(out / TRACE_FILE, result.trace)
        write_durations(out / DURATIONS_FILE, result.durations)
        write_manifest(out, RunManifest(command="synth", config=model.cfg.model_dump(), checkpoint=body.ckpt))
        logger.info(
            f"Synthesized {result.frames} frames for {len(result.durations)} tokens "
            f"(predicted {int(result.durations.sum())}) at factor {body.factor:g}"
        )
        if result.truncated:
            raise CommandError(1, f"decode truncated at {result.frames} frames; outputs written to {out}")
        return 0
    except CommandError:
        raise
    except PamaError as e:
        raise CommandError(1, str(e))
    except OSError as e:
        raise CommandError(1, f"cannot write outputs: {e}")
