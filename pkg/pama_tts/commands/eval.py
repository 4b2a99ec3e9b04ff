import argparse
import logging
from pathlib import Path

from pydantic import BaseModel, Field, ValidationError, field_validator

from pama_tts.errors import CommandError, PamaError
from pama_tts.models import RunManifest
from pama_tts.services import metrics, synthetic_corpus
from pama_tts.services.trainer import model_from_checkpoint
from pama_tts.storage.artifacts import write_manifest
from pama_tts.storage.checkpoint import load_checkpoint
from pama_tts.storage.corpus_store import load_corpus

logger = logging.getLogger(__name__)

REPORT_FILE = "report.tsv"


class EvalRequest(BaseModel):
    ckpt: str
    data: str
    factors: list[float]
    out: str | None = None
    split_seed: int = 0
    all_utterances: bool = False
    workers: int | None = Field(None, ge=1)

    @field_validator("factors", mode="before")
    @classmethod
    def _parse_factors(cls, value):
        if isinstance(value, str):
            value = [v.strip() for v in value.split(",") if v.strip()]
        return value

    @field_validator("factors")
    @classmethod
    def _positive_unique(cls, value: list[float]):
        if not value:
            raise ValueError("at least one duration factor is required")
        if any(v <= 0 for v in value):
            raise ValueError("duration factors must be positive")
        return list(dict.fromkeys(value))


def add_parser(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(
        "eval",
        help="duration MAE and robustness report over held-out utterances",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("--ckpt", required=True, help="checkpoint written by train")
    parser.add_argument("--data", required=True, help="corpus directory written by gen")
    parser.add_argument("--factors", default="0.75,1.0,1.5", help="comma-separated duration factors")
    parser.add_argument("--out", default=None, help="directory for report.tsv and manifest (stdout if unset)")
    parser.add_argument("--split-seed", type=int, default=0, help="seed of the train/held-out split")
    parser.add_argument("--all", dest="all_utterances", action="store_true", help="evaluate every utterance, not just the held-out split")
    parser.add_argument("--workers", type=int, default=None, help="synthesis threads (config eval_workers if unset)")
    parser.set_defaults(handler=run)
    return parser


def run(args: argparse.Namespace) -> int:
    try:
        body = EvalRequest(
            ckpt=args.ckpt,
            data=args.data,
            factors=args.factors,
            out=args.out,
            split_seed=args.split_seed,
            all_utterances=args.all_utterances,
            workers=args.workers,
        )
    except ValidationError as e:
        first = e.errors()[0]
        raise CommandError(2, f"--{first['loc'][0]}: {first['msg']}") from None

    try:
        ckpt = load_checkpoint(body.ckpt)
        model = model_from_checkpoint(ckpt)
        corpus = load_corpus(body.data)
        if body.all_utterances:
            utts = corpus
        else:
            _, utts = synthetic_corpus.split(corpus, model.cfg.train_fraction, body.split_seed)
        if not utts:
            raise CommandError(1, "evaluation set is empty")

        logger.info(f"Evaluating {len(utts)} utterances at factors {body.factors}")
        report = metrics.evaluate(model, utts, body.factors, body.workers or model.cfg.eval_workers)
        text = metrics.format_report(report)
        if body.out:
            out = Path(body.out)
            out.mkdir(parents=True, exist_ok=True)
            (out / REPORT_FILE).write_text(text, encoding="utf-8")
            write_manifest(out, RunManifest(command="eval", config=model.cfg.model_dump(), checkpoint=body.ckpt))
        else:
            print(text, end="")
        return 0
    except CommandError:
        raise
    except PamaError as e:
        raise CommandError(1, str(e))
    except OSError as e:
        raise CommandError(1, f"cannot write report: {e}")
