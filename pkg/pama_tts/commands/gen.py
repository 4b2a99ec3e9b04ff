import argparse
import logging

from pydantic import BaseModel, Field, ValidationError

from pama_tts.config import load_config
from pama_tts.errors import CommandError, PamaError
from pama_tts.models import RunManifest
from pama_tts.services import synthetic_corpus
from pama_tts.storage.artifacts import write_manifest
from pama_tts.storage.corpus_store import save_corpus

logger = logging.getLogger(__name__)


class GenRequest(BaseModel):
    seed: int = 7
    count: int = Field(200, ge=1)
    out: str
    config: str | None = None


def add_parser(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(
        "gen",
        help="generate the synthetic corpus",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("--seed", type=int, default=7, help="corpus seed")
    parser.add_argument("--count", type=int, default=200, help="number of utterances")
    parser.add_argument("--out", required=True, help="corpus directory to create")
    parser.add_argument("--config", default=None, help="config file (n_phonemes and mel_dim are read from it)")
    parser.set_defaults(handler=run)
    return parser


def run(args: argparse.Namespace) -> int:
    try:
        body = GenRequest(seed=args.seed, count=args.count, out=args.out, config=args.config)
    except ValidationError as e:
        first = e.errors()[0]
        raise CommandError(2, f"--{first['loc'][0]}: {first['msg']}") from None

    try:
        cfg = load_config(body.config)
        corpus = synthetic_corpus.generate(body.seed, body.count, cfg.n_phonemes, cfg.mel_dim)
        out = save_corpus(body.out, corpus)
        write_manifest(out, RunManifest(command="gen", config=cfg.model_dump(), corpus_seed=body.seed))
        counts = synthetic_corpus.token_kind_counts(corpus)
        logger.info("Token counts: " + ", ".join(f"{k.value}={v}" for k, v in counts.items()))
        return 0
    except CommandError:
        raise
    except PamaError as e:
        raise CommandError(1, str(e))
    except OSError as e:
        raise CommandError(1, f"cannot write corpus: {e}")
