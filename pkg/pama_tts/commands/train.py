import argparse
import logging

from pydantic import BaseModel, Field, ValidationError

from pama_tts.config import load_config
from pama_tts.errors import CommandError, PamaError
from pama_tts.models import RunManifest
from pama_tts.services import synthetic_corpus, trainer
from pama_tts.storage.artifacts import read_manifest, write_manifest
from pama_tts.storage.corpus_store import load_corpus

logger = logging.getLogger(__name__)


class TrainRequest(BaseModel):
    data: str
    out: str
    config: str | None = None
    steps: int = Field(2000, ge=1)
    seed: int | None = None
    split_seed: int = 0
    resume: bool = False


def add_parser(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(
        "train",
        help="train a model on a generated corpus",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("--data", required=True, help="corpus directory written by gen")
    parser.add_argument("--out", required=True, help="run directory for checkpoint and loss history")
    parser.add_argument("--config", default=None, help="config file (key = value lines)")
    parser.add_argument("--steps", type=int, default=2000, help="total optimizer steps")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--split-seed", type=int, default=0, help="seed of the train/held-out split")
    parser.add_argument("--resume", action="store_true", help="continue from <out>/model.ckpt if present")
    parser.set_defaults(handler=run)
    return parser


def run(args: argparse.Namespace) -> int:
    try:
        body = TrainRequest(
            data=args.data,
            out=args.out,
            config=args.config,
            steps=args.steps,
            seed=args.seed,
            split_seed=args.split_seed,
            resume=args.resume,
        )
    except ValidationError as e:
        first = e.errors()[0]
        raise CommandError(2, f"--{first['loc'][0]}: {first['msg']}") from None

    try:
        cfg = load_config(body.config, {"seed": body.seed})
        corpus = load_corpus(body.data)
        train_set, heldout = synthetic_corpus.split(corpus, cfg.train_fraction, body.split_seed)
        logger.info(f"Training on {len(train_set)} utterances ({len(heldout)} held out)")
        result = trainer.train(train_set, cfg, body.out, body.steps, resume=body.resume)
        try:
            corpus_seed = read_manifest(body.data).corpus_seed
        except PamaError:
            corpus_seed = None
        write_manifest(
            body.out,
            RunManifest(
                command="train",
                config=cfg.model_dump(),
                corpus_seed=corpus_seed,
                checkpoint=str(result.checkpoint),
            ),
        )
        return 0
    except CommandError:
        raise
    except PamaError as e:
        raise CommandError(1, str(e))
    except OSError as e:
        raise CommandError(1, f"cannot write run directory: {e}")
