"""
Corpus directory layout:

    utts.txt          utt_id: token names
    align.txt         utt_id: d1 d2 ... dN
    mel/<utt_id>.txt  frames x mel_dim text matrix
"""
import logging
from pathlib import Path

from pama_tts.errors import LabelError, PamaError
from pama_tts.models import AlignmentLabel, SyntheticUtterance
from pama_tts.services.token_model import parse_utterance
from pama_tts.utils.text_matrix import read_matrix, write_matrix

logger = logging.getLogger(__name__)

UTTS_FILE = "utts.txt"
ALIGN_FILE = "align.txt"
MEL_DIR = "mel"


def format_label_line(utt_id: str, label: AlignmentLabel) -> str:
    return f"{utt_id}: " + " ".join(str(d) for d in label.durations)


def parse_label_line(line: str) -> tuple[str, AlignmentLabel]:
    """
    Parse one `utt_id: d1 d2 ... dN` line.

    Raises:
        LabelError: missing id, non-integer or non-positive counts
    """
    utt_id, sep, rest = line.partition(":")
    if not sep or not utt_id.strip():
        raise LabelError(f"label line needs 'utt_id: durations', got {line.strip()!r}")
    try:
        durations = [int(v) for v in rest.split()]
    except ValueError:
        raise LabelError(f"{utt_id.strip()}: durations must be integers") from None
    return utt_id.strip(), AlignmentLabel.of(durations)


def _read_keyed_lines(path: Path) -> dict[str, str]:
    if not path.is_file():
        raise PamaError(f"corpus file not found: {path}")
    entries: dict[str, str] = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        key, sep, rest = line.partition(":")
        if not sep:
            raise PamaError(f"{path.name}: line without 'utt_id:' prefix: {line.strip()!r}")
        if key.strip() in entries:
            raise PamaError(f"{path.name}: duplicate utterance id {key.strip()}")
        entries[key.strip()] = line
    return entries


def save_corpus(out_dir: str | Path, corpus: list[SyntheticUtterance]) -> Path:
    out = Path(out_dir)
    (out / MEL_DIR).mkdir(parents=True, exist_ok=True)
    with open(out / UTTS_FILE, "w", encoding="utf-8", newline="\n") as f:
        for utt in corpus:
            f.write(f"{utt.utt_id}: {utt.tokens.to_text()}\n")
    with open(out / ALIGN_FILE, "w", encoding="utf-8", newline="\n") as f:
        for utt in corpus:
            f.write(format_label_line(utt.utt_id, utt.label) + "\n")
    for utt in corpus:
        write_matrix(out / MEL_DIR / f"{utt.utt_id}.txt", utt.mel)
    logger.info(f"Wrote {len(corpus)} utterances to {out}")
    return out


def load_corpus(data_dir: str | Path) -> list[SyntheticUtterance]:
    """Utterances in utts.txt order; every id must have a label line and a mel file."""
    root = Path(data_dir)
    utt_lines = _read_keyed_lines(root / UTTS_FILE)
    label_lines = _read_keyed_lines(root / ALIGN_FILE)
    corpus = []
    for utt_id, line in utt_lines.items():
        if utt_id not in label_lines:
            raise LabelError(f"{utt_id}: no alignment label in {ALIGN_FILE}")
        _, label = parse_label_line(label_lines[utt_id])
        seq = parse_utterance(line.partition(":")[2])
        mel = read_matrix(root / MEL_DIR / f"{utt_id}.txt")
        corpus.append(SyntheticUtterance(utt_id=utt_id, tokens=seq, label=label, mel=mel))
    if not corpus:
        raise PamaError(f"corpus at {root} is empty")
    return corpus
