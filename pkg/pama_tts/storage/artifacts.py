"""Run outputs: mel and attention-trace matrices, durations, loss history, run manifest."""
from pathlib import Path

import numpy as np

from pama_tts.errors import PamaError
from pama_tts.models import RunManifest
from pama_tts.utils.text_matrix import write_matrix

MANIFEST_FILE = "manifest.json"
MEL_FILE = "mel.txt"
TRACE_FILE = "attention.txt"
DURATIONS_FILE = "durations.txt"
LOSS_FILE = "loss_history.tsv"
LOSS_COLUMNS = ("step", "total", "mel", "pc", "dur", "align")


def write_trace(path: str | Path, trace: np.ndarray) -> None:
    """One decoder step per line, N space-separated weights."""
    write_matrix(path, trace)


def write_mel(path: str | Path, mel: np.ndarray) -> None:
    write_matrix(path, mel)


def write_durations(path: str | Path, durations: np.ndarray) -> None:
    """One integer per filtered token."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(f"{int(d)}\n" for d in np.asarray(durations).reshape(-1)), encoding="utf-8")


def format_loss_row(step: int, components: dict[str, float]) -> str:
    return "\t".join([str(step)] + [f"{components[k]:.9g}" for k in LOSS_COLUMNS[1:]])


def write_loss_history(path: str | Path, rows: list[tuple[int, dict[str, float]]], append: bool = False) -> None:
    """Tab-separated, one line per step; header only when the file is created."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fresh = not append or not path.exists()
    with open(path, "w" if fresh else "a", encoding="utf-8", newline="\n") as f:
        if fresh:
            f.write("\t".join(LOSS_COLUMNS) + "\n")
        for step, components in rows:
            f.write(format_loss_row(step, components) + "\n")


def read_loss_history(path: str | Path) -> list[tuple[int, dict[str, float]]]:
    path = Path(path)
    if not path.is_file():
        raise PamaError(f"loss history not found: {path}")
    rows = []
    lines = path.read_text(encoding="utf-8").splitlines()
    for line in lines[1:]:
        if not line.strip():
            continue
        values = line.split("\t")
        rows.append((int(values[0]), {k: float(v) for k, v in zip(LOSS_COLUMNS[1:], values[1:])}))
    return rows


def truncate_loss_history(path: str | Path, last_step: int) -> None:
    """Drop rows after last_step so a resumed run appends without duplicates."""
    path = Path(path)
    if not path.is_file():
        return
    rows = [r for r in read_loss_history(path) if r[0] <= last_step]
    write_loss_history(path, rows)


def write_manifest(out_dir: str | Path, manifest: RunManifest) -> Path:
    """Exactly one manifest per artifact directory; a rerun replaces it."""
    path = Path(out_dir) / MANIFEST_FILE
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return path


def read_manifest(out_dir: str | Path) -> RunManifest:
    path = Path(out_dir) / MANIFEST_FILE
    if not path.is_file():
        raise PamaError(f"no {MANIFEST_FILE} in {out_dir}")
    return RunManifest.model_validate_json(path.read_text(encoding="utf-8"))
