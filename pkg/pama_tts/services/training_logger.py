import logging
import time
from pathlib import Path

from pama_tts.errors import PamaError
from pama_tts.storage.artifacts import format_loss_row, write_loss_history

logger = logging.getLogger(__name__)


class TrainingLogger:
    """Appends one loss-history row per optimizer step.

    Step timing goes to the debug log only, so the history file stays
    identical across reruns.
    """

    def __init__(self, path: str | Path, resume: bool = False):
        self.path = Path(path)
        self.start_time = None
        self.rows: list[tuple[int, dict[str, float]]] = []
        if not resume or not self.path.exists():
            write_loss_history(self.path, [])

    def start_timer(self):
        """Start timing a training step."""
        self.start_time = time.time()

    def log(self, step: int, components: dict[str, float]) -> bool:
        """Record one step; a failed write raises PamaError."""
        elapsed_ms = None
        if self.start_time:
            elapsed_ms = int((time.time() - self.start_time) * 1000)

        try:
            with open(self.path, "a", encoding="utf-8", newline="\n") as f:
                f.write(format_loss_row(step, components) + "\n")
            self.rows.append((step, dict(components)))
            logger.debug(f"step {step} took {elapsed_ms} ms")
            return True
        except OSError as e:
            logger.error(f"Failed to log training step {step}: {e}")
            raise PamaError(f"cannot append step {step} to {self.path}: {e}") from e
