from pathlib import Path

import numpy as np

from pama_tts.errors import PamaError


def write_matrix(path: str | Path, matrix: np.ndarray, integer: bool = False) -> None:
    """
    Write a 2-D matrix as text: one row per line, values separated by single spaces.

    Floats use repr-precision (`%.9g`) so float32 values survive a round trip.
    """
    matrix = np.asarray(matrix)
    if matrix.ndim == 1:
        matrix = matrix[None, :]
    if matrix.ndim != 2:
        raise PamaError(f"text matrix must be 2-D, got shape {matrix.shape}")
    fmt = "%d" if integer else "%.9g"
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for row in matrix:
            f.write(" ".join(fmt % v for v in row) + "\n")


def read_matrix(path: str | Path, dtype=np.float64) -> np.ndarray:
    """
    Read a matrix written by write_matrix.

    Raises:
        PamaError: missing file, ragged rows or non-numeric values
    """
    path = Path(path)
    if not path.is_file():
        raise PamaError(f"matrix file not found: {path}")
    rows = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append([float(v) for v in line.split()])
        except ValueError:
            raise PamaError(f"{path}:{lineno}: non-numeric value") from None
    if not rows:
        raise PamaError(f"{path}: empty matrix")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise PamaError(f"{path}: rows have different lengths")
    return np.asarray(rows, dtype=dtype)
