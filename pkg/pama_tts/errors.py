"""Exception types shared across the package."""


class PamaError(Exception):
    """Base class for every failure raised by pama_tts."""


class ShapeError(PamaError):
    def __init__(self, op: str, *shapes):
        self.op = op
        self.shapes = shapes
        rendered = " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{op}: shape mismatch {rendered}")


class NonFiniteError(PamaError):
    def __init__(self, op: str):
        self.op = op
        super().__init__(f"{op}: produced non-finite values")


class TokenError(PamaError):
    pass


class LabelError(PamaError):
    pass


class ConfigError(PamaError):
    pass


class AttentionError(PamaError):
    pass


class CheckpointError(PamaError):
    pass


class DivergenceError(PamaError):
    def __init__(self, step: int, last_checkpoint: str | None):
        self.step = step
        self.last_checkpoint = last_checkpoint
        where = last_checkpoint or "none written yet"
        super().__init__(f"training diverged at step {step}; last good checkpoint: {where}")


class CommandError(PamaError):
    """Raised by command handlers; carries the process exit code."""

    def __init__(self, exit_code: int, detail: str):
        self.exit_code = exit_code
        self.detail = detail
        super().__init__(detail)
