"""
Objective evaluation on synthesized traces.

Durations are read back from the attention argmax path and compared with
the (scaled) predicted durations. Skipped tokens and argmax regressions
stand in for deletion and insertion errors.
"""
from concurrent.futures import ThreadPoolExecutor
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from pama_tts.errors import PamaError, ShapeError
from pama_tts.models import EvalReport, FactorResult
from pama_tts.services.inference_scheduler import synthesize, utterance_rng


class Robustness(NamedTuple):
    skipped: int
    regressions: int
    truncations: int


def duration_from_attention(A) -> np.ndarray:
    """d_i = number of decoder steps whose attention argmax is token i; A is N x T."""
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] < 1:
        raise ShapeError("duration_from_attention", A.shape)
    return np.bincount(A.argmax(axis=0), minlength=A.shape[0]).astype(np.int64)


def duration_mae(predicted: Sequence[float], measured: Sequence[float]) -> float:
    predicted = np.asarray(predicted, dtype=np.float64)
    measured = np.asarray(measured, dtype=np.float64)
    if predicted.shape != measured.shape:
        raise ShapeError("duration_mae", predicted.shape, measured.shape)
    if predicted.size == 0:
        raise PamaError("duration_mae: no tokens to compare")
    return float(np.abs(predicted - measured).mean())


def count_skips(A) -> int:
    """Tokens that are never the argmax anywhere in the trace."""
    return int((duration_from_attention(A) == 0).sum())


def count_regressions(A) -> int:
    """Decoder steps where the argmax moves back to an earlier token."""
    path = np.asarray(A).argmax(axis=0)
    return int((np.diff(path) < 0).sum())


def robustness_report(
    traces: Iterable[np.ndarray],
    truncated: Iterable[bool] | None = None,
) -> Robustness:
    """Skipped tokens, regressions and truncations summed over N x T traces."""
    traces = list(traces)
    flags = list(truncated) if truncated is not None else [False] * len(traces)
    skipped = sum(count_skips(A) for A in traces)
    regressions = sum(count_regressions(A) for A in traces)
    return Robustness(skipped, regressions, sum(bool(f) for f in flags))


def factor_result(
    factor: float,
    predicted: list[np.ndarray],
    traces: list[np.ndarray],
    truncated: list[bool],
    utt_ids: list[str],
    reference_frames: dict[str, int] | None = None,
) -> FactorResult:
    """Aggregate one duration factor: mean per-token MAE over all utterances plus robustness counts.

    reference_frames maps utt_id to the factor-1.0 frame count; frame ratios are
    emitted frames divided by that count.
    """
    if not traces:
        raise PamaError("cannot evaluate an empty set of utterances")
    diffs = []
    for pred, A in zip(predicted, traces):
        measured = duration_from_attention(A)
        if measured.shape != np.shape(pred):
            raise ShapeError("factor_result", np.shape(pred), measured.shape)
        diffs.append(np.abs(np.asarray(pred, dtype=np.float64) - measured))
    skipped, regressions, truncations = robustness_report(traces, truncated)
    ratios = {}
    if reference_frames:
        for utt_id, A in zip(utt_ids, traces):
            ratios[utt_id] = A.shape[1] / reference_frames[utt_id]
    return FactorResult(
        factor=factor,
        duration_mae=float(np.concatenate(diffs).mean()),
        skipped=skipped,
        regressions=regressions,
        truncations=truncations,
        frame_ratios=ratios,
    )


def rate_control_ok(result: FactorResult, tolerance: float = 0.10) -> bool:
    """Every utterance's frame ratio within tolerance of the factor."""
    if not result.frame_ratios:
        return True
    target = result.factor
    return all(abs(r - target) <= tolerance * target for r in result.frame_ratios.values())


def format_report(report: EvalReport) -> str:
    """Tab-separated table, one row per duration factor, then one summary line per factor."""
    ms = report.frame_shift_ms
    lines = [f"# frame_shift_ms\t{ms:g}"]
    if report.ablation:
        lines.append("# ablation\t" + "\t".join(f"{k}={v}" for k, v in sorted(report.ablation.items())))
    lines.append("factor\tmae_frames\tmae_ms\tskipped\tregressions\ttruncations")
    for r in report.results:
        lines.append(
            f"{r.factor:g}\t{r.duration_mae:.4f}\t{r.duration_mae * ms:.2f}\t"
            f"{r.skipped}\t{r.regressions}\t{r.truncations}"
        )
    for r in report.results:
        ratios = list(r.frame_ratios.values())
        spread = f" frame_ratio={min(ratios):.3f}..{max(ratios):.3f}" if ratios else ""
        lines.append(
            f"# factor {r.factor:g}: MAE {r.duration_mae:.3f} frames ({r.duration_mae * ms:.1f} ms),"
            f" {r.skipped} skipped, {r.regressions} regressions, {r.truncations} truncated{spread}"
        )
    return "\n".join(lines) + "\n"


def evaluate(model, utts: list, factors: Sequence[float], workers: int = 1) -> EvalReport:
    """Synthesize every utterance at every factor and aggregate one FactorResult per factor.

    Utterances fan out over a thread pool; results are merged in utt_id order.
    """
    if not utts:
        raise PamaError("evaluation set is empty")
    if not factors:
        raise PamaError("no duration factors given")
    utts = sorted(utts, key=lambda u: u.utt_id)
    ids = [u.utt_id for u in utts]

    def run_one(utt, factor):
        rng = utterance_rng(model.cfg.seed, utt.tokens)
        return synthesize(model, utt.tokens, factor, rng=rng)

    outputs: dict[float, list] = {}
    with ThreadPoolExecutor(max_workers=max(workers, 1)) as pool:
        for factor in factors:
            outputs[factor] = list(pool.map(lambda u: run_one(u, factor), utts))

    reference = None
    if 1.0 in outputs:
        reference = {i: r.frames for i, r in zip(ids, outputs[1.0])}
    results = []
    for factor in factors:
        runs = outputs[factor]
        results.append(
            factor_result(
                factor,
                [r.durations for r in runs],
                [r.trace.T for r in runs],
                [r.truncated for r in runs],
                ids,
                reference,
            )
        )
    cfg = model.cfg
    ablation = {
        "alpha_align": cfg.alpha_align,
        "use_position_embedding": cfg.use_position_embedding,
        "use_duration_code": cfg.use_duration_code,
    }
    return EvalReport(frame_shift_ms=cfg.frame_shift_ms, results=results, ablation=ablation)
