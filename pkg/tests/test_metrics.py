import numpy as np
import pytest

from pama_tts.errors import PamaError, ShapeError
from pama_tts.models import EvalReport, FactorResult
from pama_tts.services import metrics


def onehot_trace(path, n):
    A = np.zeros((n, len(path)))
    A[path, np.arange(len(path))] = 1.0
    return A


def test_duration_from_path():
    np.testing.assert_array_equal(metrics.duration_from_attention(onehot_trace([0, 0, 1, 1, 1], 2)), [2, 3])


def test_duration_matches_brute_force():
    rng = np.random.default_rng(21)
    for _ in range(100):
        n, t = int(rng.integers(1, 8)), int(rng.integers(1, 40))
        A = rng.uniform(size=(n, t))
        brute = [sum(1 for s in range(t) if A[:, s].argmax() == i) for i in range(n)]
        np.testing.assert_array_equal(metrics.duration_from_attention(A), brute)
        assert metrics.duration_from_attention(A).sum() == t


def test_duration_mae_examples():
    assert metrics.duration_mae([4, 6], [5, 6]) == 0.5
    assert metrics.duration_mae([3, 3], [3, 3]) == 0.0
    with pytest.raises(ShapeError):
        metrics.duration_mae([1, 2], [1])
    with pytest.raises(PamaError):
        metrics.duration_mae([], [])


def test_duration_mae_is_a_metric():
    rng = np.random.default_rng(22)
    for _ in range(100):
        a, b, c = (rng.uniform(0, 10, size=5) for _ in range(3))
        assert metrics.duration_mae(a, b) == pytest.approx(metrics.duration_mae(b, a))
        assert metrics.duration_mae(a, c) <= metrics.duration_mae(a, b) + metrics.duration_mae(b, c) + 1e-12


def test_skip_and_regression_counts():
    clean = onehot_trace([0, 0, 1, 2, 2], 3)
    assert metrics.count_skips(clean) == 0 and metrics.count_regressions(clean) == 0
    skipping = onehot_trace([0, 0, 2, 2], 3)
    assert metrics.count_skips(skipping) == 1
    regressing = onehot_trace([0, 1, 0, 1, 2], 3)
    assert metrics.count_regressions(regressing) == 1
    summary = metrics.robustness_report([clean, skipping, regressing], [False, True, False])
    assert summary == metrics.Robustness(skipped=1, regressions=1, truncations=1)


def test_factor_result_aggregates_tokens():
    traces = [onehot_trace([0, 0, 1, 1, 1], 2), onehot_trace([0, 1, 1], 2)]
    result = metrics.factor_result(
        1.5,
        [np.array([2, 4]), np.array([1, 2])],
        traces,
        [False, False],
        ["a", "b"],
        {"a": 4, "b": 2},
    )
    assert result.duration_mae == pytest.approx(0.25)
    assert result.frame_ratios == {"a": 1.25, "b": 1.5}
    assert not metrics.rate_control_ok(result)
    assert metrics.rate_control_ok(FactorResult(factor=1.5, duration_mae=0.0, frame_ratios={"a": 1.4, "b": 1.6}))


def test_factor_result_rejects_mismatched_lengths():
    with pytest.raises(ShapeError):
        metrics.factor_result(1.0, [np.array([1, 2, 3])], [onehot_trace([0, 1], 2)], [False], ["a"])
    with pytest.raises(PamaError):
        metrics.factor_result(1.0, [], [], [], [])


def test_format_report_layout():
    report = EvalReport(
        frame_shift_ms=10.0,
        results=[FactorResult(factor=1.0, duration_mae=0.5, skipped=1), FactorResult(factor=1.5, duration_mae=0.25)],
        ablation={"alpha_align": 0.25},
    )
    lines = metrics.format_report(report).splitlines()
    assert lines[0] == "# frame_shift_ms\t10"
    assert lines[1] == "# ablation\talpha_align=0.25"
    assert lines[2] == "factor\tmae_frames\tmae_ms\tskipped\tregressions\ttruncations"
    assert lines[3] == "1\t0.5000\t5.00\t1\t0\t0"
    assert lines[4] == "1.5\t0.2500\t2.50\t0\t0\t0"
    assert lines[5].startswith("# factor 1: MAE 0.500 frames (5.0 ms)")


def test_evaluate_rejects_empty_sets(tiny_cfg, tiny_corpus):
    with pytest.raises(PamaError):
        metrics.evaluate(None, [], [1.0])
    with pytest.raises(PamaError):
        metrics.evaluate(None, tiny_corpus, [])
