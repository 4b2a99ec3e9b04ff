#!/usr/bin/env python3
"""
End-to-end acceptance run
Generates the reference corpus, trains, evaluates at three duration factors
and checks convergence, duration accuracy, rate control, robustness,
determinism and the guidance/position ablation.
"""

import argparse
import filecmp
import sys
import time
from pathlib import Path

from pama_tts.config import build_config, load_config
from pama_tts.main import setup_logging
from pama_tts.services import metrics, synthetic_corpus, trainer
from pama_tts.services.inference_scheduler import synthesize, utterance_rng
from pama_tts.storage.artifacts import LOSS_FILE, write_durations, write_mel, write_trace
from pama_tts.storage.checkpoint import load_checkpoint
from pama_tts.storage.corpus_store import save_corpus

FACTORS = (0.75, 1.0, 1.5)
MAE_LIMITS = {0.75: 3.0, 1.0: 2.0, 1.5: 3.0}
ALIGN_LIMIT = 0.05
CE_LIMIT = 0.1
WALL_CLOCK_LIMIT_S = 15 * 60
TAIL = 50


def report(ok: bool, message: str) -> bool:
    print(f"{'✅' if ok else '❌'} {message}")
    return ok


def same_tree(a: Path, b: Path, skip=("manifest.json",)) -> bool:
    """Byte-compare every file under a and b."""
    files_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file() and p.name not in skip)
    files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file() and p.name not in skip)
    if files_a != files_b:
        return False
    return all(filecmp.cmp(a / f, b / f, shallow=False) for f in files_a)


def check_corpus_determinism(work: Path, seed: int, count: int):
    corpus = synthetic_corpus.generate(seed, count)
    save_corpus(work / "data", corpus)
    save_corpus(work / "data_rerun", synthetic_corpus.generate(seed, count))
    ok = report(same_tree(work / "data", work / "data_rerun"), "corpus regenerates byte-identically")
    return corpus, ok


def check_convergence(result: trainer.TrainResult, elapsed: float) -> list[bool]:
    tail = result.history[-TAIL:]
    align = sum(c["align"] for _, c in tail) / len(tail)
    ce = sum(c["pc"] for _, c in tail) / len(tail)
    return [
        report(align < ALIGN_LIMIT, f"alignment loss {align:.4f} (limit {ALIGN_LIMIT}) over the last {len(tail)} steps"),
        report(ce < CE_LIMIT, f"classifier CE {ce:.4f} (limit {CE_LIMIT}) over the last {len(tail)} steps"),
        report(elapsed < WALL_CLOCK_LIMIT_S, f"training took {elapsed / 60:.1f} min (limit {WALL_CLOCK_LIMIT_S // 60})"),
    ]


def check_report(eval_report) -> list[bool]:
    checks = []
    for r in eval_report.results:
        limit = MAE_LIMITS.get(r.factor, 3.0)
        checks.append(report(r.duration_mae <= limit, f"factor {r.factor:g}: duration MAE {r.duration_mae:.3f} frames (limit {limit})"))
        if r.factor != 1.0:
            ratios = list(r.frame_ratios.values())
            checks.append(
                report(
                    metrics.rate_control_ok(r),
                    f"factor {r.factor:g}: frame ratios {min(ratios):.3f}..{max(ratios):.3f} within 10% of {r.factor:g}",
                )
            )
        clean = r.skipped == 0 and r.regressions == 0 and r.truncations == 0
        checks.append(
            report(
                clean,
                f"factor {r.factor:g}: {r.skipped} skipped, {r.regressions} regressions, {r.truncations} truncated",
            )
        )
    return checks


def check_run_determinism(work: Path, train_set, cfg, heldout) -> list[bool]:
    runs = []
    for name in ("det_a", "det_b"):
        result = trainer.train(train_set, cfg, work / name, steps=20)
        model = trainer.model_from_checkpoint(load_checkpoint(result.checkpoint))
        utt = heldout[0]
        out = synthesize(model, utt.tokens, 1.0, rng=utterance_rng(cfg.seed, utt.tokens))
        write_mel(work / name / "synth" / "mel.txt", out.mel)
        write_trace(work / name / "synth" / "attention.txt", out.trace)
        write_durations(work / name / "synth" / "durations.txt", out.durations)
        runs.append(work / name)
    a, b = runs
    return [
        report(filecmp.cmp(a / LOSS_FILE, b / LOSS_FILE, shallow=False), "loss history reproduces byte-identically"),
        report(filecmp.cmp(a / trainer.CHECKPOINT_FILE, b / trainer.CHECKPOINT_FILE, shallow=False), "checkpoint reproduces byte-identically"),
        report(same_tree(a / "synth", b / "synth"), "hard-mode synthesis reproduces byte-identically"),
    ]


def main():
    parser = argparse.ArgumentParser(description="PAMA-TTS acceptance run")
    parser.add_argument("--work", default="acceptance_run", help="scratch directory")
    parser.add_argument("--config", default="configs/reference.conf")
    parser.add_argument("--steps", type=int, default=2000)
    parser.add_argument("--skip-ablation", action="store_true")
    args = parser.parse_args()
    setup_logging()

    work = Path(args.work)
    cfg = load_config(args.config)

    print("=" * 60)
    print("🔬 ACCEPTANCE RUN")
    print("=" * 60)
    print()

    checks = []

    print("📁 Generating corpus...")
    corpus, ok = check_corpus_determinism(work, cfg.seed, 200)
    checks.append(ok)
    train_set, heldout = synthetic_corpus.split(corpus, cfg.train_fraction, 0)
    checks.append(report((len(train_set), len(heldout)) == (180, 20), f"split {len(train_set)}/{len(heldout)}"))
    print()

    print("🏋️ Training reference model...")
    started = time.time()
    result = trainer.train(train_set, cfg, work / "run", args.steps)
    checks.extend(check_convergence(result, time.time() - started))
    print()

    print("📏 Evaluating held-out set...")
    model = trainer.model_from_checkpoint(load_checkpoint(result.checkpoint))
    reference_report = metrics.evaluate(model, heldout, FACTORS, cfg.eval_workers)
    print(metrics.format_report(reference_report), end="")
    checks.extend(check_report(reference_report))
    print()

    print("🔁 Checking determinism...")
    checks.extend(check_run_determinism(work, train_set, cfg, heldout))
    print()

    if not args.skip_ablation:
        print("🧪 Ablation: guidance off, positions zeroed (allowed to fail)...")
        ablation_cfg = build_config({**cfg.model_dump(), "alpha_align": 0.0, "use_position_embedding": False})
        ablation = trainer.train(train_set, ablation_cfg, work / "ablation", args.steps)
        ablation_model = trainer.model_from_checkpoint(load_checkpoint(ablation.checkpoint))
        ablation_report = metrics.evaluate(ablation_model, heldout, FACTORS, cfg.eval_workers)
        print(metrics.format_report(ablation_report), end="")
        for full, ablated in zip(reference_report.results, ablation_report.results):
            events_full = full.skipped + full.regressions + full.truncations
            events_ablated = ablated.skipped + ablated.regressions + ablated.truncations
            print(
                f"   factor {full.factor:g}: MAE {full.duration_mae:.3f} -> {ablated.duration_mae:.3f}, "
                f"robustness events {events_full} -> {events_ablated}"
            )
        print()

    print("=" * 60)
    if all(checks):
        print("✅ ALL ACCEPTANCE CHECKS PASSED")
        print("=" * 60)
        return 0
    else:
        print("❌ SOME ACCEPTANCE CHECKS FAILED")
        print()
        print("📝 Inspect the loss history and report under the work directory")
        print("=" * 60)
        return 1

if __name__ == "__main__":
    sys.exit(main())
