import dataclasses

import numpy as np
import pytest

from pama_tts.config import build_config
from pama_tts.errors import CheckpointError, DivergenceError, PamaError
from pama_tts.models import AlignmentLabel
from pama_tts.services import trainer
from pama_tts.services.model_assembly import init_params
from pama_tts.services.training_logger import TrainingLogger
from pama_tts.storage.artifacts import LOSS_FILE, read_loss_history
from pama_tts.storage.checkpoint import Checkpoint, load_checkpoint
from pama_tts.utils.numerics import Parameter

from conftest import TINY


def test_collate_pads_and_masks(tiny_cfg, tiny_corpus):
    batch = trainer.collate(tiny_corpus[:3], tiny_cfg)
    for i, utt in enumerate(tiny_corpus[:3]):
        assert batch.frame_lengths[i] == utt.label.T
        assert batch.token_lengths[i] == utt.label.N
        assert batch.frame_mask[i].sum() == utt.label.T
        assert batch.token_mask[i].sum() == utt.label.N
        np.testing.assert_array_equal(batch.mel[i, : utt.label.T], utt.mel)
        np.testing.assert_allclose(batch.guidance[i, : utt.label.T, : utt.label.N].sum(axis=1), 1.0)
        assert batch.fwd[i].max() <= tiny_cfg.position_ceiling
    assert batch.guidance.shape == (3, batch.mel.shape[1], batch.kept_index.shape[1])


def test_label_positions_come_from_token_spans():
    fwd, bwd = trainer.label_positions(AlignmentLabel.of([3, 2]), 50)
    assert fwd.tolist() == [0, 1, 2, 0, 1]
    assert bwd.tolist() == [2, 1, 0, 1, 0]
    fwd, bwd = trainer.label_positions(AlignmentLabel.of([10]), 4)
    assert fwd.tolist() == [0, 1, 2, 3, 4, 4, 4, 4, 4, 4]
    assert bwd.tolist() == [4, 4, 4, 4, 4, 4, 3, 2, 1, 0]


def test_collate_positions_restart_at_every_token(tiny_cfg, tiny_corpus):
    batch = trainer.collate(tiny_corpus[:1], tiny_cfg)
    label = tiny_corpus[0].label
    starts = label.starts
    assert (batch.fwd[0, starts] == 0).all()
    ends = starts + np.asarray(label.durations) - 1
    assert (batch.bwd[0, ends] == 0).all()


def test_collate_rejects_mel_width(tiny_corpus):
    with pytest.raises(PamaError, match="mel_dim"):
        trainer.collate(tiny_corpus, build_config({**TINY, "mel_dim": 16}))


def test_batch_order_is_a_seeded_permutation_per_epoch():
    seen = [i for step in range(5) for i in trainer.batch_indices(step, 2, 5, seed=3)]
    assert sorted(seen[:5]) == list(range(5))
    assert sorted(seen[5:]) == list(range(5))
    assert trainer.batch_indices(4, 2, 5, seed=3) == trainer.batch_indices(4, 2, 5, seed=3)


def test_adam_clips_global_norm(tiny_cfg):
    params = {"w": Parameter("w", np.zeros(4), dtype=np.float64)}
    opt = trainer.Adam(tiny_cfg, params)
    grads = {"w": np.array([6.0, 8.0, 0.0, 0.0])}
    assert opt.clip_grads(grads) == pytest.approx(10.0)
    assert np.linalg.norm(grads["w"]) == pytest.approx(tiny_cfg.grad_clip)
    opt.step(params, grads, 1)
    np.testing.assert_allclose(params["w"].data[:2], -tiny_cfg.learning_rate, rtol=1e-6)
    assert set(opt.state()) == {"adam.m.w", "adam.v.w"}


def test_label_agreement_is_one_on_the_label(tiny_cfg, tiny_corpus):
    batch = trainer.collate(tiny_corpus[:2], tiny_cfg)
    assert trainer.label_agreement(batch.guidance, batch) == 1.0


def test_one_step_changes_parameters(tmp_path, tiny_cfg, tiny_corpus):
    result = trainer.train(tiny_corpus, tiny_cfg, tmp_path, steps=1)
    before = init_params(tiny_cfg)
    changed = [name for name, p in result.params.items() if not np.array_equal(p.data, before[name].data)]
    assert len(changed) > len(before) // 2
    assert result.step == 1
    assert len(read_loss_history(tmp_path / LOSS_FILE)) == 1
    assert (tmp_path / "config.conf").is_file()


def test_fixed_seed_reproduces_loss_history(tmp_path, tiny_cfg, tiny_corpus):
    for name in ("a", "b"):
        trainer.train(tiny_corpus, tiny_cfg, tmp_path / name, steps=3)
    assert (tmp_path / "a" / LOSS_FILE).read_bytes() == (tmp_path / "b" / LOSS_FILE).read_bytes()
    ckpt = trainer.CHECKPOINT_FILE
    assert (tmp_path / "a" / ckpt).read_bytes() == (tmp_path / "b" / ckpt).read_bytes()


def test_resume_continues_the_same_trajectory(tmp_path, tiny_corpus):
    cfg = build_config({**TINY, "dtype": "float32"})
    trainer.train(tiny_corpus, cfg, tmp_path / "straight", steps=4)
    trainer.train(tiny_corpus, cfg, tmp_path / "resumed", steps=2)
    result = trainer.train(tiny_corpus, cfg, tmp_path / "resumed", steps=4, resume=True)
    assert result.step == 4
    assert [s for s, _ in result.history] == [3, 4]
    for name in (LOSS_FILE, trainer.CHECKPOINT_FILE):
        assert (tmp_path / "straight" / name).read_bytes() == (tmp_path / "resumed" / name).read_bytes()


def test_resume_rejects_changed_config(tmp_path, tiny_cfg, tiny_corpus):
    trainer.train(tiny_corpus, tiny_cfg, tmp_path, steps=2)
    changed = build_config({**TINY, "learning_rate": 0.5})
    with pytest.raises(CheckpointError):
        trainer.train(tiny_corpus, changed, tmp_path, steps=4, resume=True)


def test_divergence_reports_last_checkpoint(tmp_path, tiny_cfg, tiny_corpus):
    broken = [dataclasses.replace(u, mel=np.full_like(u.mel, np.inf)) for u in tiny_corpus]
    with pytest.raises(DivergenceError) as err:
        trainer.train(broken, tiny_cfg, tmp_path, steps=3)
    assert err.value.step == 1
    assert err.value.last_checkpoint is None
    assert "diverged at step 1" in str(err.value)


def test_model_from_checkpoint_checks_parameter_names(tmp_path, tiny_cfg, tiny_corpus):
    result = trainer.train(tiny_corpus, tiny_cfg, tmp_path, steps=1)
    ckpt = load_checkpoint(result.checkpoint)
    model = trainer.model_from_checkpoint(ckpt, {"attention_mode": "soft"})
    assert model.cfg.attention_mode == "soft"
    partial = Checkpoint(step=1, config=ckpt.config, params={"mel.bias": ckpt.params["mel.bias"]})
    with pytest.raises(CheckpointError, match="missing"):
        trainer.model_from_checkpoint(partial)


def test_empty_corpus_fails(tmp_path, tiny_cfg):
    with pytest.raises(PamaError):
        trainer.train([], tiny_cfg, tmp_path, steps=1)


def test_training_logger_stops_on_a_failed_write(tmp_path):
    history = TrainingLogger(tmp_path / LOSS_FILE)
    history.start_timer()
    assert history.log(1, {"total": 1.0, "mel": 0.5, "pc": 0.1, "dur": 2.0, "align": 0.01})
    (tmp_path / LOSS_FILE).unlink()
    (tmp_path / LOSS_FILE).mkdir()
    with pytest.raises(PamaError, match="step 2"):
        history.log(2, {"total": 1.0, "mel": 0.5, "pc": 0.1, "dur": 2.0, "align": 0.01})
    assert [s for s, _ in history.rows] == [1]
