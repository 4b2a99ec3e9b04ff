import numpy as np
import pytest

from pama_tts.errors import ShapeError
from pama_tts.services import duration_model, pama_attention
from pama_tts.utils.numerics import Parameter, Tape, mse


@pytest.fixture
def params(tiny_cfg):
    rng = np.random.default_rng(tiny_cfg.seed)
    out = duration_model.init_params(tiny_cfg, rng)
    out.update(pama_attention.init_params(tiny_cfg, rng))
    return out


def test_single_token_input(params, tiny_cfg, rng):
    pred = duration_model.predict(params, rng.normal(size=(1, tiny_cfg.encoder_dim)))
    assert pred.durations.shape == (1,)
    assert pred.latent.shape == (1, tiny_cfg.duration_hidden)


def test_output_length_follows_input(params, tiny_cfg, rng):
    for n in (2, 5, 11):
        pred = duration_model.predict(params, rng.normal(size=(n, tiny_cfg.encoder_dim)))
        assert pred.durations.shape == (n,)
        assert np.all(np.isfinite(pred.durations.numpy()))


def test_prediction_is_deterministic(tiny_cfg):
    hidden = np.random.default_rng(5).normal(size=(4, tiny_cfg.encoder_dim))
    runs = []
    for _ in range(2):
        params = duration_model.init_params(tiny_cfg, np.random.default_rng(tiny_cfg.seed))
        runs.append(duration_model.predict(params, hidden).durations.numpy())
    np.testing.assert_array_equal(runs[0], runs[1])


def test_empty_input_fails(params, tiny_cfg):
    with pytest.raises(ShapeError):
        duration_model.predict(params, np.zeros((0, tiny_cfg.encoder_dim)))


def test_duration_loss_examples():
    assert duration_model.duration_loss(np.array([4.0, 6.0]), [4, 6]).item() == 0.0
    assert duration_model.duration_loss(np.array([3.0, 5.0]), [2, 7]).item() == pytest.approx(1.5)
    with pytest.raises(ShapeError):
        duration_model.duration_loss(np.array([3.0, 5.0]), [2, 7, 1])


def test_duration_loss_matches_loop():
    rng = np.random.default_rng(9)
    for _ in range(50):
        n = int(rng.integers(1, 20))
        pred = rng.uniform(0, 12, size=n)
        label = rng.integers(1, 13, size=n)
        naive = sum(abs(p - l) for p, l in zip(pred, label)) / n
        assert duration_model.duration_loss(pred, label).item() == pytest.approx(naive, abs=1e-12)


def test_duration_loss_subgradient():
    pred = Parameter("pred", [3.0, 5.0, 4.0], dtype=np.float64)
    with Tape() as tape:
        loss = duration_model.duration_loss(pred, [2, 7, 4])
    np.testing.assert_allclose(tape.grad(loss, [pred])["pred"], [1 / 3, -1 / 3, 0.0])


def test_zero_latent_gives_zero_code(params, tiny_cfg):
    code = duration_model.duration_code(params, np.zeros((3, tiny_cfg.duration_hidden)))
    assert code.shape == (3, tiny_cfg.encoder_dim)
    np.testing.assert_array_equal(code.numpy(), 0.0)


def test_mel_side_gradient_reaches_predictor(params, tiny_cfg, rng):
    hidden = rng.normal(size=(5, tiny_cfg.encoder_dim))
    target = rng.normal(size=(5, tiny_cfg.encoder_dim))
    predictor = [params["duration.conv1.kernel"], params["duration.conv2.kernel"]]
    with Tape() as tape:
        pred = duration_model.predict(params, hidden)
        code = duration_model.duration_code(params, pred.latent)
        _, values = pama_attention.build_memory(params, hidden, code)
        loss = mse(values, target)
    grads = tape.grad(loss, predictor)
    assert all(np.abs(g).sum() > 0 for g in grads.values())
    # the frame-count head is not on this path
    assert np.abs(tape.grad(loss, [params["duration.head.weight"]])["duration.head.weight"]).sum() == 0


def test_to_frames_rounds_half_up_with_floor():
    np.testing.assert_array_equal(duration_model.to_frames(np.array([0.2, 2.5, 3.49, -1.0])), [1, 3, 3, 1])
