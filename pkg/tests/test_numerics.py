import numpy as np
import pytest

from pama_tts.errors import AttentionError, NonFiniteError, PamaError, ShapeError
from pama_tts.utils import numerics as nx
from pama_tts.utils.gradcheck import check_gradients
from pama_tts.utils.numerics import Array, Parameter, Tape

CASES = 50
TOL = 1e-5


def param(rng, name, shape, low=-1.0, high=1.0):
    return Parameter(name, rng.uniform(low, high, size=shape), dtype=np.float64)


def _dot(out: Array, seed) -> Array:
    """Reduce to a scalar with fixed random weights so every output entry matters."""
    w = np.random.default_rng(seed).normal(size=out.shape)
    flat = nx.reshape(out, (1, out.size))
    return nx.reshape(nx.matmul(flat, w.reshape(-1, 1)), (1,))


def assert_grads(fn, params):
    assert check_gradients(fn, params) < TOL


# --- tape behaviour ------------------------------------------------------------


def test_quadratic_gradient():
    w = Parameter("w", [3.0], dtype=np.float64)
    with Tape() as tape:
        loss = nx.mse(w, np.zeros(1))
    assert tape.grad(loss, [w])["w"] == pytest.approx([6.0])


def test_unreached_parameter_gets_zero_gradient():
    w = Parameter("w", [1.0, 2.0], dtype=np.float64)
    other = Parameter("other", [[5.0]], dtype=np.float64)
    with Tape() as tape:
        loss = nx.mse(w, np.zeros(2))
    grads = tape.grad(loss, [w, other])
    np.testing.assert_array_equal(grads["other"], np.zeros((1, 1)))


def test_non_scalar_loss_is_rejected():
    w = Parameter("w", [1.0, 2.0], dtype=np.float64)
    with Tape() as tape:
        out = nx.scale(w, 2.0)
    with pytest.raises(PamaError, match="scalar"):
        tape.grad(out, [w])


def test_grad_without_tape_fails():
    w = Parameter("w", [1.0], dtype=np.float64)
    with pytest.raises(PamaError, match="no tape"):
        nx.grad(nx.mse(w, np.zeros(1)), [w])


def test_shape_error_names_op_and_shapes():
    with pytest.raises(ShapeError) as err:
        nx.matmul(np.ones((2, 3)), np.ones((4, 5)))
    assert "matmul" in str(err.value)
    assert "(2, 3)" in str(err.value) and "(4, 5)" in str(err.value)


def test_non_finite_forward_is_reported():
    with pytest.raises(NonFiniteError, match="scale"):
        nx.scale(np.array([1e308]), 1e10)


def test_softmax_rejects_bad_axis():
    with pytest.raises(ShapeError):
        nx.softmax(np.ones((2, 3)), axis=2)


def test_embedding_index_out_of_range():
    with pytest.raises(PamaError):
        nx.embedding_lookup(np.ones((4, 2)), np.array([4]))


def test_primitives_outside_tape_record_nothing():
    w = Parameter("w", [1.0], dtype=np.float64)
    with Tape() as tape:
        pass
    nx.scale(w, 2.0)
    assert tape.entries == []


# --- finite-difference checks, 50 random cases per primitive ---------------------


@pytest.mark.parametrize("case", range(CASES))
def test_matmul_and_add(case):
    rng = np.random.default_rng(case)
    a = param(rng, "a", (2, 3, 4))
    b = param(rng, "b", (4, 2))
    bias = param(rng, "bias", (2,))
    assert_grads(lambda: _dot(nx.add(nx.matmul(a, b), bias), case), [a, b, bias])


@pytest.mark.parametrize("case", range(CASES))
def test_batched_matmul(case):
    rng = np.random.default_rng(100 + case)
    a = param(rng, "a", (2, 3, 4))
    b = param(rng, "b", (2, 4, 3))
    assert_grads(lambda: _dot(nx.matmul(a, b), case), [a, b])


@pytest.mark.parametrize("case", range(CASES))
def test_elementwise(case):
    rng = np.random.default_rng(200 + case)
    a = param(rng, "a", (3, 4))
    b = param(rng, "b", (3, 4))
    s = param(rng, "s", (1,))

    def fn():
        x = nx.mul(nx.sigmoid(a), nx.tanh(b))
        x = nx.add(nx.scale(x, 1.7), s)
        return _dot(nx.concat([nx.reshape(x, (4, 3)), nx.reshape(a, (4, 3))], axis=0), case)

    assert_grads(fn, [a, b, s])


@pytest.mark.parametrize("case", range(CASES))
def test_relu_away_from_kink(case):
    rng = np.random.default_rng(300 + case)
    values = rng.uniform(0.1, 1.0, size=(3, 4)) * rng.choice([-1.0, 1.0], size=(3, 4))
    a = Parameter("a", values, dtype=np.float64)
    assert_grads(lambda: _dot(nx.relu(a), case), [a])


@pytest.mark.parametrize("case", range(CASES))
def test_softmax(case):
    rng = np.random.default_rng(400 + case)
    a = param(rng, "a", (2, 5), -2, 2)
    axis = case % 2
    assert_grads(lambda: _dot(nx.softmax(a, axis=axis), case), [a])


@pytest.mark.parametrize("case", range(CASES))
def test_lookup_and_gather(case):
    rng = np.random.default_rng(500 + case)
    table = param(rng, "table", (6, 3))
    ids = rng.integers(0, 6, size=(2, 4))
    index = rng.integers(0, 4, size=(2, 3))

    def fn():
        rows = nx.embedding_lookup(table, ids)
        return _dot(nx.gather_rows(rows, index), case)

    assert_grads(fn, [table])


@pytest.mark.parametrize("case", range(CASES))
def test_pairwise_add(case):
    rng = np.random.default_rng(600 + case)
    q = param(rng, "q", (2, 3, 4))
    k = param(rng, "k", (2, 5, 4))
    assert_grads(lambda: _dot(nx.tanh(nx.pairwise_add(q, k)), case), [q, k])


@pytest.mark.parametrize("case", range(CASES))
def test_conv1d(case):
    rng = np.random.default_rng(700 + case)
    width = 1 + case % 4
    signal = param(rng, "signal", (2, 6, 3))
    kernel = param(rng, "kernel", (width, 3, 2))
    assert_grads(lambda: _dot(nx.conv1d(signal, kernel), case), [signal, kernel])


@pytest.mark.parametrize("case", range(CASES))
def test_dropout_fixed_mask(case):
    rng = np.random.default_rng(800 + case)
    a = param(rng, "a", (4, 3))
    assert_grads(lambda: _dot(nx.dropout(a, 0.3, True, np.random.default_rng(case)), case), [a])


@pytest.mark.parametrize("case", range(CASES))
def test_gated_recurrence(case):
    rng = np.random.default_rng(900 + case)
    seq = param(rng, "seq", (2, 4, 2))
    weight = param(rng, "weight", (2 + 3, 12))
    bias = param(rng, "bias", (12,))
    lengths = np.array([4, 1 + case % 4])
    reverse = bool(case % 2)
    assert_grads(lambda: _dot(nx.gated_recurrence(seq, weight, bias, lengths, reverse), case), [seq, weight, bias])


@pytest.mark.parametrize("case", range(CASES))
def test_losses(case):
    rng = np.random.default_rng(1000 + case)
    a = param(rng, "a", (3, 4))
    target = a.data + rng.uniform(0.2, 1.0, size=(3, 4)) * rng.choice([-1.0, 1.0], size=(3, 4))
    logits = param(rng, "logits", (3, 5), -2, 2)
    labels = rng.integers(0, 5, size=3)
    weights = rng.uniform(0.0, 1.0, size=(3, 4))

    def fn():
        total = nx.add(nx.mse(a, target, weights=weights), nx.l1(a, target))
        return nx.add(total, nx.cross_entropy(logits, labels))

    assert_grads(fn, [a, logits])


@pytest.mark.parametrize("case", range(CASES))
def test_sma_step(case):
    rng = np.random.default_rng(1100 + case)
    n = 2 + case % 5
    prev = rng.dirichlet(np.ones(n))
    raw = param(rng, "raw", (n,), -3, 3)
    alpha = Parameter("alpha", prev, dtype=np.float64)

    def fn():
        return _dot(nx.sma_step(alpha, nx.sigmoid(raw)), case)

    assert_grads(fn, [raw])


@pytest.mark.parametrize("case", range(CASES))
def test_monotonic_scan(case):
    rng = np.random.default_rng(1200 + case)
    raw = param(rng, "raw", (2, 5, 4), -3, 3)
    lengths = np.array([4, 2 + case % 3])
    assert_grads(lambda: _dot(nx.monotonic_scan(nx.sigmoid(raw), lengths), case), [raw])


# --- attention recursion properties -------------------------------------------


def test_sma_step_rejects_unnormalized_input():
    with pytest.raises(AttentionError):
        nx.sma_step(np.array([0.5, 0.2]), np.array([0.5, 0.5]))


def test_monotonic_scan_matches_repeated_sma_step(rng):
    p = rng.uniform(size=(6, 4))
    scanned = nx.monotonic_scan(p).numpy()
    alpha = np.array([1.0, 0.0, 0.0, 0.0])
    for t in range(6):
        alpha = nx.sma_step(alpha, p[t]).numpy()
        np.testing.assert_allclose(scanned[t], alpha, atol=1e-12)


def test_padded_tokens_receive_no_mass(rng):
    p = rng.uniform(size=(1, 12, 5))
    trace = nx.monotonic_scan(p, np.array([3])).numpy()
    np.testing.assert_allclose(trace[0, :, 3:], 0.0)
    np.testing.assert_allclose(trace.sum(axis=-1), 1.0, atol=1e-12)
