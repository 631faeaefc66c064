import numpy as np
import pytest
import torch
from torch.func import functional_call

from cte.embedding import Batch, CteConfig, CteModel, cte_loss, one_hot
from cte.errors import DimensionError, FormatError, ModeError, NumericError
from cte.neuralkit import (
    AdamHyper,
    AdamState,
    SequenceModelConfig,
    SequenceNet,
    categorical_sample,
    grad_check,
    load_container,
    lstm_layer_params,
    lstm_step,
    optimizer_step,
    save_container,
)
from oracles import lstm_scalar_oracle


def _zero_params(I, H):
    return {"weight_ih": np.zeros((4 * H, I)), "weight_hh": np.zeros((4 * H, H)), "bias_ih": np.zeros(4 * H), "bias_hh": np.zeros(4 * H)}


def test_lstm_zero_params_zero_state():
    x = np.array([0.3, -2.0, 1.5])
    h, (h2, c) = lstm_step(x, (np.array([0.7, -0.1]), np.zeros(2)), _zero_params(3, 2))
    np.testing.assert_array_equal(h, 0.0)
    np.testing.assert_array_equal(c, 0.0)


def test_lstm_forget_half():
    v = np.array([0.8, -1.2, 3.0])
    _, (_, c) = lstm_step(np.zeros(2), (np.zeros(3), v), _zero_params(2, 3))
    np.testing.assert_allclose(c, 0.5 * v, rtol=0, atol=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_lstm_matches_scalar_oracle(seed):
    rng = np.random.default_rng(seed)
    I, H = 4, 3
    p = {"weight_ih": rng.normal(size=(4 * H, I)), "weight_hh": rng.normal(size=(4 * H, H)),
         "bias_ih": rng.normal(size=4 * H), "bias_hh": rng.normal(size=4 * H)}
    x, h, c = rng.normal(size=I), rng.normal(size=H), rng.normal(size=H)
    got, (_, gc) = lstm_step(x, (h, c), p)
    wh, wc = lstm_scalar_oracle(x.tolist(), h.tolist(), c.tolist(), p["weight_ih"].tolist(), p["weight_hh"].tolist(),
                                p["bias_ih"].tolist(), p["bias_hh"].tolist())
    np.testing.assert_allclose(got, wh, rtol=0, atol=1e-12)
    np.testing.assert_allclose(gc, wc, rtol=0, atol=1e-12)


def test_lstm_step_agrees_with_torch():
    torch.manual_seed(0)
    net = SequenceNet(5, 3, SequenceModelConfig(layers=1, hidden_units=4, history_length=10)).double()
    x = torch.randn(1, 6, 5, dtype=torch.float64)
    out, _ = net.lstm(x)
    p = lstm_layer_params(net.lstm)
    h = c = np.zeros(4)
    for t in range(6):
        h, (h, c) = lstm_step(x[0, t].numpy(), (h, c), p)
    np.testing.assert_allclose(h, out[0, -1].detach().numpy(), atol=1e-12)


def test_lstm_shape_mismatch():
    with pytest.raises(DimensionError):
        lstm_step(np.zeros(3), (np.zeros(2), np.zeros(2)), _zero_params(4, 2))


def test_grad_check_quadratic():
    p = [torch.tensor([1.0, -2.0, 0.5], dtype=torch.float64)]
    assert grad_check(lambda ps: (ps[0] ** 2).sum(), p) < 1e-8


def test_grad_check_rejects_bad_epsilon_and_nan():
    p = [torch.ones(2, dtype=torch.float64)]
    with pytest.raises(ValueError):
        grad_check(lambda ps: ps[0].sum(), p, epsilon=1e-2)
    with pytest.raises(NumericError):
        grad_check(lambda ps: ps[0].sum() * float("nan"), p)


def cte_loss_grad_error():
    torch.manual_seed(0)
    cfg = CteConfig(context_filters=(4, 8), context_dense=16, affordance_units=8, edge_units=8, latent_dim=12, n_clusters=3)
    model = CteModel(cfg).double()
    rng = np.random.default_rng(0)
    batch = Batch.from_arrays(rng.random((4, 48, 48, 3)), rng.integers(0, 2, (4, 13)), rng.integers(0, 2, (4, 16, 16)),
                              dtype=torch.float64)
    target = torch.as_tensor(one_hot([0, 2, 1, 2], 3))
    names = [n for n, _ in model.named_parameters()]

    def loss(ps):
        out = functional_call(model, dict(zip(names, ps)), (batch.context, batch.affordance, batch.edges))
        return cte_loss(out, batch, target).total

    return grad_check(loss, [p.detach() for p in model.parameters()], epsilon=1e-6, n_components=200)


def lstm_loss_grad_error():
    torch.manual_seed(1)
    net = SequenceNet(3, 3, SequenceModelConfig(layers=1, hidden_units=5, history_length=5)).double()
    x = torch.randn(2, 5, 3, dtype=torch.float64)
    y = torch.randint(0, 3, (2, 5))
    names = [n for n, _ in net.named_parameters()]

    def loss(ps):
        logits, _ = functional_call(net, dict(zip(names, ps)), (x,))
        return torch.nn.functional.cross_entropy(logits.reshape(-1, 3), y.reshape(-1))

    return grad_check(loss, [p.detach() for p in net.parameters()], epsilon=1e-6, n_components=400)


def test_grad_check_cte_loss():
    assert cte_loss_grad_error() < 1e-4


def test_grad_check_lstm_loss():
    assert lstm_loss_grad_error() < 1e-4


def test_adam_zero_gradient_keeps_params():
    p = [np.array([1.0, -3.0])]
    state = AdamState()
    for _ in range(5):
        p, state = optimizer_step(p, [np.zeros(2)], state)
    np.testing.assert_array_equal(p[0], [1.0, -3.0])


def test_adam_closed_form_first_step_and_limit():
    hyper = AdamHyper(lr=0.01)
    g = np.array([0.3, -7.0])
    p, state = optimizer_step([np.zeros(2)], [g], AdamState(), hyper)
    # after bias correction m_hat = g and v_hat = g^2
    np.testing.assert_allclose(p[0], -0.01 * g / (np.abs(g) + 1e-8), rtol=1e-12)
    for _ in range(2000):
        prev = p[0].copy()
        p, state = optimizer_step(p, [g], state, hyper)
    np.testing.assert_allclose(np.abs(p[0] - prev), 0.01, rtol=1e-6)


def test_adam_matches_hand_recurrence():
    hyper = AdamHyper(lr=0.05, beta1=0.8, beta2=0.9, eps=1e-6)
    rng = np.random.default_rng(3)
    grads = rng.normal(size=(6, 3))
    p, state = [np.ones(3)], AdamState()
    want, m, v = np.ones(3), np.zeros(3), np.zeros(3)
    for t, g in enumerate(grads, start=1):
        p, state = optimizer_step(p, [g], state, hyper)
        m = 0.8 * m + 0.2 * g
        v = 0.9 * v + 0.1 * g * g
        want = want - 0.05 * (m / (1 - 0.8**t)) / (np.sqrt(v / (1 - 0.9**t)) + 1e-6)
    np.testing.assert_allclose(p[0], want, rtol=1e-13)


def test_adam_deterministic_and_checks_shapes():
    g = [np.array([0.1, 0.2])]
    a = optimizer_step([np.ones(2)], g, AdamState())[0][0]
    b = optimizer_step([np.ones(2)], g, AdamState())[0][0]
    assert a.tobytes() == b.tobytes()
    with pytest.raises(DimensionError):
        optimizer_step([np.ones(2)], [np.ones(3)], AdamState())


def test_sampling_one_hot_and_cold():
    rng = np.random.default_rng(0)
    assert all(categorical_sample([0, 0, 1.0], 1.0, rng) == 2 for _ in range(100))
    draws = [categorical_sample([0.7, 0.3], 1e-3, rng) for _ in range(10000)]
    assert draws.count(0) == 10000


def test_sampling_fair_coin():
    rng = np.random.default_rng(11)
    draws = np.array([categorical_sample([0.5, 0.5], 1.0, rng) for _ in range(10000)])
    assert abs(draws.mean() - 0.5) < 0.02


def test_sampling_rejects_non_simplex():
    with pytest.raises(NumericError):
        categorical_sample([0.5, 0.6], 1.0, np.random.default_rng(0))
    with pytest.raises(NumericError):
        categorical_sample([1.2, -0.2], 1.0, np.random.default_rng(0))


def test_sequence_config_modes():
    with pytest.raises(ModeError):
        SequenceModelConfig(output_mode="beam")


def test_container_round_trip(tmp_path):
    arrays = {"w": np.arange(6, dtype=np.float32).reshape(2, 3), "ids": np.array([3, -1, 7]), "flag": np.array([True, False])}
    save_container(tmp_path / "m.bin", arrays, {"kind": "test"})
    got, meta = load_container(tmp_path / "m.bin")
    assert meta == {"kind": "test"}
    np.testing.assert_array_equal(got["w"], arrays["w"])
    assert got["ids"].dtype == np.dtype("<i4") and got["ids"].tolist() == [3, -1, 7]
    assert got["flag"].tolist() == [1, 0]
    (tmp_path / "bad.bin").write_bytes(b"NOTMAGIC" + b"\0" * 16)
    with pytest.raises(FormatError):
        load_container(tmp_path / "bad.bin")
