import math

import numpy as np
import pytest

from bvm_ensembles.nn import (
    Architecture,
    MlpModel,
    adamw_step,
    backward,
    forward,
    init_model,
    init_optimizer,
    load_checkpoint,
    save_checkpoint,
)
from bvm_ensembles.numerics import Rng


def test_init_bounds_and_determinism():
    arch = Architecture(1, (100,), 2)
    model = init_model(arch, Rng(42))
    assert np.all(np.abs(model.weights[0]) <= 1.0)
    assert np.all(np.abs(model.weights[1]) <= 1.0 / math.sqrt(100))
    assert np.all(np.abs(model.biases[1]) <= 1.0 / math.sqrt(100))
    again = init_model(arch, Rng(42))
    for a, b in zip(model.params, again.params):
        np.testing.assert_array_equal(a, b)


def test_parameter_count():
    assert init_model(Architecture(13, (50,), 2), Rng(0)).n_params() == 13 * 50 + 50 + 50 * 2 + 2 == 802


def test_invalid_architecture():
    with pytest.raises(ValueError, match="invalid architecture"):
        Architecture(3, (0,), 2)
    with pytest.raises(ValueError, match="invalid architecture"):
        Architecture(3, (5,), 3)
    with pytest.raises(ValueError):
        Architecture(3, (5,), 2, mean_head="tanh")


def test_forward_zero_model():
    arch = Architecture(3, (4,), 2)
    model = MlpModel(arch, [np.zeros((4, 3)), np.zeros((2, 4))], [np.zeros(4), np.zeros(2)])
    out, _ = forward(model, np.ones((2, 3)))
    np.testing.assert_array_equal(out, 0.5)


def test_forward_affine():
    arch = Architecture(1, (), 1, mean_head="identity")
    model = MlpModel(arch, [np.array([[2.0]])], [np.array([1.0])])
    assert forward(model, np.array([[3.0]]))[0][0, 0] == 7.0


def test_forward_pure_and_checks_dim():
    model = init_model(Architecture(4, (8, 8), 2), Rng(1))
    x = Rng(2).normal(size=(5, 4))
    np.testing.assert_array_equal(forward(model, x)[0], forward(model, x)[0])
    with pytest.raises(ValueError, match="dimension mismatch"):
        forward(model, np.ones((2, 3)))


def test_variance_floor_applied():
    arch = Architecture(1, (), 2, variance_floor=1e-6)
    model = MlpModel(arch, [np.zeros((2, 1))], [np.array([0.0, -50.0])])
    out, cache = forward(model, np.zeros((1, 1)))
    assert out[0, 1] == 1e-6
    grads = backward(model, cache, np.array([[0.0, 1.0]]))
    assert all(np.all(g == 0) for g in grads)


def test_backward_zero_upstream():
    model = init_model(Architecture(3, (5,), 2), Rng(0))
    _, cache = forward(model, np.ones((4, 3)))
    assert all(np.all(g == 0) for g in backward(model, cache, np.zeros((4, 2))))


def _fd_param_grad(model, x, d_out, h=1e-6):
    base = model.flat()
    grad = np.empty_like(base)

    def objective(vec):
        m = model.copy()
        m.set_flat(vec)
        return float(np.sum(forward(m, x)[0] * d_out))

    for i in range(base.size):
        e = np.zeros_like(base)
        e[i] = h
        grad[i] = (objective(base + e) - objective(base - e)) / (2 * h)
    return grad


@pytest.mark.parametrize("heads", [("sigmoid", "sigmoid"), ("identity", "softplus")])
def test_backward_matches_finite_differences(heads):
    rng = Rng(77)
    errs = []
    for trial in range(25):
        r = rng.child(trial)
        arch = Architecture(3, (6, 4), 2, *heads)
        model = init_model(arch, r.child(0))
        # raw pre-activation scale: spread the weights to exercise all regimes
        model.set_flat(model.flat() * 2.0)
        x = r.child(1).normal(size=(5, 3))
        d_out = r.child(2).normal(size=(5, 2))
        out, cache = forward(model, x)
        an = np.concatenate([g.ravel() for g in backward(model, cache, d_out)])
        fd = _fd_param_grad(model, x, d_out)
        errs.append(np.linalg.norm(an - fd) / max(np.linalg.norm(fd), 1e-12))
    assert max(errs) < 1e-6


def test_adamw_zero_gradient_no_decay():
    model = init_model(Architecture(2, (3,), 2), Rng(0))
    before = model.flat()
    state = init_optimizer(model, weight_decay=0.0)
    adamw_step(model, state, [np.zeros_like(p) for p in model.params])
    np.testing.assert_array_equal(model.flat(), before)


def test_adamw_first_step():
    model = MlpModel(Architecture(1, (), 1, mean_head="identity"), [np.array([[0.5]])], [np.array([0.0])])
    state = init_optimizer(model, lr=1e-3, weight_decay=0.0)
    assert adamw_step(model, state, [np.ones((1, 1)), np.ones(1)])
    assert model.weights[0][0, 0] == pytest.approx(0.5 - 1e-3 / (1 + 1e-8), rel=1e-12)


def test_adamw_descends_along_constant_gradient():
    model = MlpModel(Architecture(1, (), 1, mean_head="identity"), [np.array([[0.0]])], [np.array([0.0])])
    state = init_optimizer(model, lr=1e-2)
    for _ in range(50):
        adamw_step(model, state, [np.full((1, 1), 3.0), np.full(1, -2.0)])
    assert model.weights[0][0, 0] < 0 and model.biases[0][0] > 0


def test_decoupled_vs_l2_decay():
    def run(decoupled):
        m = MlpModel(Architecture(1, (), 1, mean_head="identity"), [np.array([[1.0]])], [np.array([1.0])])
        st = init_optimizer(m, lr=0.1, weight_decay=0.5, decoupled=decoupled)
        adamw_step(m, st, [np.zeros((1, 1)), np.zeros(1)])
        return m.weights[0][0, 0]

    # decoupled: w * (1 - lr wd); coupled: the decay goes through Adam's normalisation
    assert run(True) == pytest.approx(0.95)
    assert run(False) == pytest.approx(1.0 - 0.1, rel=1e-6)


def test_nonfinite_gradient_skipped(caplog):
    model = init_model(Architecture(2, (3,), 2), Rng(0))
    before = model.flat()
    state = init_optimizer(model)
    grads = [np.zeros_like(p) for p in model.params]
    grads[0][0, 0] = np.nan
    assert not adamw_step(model, state, grads)
    np.testing.assert_array_equal(model.flat(), before)
    assert state.skipped == 1 and state.step == 0
    assert "non-finite" in caplog.text


def test_checkpoint_roundtrip(tmp_path):
    model = init_model(Architecture(5, (7, 3), 2, "identity", "softplus"), Rng(9))
    path = tmp_path / "m.json"
    save_checkpoint(model, path, {"kind": "bvm", "epsilon": 0.01})
    loaded, loss = load_checkpoint(path)
    assert loaded.arch == model.arch
    assert loss == {"kind": "bvm", "epsilon": 0.01}
    np.testing.assert_array_equal(loaded.flat(), model.flat())
    x = Rng(1).normal(size=(4, 5))
    np.testing.assert_array_equal(forward(loaded, x)[0], forward(model, x)[0])
